//! Command-line front end: calibrate, train, search-weights, test, inspect.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::checkpoint::{load_checkpoint, Checkpoint, Phase};
use crate::config::{rewrite_key, RunConfig, MANIFEST_PREFIX};
use crate::data::{Dataset, DatasetSpec};
use crate::encoding::calibrate_ik;
use crate::error::{Result, SnnError};
use crate::network::Network;
use crate::topology::{ProjectionId, WeightStats};
use crate::training::{evaluate, monte_carlo_weight_search, run_phase1, run_phase2, DirectoryObserver};

#[derive(Debug, Parser)]
#[command(
    name = "natcsnn",
    version,
    about = "Spiking image classifier with STDP and ReSuMe training"
)]
pub struct Cli {
    /// Worker threads for evaluation (overrides `workers` in the config).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find the input current scale and write `i_k` back into the config.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run training phase 1 (STDP) or 2 (ReSuMe readout).
    Train {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        phase: u8,
        #[arg(long)]
        config: PathBuf,
        /// Dataset spec; defaults to `train_data` from the config.
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Phase-1 weights for phase 2, or a checkpoint of the same phase to resume.
        #[arg(long)]
        from_checkpoint: Option<PathBuf>,
        /// Initial L2a->L3 weight for phase 2 (overrides `p4_initial_weight`).
        #[arg(long)]
        p4_weight: Option<f64>,
        /// Log frozen-weight training accuracy after every epoch.
        #[arg(long)]
        log_accuracy: bool,
    },
    /// Monte Carlo search for the initial L2a->L3 weight.
    SearchWeights {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: Option<String>,
        #[arg(long)]
        min: Option<f64>,
        #[arg(long)]
        max: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        subset: Option<usize>,
        /// Write the ranked trial table and JSON log here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate phase-2 weights with frozen synapses.
    Test {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset spec; defaults to `test_data` from the config.
        #[arg(long)]
        data: Option<String>,
    },
    /// Summarize a checkpoint file.
    Inspect {
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
}

/// Parses `args` (including the program name) and runs the command,
/// writing human-readable output to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            write!(out, "{e}").map_err(|e| SnnError::io("writing output", e))?;
            return Ok(());
        }
        Err(e) => {
            let msg = e.to_string();
            return Err(SnnError::Usage(
                msg.trim_start_matches("error: ").trim_end().to_string(),
            ));
        }
    };
    execute(cli, out)
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| SnnError::io("writing output", e))
}

fn load_config(path: &Path, workers: Option<usize>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(w) = workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn resolve_data(arg: Option<String>, fallback: &Option<String>, what: &str) -> Result<String> {
    arg.or_else(|| fallback.clone())
        .ok_or_else(|| SnnError::Usage(format!("no dataset given: pass --data or set `{what}` in the config")))
}

fn load_dataset(spec: &str, cfg: &RunConfig) -> Result<(DatasetSpec, Dataset)> {
    let parsed = DatasetSpec::parse(spec)?;
    let ds = parsed.load()?;
    if ds.rows != cfg.network.rows || ds.cols != cfg.network.cols {
        return Err(SnnError::Dimension {
            expected: cfg.network.rows * cfg.network.cols,
            found: ds.rows * ds.cols,
        });
    }
    if ds.n_classes > cfg.network.n_classes {
        return Err(SnnError::Dimension {
            expected: cfg.network.n_classes,
            found: ds.n_classes,
        });
    }
    Ok((parsed, ds))
}

fn build(cfg: &RunConfig) -> Result<Network> {
    Network::new(&cfg.network, cfg.neuron, Some(cfg.encoding()?))
}

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Resolved config plus run metadata. The file is itself a valid config.
pub fn manifest_text(cfg: &RunConfig, meta: &[(&str, String)]) -> String {
    let mut text = String::from("# natcsnn run manifest\n");
    text.push_str(&cfg.to_text());
    for (k, v) in meta {
        text.push_str(&format!("{MANIFEST_PREFIX}{k} = {v}\n"));
    }
    text
}

fn write_manifest(dir: &Path, cfg: &RunConfig, meta: &[(&str, String)]) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| SnnError::io(format!("creating {}", dir.display()), e))?;
    let path = dir.join("manifest.txt");
    fs::write(&path, manifest_text(cfg, meta)).map_err(|e| SnnError::io(format!("writing {}", path.display()), e))?;
    Ok(path)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Calibrate { config } => {
            let text =
                fs::read_to_string(&config).map_err(|e| SnnError::io(format!("reading {}", config.display()), e))?;
            let cfg = RunConfig::parse(&text)?;
            let i_k = calibrate_ik(&cfg.neuron, cfg.sim.window, cfg.target_max_spikes, cfg.sim.dt)?;
            fs::write(&config, rewrite_key(&text, "i_k", &i_k.to_string()))
                .map_err(|e| SnnError::io(format!("writing {}", config.display()), e))?;
            emit(out, &format!("i_k = {i_k}\n"))
        }
        Command::Train {
            phase,
            config,
            data,
            out: dir,
            from_checkpoint,
            p4_weight,
            log_accuracy,
        } => {
            let mut cfg = load_config(&config, cli.workers)?;
            if let Some(w) = p4_weight {
                cfg.network.p4_initial_weight = w;
            }
            let spec = resolve_data(data, &cfg.train_data, "train_data")?;
            cfg.train_data = Some(spec.clone());
            if phase == 2 && from_checkpoint.is_none() {
                return Err(SnnError::Usage(
                    "phase 2 requires --from-checkpoint with phase-1 weights".into(),
                ));
            }
            let (_, dataset) = load_dataset(&spec, &cfg)?;
            let mut net = build(&cfg)?;
            let resumed = match &from_checkpoint {
                Some(path) => {
                    let ckpt = load_checkpoint(path)?;
                    restore_for_phase(&mut net, &ckpt, phase, &cfg)?
                }
                None => false,
            };
            let mut meta = vec![
                ("version", env!("CARGO_PKG_VERSION").to_string()),
                ("created_unix", unix_time().to_string()),
                ("command", format!("train --phase {phase}")),
                ("dataset_fingerprint", format!("{:016x}", dataset.fingerprint())),
                ("dataset_size", dataset.len().to_string()),
                ("topology_fingerprint", format!("{:016x}", net.fingerprint())),
                ("teacher_train_ms", format!("{:?}", cfg.sim.teacher_train())),
            ];
            if let Some(p) = &from_checkpoint {
                meta.push(("from_checkpoint", p.display().to_string()));
                meta.push(("resumed_at", net.presentations.to_string()));
            }
            let manifest = write_manifest(&dir, &cfg, &meta)?;
            let mut observer = DirectoryObserver::new(&dir)?;
            if log_accuracy {
                observer = observer.with_accuracy_probe(dataset.clone(), cfg.sim.clone(), cfg.workers);
            }
            observer.log(json!({"event": "start", "phase": phase, "resumed": resumed, "images": dataset.len()}))?;
            if phase == 1 {
                run_phase1(&mut net, &dataset, &cfg.sim, &mut observer)?;
            } else {
                run_phase2(&mut net, &dataset, &cfg.sim, &mut observer)?;
            }
            emit(out, &format!("manifest {}\n", manifest.display()))?;
            for p in &observer.written {
                emit(out, &format!("checkpoint {}\n", p.display()))?;
            }
            Ok(())
        }
        Command::SearchWeights {
            config,
            checkpoint,
            data,
            min,
            max,
            trials,
            subset,
            out: dir,
        } => {
            let cfg = load_config(&config, cli.workers)?;
            let spec = resolve_data(data, &cfg.train_data, "train_data")?;
            let (_, dataset) = load_dataset(&spec, &cfg)?;
            let subset = dataset.take(subset.unwrap_or(cfg.search_subset));
            let ckpt = load_checkpoint(&checkpoint)?;
            ckpt.check_phase(Phase::Phase1)?;
            let mut net = build(&cfg)?;
            net.load_checkpoint(&ckpt, &cfg.sim)?;
            let range = (min.unwrap_or(cfg.search_min), max.unwrap_or(cfg.search_max));
            let report = monte_carlo_weight_search(
                &mut net,
                range,
                trials.unwrap_or(cfg.search_trials),
                &subset,
                &cfg.sim,
                cfg.workers,
            )?;
            let table = report.render();
            if let Some(dir) = dir {
                fs::create_dir_all(&dir).map_err(|e| SnnError::io(format!("creating {}", dir.display()), e))?;
                fs::write(dir.join("search.txt"), &table).map_err(|e| SnnError::io("writing search table", e))?;
                let log: String = report
                    .trials
                    .iter()
                    .map(|t| {
                        format!(
                            "{}\n",
                            json!({"event": "trial", "trial": t.trial, "weight": t.weight, "accuracy": t.accuracy})
                        )
                    })
                    .collect();
                fs::write(dir.join("search.log"), log).map_err(|e| SnnError::io("writing search log", e))?;
            }
            emit(out, &table)?;
            emit(out, &format!("best p4_initial_weight = {}\n", report.best_weight))
        }
        Command::Test {
            config,
            checkpoint,
            data,
        } => {
            let cfg = load_config(&config, cli.workers)?;
            let spec = resolve_data(data, &cfg.test_data, "test_data")?;
            let (parsed, dataset) = load_dataset(&spec, &cfg)?;
            let ckpt = load_checkpoint(&checkpoint)?;
            ckpt.check_phase(Phase::Phase2)?;
            let mut net = build(&cfg)?;
            net.load_checkpoint(&ckpt, &cfg.sim)?;
            net.enter_testing_mode();
            let report = evaluate(&net, &dataset, &cfg.sim, cfg.workers)?;
            let mut names = parsed.class_names();
            names.resize_with(cfg.network.n_classes, String::new);
            for (k, n) in names.iter_mut().enumerate() {
                if n.is_empty() {
                    *n = format!("class_{k}");
                }
            }
            emit(out, &report.render(&names))
        }
        Command::Inspect { checkpoint, bins } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            emit(out, &inspect_text(&ckpt, bins)?)
        }
    }
}

/// Loads `ckpt` into `net` for a run of `phase`. Returns true when the run
/// resumes a checkpoint of the same phase.
fn restore_for_phase(net: &mut Network, ckpt: &Checkpoint, phase: u8, cfg: &RunConfig) -> Result<bool> {
    match (phase, ckpt.phase) {
        (1, Phase::Phase1) | (2, Phase::Phase2) => {
            net.load_checkpoint(ckpt, &cfg.sim)?;
            Ok(true)
        }
        (2, Phase::Phase1) => {
            net.load_checkpoint(ckpt, &cfg.sim)?;
            net.prepare_phase2(cfg.network.p4_initial_weight, &cfg.sim)?;
            Ok(false)
        }
        (p, found) => Err(SnnError::Phase {
            expected: if p == 1 {
                Phase::Phase1.name()
            } else {
                "phase1 or phase2"
            }
            .into(),
            found: found.name().into(),
        }),
    }
}

/// Equal-width histogram over `[min, max]`; the maximum lands in the last bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<usize> {
    let mut counts = vec![0usize; bins.max(1)];
    if values.is_empty() {
        return counts;
    }
    let s = WeightStats::of(values);
    let width = s.max - s.min;
    for &v in values {
        let b = if width > 0.0 {
            (((v - s.min) / width) * counts.len() as f64) as usize
        } else {
            0
        };
        let last = counts.len() - 1;
        counts[b.min(last)] += 1;
    }
    counts
}

pub fn inspect_text(ckpt: &Checkpoint, bins: usize) -> Result<String> {
    if bins == 0 {
        return Err(SnnError::Usage("--bins must be >= 1".into()));
    }
    let mut text = format!(
        "fingerprint {:016x}\nphase {}\npresentations {}\n",
        ckpt.fingerprint,
        ckpt.phase.name(),
        ckpt.presentations
    );
    for (i, w) in ckpt.weights.iter().enumerate() {
        let name = ProjectionId::ALL
            .get(i)
            .map_or_else(|| format!("projection{i}"), |p| p.name().to_string());
        if w.is_empty() {
            text.push_str(&format!("{name} connections 0\n"));
            continue;
        }
        let s = WeightStats::of(w);
        let h = histogram(w, bins);
        text.push_str(&format!(
            "{name} connections {} min {} max {} mean {}\n{name} histogram {}\n",
            w.len(),
            s.min,
            s.max,
            s.mean,
            h.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
        ));
    }
    Ok(text)
}

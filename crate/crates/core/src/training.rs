//! Two-phase training protocol, initial-weight search and evaluation.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::checkpoint::{save_checkpoint, Phase};
use crate::data::Dataset;
use crate::error::{Result, SnnError};
use crate::network::{Network, SimulationConfig};
use crate::plasticity::PlasticityMode;
use crate::topology::{ProjectionId, WeightStats};

/// Receives checkpoints and progress while a phase runs.
pub trait TrainingObserver {
    /// Called every `checkpoint_interval` presentations (`is_final == false`)
    /// and once when the phase ends.
    fn checkpoint(&mut self, net: &Network, is_final: bool) -> Result<()>;

    fn epoch_end(&mut self, _net: &Network, _epoch: usize) -> Result<()> {
        Ok(())
    }
}

/// Discards everything.
pub struct NoObserver;

impl TrainingObserver for NoObserver {
    fn checkpoint(&mut self, _net: &Network, _is_final: bool) -> Result<()> {
        Ok(())
    }
}

/// Writes checkpoint files and a line-delimited JSON log into a directory.
///
/// Periodic files are `phase{N}_{presentations:08}.ckpt`, the final one
/// `phase{N}_final.ckpt`.
pub struct DirectoryObserver {
    dir: PathBuf,
    log: File,
    probe: Option<(Dataset, SimulationConfig, usize)>,
    pub written: Vec<PathBuf>,
}

impl DirectoryObserver {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| SnnError::io(format!("creating {}", dir.display()), e))?;
        let log_path = dir.join("run.log");
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&log_path)
            .map_err(|e| SnnError::io(format!("opening {}", log_path.display()), e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            log,
            probe: None,
            written: Vec::new(),
        })
    }

    /// Also log frozen-weight accuracy on `dataset` after every epoch.
    pub fn with_accuracy_probe(mut self, dataset: Dataset, sim: SimulationConfig, workers: usize) -> Self {
        self.probe = Some((dataset, sim, workers));
        self
    }

    pub fn log(&mut self, record: serde_json::Value) -> Result<()> {
        writeln!(self.log, "{record}").map_err(|e| SnnError::io("writing run log", e))
    }

    pub fn checkpoint_path(dir: &Path, phase: Phase, presentations: Option<u64>) -> PathBuf {
        let n = phase.tag();
        match presentations {
            Some(p) => dir.join(format!("phase{n}_{p:08}.ckpt")),
            None => dir.join(format!("phase{n}_final.ckpt")),
        }
    }
}

impl TrainingObserver for DirectoryObserver {
    fn checkpoint(&mut self, net: &Network, is_final: bool) -> Result<()> {
        let path = Self::checkpoint_path(
            &self.dir,
            net.phase,
            if is_final { None } else { Some(net.presentations) },
        );
        save_checkpoint(&net.to_checkpoint(), &path)?;
        self.log(json!({
            "event": "checkpoint",
            "phase": net.phase.name(),
            "presentations": net.presentations,
            "final": is_final,
            "path": path.display().to_string(),
        }))?;
        self.written.push(path);
        Ok(())
    }

    fn epoch_end(&mut self, net: &Network, epoch: usize) -> Result<()> {
        let stats: Vec<_> = ProjectionId::ALL
            .iter()
            .map(|&id| {
                let s = WeightStats::of(net.topology.projection(id).weights());
                json!({"projection": id.name(), "min": s.min, "max": s.max, "mean": s.mean})
            })
            .collect();
        let accuracy = match &self.probe {
            Some((ds, sim, workers)) if !ds.is_empty() => {
                let mut frozen = net.clone();
                frozen.enter_testing_mode();
                Some(evaluate(&frozen, ds, sim, *workers)?.overall)
            }
            _ => None,
        };
        self.log(json!({
            "event": "epoch",
            "phase": net.phase.name(),
            "epoch": epoch,
            "presentations": net.presentations,
            "accuracy": accuracy,
            "weights": stats,
        }))
    }
}

/// Presentation order for `epoch`: dataset order, or a shuffle derived only
/// from `(shuffle_seed, epoch)` so a resumed run sees the same order.
pub fn epoch_order(len: usize, epoch: usize, shuffle_seed: Option<u64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..len).collect();
    if let Some(seed) = shuffle_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(epoch as u64));
        order.shuffle(&mut rng);
    }
    order
}

fn run_epochs(
    net: &mut Network,
    dataset: &Dataset,
    sim: &SimulationConfig,
    epochs: usize,
    observer: &mut dyn TrainingObserver,
) -> Result<()> {
    let len = dataset.len();
    let total = (epochs * len) as u64;
    let mut order_epoch = usize::MAX;
    let mut order = Vec::new();
    while net.presentations < total {
        let k = net.presentations as usize;
        let epoch = k / len;
        if epoch != order_epoch {
            order = epoch_order(len, epoch, sim.shuffle_seed);
            order_epoch = epoch;
        }
        net.present_image(&dataset.samples[order[k % len]], sim, true)?;
        net.presentations += 1;
        if net.presentations.is_multiple_of(sim.checkpoint_interval as u64) {
            observer.checkpoint(net, false)?;
        }
        if (net.presentations as usize).is_multiple_of(len) {
            observer.epoch_end(net, epoch)?;
        }
    }
    observer.checkpoint(net, true)
}

/// Unsupervised STDP on P1, P2 and P3 for `epochs_phase1` epochs. A network
/// restored from a phase-1 checkpoint continues from its presentation count.
pub fn run_phase1(
    net: &mut Network,
    dataset: &Dataset,
    sim: &SimulationConfig,
    observer: &mut dyn TrainingObserver,
) -> Result<()> {
    sim.validate()?;
    for id in [ProjectionId::P1, ProjectionId::P2, ProjectionId::P3] {
        if !matches!(net.topology.projection(id).mode(), PlasticityMode::Stdp(_)) {
            return Err(SnnError::WrongMode {
                required: "stdp",
                found: net.topology.projection(id).mode().name(),
            });
        }
    }
    match net.phase {
        Phase::Initial => {
            net.phase = Phase::Phase1;
            net.presentations = 0;
        }
        Phase::Phase1 => {}
        Phase::Phase2 => {
            return Err(SnnError::Phase {
                expected: Phase::Phase1.name().into(),
                found: Phase::Phase2.name().into(),
            })
        }
    }
    if net.topology.teachers.is_some() {
        return Err(SnnError::InvalidParameter("phase 1 runs without teachers".into()));
    }
    run_epochs(net, dataset, sim, sim.epochs_phase1, observer)
}

/// Supervised ReSuMe on the readout for `epochs_phase2` epochs. The network
/// must have gone through [`Network::prepare_phase2`] or been restored from
/// a phase-2 checkpoint.
pub fn run_phase2(
    net: &mut Network,
    dataset: &Dataset,
    sim: &SimulationConfig,
    observer: &mut dyn TrainingObserver,
) -> Result<()> {
    sim.validate()?;
    if net.phase != Phase::Phase2 {
        return Err(SnnError::Phase {
            expected: Phase::Phase2.name().into(),
            found: net.phase.name().into(),
        });
    }
    for id in [ProjectionId::P1, ProjectionId::P2, ProjectionId::P3] {
        if !net.topology.projection(id).mode().is_static() {
            return Err(SnnError::WrongMode {
                required: "static",
                found: net.topology.projection(id).mode().name(),
            });
        }
    }
    if net.topology.teachers.is_none() {
        return Err(SnnError::InvalidParameter("phase 2 requires teachers".into()));
    }
    run_epochs(net, dataset, sim, sim.epochs_phase2, observer)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAccuracy {
    pub class: usize,
    pub correct: usize,
    pub total: usize,
    /// `None` when the class has no samples.
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub overall: f64,
    pub per_class: Vec<ClassAccuracy>,
    /// Mean of the per-class accuracies (classes with samples only).
    pub class_mean: f64,
    /// Sample standard deviation of the per-class accuracies.
    pub class_std: f64,
    pub predictions: Vec<usize>,
    pub ties: usize,
}

impl EvaluationReport {
    /// Per-class accuracy table in percent, followed by the overall score and
    /// mean ± standard deviation across classes.
    pub fn render(&self, class_names: &[String]) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<14} {:>12}\n", "Class", "Accuracy [%]"));
        for c in &self.per_class {
            let name = class_names
                .get(c.class)
                .cloned()
                .unwrap_or_else(|| format!("class_{}", c.class));
            let acc = c
                .accuracy
                .map_or_else(|| "n/a".to_string(), |a| format!("{:.3}", 100.0 * a));
            out.push_str(&format!("{name:<14} {acc:>12}\n"));
        }
        out.push_str(&format!("{:<14} {:>12.3}\n", "overall", 100.0 * self.overall));
        out.push_str(&format!(
            "mean {:.3}% with a standard deviation of {:.3}%\n",
            100.0 * self.class_mean,
            100.0 * self.class_std
        ));
        out
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Builds the report from true labels and predictions.
pub fn score(labels: &[usize], predictions: &[usize], n_classes: usize, ties: usize) -> Result<EvaluationReport> {
    if labels.is_empty() {
        return Err(SnnError::Empty("evaluation dataset"));
    }
    let mut correct = vec![0usize; n_classes];
    let mut total = vec![0usize; n_classes];
    for (&l, &p) in labels.iter().zip(predictions) {
        total[l] += 1;
        if l == p {
            correct[l] += 1;
        }
    }
    let per_class: Vec<ClassAccuracy> = (0..n_classes)
        .map(|k| ClassAccuracy {
            class: k,
            correct: correct[k],
            total: total[k],
            accuracy: (total[k] > 0).then(|| correct[k] as f64 / total[k] as f64),
        })
        .collect();
    let accs: Vec<f64> = per_class.iter().filter_map(|c| c.accuracy).collect();
    let (class_mean, class_std) = mean_std(&accs);
    Ok(EvaluationReport {
        overall: correct.iter().sum::<usize>() as f64 / labels.len() as f64,
        per_class,
        class_mean,
        class_std,
        predictions: predictions.to_vec(),
        ties,
    })
}

/// Classifies every sample with frozen weights. Samples are split across
/// `workers` threads, each with its own copy of the network; results do not
/// depend on the worker count.
pub fn evaluate(net: &Network, dataset: &Dataset, sim: &SimulationConfig, workers: usize) -> Result<EvaluationReport> {
    if dataset.is_empty() {
        return Err(SnnError::Empty("evaluation dataset"));
    }
    if dataset.n_classes > net.config().n_classes {
        return Err(SnnError::Dimension {
            expected: net.config().n_classes,
            found: dataset.n_classes,
        });
    }
    let workers = workers.max(1);
    let chunk = dataset.len().div_ceil(workers);
    let classify_chunk = |samples: &[crate::data::ImageSample]| -> Result<Vec<(usize, bool)>> {
        let mut local = net.clone();
        samples
            .iter()
            .map(|s| local.classify(s, sim).map(|r| (r.predicted, r.tie)))
            .collect()
    };
    let results: Vec<(usize, bool)> = if workers == 1 {
        classify_chunk(&dataset.samples)?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| SnnError::InvalidParameter(format!("thread pool: {e}")))?;
        let parts: Vec<Result<Vec<(usize, bool)>>> =
            pool.install(|| dataset.samples.par_chunks(chunk).map(classify_chunk).collect());
        let mut all = Vec::with_capacity(dataset.len());
        for p in parts {
            all.extend(p?);
        }
        all
    };
    let labels: Vec<usize> = dataset.samples.iter().map(|s| s.label).collect();
    let predictions: Vec<usize> = results.iter().map(|r| r.0).collect();
    let ties = results.iter().filter(|r| r.1).count();
    score(&labels, &predictions, net.config().n_classes, ties)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchTrial {
    pub trial: usize,
    pub weight: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub best_weight: f64,
    pub best_accuracy: f64,
    /// In sampling order.
    pub trials: Vec<SearchTrial>,
}

impl SearchReport {
    /// Trials sorted by accuracy (descending), then weight (ascending).
    pub fn ranked(&self) -> Vec<SearchTrial> {
        let mut r = self.trials.clone();
        r.sort_by(|a, b| b.accuracy.total_cmp(&a.accuracy).then(a.weight.total_cmp(&b.weight)));
        r
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "{:>5} {:>5} {:>12} {:>12}\n",
            "rank", "trial", "weight [pA]", "accuracy [%]"
        );
        for (rank, t) in self.ranked().iter().enumerate() {
            out.push_str(&format!(
                "{:>5} {:>5} {:>12.4} {:>12.3}\n",
                rank + 1,
                t.trial,
                t.weight,
                100.0 * t.accuracy
            ));
        }
        out
    }
}

/// Monte Carlo search for the initial L2a->L3 weight.
///
/// Each trial samples a weight uniformly from `range` using the network's
/// RNG, trains a copy of `base` for one phase-2 epoch on `subset` and scores
/// it on the same subset. Highest accuracy wins; ties go to the smaller weight.
pub fn monte_carlo_weight_search(
    base: &mut Network,
    range: (f64, f64),
    trials: usize,
    subset: &Dataset,
    sim: &SimulationConfig,
    workers: usize,
) -> Result<SearchReport> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < 0.0 {
        return Err(SnnError::InvalidParameter(format!(
            "empty or invalid weight range [{lo}, {hi}]"
        )));
    }
    if trials == 0 {
        return Err(SnnError::InvalidParameter("trials must be >= 1".into()));
    }
    if subset.is_empty() {
        return Err(SnnError::Empty("search subset"));
    }
    if base.phase != Phase::Phase1 {
        return Err(SnnError::Phase {
            expected: Phase::Phase1.name().into(),
            found: base.phase.name().into(),
        });
    }
    let short = SimulationConfig {
        epochs_phase2: 1,
        checkpoint_interval: usize::MAX,
        ..sim.clone()
    };
    let mut results = Vec::with_capacity(trials);
    for trial in 0..trials {
        let weight = if lo == hi { lo } else { base.rng.gen_range(lo..=hi) };
        let mut net = base.clone();
        net.prepare_phase2(weight, &short)?;
        run_phase2(&mut net, subset, &short, &mut NoObserver)?;
        net.enter_testing_mode();
        let accuracy = evaluate(&net, subset, &short, workers)?.overall;
        results.push(SearchTrial {
            trial,
            weight,
            accuracy,
        });
    }
    let mut report = SearchReport {
        best_weight: 0.0,
        best_accuracy: 0.0,
        trials: results,
    };
    let best = report.ranked()[0].clone();
    report.best_weight = best.weight;
    report.best_accuracy = best.accuracy;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn score_examples() {
        let r = score(&[0, 1, 1], &[0, 1, 1], 2, 0).unwrap();
        assert_eq!(r.overall, 1.0);
        let r = score(&[2], &[0], 3, 0).unwrap();
        assert_eq!(r.overall, 0.0);
        assert_eq!(r.per_class[2].accuracy, Some(0.0));
        assert_eq!(r.per_class[0].accuracy, None);
        assert!(score(&[], &[], 3, 0).is_err());
    }

    #[test]
    fn class_mean_and_sample_std() {
        let r = score(&[0, 0, 1, 1], &[0, 0, 1, 0], 2, 0).unwrap();
        assert!((r.class_mean - 0.75).abs() < 1e-12);
        // accuracies 1.0, 0.5 -> sample std = sqrt(0.125)
        assert!((r.class_std - 0.125f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn shuffled_order_is_a_permutation_and_stable() {
        let a = epoch_order(20, 3, Some(11));
        let b = epoch_order(20, 3, Some(11));
        assert_eq!(a, b);
        let mut s = a.clone();
        s.sort_unstable();
        assert_eq!(s, (0..20).collect::<Vec<_>>());
        assert_eq!(epoch_order(4, 0, None), vec![0, 1, 2, 3]);
    }

    #[test]
    fn ranking_breaks_ties_toward_smaller_weight() {
        let rep = SearchReport {
            best_weight: 0.0,
            best_accuracy: 0.0,
            trials: vec![
                SearchTrial {
                    trial: 0,
                    weight: 300.0,
                    accuracy: 0.5,
                },
                SearchTrial {
                    trial: 1,
                    weight: 200.0,
                    accuracy: 0.5,
                },
                SearchTrial {
                    trial: 2,
                    weight: 250.0,
                    accuracy: 0.4,
                },
            ],
        };
        let r = rep.ranked();
        assert_eq!(r[0].weight, 200.0);
        assert_eq!(r[2].weight, 250.0);
    }

    #[test]
    fn report_rendering_has_one_row_per_class() {
        let r = score(&[0, 1, 2], &[0, 1, 0], 3, 0).unwrap();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let text = r.render(&names);
        let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
        assert_eq!(rows[1], vec!["a", "100.000"]);
        assert_eq!(rows[3], vec!["c", "0.000"]);
        assert!(text.contains("standard deviation"));
    }
}

//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are skipped. Keys under the
//! `manifest.` prefix are metadata written alongside a run and are ignored
//! when reading; any other unknown key is an error. Serialization writes
//! every key, so a written file resolves all defaults.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use crate::encoding::EncodingConfig;
use crate::error::{Result, SnnError};
use crate::network::SimulationConfig;
use crate::neuron::NeuronParams;
use crate::topology::{NatCsnnConfig, ReadoutWiring};

pub const MANIFEST_PREFIX: &str = "manifest.";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub network: NatCsnnConfig,
    pub sim: SimulationConfig,
    pub neuron: NeuronParams,
    /// Calibrated full-intensity current (pA); `None` until calibrated.
    pub i_k: Option<f64>,
    pub target_max_spikes: usize,
    pub search_min: f64,
    pub search_max: f64,
    pub search_trials: usize,
    pub search_subset: usize,
    pub train_data: Option<String>,
    pub test_data: Option<String>,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            network: NatCsnnConfig::default(),
            sim: SimulationConfig::default(),
            neuron: NeuronParams::default(),
            i_k: None,
            target_max_spikes: 10,
            search_min: 0.0,
            search_max: 1200.0,
            search_trials: 20,
            search_subset: 500,
            train_data: None,
            test_data: None,
            workers: 1,
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| SnnError::InvalidParameter(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(SnnError::InvalidParameter(format!(
            "`{key}`: expected true or false, got `{value}`"
        ))),
    }
}

fn parse_opt<T: std::str::FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value == "none" || value.is_empty() {
        Ok(None)
    } else {
        parse_num(key, value).map(Some)
    }
}

fn opt_str<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl RunConfig {
    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let n = &self.network;
        let s = &self.sim;
        let p = &self.neuron;
        vec![
            ("dt", s.dt.to_string()),
            ("window", s.window.to_string()),
            ("epochs_phase1", s.epochs_phase1.to_string()),
            ("epochs_phase2", s.epochs_phase2.to_string()),
            ("checkpoint_interval", s.checkpoint_interval.to_string()),
            ("shuffle_seed", opt_str(&s.shuffle_seed)),
            ("teacher_spikes", s.teacher_spikes.to_string()),
            ("train_readout_inhibition", s.train_readout_inhibition.to_string()),
            ("rows", n.rows.to_string()),
            ("cols", n.cols.to_string()),
            ("n_classes", n.n_classes.to_string()),
            ("neurons_per_class", n.neurons_per_class.to_string()),
            ("l2_fraction", n.l2_fraction.to_string()),
            ("l2a_to_l3", n.l2a_to_l3.as_str().to_string()),
            ("seed", n.seed.to_string()),
            ("p1_weight_mean", n.p1_weight.mean.to_string()),
            ("p1_weight_jitter", n.p1_weight.jitter.to_string()),
            ("p2_weight_mean", n.p2_weight.mean.to_string()),
            ("p2_weight_jitter", n.p2_weight.jitter.to_string()),
            ("p3_weight_mean", n.p3_weight.mean.to_string()),
            ("p3_weight_jitter", n.p3_weight.jitter.to_string()),
            ("p4_initial_weight", n.p4_initial_weight.to_string()),
            ("p5_weight", n.p5_weight.to_string()),
            ("delay", n.delay.to_string()),
            ("stdp_a_plus", n.stdp.a_plus.to_string()),
            ("stdp_a_minus", n.stdp.a_minus.to_string()),
            ("stdp_tau", n.stdp.tau_trace.to_string()),
            ("stdp_w_max", n.stdp.w_max.to_string()),
            ("stdp_w_min", n.stdp.w_min.to_string()),
            ("resume_a_ex", n.resume.a_ex.to_string()),
            ("resume_a_ih", n.resume.a_ih.to_string()),
            ("resume_tau_ex", n.resume.tau_ex.to_string()),
            ("resume_tau_ih", n.resume.tau_ih.to_string()),
            ("resume_w_max", n.resume.w_max.to_string()),
            ("c_m", p.c_m.to_string()),
            ("tau_m", p.tau_m.to_string()),
            ("e_l", p.e_l.to_string()),
            ("tau_syn_ex", p.tau_syn_ex.to_string()),
            ("tau_syn_in", p.tau_syn_in.to_string()),
            ("t_ref", p.t_ref.to_string()),
            ("tau_1", p.tau_1.to_string()),
            ("tau_2", p.tau_2.to_string()),
            ("alpha_1", p.alpha_1.to_string()),
            ("alpha_2", p.alpha_2.to_string()),
            ("omega", p.omega.to_string()),
            ("i_k", opt_str(&self.i_k)),
            ("target_max_spikes", self.target_max_spikes.to_string()),
            ("search_min", self.search_min.to_string()),
            ("search_max", self.search_max.to_string()),
            ("search_trials", self.search_trials.to_string()),
            ("search_subset", self.search_subset.to_string()),
            ("train_data", opt_str(&self.train_data)),
            ("test_data", opt_str(&self.test_data)),
            ("workers", self.workers.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let n = &mut self.network;
        let s = &mut self.sim;
        let p = &mut self.neuron;
        match key {
            "dt" => s.dt = parse_num(key, value)?,
            "window" => s.window = parse_num(key, value)?,
            "epochs_phase1" => s.epochs_phase1 = parse_num(key, value)?,
            "epochs_phase2" => s.epochs_phase2 = parse_num(key, value)?,
            "checkpoint_interval" => s.checkpoint_interval = parse_num(key, value)?,
            "shuffle_seed" => s.shuffle_seed = parse_opt(key, value)?,
            "teacher_spikes" => s.teacher_spikes = parse_num(key, value)?,
            "train_readout_inhibition" => s.train_readout_inhibition = parse_bool(key, value)?,
            "rows" => n.rows = parse_num(key, value)?,
            "cols" => n.cols = parse_num(key, value)?,
            "n_classes" => n.n_classes = parse_num(key, value)?,
            "neurons_per_class" => n.neurons_per_class = parse_num(key, value)?,
            "l2_fraction" => n.l2_fraction = parse_num(key, value)?,
            "l2a_to_l3" => n.l2a_to_l3 = ReadoutWiring::parse(value)?,
            "seed" => n.seed = parse_num(key, value)?,
            "p1_weight_mean" => n.p1_weight.mean = parse_num(key, value)?,
            "p1_weight_jitter" => n.p1_weight.jitter = parse_num(key, value)?,
            "p2_weight_mean" => n.p2_weight.mean = parse_num(key, value)?,
            "p2_weight_jitter" => n.p2_weight.jitter = parse_num(key, value)?,
            "p3_weight_mean" => n.p3_weight.mean = parse_num(key, value)?,
            "p3_weight_jitter" => n.p3_weight.jitter = parse_num(key, value)?,
            "p4_initial_weight" => n.p4_initial_weight = parse_num(key, value)?,
            "p5_weight" => n.p5_weight = parse_num(key, value)?,
            "delay" => n.delay = parse_num(key, value)?,
            "stdp_a_plus" => n.stdp.a_plus = parse_num(key, value)?,
            "stdp_a_minus" => n.stdp.a_minus = parse_num(key, value)?,
            "stdp_tau" => n.stdp.tau_trace = parse_num(key, value)?,
            "stdp_w_max" => n.stdp.w_max = parse_num(key, value)?,
            "stdp_w_min" => n.stdp.w_min = parse_num(key, value)?,
            "resume_a_ex" => n.resume.a_ex = parse_num(key, value)?,
            "resume_a_ih" => n.resume.a_ih = parse_num(key, value)?,
            "resume_tau_ex" => n.resume.tau_ex = parse_num(key, value)?,
            "resume_tau_ih" => n.resume.tau_ih = parse_num(key, value)?,
            "resume_w_max" => n.resume.w_max = parse_num(key, value)?,
            "c_m" => p.c_m = parse_num(key, value)?,
            "tau_m" => p.tau_m = parse_num(key, value)?,
            "e_l" => p.e_l = parse_num(key, value)?,
            "tau_syn_ex" => p.tau_syn_ex = parse_num(key, value)?,
            "tau_syn_in" => p.tau_syn_in = parse_num(key, value)?,
            "t_ref" => p.t_ref = parse_num(key, value)?,
            "tau_1" => p.tau_1 = parse_num(key, value)?,
            "tau_2" => p.tau_2 = parse_num(key, value)?,
            "alpha_1" => p.alpha_1 = parse_num(key, value)?,
            "alpha_2" => p.alpha_2 = parse_num(key, value)?,
            "omega" => p.omega = parse_num(key, value)?,
            "i_k" => self.i_k = parse_opt(key, value)?,
            "target_max_spikes" => self.target_max_spikes = parse_num(key, value)?,
            "search_min" => self.search_min = parse_num(key, value)?,
            "search_max" => self.search_max = parse_num(key, value)?,
            "search_trials" => self.search_trials = parse_num(key, value)?,
            "search_subset" => self.search_subset = parse_num(key, value)?,
            "train_data" => self.train_data = parse_opt(key, value)?,
            "test_data" => self.test_data = parse_opt(key, value)?,
            "workers" => self.workers = parse_num(key, value)?,
            other => return Err(SnnError::InvalidParameter(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Parses text on top of the defaults. Duplicate keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SnnError::Format(format!("config line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key.starts_with(MANIFEST_PREFIX) {
                continue;
            }
            if !seen.insert(key.to_string()) {
                return Err(SnnError::Format(format!(
                    "config line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| SnnError::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.sim.validate()?;
        self.neuron.validate()?;
        if let Some(i_k) = self.i_k {
            EncodingConfig::new(i_k, self.sim.window, self.target_max_spikes)?;
        } else if self.target_max_spikes == 0 {
            return Err(SnnError::InvalidParameter("target_max_spikes must be >= 1".into()));
        }
        if (self.network.delay - self.sim.dt).abs() > 1e-12 {
            return Err(SnnError::InvalidParameter(format!(
                "delay {} must equal dt {}",
                self.network.delay, self.sim.dt
            )));
        }
        if self.workers == 0 {
            return Err(SnnError::InvalidParameter("workers must be >= 1".into()));
        }
        Ok(())
    }

    /// Encoding settings, or [`SnnError::Uncalibrated`] when `i_k` is unset.
    pub fn encoding(&self) -> Result<EncodingConfig> {
        let i_k = self.i_k.ok_or(SnnError::Uncalibrated)?;
        EncodingConfig::new(i_k, self.sim.window, self.target_max_spikes)
    }
}

/// Replaces the value of `key` in config text, keeping every other line.
/// Appends the key when absent.
pub fn rewrite_key(text: &str, key: &str, value: &str) -> String {
    let mut out = String::with_capacity(text.len() + 32);
    let mut found = false;
    for line in text.lines() {
        let is_key = line
            .split_once('=')
            .is_some_and(|(k, _)| k.trim() == key && !line.trim_start().starts_with('#'));
        if is_key && !found {
            out.push_str(&format!("{key} = {value}\n"));
            found = true;
        } else if !is_key {
            out.push_str(line);
            out.push('\n');
        }
    }
    if !found {
        out.push_str(&format!("{key} = {value}\n"));
    }
    out
}

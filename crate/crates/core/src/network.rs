//! Clock-driven simulation of one image presentation.
//!
//! Each step: spikes emitted in the previous step are delivered through every
//! projection (one-step delay), all neurons advance by the exact propagator,
//! and STDP populations process this step's presynaptic events before the
//! postsynaptic ones (coincident pairs count as pre-before-post). ReSuMe
//! populations are updated once, after the window, when teachers are present.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Phase, RngState, FORMAT_VERSION};
use crate::data::ImageSample;
use crate::encoding::{encode_image, steps_in, EncodingConfig};
use crate::error::{Result, SnnError};
use crate::neuron::{NeuronParams, NeuronState, Propagator};
use crate::plasticity::PlasticityMode;
use crate::spikes::SpikeRecord;
use crate::topology::{attach_teachers, build_network, NatCsnnConfig, NetworkTopology, ProjectionId};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub dt: f64,
    pub window: f64,
    pub epochs_phase1: usize,
    pub epochs_phase2: usize,
    /// Presentations between periodic checkpoints.
    pub checkpoint_interval: usize,
    /// Per-epoch shuffling; `None` keeps dataset order.
    pub shuffle_seed: Option<u64>,
    /// Spikes in a teacher train (evenly spaced over the window).
    pub teacher_spikes: usize,
    /// Train the cross-class L3 inhibition in phase 2 as well as L2a->L3.
    pub train_readout_inhibition: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            window: 100.0,
            epochs_phase1: 5,
            epochs_phase2: 5,
            checkpoint_interval: 500,
            shuffle_seed: None,
            teacher_spikes: 10,
            train_readout_inhibition: true,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        steps_in(self.window, self.dt)?;
        if self.epochs_phase1 == 0 || self.epochs_phase2 == 0 {
            return Err(SnnError::InvalidParameter("epochs must be >= 1".into()));
        }
        if self.checkpoint_interval == 0 {
            return Err(SnnError::InvalidParameter("checkpoint_interval must be >= 1".into()));
        }
        if self.teacher_spikes == 0 {
            return Err(SnnError::InvalidParameter("teacher_spikes must be >= 1".into()));
        }
        Ok(())
    }

    /// Evenly spaced teacher spike times, centred in equal sub-windows and
    /// snapped to the integration grid.
    pub fn teacher_train(&self) -> Vec<f64> {
        let n = self.teacher_spikes;
        let mut out: Vec<f64> = (0..n)
            .map(|k| {
                let t = (k as f64 + 0.5) * self.window / n as f64;
                (t / self.dt).round() * self.dt
            })
            .filter(|&t| t < self.window)
            .collect();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub predicted: usize,
    /// Spike count of every L3 neuron.
    pub neuron_counts: Vec<usize>,
    /// Summed count per class group.
    pub group_counts: Vec<usize>,
    /// More than one class shares the maximum.
    pub tie: bool,
}

/// Arg-max over class group counts; ties go to the lowest class index.
pub fn winner_take_all(group_counts: &[usize]) -> (usize, bool) {
    let max = group_counts.iter().copied().max().unwrap_or(0);
    let winner = group_counts.iter().position(|&c| c == max).unwrap_or(0);
    let tie = group_counts.iter().filter(|&&c| c == max).count() > 1;
    (winner, tie)
}

#[derive(Debug, Clone)]
pub struct Network {
    pub topology: NetworkTopology,
    pub neuron: NeuronParams,
    pub encoding: Option<EncodingConfig>,
    pub phase: Phase,
    /// Presentations completed in the current phase.
    pub presentations: u64,
    pub rng: ChaCha8Rng,
    states: Vec<NeuronState>,
}

impl Network {
    pub fn new(cfg: &NatCsnnConfig, neuron: NeuronParams, encoding: Option<EncodingConfig>) -> Result<Self> {
        neuron.validate()?;
        if let Some(e) = &encoding {
            e.validate()?;
        }
        let topology = build_network(cfg)?;
        let states = vec![NeuronState::resting(&neuron); topology.layout.total()];
        Ok(Self {
            topology,
            neuron,
            encoding,
            phase: Phase::Initial,
            presentations: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed_5eed_5eed),
            states,
        })
    }

    pub fn config(&self) -> &NatCsnnConfig {
        &self.topology.config
    }

    pub fn states(&self) -> &[NeuronState] {
        &self.states
    }

    pub fn fingerprint(&self) -> u64 {
        self.topology.fingerprint()
    }

    pub fn reset_states(&mut self) {
        let rest = NeuronState::resting(&self.neuron);
        self.states.iter_mut().for_each(|s| *s = rest);
        for pop in &mut self.topology.projections {
            pop.reset_traces();
        }
    }

    /// True when no projection is plastic.
    pub fn is_testing_mode(&self) -> bool {
        self.topology.projections.iter().all(|p| p.mode().is_static())
    }

    /// Freezes every projection.
    pub fn enter_testing_mode(&mut self) {
        for pop in &mut self.topology.projections {
            pop.freeze();
        }
    }

    /// Freezes the lower projections, attaches teachers and seeds the readout
    /// with `p4_initial_weight`. Requires phase-1 weights.
    pub fn prepare_phase2(&mut self, p4_initial_weight: f64, sim: &SimulationConfig) -> Result<()> {
        if self.phase != Phase::Phase1 {
            return Err(SnnError::Phase {
                expected: Phase::Phase1.name().into(),
                found: self.phase.name().into(),
            });
        }
        self.apply_phase2_modes(sim)?;
        self.topology
            .projection_mut(ProjectionId::P4)
            .fill_weights(p4_initial_weight)?;
        self.phase = Phase::Phase2;
        self.presentations = 0;
        Ok(())
    }

    fn apply_phase2_modes(&mut self, sim: &SimulationConfig) -> Result<()> {
        let resume = PlasticityMode::Resume(self.topology.config.resume);
        for id in [ProjectionId::P1, ProjectionId::P2, ProjectionId::P3] {
            self.topology.projection_mut(id).freeze();
        }
        self.topology.projection_mut(ProjectionId::P4).set_mode(resume)?;
        if sim.train_readout_inhibition {
            self.topology.projection_mut(ProjectionId::P5).set_mode(resume)?;
        } else {
            self.topology.projection_mut(ProjectionId::P5).freeze();
        }
        if self.topology.teachers.is_none() {
            attach_teachers(&mut self.topology)?;
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: FORMAT_VERSION,
            fingerprint: self.fingerprint(),
            phase: self.phase,
            presentations: self.presentations,
            rng: RngState::capture(&self.rng),
            weights: self.topology.projections.iter().map(|p| p.weights().to_vec()).collect(),
        }
    }

    /// Restores weights, phase, counter and RNG. Plasticity modes follow the
    /// checkpoint's phase.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint, sim: &SimulationConfig) -> Result<()> {
        ckpt.check_fingerprint(self.fingerprint())?;
        if ckpt.weights.len() != self.topology.projections.len() {
            return Err(SnnError::Format(format!(
                "checkpoint has {} projections, expected {}",
                ckpt.weights.len(),
                self.topology.projections.len()
            )));
        }
        if ckpt.phase == Phase::Phase2 {
            self.apply_phase2_modes(sim)?;
        }
        for (pop, w) in self.topology.projections.iter_mut().zip(&ckpt.weights) {
            if w.len() != pop.len() {
                return Err(SnnError::Format(format!(
                    "weight array length {} does not match {} connections",
                    w.len(),
                    pop.len()
                )));
            }
            pop.set_weights(w)?;
        }
        self.phase = ckpt.phase;
        self.presentations = ckpt.presentations;
        self.rng = ckpt.rng.restore();
        Ok(())
    }

    /// Runs one presentation window from reset. With `plastic`, STDP
    /// populations learn online and, if teachers are attached, ReSuMe
    /// populations learn at window end against the teacher of `img.label`.
    pub fn present_image(&mut self, img: &ImageSample, sim: &SimulationConfig, plastic: bool) -> Result<SpikeRecord> {
        let enc = self.encoding.ok_or(SnnError::Uncalibrated)?;
        let layout = self.topology.layout.clone();
        let currents = encode_image(img, &enc, layout.l1.len())?;
        let steps = steps_in(sim.window, sim.dt)?;
        let prop = Propagator::new(&self.neuron, sim.dt)?;
        for pop in &self.topology.projections {
            if (pop.delay() - sim.dt).abs() > 1e-9 {
                return Err(SnnError::InvalidParameter(format!(
                    "synaptic delay {} ms must equal dt {} ms",
                    pop.delay(),
                    sim.dt
                )));
            }
        }

        self.reset_states();
        let total = layout.total();
        let n1 = layout.l1.len();
        let ranges: Vec<_> = ProjectionId::ALL
            .iter()
            .map(|id| {
                let (pre, post) = id.endpoints();
                (layout.range(pre), layout.range(post))
            })
            .collect();
        let scales: Vec<f64> = self
            .topology
            .projections
            .iter()
            .map(|p| std::f64::consts::E / self.neuron.tau_syn(p.sign()))
            .collect();

        let mut record = SpikeRecord::new(total);
        let mut fired_prev: Vec<usize> = Vec::new();
        let mut fired_now: Vec<usize> = Vec::new();

        for n in 0..steps {
            let t = n as f64 * sim.dt;

            for (pi, pop) in self.topology.projections.iter().enumerate() {
                let (pre_r, post_r) = &ranges[pi];
                let w = pop.weights();
                let post_idx = pop.post_index();
                let sign = pop.sign();
                for &g in fired_prev.iter().filter(|&&g| pre_r.contains(&g)) {
                    for &c in pop.outgoing(g - pre_r.start) {
                        let c = c as usize;
                        let target = post_r.start + post_idx[c] as usize;
                        self.states[target].add_drive(w[c] * scales[pi], sign);
                    }
                }
            }

            fired_now.clear();
            for (g, state) in self.states.iter_mut().enumerate() {
                let i_ext = if g < n1 { currents[g] } else { 0.0 };
                if prop.step(state, i_ext) {
                    fired_now.push(g);
                    record.push(g, t);
                }
            }

            if plastic {
                for (pi, pop) in self.topology.projections.iter_mut().enumerate() {
                    if !matches!(pop.mode(), PlasticityMode::Stdp(_)) {
                        continue;
                    }
                    let (pre_r, post_r) = &ranges[pi];
                    pop.decay_traces(sim.dt)?;
                    for &g in fired_now.iter().filter(|&&g| pre_r.contains(&g)) {
                        pop.stdp_on_pre(g - pre_r.start)?;
                    }
                    for &g in fired_now.iter().filter(|&&g| post_r.contains(&g)) {
                        pop.stdp_on_post(g - post_r.start)?;
                    }
                }
            }

            std::mem::swap(&mut fired_prev, &mut fired_now);
        }

        if plastic {
            if let Some(teachers) = self.topology.teachers.clone() {
                let n3 = layout.l3.len();
                let mut teacher = SpikeRecord::new(n3);
                let train = sim.teacher_train();
                for (k, targets) in teachers.targets.iter().enumerate() {
                    if teachers.active(k, img.label) {
                        for &j in targets {
                            for &t in &train {
                                teacher.push(j, t);
                            }
                        }
                    }
                }
                let actual = record.slice(layout.l3.clone());
                for (pi, pop) in self.topology.projections.iter_mut().enumerate() {
                    if matches!(pop.mode(), PlasticityMode::Resume(_)) {
                        let pre = record.slice(ranges[pi].0.clone());
                        pop.resume_update(&teacher, &actual, &pre, sim.window)?;
                    }
                }
            }
        }
        Ok(record)
    }

    /// Testing-mode presentation followed by winner-take-all over class groups.
    pub fn classify(&mut self, img: &ImageSample, sim: &SimulationConfig) -> Result<ClassificationResult> {
        for id in ProjectionId::ALL {
            if !self.topology.projection(id).mode().is_static() {
                return Err(SnnError::PlasticInTesting(id.name()));
            }
        }
        let record = self.present_image(img, sim, false)?;
        let l3 = self.topology.layout.l3.clone();
        let neuron_counts: Vec<usize> = l3.map(|g| record.count(g)).collect();
        let group_counts: Vec<usize> = (0..self.topology.config.n_classes)
            .map(|k| self.topology.class_group(k).map(|j| neuron_counts[j]).sum())
            .collect();
        let (predicted, tie) = winner_take_all(&group_counts);
        Ok(ClassificationResult {
            predicted,
            neuron_counts,
            group_counts,
            tie,
        })
    }
}

//! Construction of the three-layer network: encoding layer L1, feature layer
//! L2a with its lateral-inhibition partner L2b, and the class readout L3.
//!
//! Projections, in fixed order:
//!
//! | id | pre → post | pattern                         | sign |
//! |----|------------|---------------------------------|------|
//! | P1 | L1 → L2a   | all-to-all                      | +    |
//! | P2 | L2a → L2b  | one-to-one                      | +    |
//! | P3 | L2b → L2a  | all except the one-to-one partner | −  |
//! | P4 | L2a → L3   | all-to-all (or class partitions)  | +  |
//! | P5 | L3 → L3    | across class groups only        | −    |
//!
//! Teachers are external spike sources, one per class, supervising every
//! L3 neuron of that class.

use std::fmt::Write as _;
use std::ops::Range;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Result, SnnError};
use crate::neuron::Sign;
use crate::plasticity::{PlasticityMode, ResumeParams, StdpParams, SynapsePopulation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectRule {
    AllToAll,
    OneToOne,
    OneToAllExceptPartner,
}

/// Uniform draw in `mean * (1 ± jitter)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightSpec {
    pub mean: f64,
    pub jitter: f64,
}

impl WeightSpec {
    pub const fn new(mean: f64, jitter: f64) -> Self {
        Self { mean, jitter }
    }

    pub const fn constant(mean: f64) -> Self {
        Self { mean, jitter: 0.0 }
    }

    pub fn bounds(&self) -> (f64, f64) {
        let a = self.mean * (1.0 - self.jitter);
        let b = self.mean * (1.0 + self.jitter);
        (a.min(b), a.max(b))
    }

    fn draw(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        if self.jitter == 0.0 {
            return vec![self.mean; n];
        }
        let (lo, hi) = self.bounds();
        let dist = Uniform::new_inclusive(lo, hi);
        (0..n).map(|_| dist.sample(rng)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReadoutWiring {
    AllToAll,
    /// Class `k` receives only the `k`-th of `n_classes` contiguous L2a blocks.
    Partitioned,
}

impl ReadoutWiring {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReadoutWiring::AllToAll => "all_to_all",
            ReadoutWiring::Partitioned => "partitioned_10pct",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "all_to_all" => Ok(ReadoutWiring::AllToAll),
            "partitioned_10pct" | "partitioned" => Ok(ReadoutWiring::Partitioned),
            other => Err(SnnError::InvalidParameter(format!(
                "unknown l2a_to_l3 wiring `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NatCsnnConfig {
    pub rows: usize,
    pub cols: usize,
    pub n_classes: usize,
    pub neurons_per_class: usize,
    pub l2_fraction: f64,
    pub l2a_to_l3: ReadoutWiring,
    pub seed: u64,
    pub p1_weight: WeightSpec,
    pub p2_weight: WeightSpec,
    pub p3_weight: WeightSpec,
    pub p4_initial_weight: f64,
    pub p5_weight: f64,
    pub stdp: StdpParams,
    pub resume: ResumeParams,
    /// Synaptic delay (ms); one integration step.
    pub delay: f64,
}

impl Default for NatCsnnConfig {
    fn default() -> Self {
        Self {
            rows: 32,
            cols: 32,
            n_classes: 10,
            neurons_per_class: 10,
            l2_fraction: 0.25,
            l2a_to_l3: ReadoutWiring::AllToAll,
            seed: 1,
            p1_weight: WeightSpec::new(600.0, 0.1),
            p2_weight: WeightSpec::new(490.84, 0.1),
            p3_weight: WeightSpec::new(-100.0, 0.1),
            p4_initial_weight: 241.0,
            p5_weight: -120.0,
            stdp: StdpParams::default(),
            resume: ResumeParams::default(),
            delay: 0.1,
        }
    }
}

impl NatCsnnConfig {
    pub fn l1_size(&self) -> usize {
        self.rows * self.cols
    }

    pub fn l2_size(&self) -> Result<usize> {
        let exact = self.l1_size() as f64 * self.l2_fraction;
        let n = exact.round();
        if !(self.l2_fraction > 0.0 && self.l2_fraction <= 1.0) {
            return Err(SnnError::InvalidParameter(format!(
                "l2_fraction must be in (0, 1], got {}",
                self.l2_fraction
            )));
        }
        if (exact - n).abs() > 1e-9 || n < 1.0 {
            return Err(SnnError::InvalidParameter(format!(
                "{}x{} inputs times l2_fraction {} is not a positive integer",
                self.rows, self.cols, self.l2_fraction
            )));
        }
        Ok(n as usize)
    }

    pub fn l3_size(&self) -> usize {
        self.n_classes * self.neurons_per_class
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(SnnError::InvalidParameter("image dimensions must be positive".into()));
        }
        if self.n_classes < 2 {
            return Err(SnnError::InvalidParameter(format!(
                "n_classes must be >= 2, got {}",
                self.n_classes
            )));
        }
        if self.neurons_per_class == 0 {
            return Err(SnnError::InvalidParameter("neurons_per_class must be >= 1".into()));
        }
        let l2 = self.l2_size()?;
        if self.l2a_to_l3 == ReadoutWiring::Partitioned && l2 < self.n_classes {
            return Err(SnnError::InvalidParameter(format!(
                "partitioned readout needs at least one L2a neuron per class ({l2} < {})",
                self.n_classes
            )));
        }
        for (name, spec, sign) in [
            ("p1", self.p1_weight, Sign::Excitatory),
            ("p2", self.p2_weight, Sign::Excitatory),
            ("p3", self.p3_weight, Sign::Inhibitory),
        ] {
            let (lo, hi) = spec.bounds();
            if !(spec.jitter >= 0.0 && spec.jitter <= 1.0 && lo.is_finite() && hi.is_finite())
                || !sign.admits(lo)
                || !sign.admits(hi)
            {
                return Err(SnnError::InvalidParameter(format!(
                    "invalid {name} weight spec {spec:?}"
                )));
            }
        }
        if !(self.p4_initial_weight.is_finite() && self.p4_initial_weight >= 0.0) {
            return Err(SnnError::InvalidParameter("p4 initial weight must be >= 0".into()));
        }
        if !(self.p5_weight.is_finite() && self.p5_weight <= 0.0) {
            return Err(SnnError::InvalidParameter("p5 weight must be <= 0".into()));
        }
        if !(self.delay.is_finite() && self.delay > 0.0) {
            return Err(SnnError::InvalidParameter("delay must be > 0".into()));
        }
        self.stdp.validate()?;
        self.resume.validate()
    }

    /// Hash of everything that determines the network's shape.
    pub fn fingerprint(&self) -> u64 {
        let canon = format!(
            "rows={};cols={};n_classes={};neurons_per_class={};l2_fraction={:016x};l2a_to_l3={}",
            self.rows,
            self.cols,
            self.n_classes,
            self.neurons_per_class,
            self.l2_fraction.to_bits(),
            self.l2a_to_l3.as_str()
        );
        let d = Sha256::digest(canon.as_bytes());
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProjectionId {
    P1,
    P2,
    P3,
    P4,
    P5,
}

impl ProjectionId {
    pub const ALL: [ProjectionId; 5] = [
        ProjectionId::P1,
        ProjectionId::P2,
        ProjectionId::P3,
        ProjectionId::P4,
        ProjectionId::P5,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ProjectionId::P1 => "P1",
            ProjectionId::P2 => "P2",
            ProjectionId::P3 => "P3",
            ProjectionId::P4 => "P4",
            ProjectionId::P5 => "P5",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ProjectionId::P1 => "L1->L2a",
            ProjectionId::P2 => "L2a->L2b",
            ProjectionId::P3 => "L2b->L2a",
            ProjectionId::P4 => "L2a->L3",
            ProjectionId::P5 => "L3->L3",
        }
    }

    pub fn endpoints(self) -> (Layer, Layer) {
        match self {
            ProjectionId::P1 => (Layer::L1, Layer::L2a),
            ProjectionId::P2 => (Layer::L2a, Layer::L2b),
            ProjectionId::P3 => (Layer::L2b, Layer::L2a),
            ProjectionId::P4 => (Layer::L2a, Layer::L3),
            ProjectionId::P5 => (Layer::L3, Layer::L3),
        }
    }

    /// Lower projections are trained in phase 1, the readout in phase 2.
    pub fn is_readout(self) -> bool {
        matches!(self, ProjectionId::P4 | ProjectionId::P5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layer {
    L1,
    L2a,
    L2b,
    L3,
}

/// Global neuron index ranges of each layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub l1: Range<usize>,
    pub l2a: Range<usize>,
    pub l2b: Range<usize>,
    pub l3: Range<usize>,
}

impl Layout {
    fn new(l1: usize, l2: usize, l3: usize) -> Self {
        Self {
            l1: 0..l1,
            l2a: l1..l1 + l2,
            l2b: l1 + l2..l1 + 2 * l2,
            l3: l1 + 2 * l2..l1 + 2 * l2 + l3,
        }
    }

    pub fn range(&self, layer: Layer) -> Range<usize> {
        match layer {
            Layer::L1 => self.l1.clone(),
            Layer::L2a => self.l2a.clone(),
            Layer::L2b => self.l2b.clone(),
            Layer::L3 => self.l3.clone(),
        }
    }

    pub fn total(&self) -> usize {
        self.l3.end
    }
}

/// Supervision map: teacher `k` drives the ReSuMe target of every L3 neuron
/// listed in `targets[k]` (L3-local indices).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Teachers {
    pub targets: Vec<Vec<usize>>,
}

impl Teachers {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Whether teacher `k` fires while an image of class `label` is shown.
    pub fn active(&self, k: usize, label: usize) -> bool {
        k == label
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    pub config: NatCsnnConfig,
    pub layout: Layout,
    pub projections: Vec<SynapsePopulation>,
    pub teachers: Option<Teachers>,
    /// Class of each L3 neuron (L3-local index).
    pub class_of: Vec<usize>,
}

impl NetworkTopology {
    pub fn projection(&self, id: ProjectionId) -> &SynapsePopulation {
        &self.projections[id.index()]
    }

    pub fn projection_mut(&mut self, id: ProjectionId) -> &mut SynapsePopulation {
        &mut self.projections[id.index()]
    }

    /// L3-local indices of the neurons reading out class `k`.
    pub fn class_group(&self, k: usize) -> Range<usize> {
        let n = self.config.neurons_per_class;
        k * n..(k + 1) * n
    }

    pub fn fingerprint(&self) -> u64 {
        self.config.fingerprint()
    }

    /// Human-readable summary: layer sizes, connection counts, weight stats.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let l = &self.layout;
        let _ = writeln!(out, "fingerprint = {:016x}", self.fingerprint());
        let _ = writeln!(
            out,
            "layers = L1:{} L2a:{} L2b:{} L3:{}",
            l.l1.len(),
            l.l2a.len(),
            l.l2b.len(),
            l.l3.len()
        );
        let _ = writeln!(out, "teachers = {}", self.teachers.as_ref().map_or(0, Teachers::len));
        for id in ProjectionId::ALL {
            let pop = self.projection(id);
            let stats = WeightStats::of(pop.weights());
            let _ = writeln!(
                out,
                "{} {:<9} mode={:<6} connections={:<8} min={:.4} max={:.4} mean={:.4}",
                id.name(),
                id.label(),
                pop.mode().name(),
                pop.len(),
                stats.min,
                stats.max,
                stats.mean
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl WeightStats {
    pub fn of(w: &[f64]) -> Self {
        if w.is_empty() {
            return Self {
                min: 0.0,
                max: 0.0,
                mean: 0.0,
            };
        }
        let min = w.iter().copied().fold(f64::INFINITY, f64::min);
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        Self { min, max, mean }
    }
}

/// Connection pairs for a rule, in pre-major order.
pub fn rule_pairs(n_pre: usize, n_post: usize, rule: ConnectRule) -> Result<Vec<(usize, usize)>> {
    match rule {
        ConnectRule::AllToAll => Ok((0..n_pre).flat_map(|i| (0..n_post).map(move |j| (i, j))).collect()),
        ConnectRule::OneToOne | ConnectRule::OneToAllExceptPartner if n_pre != n_post => Err(SnnError::Dimension {
            expected: n_pre,
            found: n_post,
        }),
        ConnectRule::OneToOne => Ok((0..n_pre).map(|i| (i, i)).collect()),
        ConnectRule::OneToAllExceptPartner => Ok((0..n_pre)
            .flat_map(|i| (0..n_post).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect()),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn connect(
    n_pre: usize,
    n_post: usize,
    rule: ConnectRule,
    weights: WeightSpec,
    sign: Sign,
    mode: PlasticityMode,
    delay: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SynapsePopulation> {
    let pairs = rule_pairs(n_pre, n_post, rule)?;
    let w = weights.draw(pairs.len(), rng);
    SynapsePopulation::from_pairs(n_pre, n_post, &pairs, w, sign, mode, delay)
}

fn readout_pairs(cfg: &NatCsnnConfig, n_l2: usize) -> Vec<(usize, usize)> {
    let n_l3 = cfg.l3_size();
    match cfg.l2a_to_l3 {
        ReadoutWiring::AllToAll => rule_pairs(n_l2, n_l3, ConnectRule::AllToAll).expect("all-to-all never fails"),
        ReadoutWiring::Partitioned => {
            let block = n_l2 / cfg.n_classes;
            let mut pairs = Vec::new();
            for i in 0..n_l2 {
                let k = (i / block).min(cfg.n_classes - 1);
                for j in k * cfg.neurons_per_class..(k + 1) * cfg.neurons_per_class {
                    pairs.push((i, j));
                }
            }
            pairs
        }
    }
}

fn cross_class_pairs(class_of: &[usize]) -> Vec<(usize, usize)> {
    let n = class_of.len();
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| class_of[i] != class_of[j]).map(move |j| (i, j)))
        .collect()
}

/// Builds all layers and projections. Lower projections start in STDP mode,
/// the readout in ReSuMe mode; no teachers are attached.
pub fn build_network(cfg: &NatCsnnConfig) -> Result<NetworkTopology> {
    cfg.validate()?;
    let n1 = cfg.l1_size();
    let n2 = cfg.l2_size()?;
    let n3 = cfg.l3_size();
    let layout = Layout::new(n1, n2, n3);
    let class_of: Vec<usize> = (0..n3).map(|j| j / cfg.neurons_per_class).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stdp = PlasticityMode::Stdp(cfg.stdp);
    let resume = PlasticityMode::Resume(cfg.resume);

    let p1 = connect(
        n1,
        n2,
        ConnectRule::AllToAll,
        cfg.p1_weight,
        Sign::Excitatory,
        stdp,
        cfg.delay,
        &mut rng,
    )?;
    let p2 = connect(
        n2,
        n2,
        ConnectRule::OneToOne,
        cfg.p2_weight,
        Sign::Excitatory,
        stdp,
        cfg.delay,
        &mut rng,
    )?;
    let p3 = connect(
        n2,
        n2,
        ConnectRule::OneToAllExceptPartner,
        cfg.p3_weight,
        Sign::Inhibitory,
        stdp,
        cfg.delay,
        &mut rng,
    )?;
    let p4_pairs = readout_pairs(cfg, n2);
    let p4 = SynapsePopulation::from_pairs(
        n2,
        n3,
        &p4_pairs,
        vec![cfg.p4_initial_weight; p4_pairs.len()],
        Sign::Excitatory,
        resume,
        cfg.delay,
    )?;
    let p5_pairs = cross_class_pairs(&class_of);
    let p5 = SynapsePopulation::from_pairs(
        n3,
        n3,
        &p5_pairs,
        vec![cfg.p5_weight; p5_pairs.len()],
        Sign::Inhibitory,
        resume,
        cfg.delay,
    )?;

    Ok(NetworkTopology {
        config: cfg.clone(),
        layout,
        projections: vec![p1, p2, p3, p4, p5],
        teachers: None,
        class_of,
    })
}

/// Wires one teacher per class onto that class's L3 group.
pub fn attach_teachers(topology: &mut NetworkTopology) -> Result<()> {
    if topology.teachers.is_some() {
        return Err(SnnError::TeachersAttached);
    }
    let targets = (0..topology.config.n_classes)
        .map(|k| topology.class_group(k).collect())
        .collect();
    topology.teachers = Some(Teachers { targets });
    Ok(())
}

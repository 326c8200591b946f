//! Synapse populations and their learning rules.
//!
//! STDP is the additive pair rule with all-to-all interactions, carried by
//! one exponential trace per presynaptic and per postsynaptic neuron. Step
//! sizes are `A * W_max * trace`, applied to the weight magnitude so the same
//! code serves excitatory and inhibitory projections (potentiation grows
//! `|w|`). ReSuMe is applied once per presentation as the double sum over
//! teacher/actual and presynaptic spike pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SnnError};
use crate::neuron::Sign;
use crate::spikes::SpikeRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdpParams {
    pub a_plus: f64,
    pub a_minus: f64,
    pub tau_trace: f64,
    /// Magnitude bound (pA).
    pub w_max: f64,
    /// Magnitude floor (pA).
    pub w_min: f64,
}

impl Default for StdpParams {
    fn default() -> Self {
        Self {
            a_plus: 0.001,
            a_minus: 0.0005,
            tau_trace: 10.0,
            w_max: 1200.0,
            w_min: 0.0,
        }
    }
}

impl StdpParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a_plus >= 0.0
            && self.a_minus >= 0.0
            && self.tau_trace > 0.0
            && self.w_min >= 0.0
            && self.w_min <= self.w_max
            && [self.a_plus, self.a_minus, self.tau_trace, self.w_max, self.w_min]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SnnError::InvalidParameter(format!("invalid STDP parameters {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResumeParams {
    /// Window amplitude for excitatory synapses (> 0).
    pub a_ex: f64,
    /// Window amplitude for inhibitory synapses (< 0).
    pub a_ih: f64,
    pub tau_ex: f64,
    pub tau_ih: f64,
    pub w_max: f64,
}

impl Default for ResumeParams {
    fn default() -> Self {
        Self {
            a_ex: 0.001,
            a_ih: -0.001,
            tau_ex: 10.0,
            tau_ih: 10.0,
            w_max: 1200.0,
        }
    }
}

impl ResumeParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a_ex >= 0.0
            && self.a_ih <= 0.0
            && self.tau_ex > 0.0
            && self.tau_ih > 0.0
            && self.w_max >= 0.0
            && [self.a_ex, self.a_ih, self.tau_ex, self.tau_ih, self.w_max]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(SnnError::InvalidParameter(format!(
                "invalid ReSuMe parameters {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Excitatory,
    Inhibitory,
}

impl From<Sign> for WindowKind {
    fn from(sign: Sign) -> Self {
        match sign {
            Sign::Excitatory => WindowKind::Excitatory,
            Sign::Inhibitory => WindowKind::Inhibitory,
        }
    }
}

/// ReSuMe learning window: `A exp(-s/tau)` for `s > 0`, zero otherwise.
pub fn resume_window(s: f64, params: &ResumeParams, kind: WindowKind) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let (a, tau) = match kind {
        WindowKind::Excitatory => (params.a_ex, params.tau_ex),
        WindowKind::Inhibitory => (params.a_ih, params.tau_ih),
    };
    a * (-s / tau).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PlasticityMode {
    Static,
    Stdp(StdpParams),
    Resume(ResumeParams),
}

impl PlasticityMode {
    pub fn name(&self) -> &'static str {
        match self {
            PlasticityMode::Static => "static",
            PlasticityMode::Stdp(_) => "stdp",
            PlasticityMode::Resume(_) => "resume",
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, PlasticityMode::Static)
    }

    /// Inclusive magnitude bounds enforced after every update.
    fn bounds(&self) -> Option<(f64, f64)> {
        match self {
            PlasticityMode::Static => None,
            PlasticityMode::Stdp(p) => Some((p.w_min, p.w_max)),
            PlasticityMode::Resume(p) => Some((0.0, p.w_max)),
        }
    }
}

/// One projection between two layers.
#[derive(Debug, Clone, PartialEq)]
pub struct SynapsePopulation {
    n_pre: usize,
    n_post: usize,
    pre_index: Vec<u32>,
    post_index: Vec<u32>,
    weight: Vec<f64>,
    sign: Sign,
    mode: PlasticityMode,
    pre_trace: Vec<f64>,
    post_trace: Vec<f64>,
    delay: f64,
    out_edges: Vec<Vec<u32>>,
    in_edges: Vec<Vec<u32>>,
}

impl SynapsePopulation {
    /// Builds a population from explicit `(pre, post)` pairs. Connection ids
    /// follow the order of `pairs`.
    pub fn from_pairs(
        n_pre: usize,
        n_post: usize,
        pairs: &[(usize, usize)],
        weights: Vec<f64>,
        sign: Sign,
        mode: PlasticityMode,
        delay: f64,
    ) -> Result<Self> {
        if weights.len() != pairs.len() {
            return Err(SnnError::Dimension {
                expected: pairs.len(),
                found: weights.len(),
            });
        }
        if !(delay.is_finite() && delay >= 0.0) {
            return Err(SnnError::InvalidParameter(format!("delay must be >= 0, got {delay}")));
        }
        match &mode {
            PlasticityMode::Stdp(p) => p.validate()?,
            PlasticityMode::Resume(p) => p.validate()?,
            PlasticityMode::Static => {}
        }
        let mut out_edges = vec![Vec::new(); n_pre];
        let mut in_edges = vec![Vec::new(); n_post];
        let mut pre_index = Vec::with_capacity(pairs.len());
        let mut post_index = Vec::with_capacity(pairs.len());
        for (c, &(i, j)) in pairs.iter().enumerate() {
            if i >= n_pre {
                return Err(SnnError::IndexOutOfRange {
                    what: "presynaptic layer",
                    index: i,
                    len: n_pre,
                });
            }
            if j >= n_post {
                return Err(SnnError::IndexOutOfRange {
                    what: "postsynaptic layer",
                    index: j,
                    len: n_post,
                });
            }
            out_edges[i].push(c as u32);
            in_edges[j].push(c as u32);
            pre_index.push(i as u32);
            post_index.push(j as u32);
        }
        let mut pop = Self {
            n_pre,
            n_post,
            pre_index,
            post_index,
            weight: Vec::new(),
            sign,
            mode,
            pre_trace: Vec::new(),
            post_trace: Vec::new(),
            delay,
            out_edges,
            in_edges,
        };
        pop.set_weights(&weights)?;
        pop.reset_traces();
        Ok(pop)
    }

    pub fn n_pre(&self) -> usize {
        self.n_pre
    }

    pub fn n_post(&self) -> usize {
        self.n_post
    }

    pub fn len(&self) -> usize {
        self.weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weight.is_empty()
    }

    pub fn sign(&self) -> Sign {
        self.sign
    }

    pub fn mode(&self) -> &PlasticityMode {
        &self.mode
    }

    pub fn delay(&self) -> f64 {
        self.delay
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn pre_index(&self) -> &[u32] {
        &self.pre_index
    }

    pub fn post_index(&self) -> &[u32] {
        &self.post_index
    }

    pub fn pre_trace(&self) -> &[f64] {
        &self.pre_trace
    }

    pub fn post_trace(&self) -> &[f64] {
        &self.post_trace
    }

    /// Connection ids leaving presynaptic neuron `pre`.
    pub fn outgoing(&self, pre: usize) -> &[u32] {
        &self.out_edges[pre]
    }

    pub fn incoming(&self, post: usize) -> &[u32] {
        &self.in_edges[post]
    }

    /// Replaces every weight. Values must be finite and match the sign;
    /// plastic populations clip into their bounds.
    pub fn set_weights(&mut self, weights: &[f64]) -> Result<()> {
        if weights.len() != self.pre_index.len() {
            return Err(SnnError::Dimension {
                expected: self.pre_index.len(),
                found: weights.len(),
            });
        }
        for &w in weights {
            if !w.is_finite() {
                return Err(SnnError::NonFinite("synaptic weight".into()));
            }
            if !self.sign.admits(w) {
                return Err(SnnError::SignMismatch {
                    weight: w,
                    sign: self.sign,
                });
            }
        }
        self.weight = weights.to_vec();
        if let Some((lo, hi)) = self.mode.bounds() {
            let s = self.sign.factor();
            for w in &mut self.weight {
                *w = s * (s * *w).clamp(lo, hi);
            }
        }
        Ok(())
    }

    pub fn fill_weights(&mut self, value: f64) -> Result<()> {
        let weights = vec![value; self.len()];
        self.set_weights(&weights)
    }

    pub fn set_mode(&mut self, mode: PlasticityMode) -> Result<()> {
        match &mode {
            PlasticityMode::Stdp(p) => p.validate()?,
            PlasticityMode::Resume(p) => p.validate()?,
            PlasticityMode::Static => {}
        }
        self.mode = mode;
        self.reset_traces();
        let w = std::mem::take(&mut self.weight);
        self.set_weights(&w)
    }

    /// Zeroes the STDP traces (no-op storage for other modes).
    pub fn reset_traces(&mut self) {
        if matches!(self.mode, PlasticityMode::Stdp(_)) {
            self.pre_trace.clear();
            self.pre_trace.resize(self.n_pre, 0.0);
            self.post_trace.clear();
            self.post_trace.resize(self.n_post, 0.0);
        } else {
            self.pre_trace = Vec::new();
            self.post_trace = Vec::new();
        }
    }

    /// Switches to static mode; weights are kept bit-exact, traces dropped.
    pub fn freeze(&mut self) {
        self.mode = PlasticityMode::Static;
        self.pre_trace = Vec::new();
        self.post_trace = Vec::new();
    }

    fn stdp_params(&self) -> Result<StdpParams> {
        match self.mode {
            PlasticityMode::Stdp(p) => Ok(p),
            ref other => Err(SnnError::WrongMode {
                required: "stdp",
                found: other.name(),
            }),
        }
    }

    /// Multiplies every trace by `exp(-dt/tau_trace)`.
    pub fn decay_traces(&mut self, dt: f64) -> Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SnnError::InvalidParameter(format!("dt must be > 0, got {dt}")));
        }
        if let PlasticityMode::Stdp(p) = self.mode {
            let f = (-dt / p.tau_trace).exp();
            self.pre_trace.iter_mut().for_each(|x| *x *= f);
            self.post_trace.iter_mut().for_each(|x| *x *= f);
        }
        Ok(())
    }

    /// Presynaptic spike: depress every outgoing synapse by
    /// `A- * W_max * post_trace`, then bump the presynaptic trace.
    pub fn stdp_on_pre(&mut self, pre: usize) -> Result<()> {
        let p = self.stdp_params()?;
        if pre >= self.n_pre {
            return Err(SnnError::IndexOutOfRange {
                what: "presynaptic layer",
                index: pre,
                len: self.n_pre,
            });
        }
        let s = self.sign.factor();
        let step = p.a_minus * p.w_max;
        for &c in &self.out_edges[pre] {
            let c = c as usize;
            let x = self.post_trace[self.post_index[c] as usize];
            if x != 0.0 {
                let mag = (s * self.weight[c] - step * x).clamp(p.w_min, p.w_max);
                self.weight[c] = s * mag;
            }
        }
        self.pre_trace[pre] += 1.0;
        Ok(())
    }

    /// Postsynaptic spike: potentiate every incoming synapse by
    /// `A+ * W_max * pre_trace`, then bump the postsynaptic trace.
    pub fn stdp_on_post(&mut self, post: usize) -> Result<()> {
        let p = self.stdp_params()?;
        if post >= self.n_post {
            return Err(SnnError::IndexOutOfRange {
                what: "postsynaptic layer",
                index: post,
                len: self.n_post,
            });
        }
        let s = self.sign.factor();
        let step = p.a_plus * p.w_max;
        for &c in &self.in_edges[post] {
            let c = c as usize;
            let x = self.pre_trace[self.pre_index[c] as usize];
            if x != 0.0 {
                let mag = (s * self.weight[c] + step * x).clamp(p.w_min, p.w_max);
                self.weight[c] = s * mag;
            }
        }
        self.post_trace[post] += 1.0;
        Ok(())
    }

    /// Batch ReSuMe update over one presentation.
    ///
    /// `teacher` and `actual` are indexed by postsynaptic neuron, `pre` by
    /// presynaptic neuron. For every connection the magnitude changes by
    /// `W_max * (sum over teacher pairs - sum over actual pairs)` of the
    /// window matching the synapse sign.
    pub fn resume_update(
        &mut self,
        teacher: &SpikeRecord,
        actual: &SpikeRecord,
        pre: &SpikeRecord,
        window: f64,
    ) -> Result<()> {
        let p = match self.mode {
            PlasticityMode::Resume(p) => p,
            ref other => {
                return Err(SnnError::WrongMode {
                    required: "resume",
                    found: other.name(),
                })
            }
        };
        for (rec, n) in [(teacher, self.n_post), (actual, self.n_post), (pre, self.n_pre)] {
            if rec.len() != n {
                return Err(SnnError::Dimension {
                    expected: n,
                    found: rec.len(),
                });
            }
            rec.validate(window)?;
        }
        let kind = WindowKind::from(self.sign);
        let pair_sum = |targets: &[f64], sources: &[f64]| -> f64 {
            let mut acc = 0.0;
            for &t in targets {
                for &ti in sources {
                    acc += resume_window(t - ti, &p, kind);
                }
            }
            acc
        };
        let s = self.sign.factor();
        for c in 0..self.weight.len() {
            let i = self.pre_index[c] as usize;
            let j = self.post_index[c] as usize;
            let pre_train = pre.train(i);
            if pre_train.is_empty() {
                continue;
            }
            let wanted = pair_sum(teacher.train(j), pre_train);
            let got = pair_sum(actual.train(j), pre_train);
            let delta = p.w_max * (wanted - got);
            if delta != 0.0 {
                let mag = (s * self.weight[c] + delta).clamp(0.0, p.w_max);
                self.weight[c] = s * mag;
            }
        }
        Ok(())
    }
}

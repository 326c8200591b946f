//! Leaky integrate-and-fire neuron with a multi-timescale adaptive threshold.
//!
//! The membrane is a non-resetting leaky integrator driven by an external
//! current and two alpha-shaped synaptic channels:
//!
//! ```text
//! dV/dt = -(V - E_L)/tau_m + (I_ext + I_ex + I_in)/C_m
//! V_th  = h1 + h2 + omega,   h_j decays with tau_j, jumps by alpha_j on a spike
//! ```
//!
//! Every state variable obeys a linear ODE between spikes, so one step is an
//! exact exponential propagation; there is no discretisation error for a
//! piecewise-constant `I_ext`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SnnError};

/// Remaining refractory time below this is treated as elapsed (absorbs
/// rounding from repeated `dt` subtraction).
const REFRACTORY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sign {
    Excitatory,
    Inhibitory,
}

impl Sign {
    pub fn factor(self) -> f64 {
        match self {
            Sign::Excitatory => 1.0,
            Sign::Inhibitory => -1.0,
        }
    }

    pub fn admits(self, weight: f64) -> bool {
        match self {
            Sign::Excitatory => weight >= 0.0,
            Sign::Inhibitory => weight <= 0.0,
        }
    }
}

/// Units: pF, ms, mV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronParams {
    pub c_m: f64,
    pub tau_m: f64,
    pub e_l: f64,
    pub tau_syn_ex: f64,
    pub tau_syn_in: f64,
    pub t_ref: f64,
    pub tau_1: f64,
    pub tau_2: f64,
    pub alpha_1: f64,
    pub alpha_2: f64,
    pub omega: f64,
}

impl Default for NeuronParams {
    fn default() -> Self {
        Self {
            c_m: 100.0,
            tau_m: 5.0,
            e_l: -70.0,
            tau_syn_ex: 1.0,
            tau_syn_in: 3.0,
            t_ref: 2.0,
            tau_1: 10.0,
            tau_2: 20.0,
            alpha_1: 37.0,
            alpha_2: 2.0,
            omega: -51.0,
        }
    }
}

impl NeuronParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.c_m,
            self.tau_m,
            self.e_l,
            self.tau_syn_ex,
            self.tau_syn_in,
            self.t_ref,
            self.tau_1,
            self.tau_2,
            self.alpha_1,
            self.alpha_2,
            self.omega,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(SnnError::NonFinite("neuron parameters".into()));
        }
        let positive = [
            ("c_m", self.c_m),
            ("tau_m", self.tau_m),
            ("tau_syn_ex", self.tau_syn_ex),
            ("tau_syn_in", self.tau_syn_in),
            ("tau_1", self.tau_1),
            ("tau_2", self.tau_2),
        ];
        for (name, v) in positive {
            if v <= 0.0 {
                return Err(SnnError::InvalidParameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.t_ref < 0.0 {
            return Err(SnnError::InvalidParameter(format!(
                "t_ref must be >= 0, got {}",
                self.t_ref
            )));
        }
        if self.alpha_1 < 0.0 || self.alpha_2 < 0.0 {
            return Err(SnnError::InvalidParameter(
                "threshold jumps alpha_1, alpha_2 must be >= 0".into(),
            ));
        }
        Ok(())
    }

    /// Membrane resistance in GOhm (mV per pA).
    pub fn resistance(&self) -> f64 {
        self.tau_m / self.c_m
    }

    /// Smallest constant current whose steady-state potential reaches the
    /// resting threshold.
    pub fn rheobase(&self) -> f64 {
        (self.omega - self.e_l) / self.resistance()
    }

    pub fn tau_syn(&self, sign: Sign) -> f64 {
        match sign {
            Sign::Excitatory => self.tau_syn_ex,
            Sign::Inhibitory => self.tau_syn_in,
        }
    }
}

/// Two-variable state of an alpha-kernel current: `drive` feeds `current`,
/// both decay with the synaptic time constant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AlphaChannel {
    pub drive: f64,
    pub current: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub v_m: f64,
    pub h1: f64,
    pub h2: f64,
    pub syn_ex: AlphaChannel,
    pub syn_in: AlphaChannel,
    pub refractory_remaining: f64,
    pub last_spike_time: Option<f64>,
    /// Time since the last reset (ms).
    pub time: f64,
}

impl NeuronState {
    pub fn resting(params: &NeuronParams) -> Self {
        Self {
            v_m: params.e_l,
            h1: 0.0,
            h2: 0.0,
            syn_ex: AlphaChannel::default(),
            syn_in: AlphaChannel::default(),
            refractory_remaining: 0.0,
            last_spike_time: None,
            time: 0.0,
        }
    }

    pub fn threshold(&self, params: &NeuronParams) -> f64 {
        self.h1 + self.h2 + params.omega
    }

    /// Emits a spike now regardless of the membrane potential.
    pub fn force_spike(&mut self, params: &NeuronParams) {
        self.h1 += params.alpha_1;
        self.h2 += params.alpha_2;
        self.refractory_remaining = params.t_ref;
        self.last_spike_time = Some(self.time);
    }

    pub fn reset(&mut self, params: &NeuronParams) {
        *self = Self::resting(params);
    }

    pub fn is_finite(&self) -> bool {
        [
            self.v_m,
            self.h1,
            self.h2,
            self.syn_ex.drive,
            self.syn_ex.current,
            self.syn_in.drive,
            self.syn_in.current,
            self.refractory_remaining,
            self.time,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    /// Adds one presynaptic spike of amplitude `weight` (pA) to the channel
    /// selected by `sign`. The resulting current is
    /// `weight * e/tau * s * exp(-s/tau)`, peaking at `weight` for `s = tau`.
    pub fn deliver_spike(&mut self, weight: f64, sign: Sign, params: &NeuronParams) -> Result<()> {
        if !weight.is_finite() {
            return Err(SnnError::NonFinite("synaptic weight".into()));
        }
        if !sign.admits(weight) {
            return Err(SnnError::SignMismatch { weight, sign });
        }
        self.add_drive(weight * std::f64::consts::E / params.tau_syn(sign), sign);
        Ok(())
    }

    #[inline]
    pub(crate) fn add_drive(&mut self, drive: f64, sign: Sign) {
        match sign {
            Sign::Excitatory => self.syn_ex.drive += drive,
            Sign::Inhibitory => self.syn_in.drive += drive,
        }
    }

    /// Advances one step of length `dt` with external current `i_ext` held
    /// constant. Returns whether the neuron fired in this step.
    pub fn step(&mut self, params: &NeuronParams, i_ext: f64, dt: f64) -> Result<bool> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SnnError::InvalidParameter(format!("dt must be > 0, got {dt}")));
        }
        if !i_ext.is_finite() {
            return Err(SnnError::NonFinite("external current".into()));
        }
        if !self.is_finite() {
            return Err(SnnError::NonFinite("neuron state".into()));
        }
        let prop = Propagator::new(params, dt)?;
        Ok(prop.step(self, i_ext))
    }
}

/// Exact one-step propagation matrix for the linear subthreshold system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Propagator {
    dt: f64,
    e_l: f64,
    omega: f64,
    alpha_1: f64,
    alpha_2: f64,
    t_ref: f64,
    decay_m: f64,
    ext_gain: f64,
    decay_h1: f64,
    decay_h2: f64,
    ex: ChannelPropagator,
    inh: ChannelPropagator,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ChannelPropagator {
    decay: f64,
    drive_to_current: f64,
    drive_to_v: f64,
    current_to_v: f64,
}

impl ChannelPropagator {
    /// Closed-form response of the membrane to the alpha channel over one
    /// step of length `h`. With `a = 1/tau_syn`, `b = 1/tau_m`, `c = b - a`:
    ///
    /// ```text
    /// current -> V : e^{-bh} (e^{ch} - 1) / (c C)
    /// drive   -> V : e^{-bh} (h c e^{ch} - (e^{ch} - 1)) / (c^2 C)
    /// ```
    fn new(tau_syn: f64, tau_m: f64, c_m: f64, h: f64) -> Self {
        let a = 1.0 / tau_syn;
        let b = 1.0 / tau_m;
        let c = b - a;
        let x = c * h;
        let decay = (-a * h).exp();
        let decay_m = (-b * h).exp();
        let (current_to_v, drive_to_v) = if x.abs() < 1e-6 {
            // series around tau_syn == tau_m
            let e1 = h * (1.0 + x / 2.0 + x * x / 6.0);
            let e2 = h * h * (0.5 + x / 3.0 + x * x / 8.0);
            (decay_m * e1 / c_m, decay_m * e2 / c_m)
        } else {
            let em1 = x.exp_m1();
            (decay_m * em1 / (c * c_m), decay_m * (x * x.exp() - em1) / (c * c * c_m))
        };
        Self {
            decay,
            drive_to_current: h * decay,
            drive_to_v,
            current_to_v,
        }
    }

    #[inline]
    fn advance(&self, ch: &mut AlphaChannel) -> f64 {
        let dv = self.drive_to_v * ch.drive + self.current_to_v * ch.current;
        ch.current = self.drive_to_current * ch.drive + self.decay * ch.current;
        ch.drive *= self.decay;
        dv
    }
}

impl Propagator {
    pub fn new(params: &NeuronParams, dt: f64) -> Result<Self> {
        params.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(SnnError::InvalidParameter(format!("dt must be > 0, got {dt}")));
        }
        Ok(Self {
            dt,
            e_l: params.e_l,
            omega: params.omega,
            alpha_1: params.alpha_1,
            alpha_2: params.alpha_2,
            t_ref: params.t_ref,
            decay_m: (-dt / params.tau_m).exp(),
            ext_gain: -params.resistance() * (-dt / params.tau_m).exp_m1(),
            decay_h1: (-dt / params.tau_1).exp(),
            decay_h2: (-dt / params.tau_2).exp(),
            ex: ChannelPropagator::new(params.tau_syn_ex, params.tau_m, params.c_m, dt),
            inh: ChannelPropagator::new(params.tau_syn_in, params.tau_m, params.c_m, dt),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One exact step. The spike test uses the end-of-step membrane and
    /// threshold; the threshold jump is applied after the test.
    #[inline]
    pub fn step(&self, s: &mut NeuronState, i_ext: f64) -> bool {
        let step_start = s.time;
        if s.refractory_remaining > 0.0 {
            s.refractory_remaining -= self.dt;
            if s.refractory_remaining < REFRACTORY_EPS {
                s.refractory_remaining = 0.0;
            }
        }

        let mut u = (s.v_m - self.e_l) * self.decay_m + self.ext_gain * i_ext;
        u += self.ex.advance(&mut s.syn_ex);
        u += self.inh.advance(&mut s.syn_in);
        s.v_m = self.e_l + u;
        s.h1 *= self.decay_h1;
        s.h2 *= self.decay_h2;
        s.time += self.dt;

        let fired = s.refractory_remaining == 0.0 && s.v_m >= s.h1 + s.h2 + self.omega;
        if fired {
            s.h1 += self.alpha_1;
            s.h2 += self.alpha_2;
            s.refractory_remaining = self.t_ref;
            s.last_spike_time = Some(step_start);
        }
        fired
    }
}

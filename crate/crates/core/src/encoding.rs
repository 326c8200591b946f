//! Pixel intensity to input current, and the calibration of the current
//! scale so a full-intensity pixel produces a fixed spike count per window.

use serde::{Deserialize, Serialize};

use crate::data::ImageSample;
use crate::error::{Result, SnnError};
use crate::neuron::{NeuronParams, NeuronState, Propagator};

/// Calibration stops once the bracket is narrower than this (pA).
pub const CALIBRATION_RESOLUTION: f64 = 0.1;

/// Currents above this are treated as unreachable (pA).
const MAX_SEARCH_CURRENT: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    /// Current for a pixel of intensity 1.0 (pA).
    pub i_k: f64,
    pub window: f64,
    pub target_max_spikes: usize,
}

impl EncodingConfig {
    pub fn new(i_k: f64, window: f64, target_max_spikes: usize) -> Result<Self> {
        let cfg = Self {
            i_k,
            window,
            target_max_spikes,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.i_k.is_finite() && self.i_k > 0.0) {
            return Err(SnnError::InvalidParameter(format!("i_k must be > 0, got {}", self.i_k)));
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(SnnError::InvalidParameter(format!(
                "window must be > 0, got {}",
                self.window
            )));
        }
        if self.target_max_spikes == 0 {
            return Err(SnnError::InvalidParameter("target_max_spikes must be >= 1".into()));
        }
        Ok(())
    }
}

pub fn pixel_to_current(p: f64, cfg: &EncodingConfig) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SnnError::InvalidParameter(format!(
            "pixel intensity {p} outside [0, 1]"
        )));
    }
    Ok(p * cfg.i_k)
}

/// Row-major vector of input currents, one per layer-1 neuron.
pub fn encode_image(img: &ImageSample, cfg: &EncodingConfig, layer_size: usize) -> Result<Vec<f64>> {
    if img.pixels.len() != layer_size {
        return Err(SnnError::Dimension {
            expected: layer_size,
            found: img.pixels.len(),
        });
    }
    img.pixels.iter().map(|&p| pixel_to_current(p, cfg)).collect()
}

/// Spike count of a neuron started from rest and driven by constant `current`.
pub fn count_spikes(params: &NeuronParams, current: f64, window: f64, dt: f64) -> Result<usize> {
    Ok(spike_times(params, current, window, dt)?.len())
}

/// Spike times of a neuron started from rest and driven by constant `current`.
pub fn spike_times(params: &NeuronParams, current: f64, window: f64, dt: f64) -> Result<Vec<f64>> {
    let prop = Propagator::new(params, dt)?;
    let steps = steps_in(window, dt)?;
    let mut state = NeuronState::resting(params);
    let mut times = Vec::new();
    for k in 0..steps {
        if prop.step(&mut state, current) {
            times.push(k as f64 * dt);
        }
    }
    Ok(times)
}

/// Number of whole `dt` steps in `window`; the window must be a multiple of dt.
pub fn steps_in(window: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0 && window.is_finite() && window > 0.0) {
        return Err(SnnError::InvalidParameter(format!(
            "window {window} and dt {dt} must be positive"
        )));
    }
    let n = (window / dt).round();
    if ((n * dt) - window).abs() > 1e-9 * window.max(1.0) {
        return Err(SnnError::InvalidParameter(format!(
            "window {window} ms is not a multiple of dt {dt} ms"
        )));
    }
    Ok(n as usize)
}

/// Smallest constant current (to [`CALIBRATION_RESOLUTION`]) for which a
/// neuron started from rest emits exactly `target` spikes in `window`.
pub fn calibrate_ik(params: &NeuronParams, window: f64, target: usize, dt: f64) -> Result<f64> {
    params.validate()?;
    if target == 0 {
        return Err(SnnError::Calibration(
            "target spike count must be >= 1; zero spikes is every sub-rheobase current".into(),
        ));
    }
    steps_in(window, dt)?;
    if target as f64 * params.t_ref >= window {
        let achievable = count_spikes(params, MAX_SEARCH_CURRENT, window, dt)?;
        return Err(SnnError::Calibration(format!(
            "{target} spikes in {window} ms is incompatible with t_ref {} ms (achievable maximum {achievable})",
            params.t_ref
        )));
    }

    let mut lo = 0.0;
    let mut hi = params.rheobase().max(1.0);
    loop {
        if count_spikes(params, hi, window, dt)? >= target {
            break;
        }
        lo = hi;
        hi *= 2.0;
        if hi > MAX_SEARCH_CURRENT {
            let achievable = count_spikes(params, MAX_SEARCH_CURRENT, window, dt)?;
            return Err(SnnError::Calibration(format!(
                "{target} spikes in {window} ms not reachable (achievable maximum {achievable})"
            )));
        }
    }
    while hi - lo > CALIBRATION_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if count_spikes(params, mid, window, dt)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let got = count_spikes(params, hi, window, dt)?;
    if got != target {
        return Err(SnnError::Calibration(format!(
            "spike count jumps past {target} (to {got}) near {hi:.3} pA"
        )));
    }
    Ok(hi)
}

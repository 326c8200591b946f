use serde::{Deserialize, Serialize};

use crate::error::{Result, SnnError};

/// Per-neuron spike times (ms) within one presentation window.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpikeRecord {
    trains: Vec<Vec<f64>>,
}

impl SpikeRecord {
    pub fn new(neurons: usize) -> Self {
        Self {
            trains: vec![Vec::new(); neurons],
        }
    }

    pub fn from_trains(trains: Vec<Vec<f64>>) -> Self {
        Self { trains }
    }

    pub fn len(&self) -> usize {
        self.trains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trains.is_empty()
    }

    pub fn push(&mut self, neuron: usize, t: f64) {
        self.trains[neuron].push(t);
    }

    pub fn train(&self, neuron: usize) -> &[f64] {
        &self.trains[neuron]
    }

    pub fn trains(&self) -> &[Vec<f64>] {
        &self.trains
    }

    pub fn count(&self, neuron: usize) -> usize {
        self.trains[neuron].len()
    }

    pub fn total(&self) -> usize {
        self.trains.iter().map(Vec::len).sum()
    }

    /// Copies out the trains of a contiguous neuron range.
    pub fn slice(&self, range: std::ops::Range<usize>) -> SpikeRecord {
        SpikeRecord {
            trains: self.trains[range].to_vec(),
        }
    }

    /// Checks every train is strictly increasing and inside `[0, window)`.
    pub fn validate(&self, window: f64) -> Result<()> {
        for (neuron, train) in self.trains.iter().enumerate() {
            let in_window = train.iter().all(|&t| t.is_finite() && (0.0..window).contains(&t));
            let sorted = train.windows(2).all(|w| w[0] < w[1]);
            if !(in_window && sorted) {
                return Err(SnnError::UnsortedSpikes { neuron, window });
            }
        }
        Ok(())
    }
}

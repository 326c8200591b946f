use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SnnError>;

#[derive(Debug, Error)]
pub enum SnnError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("weight {weight} does not match {sign:?} synapse sign")]
    SignMismatch { weight: f64, sign: crate::neuron::Sign },

    #[error("index {index} out of range for {what} of size {len}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("synapse population is in {found} mode, operation requires {required}")]
    WrongMode {
        required: &'static str,
        found: &'static str,
    },

    #[error("spike train for neuron {neuron} is not strictly increasing or leaves [0, {window}) ms")]
    UnsortedSpikes { neuron: usize, window: f64 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("encoding is not calibrated (set i_k or run `calibrate`)")]
    Uncalibrated,

    #[error("testing mode requires static synapses, projection {0} is plastic")]
    PlasticInTesting(&'static str),

    #[error("teachers already attached")]
    TeachersAttached,

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("format error: {0}")]
    Format(String),

    #[error("topology fingerprint mismatch: expected {expected:016x}, file has {found:016x}")]
    Fingerprint { expected: u64, found: u64 },

    #[error("checkpoint phase mismatch: expected {expected}, file has {found}")]
    Phase { expected: String, found: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

impl SnnError {
    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        SnnError::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 1 usage, 2 data/format, 3 numeric failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            SnnError::Usage(_) | SnnError::InvalidParameter(_) => 1,
            SnnError::NonFinite(_) | SnnError::Calibration(_) => 3,
            _ => 2,
        }
    }
}

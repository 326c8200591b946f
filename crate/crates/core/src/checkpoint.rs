//! Binary weight checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic         8 bytes  "NCSNNCKP"
//! version       u32
//! fingerprint   u64      topology hash
//! phase         u8       0 initial, 1 phase 1, 2 phase 2
//! presentations u64
//! rng seed      32 bytes
//! rng stream    u64
//! rng word pos  u128
//! projections   u32 count, then per projection: u64 length + length x f64
//! ```

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SnnError};

pub const MAGIC: &[u8; 8] = b"NCSNNCKP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Initial,
    Phase1,
    Phase2,
}

impl Phase {
    pub fn tag(self) -> u8 {
        match self {
            Phase::Initial => 0,
            Phase::Phase1 => 1,
            Phase::Phase2 => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Phase::Initial),
            1 => Ok(Phase::Phase1),
            2 => Ok(Phase::Phase2),
            t => Err(SnnError::Format(format!("unknown phase tag {t}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Initial => "initial",
            Phase::Phase1 => "phase1",
            Phase::Phase2 => "phase2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub fingerprint: u64,
    pub phase: Phase,
    pub presentations: u64,
    pub rng: RngState,
    /// One array per projection, P1..P5.
    pub weights: Vec<Vec<f64>>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let n: usize = self.weights.iter().map(|w| 8 + 8 * w.len()).sum();
        let mut out = Vec::with_capacity(128 + n);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.push(self.phase.tag());
        out.extend_from_slice(&self.presentations.to_le_bytes());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out.extend_from_slice(&(self.weights.len() as u32).to_le_bytes());
        for w in &self.weights {
            out.extend_from_slice(&(w.len() as u64).to_le_bytes());
            for x in w {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(SnnError::Format("bad checkpoint magic".into()));
        }
        let version = u32::from_le_bytes(r.array()?);
        if version != FORMAT_VERSION {
            return Err(SnnError::Format(format!(
                "checkpoint version {version}, this build reads {FORMAT_VERSION}"
            )));
        }
        let fingerprint = u64::from_le_bytes(r.array()?);
        let phase = Phase::from_tag(r.take(1)?[0])?;
        let presentations = u64::from_le_bytes(r.array()?);
        let seed: [u8; 32] = r.array()?;
        let stream = u64::from_le_bytes(r.array()?);
        let word_pos = u128::from_le_bytes(r.array()?);
        let count = u32::from_le_bytes(r.array()?) as usize;
        let mut weights = Vec::with_capacity(count.min(16));
        for _ in 0..count {
            let len = u64::from_le_bytes(r.array()?) as usize;
            let remaining = (bytes.len() - r.pos) / 8;
            if len > remaining {
                return Err(SnnError::Format(format!(
                    "weight array claims {len} values, only {remaining} present"
                )));
            }
            let w = (0..len)
                .map(|_| r.array().map(f64::from_le_bytes))
                .collect::<Result<Vec<_>>>()?;
            weights.push(w);
        }
        if r.pos != bytes.len() {
            return Err(SnnError::Format(format!(
                "{} trailing bytes after checkpoint",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            version,
            fingerprint,
            phase,
            presentations,
            rng: RngState { seed, stream, word_pos },
            weights,
        })
    }

    /// Fails unless the file was written for a topology with `expected` fingerprint.
    pub fn check_fingerprint(&self, expected: u64) -> Result<()> {
        if self.fingerprint != expected {
            return Err(SnnError::Fingerprint {
                expected,
                found: self.fingerprint,
            });
        }
        Ok(())
    }

    pub fn check_phase(&self, expected: Phase) -> Result<()> {
        if self.phase != expected {
            return Err(SnnError::Phase {
                expected: expected.name().into(),
                found: self.phase.name().into(),
            });
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(SnnError::Format("checkpoint truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("slice has length N"))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    fs::write(path, ckpt.to_bytes()).map_err(|e| SnnError::io(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| SnnError::io(format!("reading {}", path.display()), e))?;
    Checkpoint::from_bytes(&bytes)
}

//! Acoustic (MFCC + delta) and prosodic (F0, voicing, energy, duration)
//! observation sequences.

mod cache;
mod mfcc;
mod prosody;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cache::{cache_key, read_cache, write_cache, CACHE_MAGIC};
pub use mfcc::{extract_mfcc, log_mel_energies, MelFilterbank, MfccConfig};
pub use prosody::{estimate_f0, extract_prosody, ProsodyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Acoustic,
    Prosodic,
}

/// Time-ordered observation vectors of constant dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    data: Vec<f64>,
    dim: usize,
    frame_period_s: f64,
    kind: FeatureKind,
}

impl FeatureSequence {
    pub fn new(frames: Vec<Vec<f64>>, frame_period_s: f64, kind: FeatureKind) -> Result<Self> {
        let dim = frames.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(dim * frames.len());
        for f in &frames {
            if f.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: f.len(),
                });
            }
            data.extend_from_slice(f);
        }
        Self::from_flat(data, dim, frame_period_s, kind)
    }

    pub fn from_flat(data: Vec<f64>, dim: usize, frame_period_s: f64, kind: FeatureKind) -> Result<Self> {
        if !(frame_period_s > 0.0 && frame_period_s.is_finite()) {
            return Err(Error::invalid("frame period must be positive"));
        }
        if dim == 0 && !data.is_empty() {
            return Err(Error::invalid("zero-dimensional frames"));
        }
        if dim > 0 && !data.len().is_multiple_of(dim) {
            return Err(Error::invalid("flat data length is not a multiple of the dimension"));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature frames"));
        }
        Ok(FeatureSequence {
            data,
            dim,
            frame_period_s,
            kind,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_period_s(&self) -> f64 {
        self.frame_period_s
    }

    pub fn kind(&self) -> FeatureKind {
        self.kind
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }
}

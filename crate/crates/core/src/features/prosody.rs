use serde::{Deserialize, Serialize};

use super::{FeatureKind, FeatureSequence};
use crate::error::{Error, Result};

const ENERGY_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProsodyConfig {
    /// Acoustic frames per prosodic frame.
    pub block_frames: usize,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// Minimum normalized autocorrelation peak for a frame to count as voiced.
    pub voicing_threshold: f64,
}

impl Default for ProsodyConfig {
    fn default() -> Self {
        ProsodyConfig {
            block_frames: 9,
            f0_min_hz: 60.0,
            f0_max_hz: 400.0,
            voicing_threshold: 0.3,
        }
    }
}

impl ProsodyConfig {
    pub fn validate(&self, rate: u32) -> Result<()> {
        if self.block_frames == 0 {
            return Err(Error::invalid("block_frames must be >= 1"));
        }
        if !(self.f0_min_hz > 0.0 && self.f0_min_hz < self.f0_max_hz && self.f0_max_hz < f64::from(rate) / 2.0) {
            return Err(Error::invalid("need 0 < f0_min_hz < f0_max_hz < rate/2"));
        }
        if !(self.voicing_threshold > 0.0 && self.voicing_threshold < 1.0) {
            return Err(Error::invalid("voicing_threshold must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Pitch analysis window: two periods of the lowest admissible F0.
    fn pitch_window(&self, rate: u32) -> usize {
        (2.0 * f64::from(rate) / self.f0_min_hz).ceil() as usize
    }
}

/// Normalized autocorrelation pitch estimate for one analysis window.
///
/// Returns `Some((f0_hz, peak))` when the best peak inside the lag band reaches
/// `threshold`. The earliest local maximum within 90% of the global maximum
/// is taken to avoid sub-octave picks, then refined by parabolic
/// interpolation.
pub fn estimate_f0(frame: &[f64], rate: u32, f0_min: f64, f0_max: f64, threshold: f64) -> Option<(f64, f64)> {
    let sr = f64::from(rate);
    let lag_min = ((sr / f0_max).floor() as usize).max(1);
    let lag_max = (sr / f0_min).ceil() as usize;
    if frame.len() < lag_max + lag_max / 2 {
        return None;
    }
    let mean = frame.iter().sum::<f64>() / frame.len() as f64;
    let x: Vec<f64> = frame.iter().map(|v| v - mean).collect();
    if x.iter().all(|&v| v == 0.0) {
        return None;
    }
    // one extra lag on each side for interpolation
    let lo = lag_min.saturating_sub(1).max(1);
    let hi = lag_max + 1;
    let r: Vec<f64> = (lo..=hi)
        .map(|lag| {
            let n = x.len() - lag;
            let (mut xy, mut xx, mut yy) = (0.0, 0.0, 0.0);
            for i in 0..n {
                xy += x[i] * x[i + lag];
                xx += x[i] * x[i];
                yy += x[i + lag] * x[i + lag];
            }
            if xx > 0.0 && yy > 0.0 {
                xy / (xx * yy).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let at = |lag: usize| r[lag - lo];
    let global = (lag_min..=lag_max).map(at).fold(f64::NEG_INFINITY, f64::max);
    if !(global >= threshold) {
        return None;
    }
    let best = (lag_min..=lag_max)
        .find(|&lag| {
            let v = at(lag);
            v >= 0.9 * global && v >= at(lag - 1) && v >= at(lag + 1)
        })
        .unwrap_or(lag_min);
    let (a, b, c) = (at(best - 1), at(best), at(best + 1));
    let curv = a - 2.0 * b + c;
    let shift = if curv < 0.0 {
        (0.5 * (a - c) / curv).clamp(-0.5, 0.5)
    } else {
        0.0
    };
    Some((sr / (best as f64 + shift), b))
}

/// Groups the acoustic frame timeline into blocks of `block_frames` frames
/// and emits `[mean F0 of voiced frames (0 if none), voiced fraction,
/// mean log energy, ln(block duration in s)]` per block. A trailing partial
/// block is dropped unless it is the only block.
pub fn extract_prosody(
    samples: &[f64],
    rate: u32,
    acoustic: &FeatureSequence,
    cfg: &ProsodyConfig,
) -> Result<FeatureSequence> {
    cfg.validate(rate)?;
    if acoustic.is_empty() {
        return Err(Error::EmptySequence);
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("audio samples"));
    }
    let period = acoustic.frame_period_s();
    let hop = (period * f64::from(rate)).round() as usize;
    let pw = cfg.pitch_window(rate);

    let per_frame: Vec<(Option<f64>, f64)> = (0..acoustic.len())
        .map(|t| {
            let start = (t * hop).min(samples.len());
            let seg = &samples[start..(start + pw).min(samples.len())];
            let f0 = estimate_f0(seg, rate, cfg.f0_min_hz, cfg.f0_max_hz, cfg.voicing_threshold).map(|p| p.0);
            let ms = if seg.is_empty() {
                0.0
            } else {
                seg.iter().map(|v| v * v).sum::<f64>() / seg.len() as f64
            };
            (f0, ms.max(ENERGY_FLOOR).ln())
        })
        .collect();

    let n_blocks = (per_frame.len() / cfg.block_frames).max(1);
    let frames = (0..n_blocks)
        .map(|b| {
            let end = if per_frame.len() < cfg.block_frames {
                per_frame.len()
            } else {
                (b + 1) * cfg.block_frames
            };
            let block = &per_frame[b * cfg.block_frames..end];
            let voiced: Vec<f64> = block.iter().filter_map(|f| f.0).collect();
            let mean_f0 = if voiced.is_empty() {
                0.0
            } else {
                voiced.iter().sum::<f64>() / voiced.len() as f64
            };
            let frac = voiced.len() as f64 / block.len() as f64;
            let energy = block.iter().map(|f| f.1).sum::<f64>() / block.len() as f64;
            vec![mean_f0, frac, energy, (block.len() as f64 * period).ln()]
        })
        .collect();
    FeatureSequence::new(frames, period * cfg.block_frames as f64, FeatureKind::Prosodic)
}

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{FeatureKind, FeatureSequence};
use crate::audio::SAMPLE_RATE_HZ;
use crate::error::{Error, Result};

/// Framing and cepstral analysis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccConfig {
    pub window_s: f64,
    pub hop_s: f64,
    pub n_mel_filters: usize,
    pub n_cepstra: usize,
    /// Half-width, in frames, of the delta regression.
    pub delta_window: usize,
    pub pre_emphasis: f64,
    /// Floor applied to filterbank energies before the log.
    pub log_floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        MfccConfig {
            window_s: 0.025,
            hop_s: 0.010,
            n_mel_filters: 24,
            n_cepstra: 12,
            delta_window: 2,
            pre_emphasis: 0.97,
            log_floor: 1e-10,
        }
    }
}

impl MfccConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.hop_s > 0.0 && self.window_s >= self.hop_s && self.window_s.is_finite()) {
            return Err(Error::invalid("need window_s >= hop_s > 0"));
        }
        if self.n_cepstra == 0 || self.n_cepstra > self.n_mel_filters {
            return Err(Error::invalid("need 1 <= n_cepstra <= n_mel_filters"));
        }
        if !(0.0..1.0).contains(&self.pre_emphasis) {
            return Err(Error::invalid("pre_emphasis must lie in [0, 1)"));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::invalid("log_floor must be positive"));
        }
        if self.delta_window == 0 {
            return Err(Error::invalid("delta_window must be >= 1"));
        }
        Ok(())
    }

    pub fn window_samples(&self, rate: u32) -> usize {
        (self.window_s * f64::from(rate)).round() as usize
    }

    pub fn hop_samples(&self, rate: u32) -> usize {
        (self.hop_s * f64::from(rate)).round() as usize
    }

    /// Static plus delta dimension.
    pub fn output_dim(&self) -> usize {
        2 * self.n_cepstra
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters evenly spaced on the mel scale from 0 Hz to Nyquist,
/// evaluated on the bins of a real FFT.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// `(first_bin, weights)` per filter.
    filters: Vec<(usize, Vec<f64>)>,
    centers_hz: Vec<f64>,
    n_bins: usize,
}

impl MelFilterbank {
    pub fn new(n_filters: usize, fft_size: usize, rate: u32) -> Self {
        let nyquist = f64::from(rate) / 2.0;
        let mel_hi = hz_to_mel(nyquist);
        let edges: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(mel_hi * i as f64 / (n_filters + 1) as f64))
            .collect();
        let n_bins = fft_size / 2 + 1;
        let bin_hz = f64::from(rate) / fft_size as f64;
        let filters = edges
            .windows(3)
            .map(|e| {
                let (lo, c, hi) = (e[0], e[1], e[2]);
                let first = (lo / bin_hz).floor() as usize;
                let last = ((hi / bin_hz).ceil() as usize).min(n_bins - 1);
                let w = (first..=last)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f > lo && f <= c {
                            (f - lo) / (c - lo)
                        } else if f > c && f < hi {
                            (hi - f) / (hi - c)
                        } else {
                            0.0
                        }
                    })
                    .collect();
                (first, w)
            })
            .collect();
        MelFilterbank {
            filters,
            centers_hz: edges[1..=n_filters].to_vec(),
            n_bins,
        }
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    /// Dense weights of filter `m` over all `fft_size / 2 + 1` bins.
    pub fn weights(&self, m: usize) -> Vec<f64> {
        let mut dense = vec![0.0; self.n_bins];
        let (first, w) = &self.filters[m];
        dense[*first..*first + w.len()].copy_from_slice(w);
        dense
    }

    pub fn apply(&self, magnitude: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|(first, w)| w.iter().zip(&magnitude[*first..]).map(|(a, b)| a * b).sum())
            .collect()
    }
}

struct Analyzer {
    win: usize,
    hop: usize,
    fft_size: usize,
    hamming: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
    bank: MelFilterbank,
    pre_emphasis: f64,
    log_floor: f64,
}

impl Analyzer {
    fn new(rate: u32, cfg: &MfccConfig) -> Result<Self> {
        cfg.validate()?;
        if rate != SAMPLE_RATE_HZ {
            return Err(Error::UnsupportedAudio(format!(
                "sample rate {rate} Hz (only {SAMPLE_RATE_HZ} Hz is supported)"
            )));
        }
        let win = cfg.window_samples(rate);
        let hop = cfg.hop_samples(rate);
        if win < 2 || hop == 0 {
            return Err(Error::invalid("window/hop too short for the sample rate"));
        }
        let fft_size = win.next_power_of_two();
        let hamming = (0..win)
            .map(|n| 0.54 - 0.46 * (std::f64::consts::TAU * n as f64 / (win - 1) as f64).cos())
            .collect();
        Ok(Analyzer {
            win,
            hop,
            fft_size,
            hamming,
            fft: FftPlanner::new().plan_fft_forward(fft_size),
            bank: MelFilterbank::new(cfg.n_mel_filters, fft_size, rate),
            pre_emphasis: cfg.pre_emphasis,
            log_floor: cfg.log_floor,
        })
    }

    fn n_frames(&self, n_samples: usize) -> usize {
        (n_samples - self.win) / self.hop + 1
    }

    fn log_energies(&self, samples: &[f64]) -> Result<Vec<Vec<f64>>> {
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("audio samples"));
        }
        if samples.len() < self.win {
            return Err(Error::SequenceTooShort {
                len: samples.len(),
                min: self.win,
            });
        }
        let mut buf = vec![Complex::new(0.0, 0.0); self.fft_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut mag = vec![0.0; self.fft_size / 2 + 1];
        let a = self.pre_emphasis;
        (0..self.n_frames(samples.len()))
            .map(|t| {
                let frame = &samples[t * self.hop..t * self.hop + self.win];
                buf.fill(Complex::new(0.0, 0.0));
                let mut prev = frame[0];
                for (n, (&x, w)) in frame.iter().zip(&self.hamming).enumerate() {
                    let y = if n == 0 { x * (1.0 - a) } else { x - a * prev };
                    prev = x;
                    buf[n] = Complex::new(y * w, 0.0);
                }
                self.fft.process_with_scratch(&mut buf, &mut scratch);
                for (m, c) in mag.iter_mut().zip(&buf) {
                    *m = c.norm();
                }
                Ok(self
                    .bank
                    .apply(&mag)
                    .into_iter()
                    .map(|e| e.max(self.log_floor).ln())
                    .collect())
            })
            .collect()
    }
}

/// Log mel filterbank energies per frame (pre-emphasis, Hamming window,
/// magnitude spectrum, triangular filters, floored log).
pub fn log_mel_energies(samples: &[f64], rate: u32, cfg: &MfccConfig) -> Result<Vec<Vec<f64>>> {
    Analyzer::new(rate, cfg)?.log_energies(samples)
}

/// Static cepstra `c_0 .. c_{n-1}` followed by their regression deltas.
pub fn extract_mfcc(samples: &[f64], rate: u32, cfg: &MfccConfig) -> Result<FeatureSequence> {
    let analyzer = Analyzer::new(rate, cfg)?;
    let energies = analyzer.log_energies(samples)?;
    let n_filt = cfg.n_mel_filters;
    let scale = (2.0 / n_filt as f64).sqrt();
    let dct: Vec<Vec<f64>> = (0..cfg.n_cepstra)
        .map(|i| {
            (0..n_filt)
                .map(|m| scale * (std::f64::consts::PI * i as f64 * (m as f64 + 0.5) / n_filt as f64).cos())
                .collect()
        })
        .collect();
    let statics: Vec<Vec<f64>> = energies
        .iter()
        .map(|e| {
            dct.iter()
                .map(|row| row.iter().zip(e).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    let deltas = deltas(&statics, cfg.delta_window);
    let dim = cfg.output_dim();
    let mut data = Vec::with_capacity(statics.len() * dim);
    for (s, d) in statics.iter().zip(&deltas) {
        data.extend_from_slice(s);
        data.extend_from_slice(d);
    }
    let period = analyzer.hop as f64 / f64::from(rate);
    FeatureSequence::from_flat(data, dim, period, FeatureKind::Acoustic)
}

/// `d_t = sum_n n (c_{t+n} - c_{t-n}) / (2 sum_n n^2)` with edge frames repeated.
fn deltas(statics: &[Vec<f64>], half: usize) -> Vec<Vec<f64>> {
    let t_len = statics.len();
    let denom = 2.0 * (1..=half).map(|n| (n * n) as f64).sum::<f64>();
    (0..t_len)
        .map(|t| {
            let mut d = vec![0.0; statics[t].len()];
            for n in 1..=half {
                let fwd = &statics[(t + n).min(t_len - 1)];
                let back = &statics[t.saturating_sub(n)];
                for (k, v) in d.iter_mut().enumerate() {
                    *v += n as f64 * (fwd[k] - back[k]);
                }
            }
            d.iter_mut().for_each(|v| *v /= denom);
            d
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, TAU};

    fn tone(freq: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| 0.5 * (TAU * freq * i as f64 / 16000.0).sin()).collect()
    }

    #[test]
    fn frame_count_for_one_second() {
        let seq = extract_mfcc(&tone(440.0, 16000), 16000, &MfccConfig::default()).unwrap();
        assert_eq!(seq.len(), 98);
        assert_eq!(seq.dim(), 24);
        assert!((seq.frame_period_s() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn silence_hits_the_floor_and_has_zero_deltas() {
        let cfg = MfccConfig::default();
        let silent = vec![0.0; 4000];
        let e = log_mel_energies(&silent, 16000, &cfg).unwrap();
        let floor = cfg.log_floor.ln();
        assert!(e.iter().flatten().all(|&v| v == floor));
        let seq = extract_mfcc(&silent, 16000, &cfg).unwrap();
        for f in seq.frames() {
            assert!(f[12..].iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn constant_statics_give_exactly_zero_deltas() {
        let statics = vec![vec![1.5, -2.25, 3.0]; 7];
        assert!(deltas(&statics, 2).iter().flatten().all(|&d| d == 0.0));
    }

    #[test]
    fn delta_of_a_ramp_is_its_slope() {
        let statics: Vec<Vec<f64>> = (0..10).map(|t| vec![2.0 * t as f64]).collect();
        let d = deltas(&statics, 2);
        for row in &d[2..8] {
            assert!((row[0] - 2.0).abs() < 1e-12);
        }
    }

    /// Direct O(N^2) DFT of the windowed tone, then the same filter weights.
    #[test]
    fn one_khz_tone_peaks_in_nearest_filter() {
        let cfg = MfccConfig::default();
        let samples = tone(1000.0, 400);
        let win = 400;
        let fft_size = 512;
        let mut frame: Vec<f64> = Vec::with_capacity(win);
        for n in 0..win {
            let pre = if n == 0 {
                samples[0] * (1.0 - cfg.pre_emphasis)
            } else {
                samples[n] - cfg.pre_emphasis * samples[n - 1]
            };
            let w = 0.54 - 0.46 * (TAU * n as f64 / (win - 1) as f64).cos();
            frame.push(pre * w);
        }
        let mag: Vec<f64> = (0..=fft_size / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (n, x) in frame.iter().enumerate() {
                    let ang = -2.0 * PI * (k * n) as f64 / fft_size as f64;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect();
        let bank = MelFilterbank::new(cfg.n_mel_filters, fft_size, 16000);
        let oracle: Vec<f64> = (0..bank.len())
            .map(|m| bank.weights(m).iter().zip(&mag).map(|(a, b)| a * b).sum())
            .collect();
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .fold((0, f64::MIN), |b, (i, &x)| if x > b.1 { (i, x) } else { b })
                .0
        };
        let nearest = bank
            .centers_hz()
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 1000.0).abs().total_cmp(&(b.1 - 1000.0).abs()))
            .unwrap()
            .0;
        assert_eq!(argmax(&oracle), nearest);
        let ours = &log_mel_energies(&samples, 16000, &cfg).unwrap()[0];
        assert_eq!(argmax(ours), nearest);
        for (a, b) in ours.iter().zip(&oracle) {
            assert!((a - b.max(cfg.log_floor).ln()).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_short_nonfinite_and_wrong_rate() {
        let cfg = MfccConfig::default();
        assert!(matches!(
            extract_mfcc(&[0.0; 399], 16000, &cfg),
            Err(Error::SequenceTooShort { .. })
        ));
        let mut bad = vec![0.0; 800];
        bad[3] = f64::NAN;
        assert!(matches!(extract_mfcc(&bad, 16000, &cfg), Err(Error::NonFinite(_))));
        assert!(extract_mfcc(&[0.0; 800], 8000, &cfg).is_err());
        let bad_cfg = MfccConfig {
            n_cepstra: 30,
            ..MfccConfig::default()
        };
        assert!(extract_mfcc(&[0.0; 800], 16000, &bad_cfg).is_err());
    }

    #[test]
    fn deterministic_bits() {
        let x = tone(300.0, 3000);
        let a = extract_mfcc(&x, 16000, &MfccConfig::default()).unwrap();
        let b = extract_mfcc(&x, 16000, &MfccConfig::default()).unwrap();
        let bits = |s: &FeatureSequence| s.as_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }
}

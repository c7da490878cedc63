//! Seeded synthetic corpus generator.
//!
//! Every clip is a short string of voiced "syllables" separated by pauses.
//! Syllables are harmonic series shaped by vowel formants; the sentence id
//! fixes the vowel/duration script, the speaker fixes base pitch and vocal
//! tract scale, and the talking condition sets pitch, loudness, tempo and
//! background noise. Each clip draws from its own RNG stream derived from
//! `(seed, speaker, sentence, condition, repetition)`, so output does not
//! depend on generation order.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{manifest, ConditionSet, CorpusManifest, Gender, Utterance};
use crate::audio::{quantize, write_wav, SAMPLE_RATE_HZ};
use crate::error::{Error, Result};

/// Per-condition voice parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionVoice {
    pub label: String,
    /// Multiplier range applied to the speaker's base F0.
    pub pitch_scale: (f64, f64),
    /// Peak amplitude range of voiced segments (full scale = 1).
    pub amplitude: (f64, f64),
    /// Duration multiplier; > 1 is slower.
    pub rate_factor: f64,
    /// Standard deviation of additive white noise.
    pub noise_level: f64,
}

impl ConditionVoice {
    pub fn new(
        label: &str,
        pitch_scale: (f64, f64),
        amplitude: (f64, f64),
        rate_factor: f64,
        noise_level: f64,
    ) -> Self {
        ConditionVoice {
            label: label.to_string(),
            pitch_scale,
            amplitude,
            rate_factor,
            noise_level,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub set_name: String,
    pub conditions: Vec<ConditionVoice>,
    pub speakers: usize,
    pub sentences: u32,
    pub repetitions: u32,
    pub seed: u64,
    pub base_pitch_hz: f64,
    /// Female base F0 relative to male.
    pub female_pitch_ratio: f64,
    /// Relative spread of per-speaker base F0 around the gender base.
    pub speaker_pitch_spread: f64,
}

const NOISE: f64 = 0.003;

impl SyntheticSpec {
    /// Six stress conditions with large pitch, loudness and tempo gaps.
    pub fn stress() -> Self {
        let c = ConditionVoice::new;
        SyntheticSpec {
            set_name: "stress".into(),
            conditions: vec![
                c("neutral", (0.95, 1.05), (0.10, 0.13), 1.0, NOISE),
                c("shouted", (1.50, 1.70), (0.65, 0.80), 0.95, NOISE),
                c("slow", (0.85, 0.95), (0.050, 0.065), 1.7, NOISE),
                c("loud", (1.10, 1.20), (0.33, 0.40), 1.0, NOISE),
                c("soft", (0.90, 1.00), (0.022, 0.028), 1.05, NOISE),
                c("fast", (1.00, 1.10), (0.18, 0.22), 0.6, NOISE),
            ],
            speakers: 6,
            sentences: 8,
            repetitions: 3,
            seed: 1,
            base_pitch_hz: 120.0,
            female_pitch_ratio: 1.6,
            speaker_pitch_spread: 0.05,
        }
    }

    /// Six emotions, separated the same way as [`SyntheticSpec::stress`].
    pub fn emotion() -> Self {
        let c = ConditionVoice::new;
        SyntheticSpec {
            set_name: "emotion".into(),
            conditions: vec![
                c("neutral", (0.95, 1.05), (0.10, 0.13), 1.0, NOISE),
                c("angry", (1.40, 1.55), (0.60, 0.75), 0.85, NOISE),
                c("sad", (0.80, 0.88), (0.030, 0.040), 1.5, NOISE),
                c("happy", (1.25, 1.35), (0.30, 0.36), 0.9, NOISE),
                c("disgust", (0.90, 0.97), (0.055, 0.070), 1.2, NOISE),
                c("fear", (1.15, 1.25), (0.18, 0.22), 0.7, NOISE),
            ],
            ..Self::stress()
        }
    }

    /// Stress labels, but every condition shares one loudness and noise
    /// level: classes differ only in pitch and tempo.
    pub fn prosody_only() -> Self {
        let amp = (0.15, 0.20);
        let c = |l, p, r| ConditionVoice::new(l, p, amp, r, NOISE);
        SyntheticSpec {
            set_name: "stress".into(),
            conditions: vec![
                c("neutral", (0.97, 1.03), 1.0),
                c("shouted", (1.52, 1.60), 1.0),
                c("slow", (0.86, 0.90), 1.7),
                c("loud", (1.24, 1.30), 1.0),
                c("soft", (0.74, 0.78), 1.0),
                c("fast", (1.10, 1.15), 0.6),
            ],
            female_pitch_ratio: 1.0,
            speaker_pitch_spread: 0.01,
            base_pitch_hz: 140.0,
            ..Self::stress()
        }
    }

    /// 30 speakers, 8 sentences, 9 repetitions.
    pub fn paper_shaped(self) -> Self {
        self.with_shape(30, 8, 9)
    }

    pub fn with_shape(mut self, speakers: usize, sentences: u32, repetitions: u32) -> Self {
        self.speakers = speakers;
        self.sentences = sentences;
        self.repetitions = repetitions;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn condition_set(&self) -> Result<ConditionSet> {
        ConditionSet::new(
            self.set_name.clone(),
            self.conditions.iter().map(|c| c.label.clone()).collect(),
        )
    }

    fn validate(&self) -> Result<()> {
        if self.conditions.is_empty() {
            return Err(Error::invalid("synthetic spec has zero conditions"));
        }
        if self.speakers == 0 || self.sentences == 0 || self.repetitions == 0 {
            return Err(Error::invalid("speakers, sentences and repetitions must be >= 1"));
        }
        if !(self.base_pitch_hz > 0.0 && self.female_pitch_ratio > 0.0 && self.speaker_pitch_spread >= 0.0) {
            return Err(Error::invalid("speaker pitch parameters must be positive"));
        }
        for c in &self.conditions {
            let ok_range = |(lo, hi): (f64, f64)| lo > 0.0 && lo <= hi && hi.is_finite();
            if !ok_range(c.pitch_scale) || !ok_range(c.amplitude) || c.amplitude.1 > 1.0 {
                return Err(Error::invalid(format!(
                    "condition `{}` has a bad pitch or amplitude range",
                    c.label
                )));
            }
            if !(c.rate_factor > 0.0 && c.rate_factor.is_finite()) || !(c.noise_level >= 0.0 && c.noise_level < 1.0) {
                return Err(Error::invalid(format!(
                    "condition `{}` has a bad rate or noise level",
                    c.label
                )));
            }
        }
        self.condition_set()?;
        Ok(())
    }

    fn speaker_id(&self, index: usize) -> String {
        let width = self.speakers.to_string().len().max(2);
        format!("spk{:0width$}", index + 1)
    }

    fn gender(index: usize) -> Gender {
        if index.is_multiple_of(2) {
            Gender::Male
        } else {
            Gender::Female
        }
    }

    /// The manifest that [`generate_synthetic`] would write, without audio.
    pub fn plan(&self) -> Result<CorpusManifest> {
        self.validate()?;
        let mut utts =
            Vec::with_capacity(self.speakers * (self.sentences * self.repetitions) as usize * self.conditions.len());
        for spk in 0..self.speakers {
            let speaker_id = self.speaker_id(spk);
            for sentence_id in 1..=self.sentences {
                for cond in &self.conditions {
                    for repetition in 1..=self.repetitions {
                        utts.push(Utterance {
                            audio_path: PathBuf::from(format!(
                                "wav/{speaker_id}_s{sentence_id}_{}_r{repetition}.wav",
                                cond.label
                            )),
                            speaker_id: speaker_id.clone(),
                            gender: Self::gender(spk),
                            sentence_id,
                            condition: cond.label.clone(),
                            repetition,
                        });
                    }
                }
            }
        }
        CorpusManifest::new(self.condition_set()?, utts, SAMPLE_RATE_HZ, ".")
    }

    /// Renders one clip. `speaker` is the zero-based speaker index.
    pub fn synthesize(&self, speaker: usize, sentence_id: u32, condition: usize, repetition: u32) -> Vec<f64> {
        let cond = &self.conditions[condition];
        let sr = f64::from(SAMPLE_RATE_HZ);
        let voice = SpeakerVoice::new(self, speaker);
        let script = sentence_script(self.seed, sentence_id);
        let mut rng = stream(
            self.seed,
            &[
                3,
                speaker as u64,
                u64::from(sentence_id),
                condition as u64,
                u64::from(repetition),
            ],
        );

        let edge = (0.05 * sr) as usize;
        let mut out = vec![0.0; edge];
        for syl in &script {
            let jitter = rng.random_range(0.95..1.05);
            let n = (syl.duration_s * cond.rate_factor * jitter * sr).round().max(1.0) as usize;
            let f_start = voice.f0 * rng.random_range(cond.pitch_scale.0..=cond.pitch_scale.1);
            let f_end = f_start * rng.random_range(0.85..0.95);
            let amp = rng.random_range(cond.amplitude.0..=cond.amplitude.1);
            out.extend(voiced_segment(
                n,
                f_start,
                f_end,
                amp,
                &syl.formants,
                voice.formant_scale,
                sr,
            ));
            let gap = (syl.gap_s * cond.rate_factor * jitter * sr).round() as usize;
            out.extend(std::iter::repeat_n(0.0, gap));
        }
        out.extend(std::iter::repeat_n(0.0, edge));

        if cond.noise_level > 0.0 {
            let normal = Normal::new(0.0, cond.noise_level).expect("validated noise level");
            for x in &mut out {
                *x += normal.sample(&mut rng);
            }
        }
        out
    }
}

struct SpeakerVoice {
    f0: f64,
    formant_scale: f64,
}

impl SpeakerVoice {
    fn new(spec: &SyntheticSpec, speaker: usize) -> Self {
        let mut rng = stream(spec.seed, &[1, speaker as u64]);
        let female = SyntheticSpec::gender(speaker) == Gender::Female;
        let gender_ratio = if female { spec.female_pitch_ratio } else { 1.0 };
        let spread = spec.speaker_pitch_spread;
        let f0 = spec.base_pitch_hz * gender_ratio * (1.0 + spread * rng.random_range(-1.0..=1.0));
        let formant_scale = if female { 1.12 } else { 1.0 } * (1.0 + 0.04 * rng.random_range(-1.0..=1.0));
        SpeakerVoice { f0, formant_scale }
    }
}

struct Syllable {
    formants: [f64; 3],
    duration_s: f64,
    gap_s: f64,
}

const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [300.0, 870.0, 2240.0],
    [530.0, 1840.0, 2480.0],
    [570.0, 840.0, 2410.0],
    [660.0, 1720.0, 2410.0],
];
const BANDWIDTHS: [f64; 3] = [80.0, 100.0, 120.0];

fn sentence_script(seed: u64, sentence_id: u32) -> Vec<Syllable> {
    let mut rng = stream(seed, &[2, u64::from(sentence_id)]);
    let n = rng.random_range(4..=6);
    (0..n)
        .map(|_| Syllable {
            formants: VOWELS[rng.random_range(0..VOWELS.len())],
            duration_s: rng.random_range(0.10..0.16),
            gap_s: rng.random_range(0.03..0.06),
        })
        .collect()
}

fn voiced_segment(n: usize, f_start: f64, f_end: f64, amp: f64, formants: &[f64; 3], scale: f64, sr: f64) -> Vec<f64> {
    let n_harm = ((3800.0 / f_start).floor() as usize).clamp(1, 40);
    let gains: Vec<f64> = (1..=n_harm)
        .map(|h| {
            let f = h as f64 * f_start;
            let resonance: f64 = formants
                .iter()
                .zip(BANDWIDTHS)
                .map(|(&fc, bw)| 1.0 / (1.0 + ((f - fc * scale) / bw).powi(2)))
                .sum();
            (resonance + 0.01) / h as f64
        })
        .collect();

    let mut x = Vec::with_capacity(n);
    let mut phase = 0.0f64;
    for i in 0..n {
        let f = f_start + (f_end - f_start) * i as f64 / n as f64;
        phase = (phase + std::f64::consts::TAU * f / sr) % std::f64::consts::TAU;
        // sin(h*phase) by repeated complex rotation
        let (s1, c1) = phase.sin_cos();
        let (mut s, mut c) = (s1, c1);
        let mut acc = 0.0;
        for &g in &gains {
            acc += g * s;
            let (ns, nc) = (s * c1 + c * s1, c * c1 - s * s1);
            s = ns;
            c = nc;
        }
        x.push(acc);
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let ramp = ((0.015 * sr) as usize).min(n / 2).max(1);
    for (i, v) in x.iter_mut().enumerate() {
        let edge = i.min(n - 1 - i);
        let env = if edge < ramp {
            0.5 - 0.5 * (std::f64::consts::PI * edge as f64 / ramp as f64).cos()
        } else {
            1.0
        };
        *v = if peak > 0.0 { *v / peak * amp * env } else { 0.0 };
    }
    x
}

fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix(seed);
    for &p in parts {
        h = splitmix(h ^ p.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Writes `wav/*.wav` and `manifest.tsv` under `out_dir` and returns the
/// manifest (rooted at `out_dir`).
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: impl AsRef<Path>) -> Result<CorpusManifest> {
    let out_dir = out_dir.as_ref();
    let plan = spec.plan()?;
    fs::create_dir_all(out_dir.join("wav"))?;
    let speakers = plan.speakers();
    for u in plan.utterances() {
        let spk = speakers.binary_search(&u.speaker_id).expect("planned speaker");
        let cond = plan.condition_set().index_of(&u.condition).expect("planned label");
        let samples = spec.synthesize(spk, u.sentence_id, cond, u.repetition);
        write_wav(out_dir.join(&u.audio_path), SAMPLE_RATE_HZ, &quantize(&samples))?;
    }
    let manifest = CorpusManifest::new(
        plan.condition_set().clone(),
        plan.utterances().to_vec(),
        SAMPLE_RATE_HZ,
        out_dir,
    )?;
    manifest::save_manifest(&manifest, out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}

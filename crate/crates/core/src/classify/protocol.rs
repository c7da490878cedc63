use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{confusion_of, Decision, PerformanceReport, SweepRow};
use super::{argmax, ConditionModel, ConfusionMatrix, ModelBank, ModelKind, UtteranceFeatures};
use crate::audio::read_wav;
use crate::chmm2::{init_chmm2, train_chmm2};
use crate::corpus::{CorpusManifest, SplitSpec};
use crate::em::TrainOpts;
use crate::error::{Error, Result};
use crate::features::{
    cache_key, extract_mfcc, extract_prosody, read_cache, write_cache, FeatureSequence, MfccConfig, ProsodyConfig,
};
use crate::hmm::{init_hmm, train_baum_welch};
use crate::sphmm::{check_alpha, fuse, train_sphmm, ProsodicSetup};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub mfcc: MfccConfig,
    pub prosody: ProsodyConfig,
}

/// Model family and hyperparameters for every condition model of a bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Acoustic states per model.
    pub n_states: usize,
    /// Gaussian components per acoustic state.
    pub n_mix: usize,
    /// Longest forward jump of left-to-right models.
    pub max_jump: usize,
    /// Acoustic states per suprasegmental state.
    pub grouping: usize,
    /// Gaussian components per suprasegmental state.
    pub prosodic_mix: usize,
    pub alpha: f64,
    pub seed: u64,
    pub train: TrainOpts,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::Hmm,
            n_states: 9,
            n_mix: 10,
            max_jump: 2,
            grouping: 3,
            prosodic_mix: 1,
            alpha: 0.5,
            seed: 0,
            train: TrainOpts::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_mix == 0 || self.prosodic_mix == 0 {
            return Err(Error::invalid("state and mixture counts must be at least 1"));
        }
        if self.max_jump == 0 {
            return Err(Error::invalid("left-to-right models need max_jump >= 1"));
        }
        check_alpha(self.alpha)?;
        if self.kind == ModelKind::Sphmm && (self.grouping == 0 || !self.n_states.is_multiple_of(self.grouping)) {
            return Err(Error::invalid(format!(
                "n_states {} is not divisible by grouping {}",
                self.n_states, self.grouping
            )));
        }
        if !(self.train.variance_floor_frac > 0.0) {
            return Err(Error::invalid("variance floor fraction must be positive"));
        }
        Ok(())
    }
}

/// Per-condition training trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainingLog {
    pub condition: String,
    pub utterances: usize,
    pub acoustic: Vec<f64>,
    pub acoustic_converged: bool,
    pub prosodic: Option<Vec<f64>>,
}

/// Reads one utterance and computes its acoustic and prosodic sequences.
pub fn extract_utterance(path: &Path, expected_rate: u32, cfg: &FeatureConfig) -> Result<UtteranceFeatures> {
    let clip = read_wav(path)?;
    if clip.sample_rate_hz != expected_rate {
        return Err(Error::UnsupportedAudio(format!(
            "{}: {} Hz, manifest says {} Hz",
            path.display(),
            clip.sample_rate_hz,
            expected_rate
        )));
    }
    let acoustic = extract_mfcc(&clip.samples, clip.sample_rate_hz, &cfg.mfcc)?;
    let prosodic = extract_prosody(&clip.samples, clip.sample_rate_hz, &acoustic, &cfg.prosody)?;
    Ok(UtteranceFeatures { acoustic, prosodic })
}

fn cached_utterance(path: &Path, rate: u32, cfg: &FeatureConfig, cache_dir: &Path) -> Result<UtteranceFeatures> {
    let key = cache_key(path, &cfg.mfcc, &cfg.prosody);
    let a_path = cache_dir.join(format!("{key}.acoustic.shmf"));
    let p_path = cache_dir.join(format!("{key}.prosodic.shmf"));
    if let (Ok(acoustic), Ok(prosodic)) = (read_cache(&a_path), read_cache(&p_path)) {
        return Ok(UtteranceFeatures { acoustic, prosodic });
    }
    let f = extract_utterance(path, rate, cfg)?;
    std::fs::create_dir_all(cache_dir)?;
    write_cache(&a_path, &f.acoustic)?;
    write_cache(&p_path, &f.prosodic)?;
    Ok(f)
}

/// Features of the given manifest utterances, in the order of `indices`.
/// Extraction runs in parallel; with a cache directory, previously written
/// sequences are reused.
pub fn extract_corpus_features(
    manifest: &CorpusManifest,
    indices: &[usize],
    cfg: &FeatureConfig,
    cache_dir: Option<&Path>,
) -> Result<Vec<UtteranceFeatures>> {
    cfg.mfcc.validate()?;
    cfg.prosody.validate(manifest.sample_rate_hz())?;
    indices
        .par_iter()
        .map(|&i| {
            let path = manifest.resolve(&manifest.utterances()[i]);
            match cache_dir {
                Some(dir) => cached_utterance(&path, manifest.sample_rate_hz(), cfg, dir),
                None => extract_utterance(&path, manifest.sample_rate_hz(), cfg),
            }
        })
        .collect()
}

/// Fails if the partition leaks anything across the split.
pub fn check_split(manifest: &CorpusManifest, split: &SplitSpec, train: &[usize], test: &[usize]) -> Result<()> {
    let a: BTreeSet<usize> = train.iter().copied().collect();
    if test.iter().any(|i| a.contains(i)) {
        return Err(Error::Split("an utterance appears on both sides of the split".into()));
    }
    let utts = manifest.utterances();
    for &i in train {
        let u = &utts[i];
        if !split.train_speakers().contains(&u.speaker_id) || !split.train_sentences().contains(&u.sentence_id) {
            return Err(Error::Split(format!(
                "training utterance {i} is not a train speaker/sentence"
            )));
        }
    }
    for &i in test {
        let u = &utts[i];
        if split.train_speakers().contains(&u.speaker_id) || split.train_sentences().contains(&u.sentence_id) {
            return Err(Error::Split(format!(
                "test utterance {i} shares a speaker or sentence with training"
            )));
        }
    }
    Ok(())
}

fn condition_seed(seed: u64, condition: usize) -> u64 {
    let mut z = seed ^ (condition as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn train_condition(
    cfg: &ModelConfig,
    seed: u64,
    label: &str,
    feats: &[&UtteranceFeatures],
) -> Result<(ConditionModel, TrainingLog)> {
    let acoustic: Vec<FeatureSequence> = feats.iter().map(|f| f.acoustic.clone()).collect();
    let dim = acoustic[0].dim();
    let mut log = TrainingLog {
        condition: label.to_string(),
        utterances: feats.len(),
        acoustic: Vec::new(),
        acoustic_converged: false,
        prosodic: None,
    };
    let model = match cfg.kind {
        ModelKind::Chmm2 => {
            let init = init_chmm2(cfg.n_states, dim, cfg.n_mix, &acoustic, seed)?;
            let out = train_chmm2(&init, &acoustic, &cfg.train)?;
            log.acoustic = out.log_likelihoods;
            log.acoustic_converged = out.converged;
            ConditionModel::Chmm2(out.model)
        }
        ModelKind::Hmm | ModelKind::Sphmm => {
            let init = init_hmm(cfg.n_states, dim, cfg.n_mix, &acoustic, seed, cfg.max_jump)?;
            let out = train_baum_welch(&init, &acoustic, &cfg.train)?;
            log.acoustic = out.log_likelihoods;
            log.acoustic_converged = out.converged;
            if cfg.kind == ModelKind::Hmm {
                ConditionModel::Hmm(out.model)
            } else {
                let prosodic: Vec<FeatureSequence> = feats.iter().map(|f| f.prosodic.clone()).collect();
                let setup = ProsodicSetup {
                    grouping: cfg.grouping,
                    n_mix: cfg.prosodic_mix,
                    max_jump: cfg.max_jump,
                    seed: seed.wrapping_add(1),
                };
                let (m, p) = train_sphmm(&out.model, &prosodic, cfg.alpha, &setup, &cfg.train)?;
                log.prosodic = Some(p.log_likelihoods);
                ConditionModel::Sphmm(m)
            }
        }
    };
    Ok((model, log))
}

/// Trains one model per condition on that condition's utterances among
/// `indices`; `feats[n]` belongs to `indices[n]`.
pub fn train_bank(
    manifest: &CorpusManifest,
    indices: &[usize],
    feats: &[UtteranceFeatures],
    cfg: &ModelConfig,
) -> Result<(ModelBank, Vec<TrainingLog>)> {
    cfg.validate()?;
    if indices.len() != feats.len() {
        return Err(Error::DimensionMismatch {
            expected: indices.len(),
            found: feats.len(),
        });
    }
    let labels = manifest.condition_set().labels();
    let trained: Vec<Result<(ConditionModel, TrainingLog)>> = (0..labels.len())
        .into_par_iter()
        .map(|v| {
            let own: Vec<&UtteranceFeatures> = indices
                .iter()
                .zip(feats)
                .filter(|(&i, _)| manifest.label_index(i) == v)
                .map(|(_, f)| f)
                .collect();
            if own.is_empty() {
                return Err(Error::NoTrainingData(labels[v].clone()));
            }
            train_condition(cfg, condition_seed(cfg.seed, v), &labels[v], &own)
        })
        .collect();
    let (models, logs) = trained.into_iter().collect::<Result<(Vec<_>, Vec<_>)>>()?;
    Ok((ModelBank::new(manifest.condition_set().clone(), models)?, logs))
}

/// Decisions, confusion matrix and report of one bank on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub decisions: Vec<Decision>,
    pub confusion: ConfusionMatrix,
    pub report: PerformanceReport,
}

fn check_bank(bank: &ModelBank, manifest: &CorpusManifest) -> Result<()> {
    if bank.conditions().labels() != manifest.condition_set().labels() {
        return Err(Error::invalid(format!(
            "bank conditions {:?} do not match manifest conditions {:?}",
            bank.conditions().labels(),
            manifest.condition_set().labels()
        )));
    }
    Ok(())
}

pub fn evaluate_bank(
    bank: &ModelBank,
    manifest: &CorpusManifest,
    indices: &[usize],
    feats: &[UtteranceFeatures],
) -> Result<Evaluation> {
    check_bank(bank, manifest)?;
    let decisions: Vec<Decision> = indices
        .par_iter()
        .zip(feats)
        .map(|(&i, f)| {
            let scores = bank.scores(f)?;
            Ok(Decision {
                utterance: i,
                truth: manifest.label_index(i),
                predicted: argmax(&scores),
                gender: manifest.utterances()[i].gender,
                scores,
            })
        })
        .collect::<Result<_>>()?;
    let (confusion, report) =
        PerformanceReport::from_decisions(bank.kind(), bank.alpha(), bank.conditions().labels(), &decisions);
    Ok(Evaluation {
        decisions,
        confusion,
        report,
    })
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub bank: ModelBank,
    pub training: Vec<TrainingLog>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub evaluation: Evaluation,
}

/// Partitions the corpus, trains a bank on the training side and scores every
/// test utterance against it.
pub fn run_protocol(
    manifest: &CorpusManifest,
    split: &SplitSpec,
    features: &FeatureConfig,
    cfg: &ModelConfig,
    cache_dir: Option<&Path>,
) -> Result<ProtocolOutcome> {
    cfg.validate()?;
    let (train, test) = split.partition(manifest);
    check_split(manifest, split, &train, &test)?;
    if test.is_empty() {
        return Err(Error::Split("no test utterances".into()));
    }
    let train_feats = extract_corpus_features(manifest, &train, features, cache_dir)?;
    let (bank, training) = train_bank(manifest, &train, &train_feats, cfg)?;
    drop(train_feats);
    let test_feats = extract_corpus_features(manifest, &test, features, cache_dir)?;
    let evaluation = evaluate_bank(&bank, manifest, &test, &test_feats)?;
    Ok(ProtocolOutcome {
        bank,
        training,
        train_indices: train,
        test_indices: test,
        evaluation,
    })
}

/// `(acoustic, prosodic)` log-likelihoods of each test utterance under each
/// condition model of a suprasegmental bank.
pub fn score_components(bank: &ModelBank, feats: &[UtteranceFeatures]) -> Result<Vec<Vec<(f64, f64)>>> {
    if bank.kind() != ModelKind::Sphmm {
        return Err(Error::invalid("fusion-weight sweeps need a suprasegmental bank"));
    }
    feats
        .par_iter()
        .map(|f| {
            bank.models()
                .iter()
                .map(|m| {
                    let (a, p) = m.component_scores(f)?;
                    Ok((a, p.expect("suprasegmental models score both streams")))
                })
                .collect()
        })
        .collect()
}

/// Re-decides every test utterance at each fusion weight from precomputed
/// component scores.
pub fn sweep_from_components(
    labels: &[String],
    truths: &[usize],
    components: &[Vec<(f64, f64)>],
    alphas: &[f64],
) -> Result<Vec<SweepRow>> {
    alphas
        .iter()
        .map(|&alpha| {
            let decisions = truths
                .iter()
                .zip(components)
                .map(|(&truth, comp)| {
                    let scores = comp
                        .iter()
                        .map(|&(a, p)| fuse(a, p, alpha))
                        .collect::<Result<Vec<f64>>>()?;
                    Ok(Decision {
                        utterance: 0,
                        truth,
                        predicted: argmax(&scores),
                        gender: crate::corpus::Gender::Unknown,
                        scores: Vec::new(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let predicted = decisions.iter().map(|d| d.predicted).collect();
            Ok(SweepRow::new(alpha, confusion_of(labels, decisions.iter()), predicted))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub bank: ModelBank,
    pub test_indices: Vec<usize>,
    pub rows: Vec<SweepRow>,
}

/// Trains a suprasegmental bank once and evaluates it at every fusion weight.
pub fn alpha_sweep(
    manifest: &CorpusManifest,
    split: &SplitSpec,
    alphas: &[f64],
    features: &FeatureConfig,
    cfg: &ModelConfig,
    cache_dir: Option<&Path>,
) -> Result<SweepOutcome> {
    for &a in alphas {
        check_alpha(a)?;
    }
    let cfg = ModelConfig {
        kind: ModelKind::Sphmm,
        ..cfg.clone()
    };
    cfg.validate()?;
    let (train, test) = split.partition(manifest);
    check_split(manifest, split, &train, &test)?;
    let train_feats = extract_corpus_features(manifest, &train, features, cache_dir)?;
    let (bank, _) = train_bank(manifest, &train, &train_feats, &cfg)?;
    drop(train_feats);
    let test_feats = extract_corpus_features(manifest, &test, features, cache_dir)?;
    let components = score_components(&bank, &test_feats)?;
    let truths: Vec<usize> = test.iter().map(|&i| manifest.label_index(i)).collect();
    let rows = sweep_from_components(bank.conditions().labels(), &truths, &components, alphas)?;
    Ok(SweepOutcome {
        bank,
        test_indices: test,
        rows,
    })
}

/// Parses `start:end:step` into an inclusive grid, e.g. `0.0:1.0:0.1` gives
/// eleven values. Values are rounded to 12 decimals to absorb step drift.
pub fn parse_alpha_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::invalid(format!("alpha range {spec:?} is not start:end:step"));
    let [start, end, step] = parts.as_slice() else {
        return Err(bad());
    };
    let (start, end, step): (f64, f64, f64) = (
        start.trim().parse().map_err(|_| bad())?,
        end.trim().parse().map_err(|_| bad())?,
        step.trim().parse().map_err(|_| bad())?,
    );
    if !(step > 0.0) || end < start {
        return Err(bad());
    }
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    let values: Vec<f64> = (0..count)
        .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
        .collect();
    for &a in &values {
        check_alpha(a)?;
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_grid() {
        let g = parse_alpha_range("0.0:1.0:0.1").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[3], 0.3);
        assert_eq!(g[10], 1.0);
        assert_eq!(parse_alpha_range("0.5:0.5:0.1").unwrap(), vec![0.5]);
        assert!(parse_alpha_range("0:2:0.5").is_err());
        assert!(parse_alpha_range("0:1").is_err());
        assert!(parse_alpha_range("0:1:0").is_err());
    }

    #[test]
    fn seeds_differ_per_condition() {
        let s: BTreeSet<u64> = (0..6).map(|v| condition_seed(7, v)).collect();
        assert_eq!(s.len(), 6);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig {
            kind: ModelKind::Sphmm,
            n_states: 4,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(ModelConfig {
            alpha: 1.2,
            ..ModelConfig::default()
        }
        .validate()
        .is_err());
    }
}

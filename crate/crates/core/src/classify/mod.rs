//! Model banks, argmax identification, the train/test protocol and the
//! reports built from its decisions.

mod metrics;
mod protocol;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chmm2::Chmm2Model;
use crate::corpus::ConditionSet;
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::hmm::Hmm1Model;
use crate::sphmm::{check_alpha, SphmmModel};

pub use metrics::{
    average_performance, relative_improvement, round1, ConfusionMatrix, Decision, GenderRow, PerformanceReport,
    SweepRow,
};
pub use protocol::{
    alpha_sweep, check_split, evaluate_bank, extract_corpus_features, extract_utterance, parse_alpha_range,
    run_protocol, score_components, sweep_from_components, train_bank, Evaluation, FeatureConfig, ModelConfig,
    ProtocolOutcome, SweepOutcome, TrainingLog,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Hmm,
    Chmm2,
    Sphmm,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Hmm => "hmm",
            ModelKind::Chmm2 => "chmm2",
            ModelKind::Sphmm => "sphmm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hmm" => Ok(ModelKind::Hmm),
            "chmm2" => Ok(ModelKind::Chmm2),
            "sphmm" => Ok(ModelKind::Sphmm),
            _ => Err(Error::invalid(format!(
                "unknown model kind {s:?} (expected hmm, chmm2 or sphmm)"
            ))),
        }
    }
}

/// Acoustic and prosodic observations of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceFeatures {
    pub acoustic: FeatureSequence,
    pub prosodic: FeatureSequence,
}

/// The reference model of one condition.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionModel {
    Hmm(Hmm1Model),
    Chmm2(Chmm2Model),
    Sphmm(SphmmModel),
}

impl ConditionModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            ConditionModel::Hmm(_) => ModelKind::Hmm,
            ConditionModel::Chmm2(_) => ModelKind::Chmm2,
            ConditionModel::Sphmm(_) => ModelKind::Sphmm,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            ConditionModel::Hmm(m) => m.feature_dim(),
            ConditionModel::Chmm2(m) => m.feature_dim(),
            ConditionModel::Sphmm(m) => m.acoustic().feature_dim(),
        }
    }

    /// Acoustic log-likelihood, plus the prosodic one for suprasegmental
    /// models.
    pub fn component_scores(&self, feats: &UtteranceFeatures) -> Result<(f64, Option<f64>)> {
        match self {
            ConditionModel::Hmm(m) => Ok((m.log_likelihood(&feats.acoustic)?, None)),
            ConditionModel::Chmm2(m) => Ok((m.log_likelihood(&feats.acoustic)?, None)),
            ConditionModel::Sphmm(m) => {
                let (a, p) = m.component_log_likelihoods(&feats.acoustic, &feats.prosodic)?;
                Ok((a, Some(p)))
            }
        }
    }

    pub fn score(&self, feats: &UtteranceFeatures) -> Result<f64> {
        match self {
            ConditionModel::Sphmm(m) => m.fused_log_likelihood(&feats.acoustic, &feats.prosodic),
            _ => Ok(self.component_scores(feats)?.0),
        }
    }
}

/// One reference model per condition label, all of the same kind.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBank {
    conditions: ConditionSet,
    models: Vec<ConditionModel>,
}

impl ModelBank {
    pub fn new(conditions: ConditionSet, models: Vec<ConditionModel>) -> Result<Self> {
        if models.len() != conditions.len() {
            return Err(Error::DimensionMismatch {
                expected: conditions.len(),
                found: models.len(),
            });
        }
        let first = models.first().ok_or_else(|| Error::invalid("model bank is empty"))?;
        let (kind, dim) = (first.kind(), first.feature_dim());
        for m in &models {
            if m.kind() != kind {
                return Err(Error::invalid("model bank mixes model kinds"));
            }
            if m.feature_dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: m.feature_dim(),
                });
            }
        }
        Ok(ModelBank { conditions, models })
    }

    pub fn conditions(&self) -> &ConditionSet {
        &self.conditions
    }

    pub fn models(&self) -> &[ConditionModel] {
        &self.models
    }

    pub fn kind(&self) -> ModelKind {
        self.models[0].kind()
    }

    pub fn feature_dim(&self) -> usize {
        self.models[0].feature_dim()
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Fusion weight of a suprasegmental bank.
    pub fn alpha(&self) -> Option<f64> {
        match &self.models[0] {
            ConditionModel::Sphmm(m) => Some(m.alpha()),
            _ => None,
        }
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let models = self
            .models
            .iter()
            .map(|m| match m {
                ConditionModel::Sphmm(s) => s.with_alpha(alpha).map(ConditionModel::Sphmm),
                _ => Err(Error::invalid("only suprasegmental banks carry a fusion weight")),
            })
            .collect::<Result<_>>()?;
        Ok(ModelBank {
            conditions: self.conditions.clone(),
            models,
        })
    }

    /// Log score of every condition model, in label order.
    pub fn scores(&self, feats: &UtteranceFeatures) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.score(feats)).collect()
    }
}

/// Index of the largest score; ties go to the lowest index and NaN never wins.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] || scores[best].is_nan() && !s.is_nan() {
            best = i;
        }
    }
    best
}

/// Index of the condition whose model scores the utterance highest.
pub fn identify(bank: &ModelBank, feats: &UtteranceFeatures) -> Result<usize> {
    Ok(argmax(&bank.scores(feats)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax(&[-10.0, -20.0, -30.0, -40.0, -50.0, -60.0]), 0);
        assert_eq!(argmax(&[-20.0, -10.0, -30.0, -40.0, -50.0, -60.0]), 1);
        assert_eq!(argmax(&[-9.0, -8.0, -1.0, -5.0, -1.0]), 2);
        assert_eq!(argmax(&[f64::NAN, -3.0, -2.0]), 2);
        assert_eq!(argmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), 0);
    }

    #[test]
    fn kind_parsing() {
        for k in [ModelKind::Hmm, ModelKind::Chmm2, ModelKind::Sphmm] {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
        assert!("gmm".parse::<ModelKind>().is_err());
    }

    proptest! {
        #[test]
        fn argmax_shift_invariant(scores in prop::collection::vec(-1e3f64..1e3, 1..8), c in -1e3f64..1e3) {
            // Shifting can merge near-ties by rounding; only check separated maxima.
            let best = argmax(&scores);
            let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
            let clear = scores.iter().enumerate().all(|(i, &s)| i == best || scores[best] - s > 1e-9 || (s == scores[best] && i > best));
            if clear {
                prop_assert_eq!(argmax(&shifted), best);
            }
        }
    }
}

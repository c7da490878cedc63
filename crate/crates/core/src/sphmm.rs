//! Suprasegmental models: a coarse prosodic HMM trained on top of an acoustic
//! HMM, with scores fused as a convex combination of log-likelihoods.

use crate::em::{TrainOpts, TrainOutcome};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::hmm::{init_hmm, train_baum_welch, Hmm1Model};

pub const DEFAULT_ALPHA: f64 = 0.5;
/// Conventional states per suprasegmental state.
pub const DEFAULT_GROUPING: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SphmmModel {
    acoustic: Hmm1Model,
    prosodic: Hmm1Model,
    alpha: f64,
    grouping: usize,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::invalid(format!("fusion weight {alpha} is outside [0, 1]")))
    }
}

fn prosodic_states(acoustic_states: usize, grouping: usize) -> Result<usize> {
    if grouping == 0 || !acoustic_states.is_multiple_of(grouping) {
        return Err(Error::invalid(format!(
            "{acoustic_states} acoustic states cannot be grouped in blocks of {grouping}"
        )));
    }
    Ok(acoustic_states / grouping)
}

impl SphmmModel {
    pub fn new(acoustic: Hmm1Model, prosodic: Hmm1Model, alpha: f64, grouping: usize) -> Result<Self> {
        check_alpha(alpha)?;
        let want = prosodic_states(acoustic.n_states(), grouping)?;
        if prosodic.n_states() != want {
            return Err(Error::DimensionMismatch {
                expected: want,
                found: prosodic.n_states(),
            });
        }
        Ok(SphmmModel {
            acoustic,
            prosodic,
            alpha,
            grouping,
        })
    }

    pub fn acoustic(&self) -> &Hmm1Model {
        &self.acoustic
    }

    pub fn prosodic(&self) -> &Hmm1Model {
        &self.prosodic
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grouping(&self) -> usize {
        self.grouping
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(SphmmModel { alpha, ..self.clone() })
    }

    /// Both component log-likelihoods, acoustic first.
    pub fn component_log_likelihoods(
        &self,
        acoustic: &FeatureSequence,
        prosodic: &FeatureSequence,
    ) -> Result<(f64, f64)> {
        Ok((
            self.acoustic.log_likelihood(acoustic)?,
            self.prosodic.log_likelihood(prosodic)?,
        ))
    }

    pub fn fused_log_likelihood(&self, acoustic: &FeatureSequence, prosodic: &FeatureSequence) -> Result<f64> {
        let (la, lp) = self.component_log_likelihoods(acoustic, prosodic)?;
        fuse(la, lp, self.alpha)
    }
}

/// `(1 - alpha) * acoustic + alpha * prosodic`; the endpoints return the
/// corresponding input unchanged.
pub fn fuse(acoustic: f64, prosodic: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(if alpha == 0.0 {
        acoustic
    } else if alpha == 1.0 {
        prosodic
    } else {
        (1.0 - alpha) * acoustic + alpha * prosodic
    })
}

/// Mixture components and seed for the prosodic layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProsodicSetup {
    pub grouping: usize,
    pub n_mix: usize,
    pub max_jump: usize,
    pub seed: u64,
}

impl Default for ProsodicSetup {
    fn default() -> Self {
        ProsodicSetup {
            grouping: DEFAULT_GROUPING,
            n_mix: 1,
            max_jump: 2,
            seed: 0,
        }
    }
}

/// Trains the prosodic layer for an already trained acoustic model. The
/// acoustic model is cloned unchanged.
pub fn train_sphmm(
    acoustic: &Hmm1Model,
    prosodic_data: &[FeatureSequence],
    alpha: f64,
    setup: &ProsodicSetup,
    opts: &TrainOpts,
) -> Result<(SphmmModel, TrainOutcome<Hmm1Model>)> {
    check_alpha(alpha)?;
    let n = prosodic_states(acoustic.n_states(), setup.grouping)?;
    let dim = prosodic_data
        .first()
        .ok_or_else(|| Error::NoTrainingData("prosodic sequences".into()))?
        .dim();
    let init = init_hmm(n, dim, setup.n_mix, prosodic_data, setup.seed, setup.max_jump)?;
    let out = train_baum_welch(&init, prosodic_data, opts)?;
    let model = SphmmModel::new(acoustic.clone(), out.model.clone(), alpha, setup.grouping)?;
    Ok((model, out))
}

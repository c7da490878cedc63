//! Generic Baum-Welch driver shared by every model family.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOpts {
    /// Maximum number of re-estimation steps.
    pub max_iters: usize,
    /// Stop once the total log-likelihood improves by less than this.
    pub tol: f64,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub variance_floor_frac: f64,
}

impl Default for TrainOpts {
    fn default() -> Self {
        TrainOpts {
            max_iters: 40,
            tol: 1e-4,
            variance_floor_frac: 1e-4,
        }
    }
}

impl TrainOpts {
    /// Runs exactly `iters` re-estimation steps.
    pub fn fixed(iters: usize) -> Self {
        TrainOpts {
            max_iters: iters,
            tol: f64::NEG_INFINITY,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    pub model: M,
    /// Total training log-likelihood of each successive model; the last entry
    /// belongs to the returned model.
    pub log_likelihoods: Vec<f64>,
    pub converged: bool,
}

impl<M> TrainOutcome<M> {
    pub fn iterations(&self) -> usize {
        self.log_likelihoods.len().saturating_sub(1)
    }
}

pub(crate) trait Reestimate: Sized + Sync {
    type Obs: ?Sized + Sync;
    type Stats: Send;
    type Ctx: Sync;

    fn context(&self, data: &[&Self::Obs], opts: &TrainOpts) -> Result<Self::Ctx>;

    /// Posterior statistics and log-likelihood of one sequence.
    fn expectations(&self, obs: &Self::Obs) -> Result<(f64, Self::Stats)>;

    fn combine(acc: &mut Self::Stats, other: Self::Stats);

    fn maximize(&self, stats: Self::Stats, ctx: &Self::Ctx) -> Result<Self>;
}

/// Per-sequence expectations run in parallel; the reduction is a sequential
/// fold in data order, so results do not depend on the worker count.
pub(crate) fn run_em<M: Reestimate>(init: M, data: &[&M::Obs], opts: &TrainOpts) -> Result<TrainOutcome<M>> {
    if data.is_empty() {
        return Err(Error::invalid("no training sequences"));
    }
    let ctx = init.context(data, opts)?;
    let mut model = init;
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    loop {
        let per_seq: Vec<Result<(f64, M::Stats)>> = data.par_iter().map(|o| model.expectations(o)).collect();
        let mut total = 0.0;
        let mut acc: Option<M::Stats> = None;
        for r in per_seq {
            let (ll, s) = r?;
            total += ll;
            match acc.as_mut() {
                Some(a) => M::combine(a, s),
                None => acc = Some(s),
            }
        }
        if !total.is_finite() {
            return Err(Error::NonFinite("training log-likelihood"));
        }
        if let Some(&prev) = trace.last() {
            if total - prev < opts.tol {
                trace.push(total);
                converged = true;
                break;
            }
        }
        trace.push(total);
        if trace.len() > opts.max_iters {
            break;
        }
        model = model.maximize(acc.expect("data is non-empty"), &ctx)?;
    }
    Ok(TrainOutcome {
        model,
        log_likelihoods: trace,
        converged,
    })
}

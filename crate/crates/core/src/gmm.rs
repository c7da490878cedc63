//! Diagonal-covariance Gaussian mixture emissions and their EM statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::logmath::{ln0, log_sum_exp};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Variances are never allowed below this, even when the data has none.
pub const MIN_VARIANCE: f64 = 1e-6;

/// Per-dimension lower bound on component variances.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceFloor(pub Vec<f64>);

impl VarianceFloor {
    /// `max(fraction * global variance, MIN_VARIANCE)` per dimension.
    pub fn from_frames<'a>(frames: impl Iterator<Item = &'a [f64]>, dim: usize, fraction: f64) -> Self {
        let mut n = 0usize;
        let mut mean = vec![0.0; dim];
        let mut m2 = vec![0.0; dim];
        for f in frames {
            n += 1;
            for d in 0..dim {
                let delta = f[d] - mean[d];
                mean[d] += delta / n as f64;
                m2[d] += delta * (f[d] - mean[d]);
            }
        }
        let floor = m2
            .iter()
            .map(|&s| {
                let var = if n > 0 { s / n as f64 } else { 0.0 };
                (fraction * var).max(MIN_VARIANCE)
            })
            .collect();
        VarianceFloor(floor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmEmission {
    dim: usize,
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    // cached: ln w_m - 0.5 * sum_d ln(2 pi var_md), and 1 / var
    log_consts: Vec<f64>,
    inv_var: Vec<f64>,
}

impl GmmEmission {
    /// `means` and `variances` are `M x D`, row-major.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>, dim: usize) -> Result<Self> {
        let m = weights.len();
        if m == 0 || dim == 0 {
            return Err(Error::invalid("mixture needs at least one component and one dimension"));
        }
        if means.len() != m * dim || variances.len() != m * dim {
            return Err(Error::DimensionMismatch {
                expected: m * dim,
                found: means.len().min(variances.len()),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("mixture weights must be non-negative and sum to 1"));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("mixture means"));
        }
        if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::invalid("mixture variances must be positive and finite"));
        }
        let log_consts = (0..m)
            .map(|k| {
                let v = &variances[k * dim..(k + 1) * dim];
                ln0(weights[k]) - 0.5 * v.iter().map(|x| LN_2PI + x.ln()).sum::<f64>()
            })
            .collect();
        let inv_var = variances.iter().map(|v| 1.0 / v).collect();
        Ok(GmmEmission {
            dim,
            weights,
            means,
            variances,
            log_consts,
            inv_var,
        })
    }

    pub fn n_mix(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn mean(&self, m: usize) -> &[f64] {
        &self.means[m * self.dim..(m + 1) * self.dim]
    }

    pub fn variance(&self, m: usize) -> &[f64] {
        &self.variances[m * self.dim..(m + 1) * self.dim]
    }

    /// Fills `out[m] = ln w_m + ln N(x; mu_m, Sigma_m)` and returns their log-sum.
    pub fn component_log_densities(&self, x: &[f64], out: &mut [f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        for (m, o) in out.iter_mut().enumerate().take(self.n_mix()) {
            if self.log_consts[m] == f64::NEG_INFINITY {
                *o = f64::NEG_INFINITY;
                continue;
            }
            let mu = &self.means[m * self.dim..(m + 1) * self.dim];
            let iv = &self.inv_var[m * self.dim..(m + 1) * self.dim];
            let mut q = 0.0;
            for d in 0..self.dim {
                let z = x[d] - mu[d];
                q += z * z * iv[d];
            }
            *o = self.log_consts[m] - 0.5 * q;
        }
        log_sum_exp(&out[..self.n_mix()])
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut buf = vec![0.0; self.n_mix()];
        self.component_log_densities(x, &mut buf)
    }
}

/// Zeroth, first and second order statistics per component.
#[derive(Debug, Clone)]
pub(crate) struct GmmStats {
    dim: usize,
    occ: Vec<f64>,
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
}

impl GmmStats {
    pub fn new(n_mix: usize, dim: usize) -> Self {
        GmmStats {
            dim,
            occ: vec![0.0; n_mix],
            sum: vec![0.0; n_mix * dim],
            sum_sq: vec![0.0; n_mix * dim],
        }
    }

    pub fn total(&self) -> f64 {
        self.occ.iter().sum()
    }

    /// Adds frame `x` with state posterior `gamma`. `comp` holds the
    /// component log densities from [`GmmEmission::component_log_densities`]
    /// and `log_b` their log-sum.
    pub fn add(&mut self, x: &[f64], gamma: f64, comp: &[f64], log_b: f64) {
        if gamma == 0.0 {
            return;
        }
        for (m, &c) in comp.iter().enumerate() {
            let r = gamma * (c - log_b).exp();
            if r == 0.0 {
                continue;
            }
            self.occ[m] += r;
            let base = m * self.dim;
            for (d, &v) in x.iter().enumerate().take(self.dim) {
                self.sum[base + d] += r * v;
                self.sum_sq[base + d] += r * v * v;
            }
        }
    }

    pub fn merge(&mut self, other: &GmmStats) {
        add_into(&mut self.occ, &other.occ);
        add_into(&mut self.sum, &other.sum);
        add_into(&mut self.sum_sq, &other.sum_sq);
    }

    /// Maximum-likelihood update under the variance floor. Components that
    /// received no mass keep their parameters with weight zero. Returns
    /// `None` if the whole mixture received no mass.
    pub fn maximize(&self, old: &GmmEmission, floor: &VarianceFloor) -> Option<Result<GmmEmission>> {
        let total = self.total();
        if !(total > 0.0) {
            return None;
        }
        let dim = self.dim;
        let mut means = old.means.clone();
        let mut vars = old.variances.clone();
        let weights: Vec<f64> = self.occ.iter().map(|o| o / total).collect();
        for (m, &occ) in self.occ.iter().enumerate() {
            if occ == 0.0 {
                continue;
            }
            for d in 0..dim {
                let i = m * dim + d;
                let mu = self.sum[i] / occ;
                means[i] = mu;
                vars[i] = (self.sum_sq[i] / occ - mu * mu).max(floor.0[d]);
            }
        }
        Some(GmmEmission::new(weights, means, vars, dim))
    }
}

pub(crate) fn add_into(acc: &mut [f64], other: &[f64]) {
    for (a, b) in acc.iter_mut().zip(other) {
        *a += b;
    }
}

/// Seeded k-means (k-means++ seeding, Lloyd refinement) turned into a
/// mixture: weights from cluster sizes, diagonal variances from cluster
/// spread. With fewer distinct points than `n_mix`, centers are duplicated
/// and the duplicates get progressively widened variances.
pub(crate) fn fit_kmeans_mixture(
    points: &[&[f64]],
    n_mix: usize,
    seed: u64,
    floor: &VarianceFloor,
) -> Result<GmmEmission> {
    let dim = floor.0.len();
    if points.is_empty() {
        return Err(Error::invalid("no frames to initialize a mixture from"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut distinct: Vec<&[f64]> = Vec::new();
    {
        let mut seen = std::collections::HashSet::new();
        for p in points {
            let key: Vec<u64> = p.iter().map(|v| v.to_bits()).collect();
            if seen.insert(key) {
                distinct.push(p);
            }
        }
    }

    let n_real = n_mix.min(distinct.len());
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(n_mix);
    if n_real == distinct.len() {
        centers.extend(distinct.iter().map(|p| p.to_vec()));
    } else {
        // k-means++ over the distinct points
        centers.push(distinct[rng.random_range(0..distinct.len())].to_vec());
        let mut d2: Vec<f64> = distinct.iter().map(|p| sq_dist(p, &centers[0])).collect();
        while centers.len() < n_real {
            let total: f64 = d2.iter().sum();
            let pick = if total > 0.0 {
                let mut u = rng.random_range(0.0..total);
                let mut idx = d2.len() - 1;
                for (i, &w) in d2.iter().enumerate() {
                    if u < w {
                        idx = i;
                        break;
                    }
                    u -= w;
                }
                idx
            } else {
                rng.random_range(0..distinct.len())
            };
            centers.push(distinct[pick].to_vec());
            let c = centers.last().expect("just pushed");
            for (d, p) in d2.iter_mut().zip(&distinct) {
                *d = d.min(sq_dist(p, c));
            }
        }
    }

    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..30 {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let best = nearest(p, &centers);
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; n_real];
        let mut counts = vec![0usize; n_real];
        for (&a, p) in assign.iter().zip(points) {
            counts[a] += 1;
            add_into(&mut sums[a], p);
        }
        for k in 0..n_real {
            if counts[k] > 0 {
                centers[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
        if !changed {
            break;
        }
    }

    let pooled_var = spread(points.iter().copied(), dim, floor);
    let mut counts = vec![0usize; n_real];
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); n_real];
    for (&a, p) in assign.iter().zip(points) {
        counts[a] += 1;
        members[a].push(p);
    }
    let mut vars: Vec<Vec<f64>> = members
        .iter()
        .map(|mem| {
            if mem.len() > 1 {
                spread(mem.iter().copied(), dim, floor)
            } else {
                pooled_var.clone()
            }
        })
        .collect();
    let mut weights: Vec<f64> = counts.iter().map(|&c| c.max(1) as f64).collect();

    // duplicate centers to fill the requested mixture size
    let mut k = 0;
    while centers.len() < n_mix {
        let src = k % n_real;
        let widen = 1.0 + 0.1 * (1 + k / n_real) as f64;
        centers.push(centers[src].clone());
        vars.push(vars[src].iter().map(|v| v * widen).collect());
        weights.push(weights[src]);
        k += 1;
    }
    let total: f64 = weights.iter().sum();
    let weights = weights.iter().map(|w| w / total).collect();
    GmmEmission::new(weights, centers.concat(), vars.concat(), dim)
}

fn spread<'a>(points: impl Iterator<Item = &'a [f64]> + Clone, dim: usize, floor: &VarianceFloor) -> Vec<f64> {
    let mut n = 0.0;
    let mut mean = vec![0.0; dim];
    for p in points.clone() {
        n += 1.0;
        add_into(&mut mean, p);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for p in points {
        for d in 0..dim {
            var[d] += (p[d] - mean[d]).powi(2);
        }
    }
    var.iter().zip(&floor.0).map(|(v, f)| (v / n).max(*f)).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centers: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

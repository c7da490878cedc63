//! First-order HMMs: Gaussian-mixture (continuous) and discrete-symbol
//! variants over a shared Markov chain, with log-domain forward-backward and
//! Baum-Welch re-estimation.

use serde::{Deserialize, Serialize};

use crate::em::{run_em, Reestimate, TrainOpts, TrainOutcome};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::gmm::{fit_kmeans_mixture, GmmEmission, GmmStats, VarianceFloor};
use crate::logmath::{ln0, log_add, log_sum_exp};

const STOCHASTIC_TOL: f64 = 1e-9;

/// Which transitions a chain may use. Zero entries outside the support stay
/// zero under re-estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    /// `a_ij > 0` only for `i <= j <= i + max_jump`.
    LeftToRight {
        max_jump: usize,
    },
    /// `a_ij > 0` only for `j` in the ring neighborhood of `i`.
    Circular,
    Ergodic,
}

impl Topology {
    pub fn allows(&self, n: usize, i: usize, j: usize) -> bool {
        match *self {
            Topology::LeftToRight { max_jump } => j >= i && j <= i + max_jump,
            Topology::Circular => ring_neighborhood(i, n).contains(&j),
            Topology::Ergodic => true,
        }
    }
}

/// `{x - 1, x, x + 1} mod n`, sorted and de-duplicated.
pub fn ring_neighborhood(x: usize, n: usize) -> Vec<usize> {
    let mut v = vec![(x + n - 1) % n, x % n, (x + 1) % n];
    v.sort_unstable();
    v.dedup();
    v
}

/// Initial distribution and transition matrix of a first-order chain.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    n: usize,
    initial: Vec<f64>,
    trans: Vec<f64>,
    topology: Topology,
}

impl MarkovChain {
    pub fn new(initial: Vec<f64>, trans: Vec<f64>, topology: Topology) -> Result<Self> {
        let n = initial.len();
        if n == 0 {
            return Err(Error::invalid("chain needs at least one state"));
        }
        if trans.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: trans.len(),
            });
        }
        check_distribution(&initial, "initial distribution")?;
        for i in 0..n {
            let row = &trans[i * n..(i + 1) * n];
            check_distribution(row, "transition row")?;
            if let Some(j) = (0..n).find(|&j| row[j] != 0.0 && !topology.allows(n, i, j)) {
                return Err(Error::invalid(format!(
                    "transition {i}->{j} lies outside the {topology:?} support"
                )));
            }
        }
        Ok(MarkovChain {
            n,
            initial,
            trans,
            topology,
        })
    }

    /// Uniform rows over the topology's support. Left-to-right chains start
    /// in the first state; others start uniformly.
    pub fn uniform(n: usize, topology: Topology) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("chain needs at least one state"));
        }
        let initial = match topology {
            Topology::LeftToRight { .. } => (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect(),
            _ => vec![1.0 / n as f64; n],
        };
        let mut trans = vec![0.0; n * n];
        for i in 0..n {
            let support: Vec<usize> = (0..n).filter(|&j| topology.allows(n, i, j)).collect();
            for &j in &support {
                trans[i * n + j] = 1.0 / support.len() as f64;
            }
        }
        Self::new(initial, trans, topology)
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn trans(&self) -> &[f64] {
        &self.trans
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn a(&self, i: usize, j: usize) -> f64 {
        self.trans[i * self.n + j]
    }

    fn logs(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.initial.iter().map(|&p| ln0(p)).collect(),
            self.trans.iter().map(|&p| ln0(p)).collect(),
        )
    }

    fn reestimate(&self, stats: &ChainStats) -> Result<Self> {
        let n = self.n;
        let total: f64 = stats.initial.iter().sum();
        let initial = if total > 0.0 {
            stats.initial.iter().map(|v| v / total).collect()
        } else {
            self.initial.clone()
        };
        let mut trans = self.trans.clone();
        for i in 0..n {
            let row = &stats.trans[i * n..(i + 1) * n];
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                for j in 0..n {
                    trans[i * n + j] = row[j] / s;
                }
            }
        }
        Self::new(initial, trans, self.topology)
    }
}

pub(crate) fn check_distribution(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid(format!("{what} has negative or non-finite entries")));
    }
    let s: f64 = p.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(Error::invalid(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

/// Log forward variables, `T x N` row-major, and `ln P(O)`.
pub(crate) fn forward(log_pi: &[f64], log_a: &[f64], log_b: &[f64], n: usize) -> (Vec<f64>, f64) {
    let t_len = log_b.len() / n;
    let mut alpha = vec![f64::NEG_INFINITY; t_len * n];
    for j in 0..n {
        alpha[j] = log_pi[j] + log_b[j];
    }
    for t in 1..t_len {
        let (prev, cur) = alpha.split_at_mut(t * n);
        let prev = &prev[(t - 1) * n..];
        for j in 0..n {
            let mut acc = f64::NEG_INFINITY;
            for i in 0..n {
                let la = log_a[i * n + j];
                if la != f64::NEG_INFINITY && prev[i] != f64::NEG_INFINITY {
                    acc = log_add(acc, prev[i] + la);
                }
            }
            cur[j] = acc + log_b[t * n + j];
        }
    }
    let log_p = log_sum_exp(&alpha[(t_len - 1) * n..]);
    (alpha, log_p)
}

pub(crate) fn backward(log_a: &[f64], log_b: &[f64], n: usize) -> Vec<f64> {
    let t_len = log_b.len() / n;
    let mut beta = vec![f64::NEG_INFINITY; t_len * n];
    beta[(t_len - 1) * n..].fill(0.0);
    for t in (0..t_len - 1).rev() {
        for i in 0..n {
            let mut acc = f64::NEG_INFINITY;
            for j in 0..n {
                let la = log_a[i * n + j];
                if la != f64::NEG_INFINITY {
                    acc = log_add(acc, la + log_b[(t + 1) * n + j] + beta[(t + 1) * n + j]);
                }
            }
            beta[t * n + i] = acc;
        }
    }
    beta
}

#[derive(Debug, Clone)]
pub(crate) struct ChainStats {
    initial: Vec<f64>,
    trans: Vec<f64>,
}

impl ChainStats {
    fn merge(&mut self, o: &ChainStats) {
        crate::gmm::add_into(&mut self.initial, &o.initial);
        crate::gmm::add_into(&mut self.trans, &o.trans);
    }
}

/// Shared E-step over a log-emission table. Calls `emit(t, j, gamma)` for
/// every frame/state with non-zero posterior.
fn chain_expectations(
    log_pi: &[f64],
    log_a: &[f64],
    log_b: &[f64],
    n: usize,
    mut emit: impl FnMut(usize, usize, f64),
) -> Result<(f64, ChainStats)> {
    let t_len = log_b.len() / n;
    let (alpha, log_p) = forward(log_pi, log_a, log_b, n);
    if !log_p.is_finite() {
        return Err(Error::NonFinite("sequence log-likelihood"));
    }
    let beta = backward(log_a, log_b, n);
    let mut stats = ChainStats {
        initial: vec![0.0; n],
        trans: vec![0.0; n * n],
    };
    for t in 0..t_len {
        for j in 0..n {
            let g = (alpha[t * n + j] + beta[t * n + j] - log_p).exp();
            if t == 0 {
                stats.initial[j] = g;
            }
            if g > 0.0 {
                emit(t, j, g);
            }
        }
        if t + 1 < t_len {
            for i in 0..n {
                if alpha[t * n + i] == f64::NEG_INFINITY {
                    continue;
                }
                for j in 0..n {
                    let la = log_a[i * n + j];
                    if la == f64::NEG_INFINITY {
                        continue;
                    }
                    let x = alpha[t * n + i] + la + log_b[(t + 1) * n + j] + beta[(t + 1) * n + j] - log_p;
                    stats.trans[i * n + j] += x.exp();
                }
            }
        }
    }
    Ok((log_p, stats))
}

/// First-order HMM with one diagonal GMM per state.
#[derive(Debug, Clone, PartialEq)]
pub struct Hmm1Model {
    chain: MarkovChain,
    emissions: Vec<GmmEmission>,
    dim: usize,
}

impl Hmm1Model {
    pub fn new(chain: MarkovChain, emissions: Vec<GmmEmission>) -> Result<Self> {
        if emissions.len() != chain.n_states() {
            return Err(Error::DimensionMismatch {
                expected: chain.n_states(),
                found: emissions.len(),
            });
        }
        let dim = emissions[0].dim();
        if let Some(e) = emissions.iter().find(|e| e.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: e.dim(),
            });
        }
        Ok(Hmm1Model { chain, emissions, dim })
    }

    pub fn n_states(&self) -> usize {
        self.chain.n_states()
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }

    pub fn emissions(&self) -> &[GmmEmission] {
        &self.emissions
    }

    pub(crate) fn check_obs(&self, obs: &FeatureSequence) -> Result<()> {
        if obs.is_empty() {
            return Err(Error::EmptySequence);
        }
        if obs.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: obs.dim(),
            });
        }
        Ok(())
    }

    /// `T x N` table of `ln b_j(o_t)`.
    pub fn log_emission_table(&self, obs: &FeatureSequence) -> Result<Vec<f64>> {
        self.check_obs(obs)?;
        Ok(gmm_table(&self.emissions, obs))
    }

    /// `ln P(O | model)` by the log-domain forward recursion.
    pub fn log_likelihood(&self, obs: &FeatureSequence) -> Result<f64> {
        let log_b = self.log_emission_table(obs)?;
        let (log_pi, log_a) = self.chain.logs();
        Ok(forward(&log_pi, &log_a, &log_b, self.n_states()).1)
    }
}

pub(crate) fn gmm_table(emissions: &[GmmEmission], obs: &FeatureSequence) -> Vec<f64> {
    let n = emissions.len();
    let mut buf = vec![0.0; emissions.iter().map(GmmEmission::n_mix).max().unwrap_or(0)];
    let mut out = vec![0.0; obs.len() * n];
    for (t, x) in obs.frames().enumerate() {
        for (j, e) in emissions.iter().enumerate() {
            out[t * n + j] = e.component_log_densities(x, &mut buf);
        }
    }
    out
}

/// Accumulates GMM statistics for frame `t` of `obs` into state `j`.
pub(crate) fn add_gmm_frame(
    stats: &mut [GmmStats],
    emissions: &[GmmEmission],
    obs: &FeatureSequence,
    t: usize,
    j: usize,
    gamma: f64,
    buf: &mut [f64],
) {
    let x = obs.frame(t);
    let e = &emissions[j];
    let log_b = e.component_log_densities(x, buf);
    stats[j].add(x, gamma, &buf[..e.n_mix()], log_b);
}

pub(crate) fn maximize_gmms(
    stats: &[GmmStats],
    old: &[GmmEmission],
    floor: &VarianceFloor,
) -> Result<Vec<GmmEmission>> {
    stats
        .iter()
        .zip(old)
        .enumerate()
        .map(|(j, (s, e))| s.maximize(e, floor).unwrap_or(Err(Error::DegenerateState { state: j })))
        .collect()
}

pub(crate) struct Hmm1Stats {
    chain: ChainStats,
    gmm: Vec<GmmStats>,
}

impl Reestimate for Hmm1Model {
    type Obs = FeatureSequence;
    type Stats = Hmm1Stats;
    type Ctx = VarianceFloor;

    fn context(&self, data: &[&FeatureSequence], opts: &TrainOpts) -> Result<VarianceFloor> {
        for o in data {
            self.check_obs(o)?;
        }
        Ok(VarianceFloor::from_frames(
            data.iter().flat_map(|s| s.frames()),
            self.dim,
            opts.variance_floor_frac,
        ))
    }

    fn expectations(&self, obs: &FeatureSequence) -> Result<(f64, Hmm1Stats)> {
        let n = self.n_states();
        let log_b = gmm_table(&self.emissions, obs);
        let (log_pi, log_a) = self.chain.logs();
        let mut gmm: Vec<GmmStats> = self
            .emissions
            .iter()
            .map(|e| GmmStats::new(e.n_mix(), self.dim))
            .collect();
        let mut buf = vec![0.0; self.emissions.iter().map(GmmEmission::n_mix).max().unwrap_or(0)];
        let (ll, chain) = chain_expectations(&log_pi, &log_a, &log_b, n, |t, j, g| {
            add_gmm_frame(&mut gmm, &self.emissions, obs, t, j, g, &mut buf)
        })?;
        Ok((ll, Hmm1Stats { chain, gmm }))
    }

    fn combine(acc: &mut Hmm1Stats, other: Hmm1Stats) {
        acc.chain.merge(&other.chain);
        for (a, b) in acc.gmm.iter_mut().zip(&other.gmm) {
            a.merge(b);
        }
    }

    fn maximize(&self, stats: Hmm1Stats, floor: &VarianceFloor) -> Result<Self> {
        let chain = self.chain.reestimate(&stats.chain)?;
        let emissions = maximize_gmms(&stats.gmm, &self.emissions, floor)?;
        Hmm1Model::new(chain, emissions)
    }
}

/// Left-to-right initialization: start in state 0, uniform banded
/// transitions, and per-state mixtures from seeded k-means over equal-length
/// segments of every training sequence.
pub fn init_hmm(
    n_states: usize,
    dim: usize,
    n_mix: usize,
    data: &[FeatureSequence],
    seed: u64,
    max_jump: usize,
) -> Result<Hmm1Model> {
    let chain = MarkovChain::uniform(n_states, Topology::LeftToRight { max_jump })?;
    let emissions = init_state_emissions(
        n_states,
        dim,
        n_mix,
        data,
        seed,
        TrainOpts::default().variance_floor_frac,
    )?;
    Hmm1Model::new(chain, emissions)
}

/// Segments each sequence into `n_states` equal spans (frame `t` of a
/// length-`T` sequence goes to state `floor(t * N / T)`) and fits a k-means
/// mixture per state. States that receive no frames fall back to all frames.
pub fn init_state_emissions(
    n_states: usize,
    dim: usize,
    n_mix: usize,
    data: &[FeatureSequence],
    seed: u64,
    floor_frac: f64,
) -> Result<Vec<GmmEmission>> {
    if data.is_empty() {
        return Err(Error::invalid("no training sequences"));
    }
    if n_states == 0 || n_mix == 0 {
        return Err(Error::invalid("need at least one state and one mixture component"));
    }
    for s in data {
        if s.is_empty() {
            return Err(Error::EmptySequence);
        }
        if s.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: s.dim(),
            });
        }
    }
    let floor = VarianceFloor::from_frames(data.iter().flat_map(|s| s.frames()), dim, floor_frac);
    let mut pools: Vec<Vec<&[f64]>> = vec![Vec::new(); n_states];
    for s in data {
        let t_len = s.len();
        for (t, x) in s.frames().enumerate() {
            pools[t * n_states / t_len].push(x);
        }
    }
    let all: Vec<&[f64]> = data.iter().flat_map(|s| s.frames()).collect();
    pools
        .iter()
        .enumerate()
        .map(|(j, pool)| {
            let pts = if pool.is_empty() { &all } else { pool };
            fit_kmeans_mixture(
                pts,
                n_mix,
                seed.wrapping_add(j as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                &floor,
            )
        })
        .collect()
}

/// Baum-Welch re-estimation of a continuous HMM.
pub fn train_baum_welch(
    init: &Hmm1Model,
    data: &[FeatureSequence],
    opts: &TrainOpts,
) -> Result<TrainOutcome<Hmm1Model>> {
    let refs: Vec<&FeatureSequence> = data.iter().collect();
    run_em(init.clone(), &refs, opts)
}

/// First-order HMM over symbols `0..n_symbols`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteHmm1Model {
    chain: MarkovChain,
    emissions: Vec<f64>,
    n_symbols: usize,
}

impl DiscreteHmm1Model {
    /// `emissions` is `N x M` row-major; each row a distribution.
    pub fn new(chain: MarkovChain, emissions: Vec<f64>, n_symbols: usize) -> Result<Self> {
        let n = chain.n_states();
        if n_symbols == 0 || emissions.len() != n * n_symbols {
            return Err(Error::DimensionMismatch {
                expected: n * n_symbols,
                found: emissions.len(),
            });
        }
        for row in emissions.chunks_exact(n_symbols) {
            check_distribution(row, "emission row")?;
        }
        Ok(DiscreteHmm1Model {
            chain,
            emissions,
            n_symbols,
        })
    }

    pub fn n_states(&self) -> usize {
        self.chain.n_states()
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn chain(&self) -> &MarkovChain {
        &self.chain
    }

    pub fn emissions(&self) -> &[f64] {
        &self.emissions
    }

    pub fn b(&self, state: usize, symbol: usize) -> f64 {
        self.emissions[state * self.n_symbols + symbol]
    }

    fn table(&self, obs: &[usize]) -> Result<Vec<f64>> {
        if obs.is_empty() {
            return Err(Error::EmptySequence);
        }
        if let Some(&s) = obs.iter().find(|&&s| s >= self.n_symbols) {
            return Err(Error::invalid(format!(
                "symbol {s} out of range (alphabet {})",
                self.n_symbols
            )));
        }
        let n = self.n_states();
        Ok(obs
            .iter()
            .flat_map(|&o| (0..n).map(move |j| (j, o)))
            .map(|(j, o)| ln0(self.b(j, o)))
            .collect())
    }

    pub fn log_likelihood(&self, obs: &[usize]) -> Result<f64> {
        let log_b = self.table(obs)?;
        let (log_pi, log_a) = self.chain.logs();
        Ok(forward(&log_pi, &log_a, &log_b, self.n_states()).1)
    }
}

pub(crate) struct DiscreteStats {
    chain: ChainStats,
    emit: Vec<f64>,
}

impl Reestimate for DiscreteHmm1Model {
    type Obs = [usize];
    type Stats = DiscreteStats;
    type Ctx = ();

    fn context(&self, data: &[&[usize]], _: &TrainOpts) -> Result<()> {
        for o in data {
            self.table(o)?;
        }
        Ok(())
    }

    fn expectations(&self, obs: &[usize]) -> Result<(f64, DiscreteStats)> {
        let n = self.n_states();
        let log_b = self.table(obs)?;
        let (log_pi, log_a) = self.chain.logs();
        let mut emit = vec![0.0; n * self.n_symbols];
        let m = self.n_symbols;
        let (ll, chain) = chain_expectations(&log_pi, &log_a, &log_b, n, |t, j, g| emit[j * m + obs[t]] += g)?;
        Ok((ll, DiscreteStats { chain, emit }))
    }

    fn combine(acc: &mut DiscreteStats, other: DiscreteStats) {
        acc.chain.merge(&other.chain);
        crate::gmm::add_into(&mut acc.emit, &other.emit);
    }

    fn maximize(&self, stats: DiscreteStats, _: &()) -> Result<Self> {
        let chain = self.chain.reestimate(&stats.chain)?;
        let emissions = normalize_rows(&stats.emit, &self.emissions, self.n_symbols);
        DiscreteHmm1Model::new(chain, emissions, self.n_symbols)
    }
}

/// Row-normalizes `counts`, keeping the `old` row where a row has no mass.
pub(crate) fn normalize_rows(counts: &[f64], old: &[f64], width: usize) -> Vec<f64> {
    counts
        .chunks_exact(width)
        .zip(old.chunks_exact(width))
        .flat_map(|(c, o)| {
            let s: f64 = c.iter().sum();
            if s > 0.0 {
                c.iter().map(|v| v / s).collect::<Vec<_>>()
            } else {
                o.to_vec()
            }
        })
        .collect()
}

pub fn train_discrete_hmm(
    init: &DiscreteHmm1Model,
    data: &[Vec<usize>],
    opts: &TrainOpts,
) -> Result<TrainOutcome<DiscreteHmm1Model>> {
    let refs: Vec<&[usize]> = data.iter().map(Vec::as_slice).collect();
    run_em(init.clone(), &refs, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform_discrete(n: usize, m: usize) -> DiscreteHmm1Model {
        DiscreteHmm1Model::new(
            MarkovChain::uniform(n, Topology::Ergodic).unwrap(),
            vec![1.0 / m as f64; n * m],
            m,
        )
        .unwrap()
    }

    fn random_dist(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    }

    fn random_discrete(rng: &mut ChaCha8Rng, n: usize, m: usize) -> DiscreteHmm1Model {
        let initial = random_dist(rng, n);
        let trans = (0..n).flat_map(|_| random_dist(rng, n)).collect();
        let emis = (0..n).flat_map(|_| random_dist(rng, m)).collect();
        DiscreteHmm1Model::new(MarkovChain::new(initial, trans, Topology::Ergodic).unwrap(), emis, m).unwrap()
    }

    fn brute_force(model: &DiscreteHmm1Model, obs: &[usize]) -> f64 {
        let n = model.n_states();
        let t_len = obs.len();
        let mut total = 0.0;
        for code in 0..n.pow(t_len as u32) {
            let path: Vec<usize> = (0..t_len).map(|t| code / n.pow(t as u32) % n).collect();
            let mut p = model.chain().initial()[path[0]] * model.b(path[0], obs[0]);
            for t in 1..t_len {
                p *= model.chain().a(path[t - 1], path[t]) * model.b(path[t], obs[t]);
            }
            total += p;
        }
        total
    }

    fn seq(frames: Vec<Vec<f64>>) -> FeatureSequence {
        FeatureSequence::new(frames, 0.01, FeatureKind::Acoustic).unwrap()
    }

    #[test]
    fn certain_single_state_has_zero_log_likelihood() {
        let chain = MarkovChain::new(vec![1.0], vec![1.0], Topology::Ergodic).unwrap();
        let m = DiscreteHmm1Model::new(chain, vec![1.0, 0.0], 2).unwrap();
        assert_eq!(m.log_likelihood(&[0]).unwrap(), 0.0);
        assert_eq!(m.log_likelihood(&[1]).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn uniform_two_state_model() {
        let m = uniform_discrete(2, 2);
        let mut total = 0.0;
        for code in 0..4 {
            let obs = [code & 1, code >> 1];
            let p = m.log_likelihood(&obs).unwrap().exp();
            assert!((p - 0.25).abs() < 1e-15);
            total += p;
        }
        assert!((total - 1.0).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_path_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_discrete(&mut rng, 3, 4);
        let obs: Vec<usize> = (0..5).map(|_| rng.random_range(0..4)).collect();
        let want = brute_force(&m, &obs);
        let got = m.log_likelihood(&obs).unwrap().exp();
        assert!(((got - want) / want).abs() < 1e-10);
    }

    #[test]
    fn errors_on_empty_and_bad_dims() {
        let m = uniform_discrete(2, 2);
        assert!(matches!(m.log_likelihood(&[]), Err(Error::EmptySequence)));
        assert!(m.log_likelihood(&[2]).is_err());
        let data = vec![seq(vec![vec![0.0, 1.0]; 5])];
        let h = init_hmm(2, 2, 1, &data, 0, 2).unwrap();
        assert!(matches!(
            h.log_likelihood(&seq(vec![vec![0.0]; 3])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn left_to_right_support_enforced() {
        let t = Topology::LeftToRight { max_jump: 2 };
        assert!(t.allows(9, 3, 5));
        assert!(!t.allows(9, 3, 6));
        assert!(!t.allows(9, 3, 2));
        assert!(MarkovChain::new(vec![1.0, 0.0], vec![0.5, 0.5, 0.5, 0.5], t).is_err());
        let c = MarkovChain::uniform(4, t).unwrap();
        assert_eq!(c.trans()[0..4], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]);
        assert_eq!(c.trans()[12..16], [0.0, 0.0, 0.0, 1.0]);
        assert_eq!(c.initial(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ring_neighborhoods() {
        assert_eq!(ring_neighborhood(0, 9), vec![0, 1, 8]);
        assert_eq!(ring_neighborhood(4, 9), vec![3, 4, 5]);
        assert_eq!(ring_neighborhood(1, 2), vec![0, 1]);
        assert_eq!(ring_neighborhood(0, 1), vec![0]);
    }

    #[test]
    fn full_size_initialization() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let data: Vec<FeatureSequence> = (0..4)
            .map(|_| {
                seq((0..60)
                    .map(|_| (0..24).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .collect())
            })
            .collect();
        let m = init_hmm(9, 24, 10, &data, 42, 2).unwrap();
        assert_eq!(m.n_states(), 9);
        assert!(m.emissions().iter().all(|e| e.n_mix() == 10 && e.dim() == 24));
        assert_eq!(m, init_hmm(9, 24, 10, &data, 42, 2).unwrap());
    }

    #[test]
    fn single_state_single_mixture_fits_the_mean() {
        let data = vec![seq(vec![vec![1.0], vec![2.0], vec![6.0]]), seq(vec![vec![3.0]])];
        let m = init_hmm(1, 1, 1, &data, 0, 2).unwrap();
        assert!((m.emissions()[0].mean(0)[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn one_iteration_does_not_decrease_likelihood() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<FeatureSequence> = (0..6)
            .map(|_| {
                seq((0..30)
                    .map(|t| {
                        vec![
                            t as f64 / 10.0 + rng.random_range(-0.5..0.5),
                            rng.random_range(-1.0..1.0),
                        ]
                    })
                    .collect())
            })
            .collect();
        let init = init_hmm(3, 2, 2, &data, 3, 2).unwrap();
        let out = train_baum_welch(&init, &data, &TrainOpts::fixed(1)).unwrap();
        assert_eq!(out.log_likelihoods.len(), 2);
        assert!(out.log_likelihoods[1] >= out.log_likelihoods[0] - 1e-9);
    }

    #[test]
    fn repeated_frame_collapses_to_floor() {
        let data = vec![seq(vec![vec![0.7, -1.2]; 20]); 3];
        let init = init_hmm(2, 2, 2, &data, 0, 1).unwrap();
        let out = train_baum_welch(&init, &data, &TrainOpts::fixed(5)).unwrap();
        for e in out.model.emissions() {
            for m in 0..e.n_mix() {
                if e.weights()[m] > 0.0 {
                    assert!((e.mean(m)[0] - 0.7).abs() < 1e-9);
                    assert!((e.mean(m)[1] + 1.2).abs() < 1e-9);
                    assert!(e.variance(m).iter().all(|&v| v == crate::gmm::MIN_VARIANCE));
                }
            }
        }
    }

    #[test]
    fn discrete_training_is_monotone_and_stochastic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let truth = random_discrete(&mut rng, 3, 3);
        let data: Vec<Vec<usize>> = (0..20)
            .map(|_| (0..15).map(|_| rng.random_range(0..3)).collect())
            .collect();
        let init = random_discrete(&mut rng, 3, 3);
        let out = train_discrete_hmm(&init, &data, &TrainOpts::fixed(15)).unwrap();
        for w in out.log_likelihoods.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        let _ = truth;
        for row in out.model.emissions().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

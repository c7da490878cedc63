//! Second-order circular HMMs. The forward variable is indexed by the pair
//! (previous state, current state); the lattice slice at `t = 0` holds the
//! first two states with only the first observation absorbed.

use crate::em::{run_em, Reestimate, TrainOpts, TrainOutcome};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::gmm::{add_into, GmmEmission, GmmStats, VarianceFloor};
use crate::hmm::{
    add_gmm_frame, check_distribution, gmm_table, init_state_emissions, maximize_gmms, normalize_rows,
    ring_neighborhood,
};
use crate::logmath::{ln0, log_add, log_sum_exp};

/// Joint distribution of the first two states and the second-order
/// transition tensor, both restricted to the circular band.
#[derive(Debug, Clone, PartialEq)]
pub struct SecondOrderChain {
    n: usize,
    initial_pair: Vec<f64>,
    trans2: Vec<f64>,
}

fn in_band(n: usize, i: usize, j: usize) -> bool {
    ring_neighborhood(i, n).contains(&j)
}

impl SecondOrderChain {
    /// `initial_pair` is `N x N`; `trans2[(i * N + j) * N + k]` is
    /// `P(q_t = k | q_{t-2} = i, q_{t-1} = j)`.
    pub fn new(n: usize, initial_pair: Vec<f64>, trans2: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("chain needs at least one state"));
        }
        if initial_pair.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: initial_pair.len(),
            });
        }
        if trans2.len() != n * n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n * n,
                found: trans2.len(),
            });
        }
        check_distribution(&initial_pair, "initial pair distribution")?;
        for i in 0..n {
            for k in 0..n {
                if initial_pair[i * n + k] != 0.0 && !in_band(n, i, k) {
                    return Err(Error::invalid(format!(
                        "initial pair ({i},{k}) lies outside the circular band"
                    )));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                let row = &trans2[(i * n + j) * n..(i * n + j + 1) * n];
                if in_band(n, i, j) {
                    check_distribution(row, "second-order transition row")?;
                    if let Some(k) = (0..n).find(|&k| row[k] != 0.0 && !in_band(n, j, k)) {
                        return Err(Error::invalid(format!(
                            "transition ({i},{j})->{k} lies outside the circular band"
                        )));
                    }
                } else if row.iter().any(|&p| p != 0.0) {
                    return Err(Error::invalid(format!("row ({i},{j}) is unreachable and must be zero")));
                }
            }
        }
        Ok(SecondOrderChain {
            n,
            initial_pair,
            trans2,
        })
    }

    /// Uniform over allowed pairs and uniform `1/|neighborhood|` over allowed
    /// triples (1/3 for every ring of at least three states).
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("chain needs at least one state"));
        }
        let mut initial_pair = vec![0.0; n * n];
        let allowed: usize = (0..n).map(|i| ring_neighborhood(i, n).len()).sum();
        for i in 0..n {
            for k in ring_neighborhood(i, n) {
                initial_pair[i * n + k] = 1.0 / allowed as f64;
            }
        }
        let mut trans2 = vec![0.0; n * n * n];
        for i in 0..n {
            for j in ring_neighborhood(i, n) {
                let nb = ring_neighborhood(j, n);
                for &k in &nb {
                    trans2[(i * n + j) * n + k] = 1.0 / nb.len() as f64;
                }
            }
        }
        Self::new(n, initial_pair, trans2)
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn initial_pair(&self) -> &[f64] {
        &self.initial_pair
    }

    pub fn trans2(&self) -> &[f64] {
        &self.trans2
    }

    pub fn a(&self, i: usize, j: usize, k: usize) -> f64 {
        self.trans2[(i * self.n + j) * self.n + k]
    }

    fn logs(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.initial_pair.iter().map(|&p| ln0(p)).collect(),
            self.trans2.iter().map(|&p| ln0(p)).collect(),
        )
    }

    fn reestimate(&self, stats: &PairStats) -> Result<Self> {
        let n = self.n;
        let total: f64 = stats.initial_pair.iter().sum();
        let initial_pair = if total > 0.0 {
            stats.initial_pair.iter().map(|v| v / total).collect()
        } else {
            self.initial_pair.clone()
        };
        let trans2 = normalize_rows(&stats.trans2, &self.trans2, n);
        Self::new(n, initial_pair, trans2)
    }
}

/// Log forward and backward values, each `T x N x N` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Chmm2Lattice {
    n: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    log_likelihood: f64,
}

impl Chmm2Lattice {
    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.alpha.len() / (self.n * self.n)
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn alpha(&self, t: usize, prev: usize, cur: usize) -> f64 {
        self.alpha[(t * self.n + prev) * self.n + cur]
    }

    pub fn beta(&self, t: usize, prev: usize, cur: usize) -> f64 {
        self.beta[(t * self.n + prev) * self.n + cur]
    }

    pub fn alpha_slice(&self, t: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.alpha[t * nn..(t + 1) * nn]
    }

    pub fn beta_slice(&self, t: usize) -> &[f64] {
        let nn = self.n * self.n;
        &self.beta[t * nn..(t + 1) * nn]
    }
}

/// `first[i]` is `ln b(o_0 | q_0 = i)`; `pair[(t * N + j) * N + k]` is
/// `ln b(o_t | q_{t-1} = j, q_t = k)` for `t >= 1` (the `t = 0` block is
/// ignored).
fn lattice(log_pair: &[f64], log_a: &[f64], first: &[f64], pair: &[f64], n: usize) -> Chmm2Lattice {
    let nn = n * n;
    let t_len = pair.len() / nn;
    let mut alpha = vec![f64::NEG_INFINITY; t_len * nn];
    for i in 0..n {
        for k in 0..n {
            alpha[i * n + k] = log_pair[i * n + k] + first[i];
        }
    }
    for x in 0..nn {
        alpha[nn + x] = alpha[x] + pair[nn + x];
    }
    for t in 2..t_len {
        let (done, rest) = alpha.split_at_mut(t * nn);
        let prev = &done[(t - 1) * nn..];
        let cur = &mut rest[..nn];
        for j in 0..n {
            for k in 0..n {
                let mut acc = f64::NEG_INFINITY;
                for i in 0..n {
                    let la = log_a[(i * n + j) * n + k];
                    let p = prev[i * n + j];
                    if la != f64::NEG_INFINITY && p != f64::NEG_INFINITY {
                        acc = log_add(acc, p + la);
                    }
                }
                cur[j * n + k] = acc + pair[(t * n + j) * n + k];
            }
        }
    }
    let log_likelihood = log_sum_exp(&alpha[(t_len - 1) * nn..]);

    let mut beta = vec![f64::NEG_INFINITY; t_len * nn];
    beta[(t_len - 1) * nn..].fill(0.0);
    for t in (1..t_len - 1).rev() {
        for i in 0..n {
            for j in 0..n {
                let mut acc = f64::NEG_INFINITY;
                for k in 0..n {
                    let la = log_a[(i * n + j) * n + k];
                    if la != f64::NEG_INFINITY {
                        let next = ((t + 1) * n + j) * n + k;
                        acc = log_add(acc, la + pair[next] + beta[next]);
                    }
                }
                beta[(t * n + i) * n + j] = acc;
            }
        }
    }
    for x in 0..nn {
        beta[x] = pair[nn + x] + beta[nn + x];
    }
    Chmm2Lattice {
        n,
        alpha,
        beta,
        log_likelihood,
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PairStats {
    initial_pair: Vec<f64>,
    trans2: Vec<f64>,
}

impl PairStats {
    fn merge(&mut self, o: &PairStats) {
        add_into(&mut self.initial_pair, &o.initial_pair);
        add_into(&mut self.trans2, &o.trans2);
    }
}

/// Posterior pass over a finished lattice. `emit(t, j, k, gamma)` receives
/// pair posteriors `P(q_{t-1} = j, q_t = k | O)` for `t >= 1`; for `t = 0` it
/// receives `(0, i, i, P(q_0 = i | O))`.
fn pair_expectations(
    lat: &Chmm2Lattice,
    log_a: &[f64],
    pair: &[f64],
    mut emit: impl FnMut(usize, usize, usize, f64),
) -> Result<PairStats> {
    let n = lat.n;
    let nn = n * n;
    let log_p = lat.log_likelihood;
    if !log_p.is_finite() {
        return Err(Error::NonFinite("sequence log-likelihood"));
    }
    let t_len = lat.len();
    let mut stats = PairStats {
        initial_pair: vec![0.0; nn],
        trans2: vec![0.0; nn * n],
    };
    let mut first = vec![0.0; n];
    for t in 1..t_len {
        for (j, first_j) in first.iter_mut().enumerate() {
            for k in 0..n {
                let g = (lat.alpha(t, j, k) + lat.beta(t, j, k) - log_p).exp();
                if g == 0.0 {
                    continue;
                }
                if t == 1 {
                    stats.initial_pair[j * n + k] = g;
                    *first_j += g;
                }
                emit(t, j, k, g);
            }
        }
        if t >= 2 {
            for i in 0..n {
                for j in 0..n {
                    let a = lat.alpha(t - 1, i, j);
                    if a == f64::NEG_INFINITY {
                        continue;
                    }
                    for k in 0..n {
                        let la = log_a[(i * n + j) * n + k];
                        if la == f64::NEG_INFINITY {
                            continue;
                        }
                        let at = (t * n + j) * n + k;
                        stats.trans2[(i * n + j) * n + k] += (a + la + pair[at] + lat.beta[at] - log_p).exp();
                    }
                }
            }
        }
    }
    for (i, g) in first.into_iter().enumerate() {
        if g > 0.0 {
            emit(0, i, i, g);
        }
    }
    Ok(stats)
}

/// Continuous second-order circular HMM: one diagonal GMM per current state.
#[derive(Debug, Clone, PartialEq)]
pub struct Chmm2Model {
    chain: SecondOrderChain,
    emissions: Vec<GmmEmission>,
    dim: usize,
}

impl Chmm2Model {
    pub fn new(chain: SecondOrderChain, emissions: Vec<GmmEmission>) -> Result<Self> {
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
        Ok(Chmm2Model { chain, emissions, dim })
    }

    pub fn n_states(&self) -> usize {
        self.chain.n_states()
    }

    pub fn feature_dim(&self) -> usize {
        self.dim
    }

    pub fn chain(&self) -> &SecondOrderChain {
        &self.chain
    }

    pub fn emissions(&self) -> &[GmmEmission] {
        &self.emissions
    }

    fn tables(&self, obs: &FeatureSequence) -> Result<(Vec<f64>, Vec<f64>)> {
        if obs.len() < 2 {
            return Err(Error::SequenceTooShort { len: obs.len(), min: 2 });
        }
        if obs.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: obs.dim(),
            });
        }
        let n = self.n_states();
        let per_state = gmm_table(&self.emissions, obs);
        let first = per_state[..n].to_vec();
        let mut pair = vec![0.0; obs.len() * n * n];
        for t in 0..obs.len() {
            for j in 0..n {
                pair[(t * n + j) * n..(t * n + j + 1) * n].copy_from_slice(&per_state[t * n..(t + 1) * n]);
            }
        }
        Ok((first, pair))
    }

    pub fn forward_backward(&self, obs: &FeatureSequence) -> Result<Chmm2Lattice> {
        let (first, pair) = self.tables(obs)?;
        let (lp, la) = self.chain.logs();
        Ok(lattice(&lp, &la, &first, &pair, self.n_states()))
    }

    pub fn log_likelihood(&self, obs: &FeatureSequence) -> Result<f64> {
        Ok(self.forward_backward(obs)?.log_likelihood)
    }
}

pub(crate) struct Chmm2Stats {
    chain: PairStats,
    gmm: Vec<GmmStats>,
}

impl Reestimate for Chmm2Model {
    type Obs = FeatureSequence;
    type Stats = Chmm2Stats;
    type Ctx = VarianceFloor;

    fn context(&self, data: &[&FeatureSequence], opts: &TrainOpts) -> Result<VarianceFloor> {
        for o in data {
            self.tables(o)?;
        }
        Ok(VarianceFloor::from_frames(
            data.iter().flat_map(|s| s.frames()),
            self.dim,
            opts.variance_floor_frac,
        ))
    }

    fn expectations(&self, obs: &FeatureSequence) -> Result<(f64, Chmm2Stats)> {
        let (first, pair) = self.tables(obs)?;
        let (lp, la) = self.chain.logs();
        let lat = lattice(&lp, &la, &first, &pair, self.n_states());
        let mut gamma = vec![0.0; obs.len() * self.n_states()];
        let n = self.n_states();
        let chain = pair_expectations(&lat, &la, &pair, |t, _, k, g| gamma[t * n + k] += g)?;
        let mut gmm: Vec<GmmStats> = self
            .emissions
            .iter()
            .map(|e| GmmStats::new(e.n_mix(), self.dim))
            .collect();
        let mut buf = vec![0.0; self.emissions.iter().map(GmmEmission::n_mix).max().unwrap_or(0)];
        for t in 0..obs.len() {
            for k in 0..n {
                let g = gamma[t * n + k];
                if g > 0.0 {
                    add_gmm_frame(&mut gmm, &self.emissions, obs, t, k, g, &mut buf);
                }
            }
        }
        Ok((lat.log_likelihood, Chmm2Stats { chain, gmm }))
    }

    fn combine(acc: &mut Chmm2Stats, other: Chmm2Stats) {
        acc.chain.merge(&other.chain);
        for (a, b) in acc.gmm.iter_mut().zip(&other.gmm) {
            a.merge(b);
        }
    }

    fn maximize(&self, stats: Chmm2Stats, floor: &VarianceFloor) -> Result<Self> {
        let chain = self.chain.reestimate(&stats.chain)?;
        let emissions = maximize_gmms(&stats.gmm, &self.emissions, floor)?;
        Chmm2Model::new(chain, emissions)
    }
}

/// Uniform circular band plus per-state mixtures from equal-span
/// segmentation and seeded k-means.
pub fn init_chmm2(
    n_states: usize,
    dim: usize,
    n_mix: usize,
    data: &[FeatureSequence],
    seed: u64,
) -> Result<Chmm2Model> {
    let chain = SecondOrderChain::uniform(n_states)?;
    let emissions = init_state_emissions(
        n_states,
        dim,
        n_mix,
        data,
        seed,
        TrainOpts::default().variance_floor_frac,
    )?;
    Chmm2Model::new(chain, emissions)
}

pub fn train_chmm2(init: &Chmm2Model, data: &[FeatureSequence], opts: &TrainOpts) -> Result<TrainOutcome<Chmm2Model>> {
    let refs: Vec<&FeatureSequence> = data.iter().collect();
    run_em(init.clone(), &refs, opts)
}

/// Discrete-symbol second-order circular HMM. The first observation is drawn
/// from a per-state row; later observations from a row per
/// (previous, current) state pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteChmm2Model {
    chain: SecondOrderChain,
    first_emission: Vec<f64>,
    pair_emission: Vec<f64>,
    n_symbols: usize,
}

impl DiscreteChmm2Model {
    /// `first_emission` is `N x M`; `pair_emission` is `N x N x M`.
    pub fn new(
        chain: SecondOrderChain,
        first_emission: Vec<f64>,
        pair_emission: Vec<f64>,
        n_symbols: usize,
    ) -> Result<Self> {
        let n = chain.n_states();
        if n_symbols == 0 || first_emission.len() != n * n_symbols {
            return Err(Error::DimensionMismatch {
                expected: n * n_symbols,
                found: first_emission.len(),
            });
        }
        if pair_emission.len() != n * n * n_symbols {
            return Err(Error::DimensionMismatch {
                expected: n * n * n_symbols,
                found: pair_emission.len(),
            });
        }
        for row in first_emission
            .chunks_exact(n_symbols)
            .chain(pair_emission.chunks_exact(n_symbols))
        {
            check_distribution(row, "emission row")?;
        }
        Ok(DiscreteChmm2Model {
            chain,
            first_emission,
            pair_emission,
            n_symbols,
        })
    }

    /// Uniform chain and uniform `1/M` emission rows.
    pub fn uniform(n_states: usize, n_symbols: usize) -> Result<Self> {
        if n_symbols == 0 {
            return Err(Error::invalid("alphabet must be non-empty"));
        }
        let p = 1.0 / n_symbols as f64;
        Self::new(
            SecondOrderChain::uniform(n_states)?,
            vec![p; n_states * n_symbols],
            vec![p; n_states * n_states * n_symbols],
            n_symbols,
        )
    }

    pub fn n_states(&self) -> usize {
        self.chain.n_states()
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn chain(&self) -> &SecondOrderChain {
        &self.chain
    }

    pub fn first_emission(&self) -> &[f64] {
        &self.first_emission
    }

    pub fn pair_emission(&self) -> &[f64] {
        &self.pair_emission
    }

    pub fn b_first(&self, state: usize, symbol: usize) -> f64 {
        self.first_emission[state * self.n_symbols + symbol]
    }

    pub fn b_pair(&self, prev: usize, cur: usize, symbol: usize) -> f64 {
        self.pair_emission[(prev * self.n_states() + cur) * self.n_symbols + symbol]
    }

    fn tables(&self, obs: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
        if obs.len() < 2 {
            return Err(Error::SequenceTooShort { len: obs.len(), min: 2 });
        }
        if let Some(&s) = obs.iter().find(|&&s| s >= self.n_symbols) {
            return Err(Error::invalid(format!(
                "symbol {s} out of range (alphabet {})",
                self.n_symbols
            )));
        }
        let n = self.n_states();
        let first = (0..n).map(|i| ln0(self.b_first(i, obs[0]))).collect();
        let mut pair = vec![0.0; obs.len() * n * n];
        for (t, &o) in obs.iter().enumerate().skip(1) {
            for j in 0..n {
                for k in 0..n {
                    pair[(t * n + j) * n + k] = ln0(self.b_pair(j, k, o));
                }
            }
        }
        Ok((first, pair))
    }

    pub fn forward_backward(&self, obs: &[usize]) -> Result<Chmm2Lattice> {
        let (first, pair) = self.tables(obs)?;
        let (lp, la) = self.chain.logs();
        Ok(lattice(&lp, &la, &first, &pair, self.n_states()))
    }

    pub fn log_likelihood(&self, obs: &[usize]) -> Result<f64> {
        Ok(self.forward_backward(obs)?.log_likelihood)
    }
}

pub(crate) struct DiscreteChmm2Stats {
    chain: PairStats,
    first: Vec<f64>,
    pair: Vec<f64>,
}

impl Reestimate for DiscreteChmm2Model {
    type Obs = [usize];
    type Stats = DiscreteChmm2Stats;
    type Ctx = ();

    fn context(&self, data: &[&[usize]], _: &TrainOpts) -> Result<()> {
        for o in data {
            self.tables(o)?;
        }
        Ok(())
    }

    fn expectations(&self, obs: &[usize]) -> Result<(f64, DiscreteChmm2Stats)> {
        let (first_t, pair_t) = self.tables(obs)?;
        let (lp, la) = self.chain.logs();
        let lat = lattice(&lp, &la, &first_t, &pair_t, self.n_states());
        let (n, m) = (self.n_states(), self.n_symbols);
        let mut first = vec![0.0; n * m];
        let mut pair = vec![0.0; n * n * m];
        let chain = pair_expectations(&lat, &la, &pair_t, |t, j, k, g| {
            if t == 0 {
                first[j * m + obs[0]] += g;
            } else {
                pair[(j * n + k) * m + obs[t]] += g;
            }
        })?;
        Ok((lat.log_likelihood, DiscreteChmm2Stats { chain, first, pair }))
    }

    fn combine(acc: &mut DiscreteChmm2Stats, other: DiscreteChmm2Stats) {
        acc.chain.merge(&other.chain);
        add_into(&mut acc.first, &other.first);
        add_into(&mut acc.pair, &other.pair);
    }

    fn maximize(&self, stats: DiscreteChmm2Stats, _: &()) -> Result<Self> {
        let chain = self.chain.reestimate(&stats.chain)?;
        let first = normalize_rows(&stats.first, &self.first_emission, self.n_symbols);
        let pair = normalize_rows(&stats.pair, &self.pair_emission, self.n_symbols);
        DiscreteChmm2Model::new(chain, first, pair, self.n_symbols)
    }
}

pub fn train_discrete_chmm2(
    init: &DiscreteChmm2Model,
    data: &[Vec<usize>],
    opts: &TrainOpts,
) -> Result<TrainOutcome<DiscreteChmm2Model>> {
    let refs: Vec<&[usize]> = data.iter().map(Vec::as_slice).collect();
    run_em(init.clone(), &refs, opts)
}

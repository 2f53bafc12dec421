//! Bi-infinite marked arrival sequences `{(xi_n, sigma_n)}, n in Z`.
//!
//! A [`MarkedInputGenerator`] is counter based: the marks at index `n` are a
//! pure function of `(seed, model, n + offset)`, drawn from a ChaCha stream
//! positioned at `n`. No state is advanced, so arbitrary past indices cost
//! `O(1)` and the Palm shift `theta^k` is the index translation
//! [`MarkedInputGenerator::shift`].
//!
//! Markov-modulated inputs need the modulating state at any index without
//! simulating from a fixed origin. The state at `n` is obtained by coupling
//! from the past: the chain is driven by the index-keyed uniforms `u_k` and
//! the composition `f_{u_{n-1}} o f_{u_{n-2}} o ...` is extended backward
//! until it is constant. The value is then exactly stationary and
//! `S_{n+1} = f_{u_n}(S_n)` holds for every `n`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::stats::{batch_means, RunningStats};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InputError {
    #[error("{what}: parameter {name} = {value} is out of range")]
    BadParameter { what: &'static str, name: &'static str, value: f64 },
    #[error("inter-arrival times must have a strictly positive mean")]
    NonPositiveInterArrival,
    #[error("transition matrix must be square with one row per state ({rows} rows, {states} states)")]
    ShapeMismatch { rows: usize, states: usize },
    #[error("transition matrix row {0} is not a probability vector")]
    NotStochastic(usize),
    #[error("modulating chain must have between 1 and {max} states, got {got}", max = MAX_CHAIN_STATES)]
    TooManyStates { got: usize },
    #[error("modulating chain is not irreducible and aperiodic")]
    NotErgodic,
    #[error("common-uniform coupling of the modulating chain can never coalesce")]
    NotCoalescible,
    #[error("periodic input needs at least one mark")]
    EmptyCycle,
}

pub const MAX_CHAIN_STATES: usize = 16;

const STREAM_XI: u64 = 0;
const STREAM_SIGMA: u64 = 1;
const STREAM_CHAIN: u64 = 2;

/// Uniform in the open interval (0, 1) keyed by `(seed, stream, index)`.
fn keyed_uniform(seed: u64, stream: u64, index: i64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    // two 32-bit words per index; the i64 -> u64 cast is a bijection
    rng.set_word_pos(u128::from(index as u64) << 1);
    ((rng.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `i` in a campaign: `base ^ mix64(i)`.
pub fn replication_seed(base: u64, i: u64) -> u64 {
    base ^ mix64(i)
}

/// Marginal law of an inter-arrival time or a service requirement.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields))]
pub enum Dist {
    #[cfg_attr(feature = "serde", serde(rename = "exp"))]
    Exponential { mean: f64 },
    Deterministic { value: f64 },
    Uniform { a: f64, b: f64 },
    /// Pareto with minimum `scale` and tail index `shape > 1`.
    Pareto { scale: f64, shape: f64 },
}

impl Dist {
    pub fn validate(&self) -> Result<(), InputError> {
        let bad = |name, value| Err(InputError::BadParameter { what: self.name(), name, value });
        match *self {
            Self::Exponential { mean } if !(mean > 0.0) || !mean.is_finite() => bad("mean", mean),
            Self::Deterministic { value } if !(value >= 0.0) || !value.is_finite() => bad("value", value),
            Self::Uniform { a, .. } if !(a >= 0.0) || !a.is_finite() => bad("a", a),
            Self::Uniform { a, b } if !(b >= a) || !b.is_finite() => bad("b", b),
            Self::Pareto { scale, .. } if !(scale > 0.0) || !scale.is_finite() => bad("scale", scale),
            Self::Pareto { shape, .. } if !(shape > 1.0) || !shape.is_finite() => bad("shape", shape),
            _ => Ok(()),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Exponential { .. } => "exp",
            Self::Deterministic { .. } => "deterministic",
            Self::Uniform { .. } => "uniform",
            Self::Pareto { .. } => "pareto",
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { mean } => mean,
            Self::Deterministic { value } => value,
            Self::Uniform { a, b } => 0.5 * (a + b),
            Self::Pareto { scale, shape } => shape * scale / (shape - 1.0),
        }
    }

    /// `None` when the variance is infinite.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            Self::Exponential { mean } => Some(mean * mean),
            Self::Deterministic { .. } => Some(0.0),
            Self::Uniform { a, b } => Some((b - a) * (b - a) / 12.0),
            Self::Pareto { scale, shape } if shape > 2.0 => {
                Some(scale * scale * shape / ((shape - 1.0) * (shape - 1.0) * (shape - 2.0)))
            }
            Self::Pareto { .. } => None,
        }
    }

    /// Quantile of order `p` in (0, 1).
    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            Self::Exponential { mean } => -mean * libm::log1p(-p),
            Self::Deterministic { value } => value,
            Self::Uniform { a, b } => a + p * (b - a),
            Self::Pareto { scale, shape } => scale * libm::pow(1.0 - p, -1.0 / shape),
        }
    }

    /// Inverse-CDF draw from a uniform in (0, 1).
    pub fn from_uniform(&self, u: f64) -> f64 {
        self.quantile(u)
    }

    /// The same family rescaled so that the mean is multiplied by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        match *self {
            Self::Exponential { mean } => Self::Exponential { mean: mean * c },
            Self::Deterministic { value } => Self::Deterministic { value: value * c },
            Self::Uniform { a, b } => Self::Uniform { a: a * c, b: b * c },
            Self::Pareto { scale, shape } => Self::Pareto { scale: scale * c, shape },
        }
    }
}

/// Marks of one customer: the gap to the next arrival and the service
/// requirement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mark {
    pub xi: f64,
    pub sigma: f64,
}

/// Per-state mark laws of a modulated input.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StateMarks {
    pub xi: Dist,
    pub sigma: Dist,
}

/// Finite ergodic chain modulating the marks; it moves once per customer.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    transition: Vec<Vec<f64>>,
    cumulative: Vec<Vec<f64>>,
    states: Vec<StateMarks>,
    stationary: Vec<f64>,
}

impl MarkovChain {
    pub fn new(transition: Vec<Vec<f64>>, states: Vec<StateMarks>) -> Result<Self, InputError> {
        let k = states.len();
        if k == 0 || k > MAX_CHAIN_STATES {
            return Err(InputError::TooManyStates { got: k });
        }
        if transition.len() != k || transition.iter().any(|row| row.len() != k) {
            return Err(InputError::ShapeMismatch { rows: transition.len(), states: k });
        }
        for (i, row) in transition.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) || (sum - 1.0).abs() > 1e-9 {
                return Err(InputError::NotStochastic(i));
            }
        }
        for s in &states {
            s.xi.validate()?;
            s.sigma.validate()?;
        }
        if !is_primitive(&transition) {
            return Err(InputError::NotErgodic);
        }
        let cumulative: Vec<Vec<f64>> = transition
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect()
            })
            .collect();
        if !coupling_coalesces(&cumulative) {
            return Err(InputError::NotCoalescible);
        }
        let stationary = stationary_distribution(&transition);
        let chain = Self { transition, cumulative, states, stationary };
        if !(chain.mean_xi() > 0.0) {
            return Err(InputError::NonPositiveInterArrival);
        }
        Ok(chain)
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn states(&self) -> &[StateMarks] {
        &self.states
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    fn next_state(&self, state: usize, u: f64) -> usize {
        let row = &self.cumulative[state];
        row.iter()
            .position(|&c| u < c)
            .unwrap_or_else(|| self.transition[state].iter().rposition(|&p| p > 0.0).unwrap_or(0))
    }

    fn mean_xi(&self) -> f64 {
        self.states.iter().zip(&self.stationary).map(|(s, p)| p * s.xi.mean()).sum()
    }

    fn mean_sigma(&self) -> f64 {
        self.states.iter().zip(&self.stationary).map(|(s, p)| p * s.sigma.mean()).sum()
    }

    /// Asymptotic variance of partial sums of `sigma_n - k xi_n`: the
    /// marginal variance plus twice the sum of lag covariances, which come
    /// only from the state means since marks are conditionally independent
    /// given the states.
    fn increment_asymptotic_variance(&self, k: f64) -> Option<f64> {
        let n = self.states.len();
        let mut cond_var = Vec::with_capacity(n);
        let mut means = Vec::with_capacity(n);
        for s in &self.states {
            cond_var.push(s.sigma.variance()? + k * k * s.xi.variance()?);
            means.push(s.sigma.mean() - k * s.xi.mean());
        }
        let overall: f64 = means.iter().zip(&self.stationary).map(|(m, p)| m * p).sum();
        let centered: Vec<f64> = means.iter().map(|m| m - overall).collect();
        let marginal: f64 = (0..n)
            .map(|s| self.stationary[s] * (cond_var[s] + centered[s] * centered[s]))
            .sum();
        let mut v = centered.clone();
        let mut lag_sum = 0.0;
        for _ in 0..100_000 {
            let next: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| self.transition[i][j] * v[j]).sum())
                .collect();
            v = next;
            let term: f64 = (0..n).map(|s| self.stationary[s] * centered[s] * v[s]).sum();
            lag_sum += term;
            if term.abs() < 1e-16 * (1.0 + marginal) {
                break;
            }
        }
        Some((marginal + 2.0 * lag_sum).max(0.0))
    }
}

fn is_primitive(p: &[Vec<f64>]) -> bool {
    // Wielandt: a primitive k x k matrix has P^m > 0 for m = (k-1)^2 + 1.
    let k = p.len();
    let adj: Vec<Vec<bool>> = p.iter().map(|row| row.iter().map(|&x| x > 0.0).collect()).collect();
    let mut reach = adj.clone();
    let bound = (k - 1) * (k - 1) + 1;
    for _ in 1..bound {
        reach = (0..k)
            .map(|i| (0..k).map(|j| (0..k).any(|m| reach[i][m] && adj[m][j])).collect())
            .collect();
    }
    reach.iter().all(|row| row.iter().all(|&b| b))
}

/// Whether composing common-uniform inverse-CDF maps can send the whole
/// state space to a single state, by search over reachable subsets.
fn coupling_coalesces(cumulative: &[Vec<f64>]) -> bool {
    let k = cumulative.len();
    let mut cuts: Vec<f64> = cumulative.iter().flatten().copied().filter(|&c| c > 0.0 && c < 1.0).collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let maps: Vec<Vec<usize>> = cuts
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let u = 0.5 * (w[0] + w[1]);
            (0..k)
                .map(|s| cumulative[s].iter().position(|&c| u < c).unwrap_or(k - 1))
                .collect()
        })
        .collect();
    let full: u32 = if k == 32 { u32::MAX } else { (1u32 << k) - 1 };
    let mut seen = vec![false; 1usize << k];
    let mut stack = vec![full];
    seen[full as usize] = true;
    while let Some(set) = stack.pop() {
        if set.count_ones() == 1 {
            return true;
        }
        for f in &maps {
            let mut image = 0u32;
            for (s, &t) in f.iter().enumerate().take(k) {
                if set & (1 << s) != 0 {
                    image |= 1 << t;
                }
            }
            if !seen[image as usize] {
                seen[image as usize] = true;
                stack.push(image);
            }
        }
    }
    false
}

/// Solves `pi P = pi`, `sum pi = 1` by Gaussian elimination.
fn stationary_distribution(p: &[Vec<f64>]) -> Vec<f64> {
    let k = p.len();
    // rows: (P^T - I) with the last equation replaced by the normalization
    let mut a: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut row: Vec<f64> = (0..k).map(|j| p[j][i] - if i == j { 1.0 } else { 0.0 }).collect();
            row.push(0.0);
            row
        })
        .collect();
    a[k - 1] = vec![1.0; k + 1];
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap_or(col);
        a.swap(col, pivot);
        let d = a[col][col];
        for v in &mut a[col][col..] {
            *v /= d;
        }
        let pivot_row = a[col].clone();
        for (i, row) in a.iter_mut().enumerate() {
            let f = row[col];
            if i != col && f != 0.0 {
                for (v, pv) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *v -= f * pv;
                }
            }
        }
    }
    a.iter().map(|row| row[k].max(0.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputModel {
    Iid { xi: Dist, sigma: Dist },
    Deterministic { xi: f64, sigma: f64 },
    /// Deterministic marks repeating with period `marks.len()`; index 0
    /// carries `marks[0]`.
    Periodic { marks: Vec<Mark> },
    MarkovModulated(MarkovChain),
}

impl InputModel {
    pub fn iid(xi: Dist, sigma: Dist) -> Result<Self, InputError> {
        xi.validate()?;
        sigma.validate()?;
        if !(xi.mean() > 0.0) {
            return Err(InputError::NonPositiveInterArrival);
        }
        Ok(Self::Iid { xi, sigma })
    }

    pub fn deterministic(xi: f64, sigma: f64) -> Result<Self, InputError> {
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(InputError::BadParameter { what: "deterministic", name: "xi", value: xi });
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(InputError::BadParameter { what: "deterministic", name: "sigma", value: sigma });
        }
        Ok(Self::Deterministic { xi, sigma })
    }

    pub fn periodic(marks: Vec<Mark>) -> Result<Self, InputError> {
        if marks.is_empty() {
            return Err(InputError::EmptyCycle);
        }
        for m in &marks {
            if !(m.xi > 0.0) || !m.xi.is_finite() {
                return Err(InputError::BadParameter { what: "periodic", name: "xi", value: m.xi });
            }
            if !(m.sigma >= 0.0) || !m.sigma.is_finite() {
                return Err(InputError::BadParameter { what: "periodic", name: "sigma", value: m.sigma });
            }
        }
        Ok(Self::Periodic { marks })
    }

    pub fn markov_modulated(transition: Vec<Vec<f64>>, states: Vec<StateMarks>) -> Result<Self, InputError> {
        Ok(Self::MarkovModulated(MarkovChain::new(transition, states)?))
    }

    pub fn mean_xi(&self) -> f64 {
        match self {
            Self::Iid { xi, .. } => xi.mean(),
            Self::Deterministic { xi, .. } => *xi,
            Self::Periodic { marks } => marks.iter().map(|m| m.xi).sum::<f64>() / marks.len() as f64,
            Self::MarkovModulated(c) => c.mean_xi(),
        }
    }

    pub fn mean_sigma(&self) -> f64 {
        match self {
            Self::Iid { sigma, .. } => sigma.mean(),
            Self::Deterministic { sigma, .. } => *sigma,
            Self::Periodic { marks } => marks.iter().map(|m| m.sigma).sum::<f64>() / marks.len() as f64,
            Self::MarkovModulated(c) => c.mean_sigma(),
        }
    }

    /// Upper `p`-quantile of the service requirement (max over states for
    /// modulated inputs).
    pub fn sigma_quantile_bound(&self, p: f64) -> f64 {
        match self {
            Self::Iid { sigma, .. } => sigma.quantile(p),
            Self::Deterministic { sigma, .. } => *sigma,
            Self::Periodic { marks } => marks.iter().map(|m| m.sigma).fold(0.0, f64::max),
            Self::MarkovModulated(c) => c.states.iter().map(|s| s.sigma.quantile(p)).fold(0.0, f64::max),
        }
    }

    /// Asymptotic variance of the partial sums of `sigma_n - k xi_n`;
    /// `None` if infinite.
    pub fn increment_asymptotic_variance(&self, k: f64) -> Option<f64> {
        match self {
            Self::Iid { xi, sigma } => Some(sigma.variance()? + k * k * xi.variance()?),
            Self::Deterministic { .. } | Self::Periodic { .. } => Some(0.0),
            Self::MarkovModulated(c) => c.increment_asymptotic_variance(k),
        }
    }

    /// Whether consecutive marks may be correlated.
    pub fn is_correlated(&self) -> bool {
        matches!(self, Self::MarkovModulated(_) | Self::Periodic { .. })
    }

    /// The same model with every service requirement multiplied by `c > 0`.
    pub fn scale_sigma(&self, c: f64) -> Self {
        match self {
            Self::Iid { xi, sigma } => Self::Iid { xi: *xi, sigma: sigma.scaled(c) },
            Self::Deterministic { xi, sigma } => Self::Deterministic { xi: *xi, sigma: sigma * c },
            Self::Periodic { marks } => Self::Periodic {
                marks: marks.iter().map(|m| Mark { xi: m.xi, sigma: m.sigma * c }).collect(),
            },
            Self::MarkovModulated(chain) => {
                let mut chain = chain.clone();
                for s in &mut chain.states {
                    s.sigma = s.sigma.scaled(c);
                }
                Self::MarkovModulated(chain)
            }
        }
    }

    fn sample_at(&self, seed: u64, index: i64) -> Mark {
        match self {
            Self::Iid { xi, sigma } => Mark {
                xi: xi.from_uniform(keyed_uniform(seed, STREAM_XI, index)),
                sigma: sigma.from_uniform(keyed_uniform(seed, STREAM_SIGMA, index)),
            },
            Self::Deterministic { xi, sigma } => Mark { xi: *xi, sigma: *sigma },
            Self::Periodic { marks } => marks[index.rem_euclid(marks.len() as i64) as usize],
            Self::MarkovModulated(chain) => {
                let s = &chain.states[modulating_state(chain, seed, index)];
                Mark {
                    xi: s.xi.from_uniform(keyed_uniform(seed, STREAM_XI, index)),
                    sigma: s.sigma.from_uniform(keyed_uniform(seed, STREAM_SIGMA, index)),
                }
            }
        }
    }
}

/// Stationary state of the modulating chain at `index`, by coupling from
/// the past on the index-keyed uniforms.
fn modulating_state(chain: &MarkovChain, seed: u64, index: i64) -> usize {
    let k = chain.states.len();
    if k == 1 {
        return 0;
    }
    // composed[s] = state at `index` when starting from s at `index - depth`
    let mut composed: Vec<usize> = (0..k).collect();
    let mut depth: i64 = 0;
    loop {
        if composed.iter().all(|&s| s == composed[0]) {
            return composed[0];
        }
        depth += 1;
        let u = keyed_uniform(seed, STREAM_CHAIN, index.wrapping_sub(depth));
        composed = (0..k).map(|s| composed[chain.next_state(s, u)]).collect();
    }
}

/// Counter-based generator of the marked input sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkedInputGenerator {
    seed: u64,
    offset: i64,
    model: Arc<InputModel>,
}

impl MarkedInputGenerator {
    pub fn new(model: InputModel, seed: u64) -> Self {
        Self { seed, offset: 0, model: Arc::new(model) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn model(&self) -> &InputModel {
        &self.model
    }

    /// Same model under another seed, offset reset to 0.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, offset: 0, model: Arc::clone(&self.model) }
    }

    /// `(xi_n, sigma_n)` seen from the current origin.
    pub fn sample(&self, n: i64) -> Mark {
        self.model.sample_at(self.seed, n.wrapping_add(self.offset))
    }

    /// `theta^k`: moves the origin `k` arrivals forward.
    pub fn shift(&self, k: i64) -> Self {
        Self { seed: self.seed, offset: self.offset.wrapping_add(k), model: Arc::clone(&self.model) }
    }

    /// Birkhoff averages over indices `0..n_samples`.
    pub fn empirical_means(&self, n_samples: usize) -> EmpiricalMeans {
        let n = n_samples.max(1);
        if self.model.is_correlated() {
            let marks: Vec<Mark> = (0..n as i64).map(|i| self.sample(i)).collect();
            let xs: Vec<f64> = marks.iter().map(|m| m.xi).collect();
            let ss: Vec<f64> = marks.iter().map(|m| m.sigma).collect();
            let (mean_xi, se_xi) = batch_means(&xs);
            let (mean_sigma, se_sigma) = batch_means(&ss);
            EmpiricalMeans { samples: n, mean_xi, se_xi, mean_sigma, se_sigma }
        } else {
            let (mut xs, mut ss) = (RunningStats::new(), RunningStats::new());
            for i in 0..n as i64 {
                let m = self.sample(i);
                xs.push(m.xi);
                ss.push(m.sigma);
            }
            EmpiricalMeans {
                samples: n,
                mean_xi: xs.mean(),
                se_xi: xs.std_error(),
                mean_sigma: ss.mean(),
                se_sigma: ss.std_error(),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EmpiricalMeans {
    pub samples: usize,
    pub mean_xi: f64,
    pub se_xi: f64,
    pub mean_sigma: f64,
    pub se_sigma: f64,
}

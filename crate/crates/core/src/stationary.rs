//! Backward (Loynes) constructions and perfect sampling.
//!
//! All operations look into the past of a [`MarkedInputGenerator`] through
//! negative indices, so the value returned for `g` is the value at index 0
//! and the value for `g.shift(k)` is the same functional at index `k`.
//!
//! Infinite suprema over the past are truncated by explicit stopping rules,
//! and every result says whether its rule fired (`converged`) or the scan ran
//! into `max_lookback`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dynamics::{step, DynamicsError, CMP_EPS};
use crate::input::{replication_seed, InputModel, MarkedInputGenerator};
use crate::measures::{CountingMeasure, ATOM_EPS};
use crate::rates::{RateFunction, Violation};
use crate::stats::{batch_means, RunningStats};

/// Service-requirement quantile order used by the tail bounds.
pub const TAIL_QUANTILE: f64 = 1.0 - 1e-9;

/// Probe horizon used to validate rate functions before coupling.
pub const RATE_VALIDATION_HORIZON: usize = 1024;

/// Target probability that a truncated Lindley supremum is exceeded later.
const LINDLEY_TAIL_PROB: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StationaryError {
    #[error("rate function fails validation up to n = {horizon}: {violation:?}")]
    InvalidRate { horizon: usize, violation: Option<Violation> },
    #[error("declared throughput floor must be positive for backward coupling")]
    ZeroFloor,
    #[error("drain rate {0} must be finite and positive")]
    InvalidDrain(f64),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Outcome of a truncated backward supremum.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct LoynesResult {
    pub value: f64,
    /// The `j >= 1` attaining a positive supremum.
    pub argmax_index: Option<u64>,
    pub converged: bool,
    pub terms_scanned: u64,
    pub tail_bound_note: String,
}

/// `L = [sup_{j >= 1} (sigma_{-j} - sum_{i=1}^{j} xi_{-i})]^+`, the largest
/// remaining time in the stationary infinite-server system.
///
/// The scan stops once `sum xi - max(best, 0)` exceeds the
/// [`TAIL_QUANTILE`] quantile of the service law, after which no term can
/// raise the supremum unless a service requirement exceeds that quantile.
pub fn loynes_l(g: &MarkedInputGenerator, max_lookback: u64) -> LoynesResult {
    let q = g.model().sigma_quantile_bound(TAIL_QUANTILE);
    let mut elapsed = 0.0;
    let mut best = f64::NEG_INFINITY;
    let mut argmax = 0;
    let mut j = 0;
    let mut converged = false;
    while j < max_lookback {
        j += 1;
        let m = g.sample(-(j as i64));
        elapsed += m.xi;
        let term = m.sigma - elapsed;
        if term > best {
            best = term;
            argmax = j;
        }
        if elapsed - best.max(0.0) > q {
            converged = true;
            break;
        }
    }
    let value = best.max(0.0);
    let tail_bound_note = if converged {
        format!("stopped at j = {j}: elapsed {elapsed:.6} exceeds sigma quantile bound {q:.6} plus current value")
    } else {
        format!("lookback {max_lookback} exhausted with elapsed {elapsed:.6} against sigma quantile bound {q:.6}")
    };
    LoynesResult {
        value,
        argmax_index: (best > 0.0).then_some(argmax),
        converged,
        terms_scanned: j,
        tail_bound_note,
    }
}

/// Stationary profile of the infinite-server system together with its
/// truncation diagnostics.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct GgInfProfile {
    pub profile: CountingMeasure,
    pub converged: bool,
    pub terms_scanned: u64,
    pub truncation_note: String,
}

/// `mu = sum_i delta_{sigma_{-i} - sum_{j<=i} xi_{-j}}` over the customers
/// still present at time 0. Atoms within the departure tolerance of zero are
/// treated as departed, as in the forward recursion.
pub fn stationary_profile_gginf(g: &MarkedInputGenerator, max_lookback: u64) -> GgInfProfile {
    let q = g.model().sigma_quantile_bound(TAIL_QUANTILE);
    let mut elapsed = 0.0;
    let mut atoms = Vec::new();
    let mut i = 0;
    let mut converged = false;
    while i < max_lookback {
        i += 1;
        let m = g.sample(-(i as i64));
        elapsed += m.xi;
        let residual = m.sigma - elapsed;
        if residual > CMP_EPS {
            atoms.push(residual);
        }
        if elapsed > q {
            converged = true;
            break;
        }
    }
    let truncation_note = if converged {
        format!("complete: elapsed {elapsed:.6} after {i} customers exceeds sigma quantile bound {q:.6}")
    } else {
        format!("truncated at lookback {max_lookback}: elapsed {elapsed:.6} below sigma quantile bound {q:.6}, older customers may be missing")
    };
    GgInfProfile {
        profile: CountingMeasure::from_atoms(atoms).expect("residuals are positive and finite"),
        converged,
        terms_scanned: i,
        truncation_note,
    }
}

/// `W = [sup_{j >= 1} sum_{i=1}^{j} (sigma_{-i} - k xi_{-i})]^+`, the
/// stationary workload of a single server draining at constant rate `k`.
///
/// With drift `d = k E[xi] - E[sigma] > 0` the scan stops once the running
/// maximum has not improved for `ceil(10 / (1 - rho))` terms and the
/// current partial sum sits at least `M` below `max(best, 0)`. `M` is exact
/// for deterministic and periodic inputs and is the Brownian tail level
/// `ln(1/p) v / (2 d)` with `p = 1e-12` otherwise, `v` being the asymptotic
/// variance of the increments. Without positive drift or finite variance the
/// scan runs to `max_lookback` and reports `converged = false`.
pub fn lindley_w(g: &MarkedInputGenerator, k: f64, max_lookback: u64) -> Result<LoynesResult, StationaryError> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(StationaryError::InvalidDrain(k));
    }
    let plan = LindleyStop::new(g.model(), k);
    let mut partial = 0.0;
    let mut best = f64::NEG_INFINITY;
    let mut argmax = 0;
    let mut j = 0;
    let mut converged = false;
    while j < max_lookback {
        j += 1;
        let m = g.sample(-(j as i64));
        partial += m.sigma - k * m.xi;
        if partial > best {
            best = partial;
            argmax = j;
        }
        if let Some((window, margin)) = plan.rule {
            if j - argmax >= window && best.max(0.0) - partial >= margin {
                converged = true;
                break;
            }
        }
    }
    let tail_bound_note = match plan.rule {
        None => format!("{}; scanned {j} terms without a stopping certificate", plan.reason),
        Some((window, margin)) if converged => {
            format!("stopped at j = {j}: no improvement for {window} terms and partial sum {margin:.6} below the maximum")
        }
        Some((window, margin)) => {
            format!("lookback {max_lookback} exhausted (window {window}, margin {margin:.6})")
        }
    };
    Ok(LoynesResult {
        value: best.max(0.0),
        argmax_index: (best > 0.0).then_some(argmax),
        converged,
        terms_scanned: j,
        tail_bound_note,
    })
}

struct LindleyStop {
    rule: Option<(u64, f64)>,
    reason: &'static str,
}

impl LindleyStop {
    fn new(model: &InputModel, k: f64) -> Self {
        let drift = k * model.mean_xi() - model.mean_sigma();
        if !(drift > 0.0) {
            return Self { rule: None, reason: "no negative drift" };
        }
        let rho = model.mean_sigma() / (k * model.mean_xi());
        let window = libm::ceil(10.0 / (1.0 - rho)).min(1e15) as u64;
        let margin = match model {
            InputModel::Deterministic { .. } => 0.0,
            // every partial sum spanning whole periods is negative, so a
            // future excursion is bounded by the positive increments of one
            // period
            InputModel::Periodic { marks } => marks.iter().map(|m| (m.sigma - k * m.xi).max(0.0)).sum(),
            _ => match model.increment_asymptotic_variance(k) {
                Some(v) => libm::log(1.0 / LINDLEY_TAIL_PROB) * v / (2.0 * drift),
                None => return Self { rule: None, reason: "increments have infinite variance" },
            },
        };
        Self { rule: Some((window, margin)), reason: "" }
    }
}

/// Outcome of a backward-coupling run for the processor-sharing profile.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CouplingReport {
    pub coupled: bool,
    /// The `-m` at which the dominating workload vanishes.
    pub regeneration_index: Option<i64>,
    pub stationary_profile: Option<CountingMeasure>,
    /// Marks consumed by the search and the forward pass.
    pub iterations_used: u64,
    pub horizon_exhausted: bool,
}

/// Exact draw of the stationary profile at index 0.
///
/// The workload of a server draining at the floor `K_r` dominates the
/// workload of the queue, so an index `-m` where it vanishes is a
/// renovation epoch: the stationary queue is empty there. Candidate
/// epochs are searched with a doubling schedule `M = 0, 1, 2, 4, ...`;
/// at each level `W` is computed at `-M` and propagated forward by the
/// Lindley recursion to every `-m > -M`, and the epoch closest to 0 is
/// kept. The profile is then obtained by running the recursion from the
/// empty state at `-m` up to 0.
pub fn backward_coupling_ps(
    g: &MarkedInputGenerator,
    r: &RateFunction,
    max_lookback: u64,
) -> Result<CouplingReport, StationaryError> {
    let report = r.validate(RATE_VALIDATION_HORIZON);
    if !report.valid {
        return Err(StationaryError::InvalidRate {
            horizon: RATE_VALIDATION_HORIZON,
            violation: report.violations.first().copied(),
        });
    }
    let k = r.floor();
    if !(k > 0.0) {
        return Err(StationaryError::ZeroFloor);
    }

    let mut used = 0u64;
    let mut level = 0u64;
    loop {
        let w_far = lindley_w(&g.shift(-(level as i64)), k, max_lookback)?;
        used += w_far.terms_scanned;
        if w_far.converged {
            if let Some(m) = nearest_renovation(g, k, level, w_far.value, &mut used) {
                let profile = forward_from_empty(g, r, m)?;
                used += m;
                return Ok(CouplingReport {
                    coupled: true,
                    regeneration_index: Some(-(m as i64)),
                    stationary_profile: Some(profile),
                    iterations_used: used,
                    horizon_exhausted: false,
                });
            }
        }
        if level >= max_lookback {
            return Ok(CouplingReport {
                coupled: false,
                regeneration_index: None,
                stationary_profile: None,
                iterations_used: used,
                horizon_exhausted: true,
            });
        }
        level = if level == 0 { 1 } else { (level * 2).min(max_lookback) };
    }
}

/// Smallest `m <= level` with `W_{-m} <= ATOM_EPS`, given `W_{-level}`.
fn nearest_renovation(g: &MarkedInputGenerator, k: f64, level: u64, w_level: f64, used: &mut u64) -> Option<u64> {
    let mut w = w_level;
    let mut nearest = (w <= ATOM_EPS).then_some(level);
    for m in (0..level).rev() {
        let mark = g.sample(-(m as i64) - 1);
        w = (w + mark.sigma - k * mark.xi).max(0.0);
        *used += 1;
        if w <= ATOM_EPS {
            nearest = Some(m);
        }
    }
    nearest
}

fn forward_from_empty(g: &MarkedInputGenerator, r: &RateFunction, m: u64) -> Result<CountingMeasure, DynamicsError> {
    let mut mu = CountingMeasure::zero();
    for idx in -(m as i64)..0 {
        let mark = g.sample(idx);
        mu = step(&mu, mark.sigma, mark.xi, r)?;
    }
    Ok(mu)
}

/// Profiles `mu_n^{[0]} o theta^{-n}` for `n = 0..=n_max`: the state at
/// index 0 when started empty at index `-n`.
pub fn backward_iterates(
    g: &MarkedInputGenerator,
    r: &RateFunction,
    n_max: u64,
) -> Result<Vec<CountingMeasure>, DynamicsError> {
    (0..=n_max).map(|n| forward_from_empty(g, r, n)).collect()
}

/// First `n` at which the paths started from `z1` and `z2` at index 0
/// coincide, if within `horizon` steps.
pub fn forward_couple_two(
    g: &MarkedInputGenerator,
    r: &RateFunction,
    z1: &CountingMeasure,
    z2: &CountingMeasure,
    horizon: u64,
) -> Result<Option<u64>, DynamicsError> {
    let (mut a, mut b) = (z1.clone(), z2.clone());
    for n in 0..=horizon {
        if a.tv_distance(&b) == 0 {
            return Ok(Some(n));
        }
        if n == horizon {
            break;
        }
        let mark = g.sample(n as i64);
        a = step(&a, mark.sigma, mark.xi, r)?;
        b = step(&b, mark.sigma, mark.xi, r)?;
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Verdict {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StabilityReport {
    pub verdict: Verdict,
    /// Estimate of `E[sigma] - K_r E[xi]`.
    pub mean_increment: f64,
    pub std_error: f64,
    /// `E[sigma] / (K_r E[xi])` from the same samples.
    pub rho_hat: f64,
    pub samples: usize,
}

/// Compares `E[sigma]` with `K_r E[xi]` on `n_samples` marks; means within
/// three standard errors of each other are inconclusive.
pub fn check_stability(g: &MarkedInputGenerator, r: &RateFunction, n_samples: usize) -> StabilityReport {
    let k = r.floor();
    let n = n_samples.max(1);
    let (mut sum_sigma, mut sum_xi) = (0.0, 0.0);
    let (mean, se) = if g.model().is_correlated() {
        let xs: Vec<f64> = (0..n as i64)
            .map(|i| {
                let m = g.sample(i);
                sum_sigma += m.sigma;
                sum_xi += m.xi;
                m.sigma - k * m.xi
            })
            .collect();
        batch_means(&xs)
    } else {
        let stats: RunningStats = (0..n as i64)
            .map(|i| {
                let m = g.sample(i);
                sum_sigma += m.sigma;
                sum_xi += m.xi;
                m.sigma - k * m.xi
            })
            .collect();
        (stats.mean(), stats.std_error())
    };
    let verdict = if mean.abs() <= 3.0 * se {
        Verdict::Inconclusive
    } else if mean < 0.0 {
        Verdict::Stable
    } else {
        Verdict::Unstable
    };
    StabilityReport { verdict, mean_increment: mean, std_error: se, rho_hat: sum_sigma / (k * sum_xi), samples: n }
}

/// Monte Carlo estimate of `P(L = 0)` and its standard error over
/// `replications` independent seeds derived from `g`'s seed.
pub fn prob_loynes_zero(g: &MarkedInputGenerator, replications: u64, max_lookback: u64) -> (f64, f64) {
    let stats: RunningStats = (0..replications)
        .map(|i| {
            let l = loynes_l(&g.with_seed(replication_seed(g.seed(), i)), max_lookback);
            if l.value == 0.0 {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    (stats.mean(), stats.std_error())
}

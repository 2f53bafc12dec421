//! The one-step service-profile recursion.
//!
//! Between two arrivals separated by `x`, every present customer receives
//! the same amount of work per unit time, `r(Q)`, so all remaining times
//! decrease by a common amount `gamma(mu, x)` and the customers whose
//! remaining time is at most that amount leave. With `N = N(mu)` and atoms
//! `a_1 <= ... <= a_N`,
//!
//! ```text
//! gamma_i(mu, x) = r(N-i+1) * (x - sum_{j<i} a_j * (1/r(N-j+1) - 1/r(N-j)))
//! i_r(mu, x)     = max { i <= N : a_i <= gamma_i(mu, x) }      (max {} = 0)
//! gamma(mu, x)   = max_i gamma_i(mu, x)
//! Phi(mu, x)     = survivors a_i - gamma(mu, x), i > i_r(mu, x)
//! ```
//!
//! and the profile just before arrival `n + 1` is
//! `mu_{n+1} = Phi(mu_n + delta_{sigma_n}, xi_n)`.
//!
//! The departure threshold `a_i <= gamma_i` is evaluated with tolerance
//! [`CMP_EPS`]: a customer finishing exactly at the next arrival has left.

mod engine;
mod fluid;
mod schedule;

use alloc::vec::Vec;

use thiserror::Error;

use crate::measures::{CountingMeasure, MeasureError};
use crate::rates::RateFunction;

pub use engine::ForwardQueue;
pub use fluid::fluid_oracle_phi;
pub use schedule::{departure_schedule, trajectory, CycleSchedule, TrajectorySegment};

/// Tolerance on the departure test `a_i <= gamma_i`.
pub const CMP_EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("the profile is empty")]
    EmptyProfile,
    #[error("customer index {index} is outside 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("duration {0} must be finite and nonnegative")]
    InvalidDuration(f64),
    #[error("arrival times must be strictly increasing and nonnegative (event {index} at t = {time})")]
    UnorderedEvents { index: usize, time: f64 },
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

fn check_duration(x: f64) -> Result<(), DynamicsError> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(DynamicsError::InvalidDuration(x))
    }
}

/// `1/r(n+1) - 1/r(n)`, the extra time per unit of work a customer spends
/// because one more customer shares the server. Zero when `n = 0`.
#[inline]
fn sharing_penalty(r: &RateFunction, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        1.0 / r.rate(n + 1) - 1.0 / r.rate(n)
    }
}

/// All `gamma_i(mu, x)` for `i = 1..=N(mu)`, in order.
pub fn gamma_values(mu: &CountingMeasure, x: f64, r: &RateFunction) -> Vec<f64> {
    let atoms = mu.atoms();
    let n = atoms.len();
    let mut out = Vec::with_capacity(n);
    let mut correction = 0.0;
    for (k, &a) in atoms.iter().enumerate() {
        // k is the 0-based index, so i = k + 1 and r(N - i + 1) = r(n - k).
        out.push(r.rate(n - k) * (x - correction));
        correction += a * sharing_penalty(r, n - k - 1);
    }
    out
}

/// `gamma_i(mu, x)` for a single 1-based index `i`.
pub fn gamma_i(mu: &CountingMeasure, x: f64, r: &RateFunction, i: usize) -> Result<f64, DynamicsError> {
    let n = mu.num_atoms();
    if n == 0 {
        return Err(DynamicsError::EmptyProfile);
    }
    if i == 0 || i > n {
        return Err(DynamicsError::IndexOutOfRange { index: i, len: n });
    }
    check_duration(x)?;
    let atoms = mu.atoms();
    let correction: f64 = (1..i).map(|j| atoms[j - 1] * sharing_penalty(r, n - j)).sum();
    Ok(r.rate(n - i + 1) * (x - correction))
}

fn last_departure_from(atoms: &[f64], gammas: &[f64]) -> usize {
    atoms
        .iter()
        .zip(gammas)
        .rposition(|(a, g)| *a <= *g + CMP_EPS)
        .map_or(0, |k| k + 1)
}

/// `i_r(mu, x)`: the number of customers that leave before the next arrival.
pub fn last_departure_index(mu: &CountingMeasure, x: f64, r: &RateFunction) -> Result<usize, DynamicsError> {
    if mu.is_zero() {
        return Err(DynamicsError::EmptyProfile);
    }
    check_duration(x)?;
    Ok(last_departure_from(mu.atoms(), &gamma_values(mu, x, r)))
}

/// `gamma(mu, x) = max_i gamma_i(mu, x)`, the work received over the cycle
/// by every customer still present at its end.
pub fn gamma(mu: &CountingMeasure, x: f64, r: &RateFunction) -> Result<f64, DynamicsError> {
    if mu.is_zero() {
        return Err(DynamicsError::EmptyProfile);
    }
    check_duration(x)?;
    Ok(gamma_values(mu, x, r).into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// `Phi(mu, x)`, the profile after `x` time units without arrivals.
pub fn phi(mu: &CountingMeasure, x: f64, r: &RateFunction) -> Result<CountingMeasure, DynamicsError> {
    check_duration(x)?;
    if mu.is_zero() {
        return Ok(CountingMeasure::zero());
    }
    let gammas = gamma_values(mu, x, r);
    let departed = last_departure_from(mu.atoms(), &gammas);
    let g = gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let survivors: Vec<f64> = mu.atoms()[departed..]
        .iter()
        .map(|&a| a - g)
        .filter(|&v| v > 0.0)
        .collect();
    Ok(CountingMeasure::from_sorted_unchecked(survivors))
}

/// One arrival cycle: `Phi(mu + delta_sigma, xi)`.
pub fn step(mu: &CountingMeasure, sigma: f64, xi: f64, r: &RateFunction) -> Result<CountingMeasure, DynamicsError> {
    check_duration(xi)?;
    let mut with_arrival = mu.clone();
    with_arrival.insert(sigma)?;
    phi(&with_arrival, xi, r)
}

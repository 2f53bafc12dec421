//! Event-driven fluid simulation of the service discipline, used as an
//! independent check of [`phi`](super::phi). It never evaluates the closed
//! form: it repeatedly finds the customer that empties first at the current
//! per-customer rate, advances to that instant and decrements everyone.

use alloc::vec::Vec;

use crate::measures::CountingMeasure;
use crate::rates::RateFunction;

/// Same departure tolerance as the closed form, expressed in work units:
/// a customer leaves if its remaining work is within this of what the
/// remaining budget would give it.
const WORK_EPS: f64 = 1e-9;

/// Remaining times after `x` time units of processor sharing at rate
/// `r(Q)`, computed by explicit event stepping.
pub fn fluid_oracle_phi(mu: &CountingMeasure, x: f64, r: &RateFunction) -> CountingMeasure {
    let mut remaining: Vec<f64> = mu.atoms().to_vec();
    remaining.sort_by(|a, b| b.total_cmp(a)); // smallest last, popped first
    let mut budget = x.max(0.0);

    while let Some(&smallest) = remaining.last() {
        let rate = r.rate(remaining.len());
        let reachable = budget * rate;
        if smallest <= reachable + WORK_EPS {
            let elapsed = smallest / rate;
            remaining.pop();
            for v in remaining.iter_mut() {
                *v -= smallest;
            }
            budget = (budget - elapsed).max(0.0);
        } else {
            for v in remaining.iter_mut() {
                *v -= reachable;
            }
            break;
        }
    }

    let mut survivors: Vec<f64> = remaining.into_iter().filter(|&v| v > 0.0).collect();
    survivors.reverse();
    CountingMeasure::from_sorted_unchecked(survivors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(atoms: &[f64]) -> CountingMeasure {
        CountingMeasure::from_atoms(atoms.to_vec()).unwrap()
    }

    #[test]
    fn hand_computed_cycle() {
        // both share at rate 1/2 until t = 4 (first leaves), then the second
        // has 2 left and drains at rate 1 for the final unit of time.
        let out = fluid_oracle_phi(&m(&[2.0, 4.0]), 5.0, &RateFunction::classical_ps());
        assert_eq!(out.tv_distance(&m(&[1.0])), 0);
    }

    #[test]
    fn pure_delay_is_plain_shift() {
        let mu = m(&[0.5, 1.0, 2.0, 6.0]);
        let out = fluid_oracle_phi(&mu, 1.75, &RateFunction::pure_delay());
        assert_eq!(out.tv_distance(&mu.shift(1.75).unwrap()), 0);
    }

    #[test]
    fn empty_and_zero_budget() {
        let ps = RateFunction::classical_ps();
        assert!(fluid_oracle_phi(&CountingMeasure::zero(), 3.0, &ps).is_zero());
        let mu = m(&[0.0, 1.0, 2.0]);
        assert_eq!(fluid_oracle_phi(&mu, 0.0, &ps), m(&[1.0, 2.0]));
    }
}

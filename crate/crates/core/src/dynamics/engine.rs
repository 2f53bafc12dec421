//! Long-run forward simulation of the recursion.
//!
//! [`phi`](super::phi) rebuilds the whole profile each cycle. For long
//! forward runs, in particular unstable ones where the population grows
//! linearly, [`ForwardQueue`] keeps the atoms as absolute service targets
//! against a running per-customer drain counter, so a cycle costs
//! `O(departures + 1)` plus the sorted insertion of the arrival.

use alloc::collections::VecDeque;

use super::{check_duration, sharing_penalty, DynamicsError, CMP_EPS};
use crate::measures::CountingMeasure;
use crate::rates::RateFunction;

#[derive(Debug, Clone)]
pub struct ForwardQueue {
    rate: RateFunction,
    /// Per-customer work received since the queue was last empty.
    drained: f64,
    /// Remaining time of each customer plus `drained`, sorted.
    targets: VecDeque<f64>,
}

impl ForwardQueue {
    pub fn new(rate: RateFunction) -> Self {
        Self { rate, drained: 0.0, targets: VecDeque::new() }
    }

    pub fn with_profile(rate: RateFunction, profile: &CountingMeasure) -> Self {
        Self { rate, drained: 0.0, targets: profile.atoms().iter().copied().collect() }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn workload(&self) -> f64 {
        self.targets.iter().fold(0.0, |acc, t| acc + (t - self.drained))
    }

    pub fn profile(&self) -> CountingMeasure {
        let atoms = self.targets.iter().map(|t| (t - self.drained).max(0.0)).collect();
        CountingMeasure::from_sorted_unchecked(atoms)
    }

    pub fn arrive(&mut self, sigma: f64) -> Result<(), DynamicsError> {
        check_duration(sigma)?;
        let target = sigma + self.drained;
        let at = self.targets.partition_point(|&t| t <= target);
        self.targets.insert(at, target);
        Ok(())
    }

    /// Runs `x` time units without arrivals; returns the number of departures.
    pub fn advance(&mut self, x: f64) -> Result<usize, DynamicsError> {
        check_duration(x)?;
        let n = self.targets.len();
        if n == 0 {
            return Ok(0);
        }
        // By unimodality of gamma_i the departing customers form a prefix,
        // and the cycle drain equals gamma_i at the first survivor.
        let mut correction = 0.0;
        let mut gone = 0;
        let mut drain = None;
        for (k, &target) in self.targets.iter().enumerate() {
            let remaining = target - self.drained;
            let g = self.rate.rate(n - k) * (x - correction);
            if remaining <= g + CMP_EPS {
                gone += 1;
                correction += remaining * sharing_penalty(&self.rate, n - k - 1);
            } else {
                drain = Some(g);
                break;
            }
        }
        match drain {
            None => {
                self.targets.clear();
                self.drained = 0.0;
            }
            Some(g) => {
                self.targets.drain(..gone);
                self.drained += g;
            }
        }
        Ok(gone)
    }

    /// One arrival cycle: admit `sigma`, then run `xi` time units.
    pub fn step(&mut self, sigma: f64, xi: f64) -> Result<usize, DynamicsError> {
        self.arrive(sigma)?;
        self.advance(xi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::step;

    #[test]
    fn matches_closed_form_on_a_fixed_path() {
        let marks = [
            (3.0, 1.0),
            (0.5, 0.2),
            (2.2, 0.1),
            (0.1, 4.0),
            (6.0, 0.3),
            (1.0, 1.0),
            (1.0, 1.0),
            (0.2, 9.0),
        ];
        for r in [
            RateFunction::classical_ps(),
            RateFunction::half_interference(),
            RateFunction::nominal_table(),
            RateFunction::pure_delay(),
        ] {
            let mut q = ForwardQueue::new(r.clone());
            let mut mu = CountingMeasure::zero();
            for &(sigma, xi) in &marks {
                q.step(sigma, xi).unwrap();
                mu = step(&mu, sigma, xi, &r).unwrap();
                assert_eq!(q.profile().tv_distance(&mu), 0, "{:?} vs {:?}", q.profile(), mu);
                assert!((q.workload() - mu.workload()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn resets_drain_counter_when_empty() {
        let mut q = ForwardQueue::new(RateFunction::classical_ps());
        q.step(1.0, 0.5).unwrap();
        assert_eq!(q.len(), 1);
        assert_eq!(q.advance(1.0).unwrap(), 1);
        assert!(q.is_empty());
        assert_eq!(q.drained, 0.0);
    }
}

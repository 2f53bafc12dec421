//! Intra-cycle departure times and continuous-time reconstruction of the
//! congestion `Q(t)` and workload `W(t)` between arrivals.

use alloc::vec::Vec;

use super::{check_duration, gamma_values, last_departure_from, phi, sharing_penalty, DynamicsError};
use crate::measures::CountingMeasure;
use crate::rates::RateFunction;

/// Departure schedule of the customers present at `base_time`, assuming no
/// further arrivals, together with the cycle quantities for a cycle of
/// length `cycle_length`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CycleSchedule {
    pub base_time: f64,
    pub cycle_length: f64,
    /// Theoretical departure time of the customer holding the `i`-th
    /// smallest remaining time.
    pub departure_times: Vec<f64>,
    pub gamma_values: Vec<f64>,
    pub last_departure_index: usize,
    pub gamma: f64,
}

/// Builds the [`CycleSchedule`] of `mu` from `base_time`.
///
/// Departure times come from the closed form
/// `T'_i = T + a_i / r(N-i+1) + sum_{j<i} a_j (1/r(N-j+1) - 1/r(N-j))`.
pub fn departure_schedule(
    mu: &CountingMeasure,
    r: &RateFunction,
    base_time: f64,
    cycle_length: f64,
) -> Result<CycleSchedule, DynamicsError> {
    if mu.is_zero() {
        return Err(DynamicsError::EmptyProfile);
    }
    check_duration(cycle_length)?;
    let atoms = mu.atoms();
    let n = atoms.len();
    let mut departure_times = Vec::with_capacity(n);
    let mut correction = 0.0;
    for (k, &a) in atoms.iter().enumerate() {
        departure_times.push(base_time + a / r.rate(n - k) + correction);
        correction += a * sharing_penalty(r, n - k - 1);
    }
    let gammas = gamma_values(mu, cycle_length, r);
    let last = last_departure_from(atoms, &gammas);
    let gamma = gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(CycleSchedule {
        base_time,
        cycle_length,
        departure_times,
        gamma_values: gammas,
        last_departure_index: last,
        gamma,
    })
}

/// Piece of the sample path on which the number of customers is constant.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectorySegment {
    pub t_start: f64,
    pub t_end: f64,
    pub q: usize,
    pub w_start: f64,
    pub drain_rate: f64,
}

impl TrajectorySegment {
    pub fn workload_at(&self, t: f64) -> f64 {
        (self.w_start - self.drain_rate * (t - self.t_start)).max(0.0)
    }

    pub fn w_end(&self) -> f64 {
        self.workload_at(self.t_end)
    }
}

/// Appends the segments of `mu` evolving without arrivals over
/// `[start, start + x]` and returns the profile at the end.
fn advance(
    mu: &CountingMeasure,
    start: f64,
    x: f64,
    r: &RateFunction,
    out: &mut Vec<TrajectorySegment>,
) -> Result<CountingMeasure, DynamicsError> {
    let end = start + x;
    if mu.is_zero() {
        if x > 0.0 {
            out.push(TrajectorySegment { t_start: start, t_end: end, q: 0, w_start: 0.0, drain_rate: 0.0 });
        }
        return Ok(CountingMeasure::zero());
    }
    let schedule = departure_schedule(mu, r, start, x)?;
    let atoms = mu.atoms();
    let n = atoms.len();
    let departed = schedule.last_departure_index;

    let mut t = start;
    let mut drained = 0.0; // work received so far by each customer still present
    for i in 0..=departed {
        let q = n - i;
        let seg_end = if i < departed { schedule.departure_times[i].min(end) } else { end };
        if q == 0 {
            if seg_end > t {
                out.push(TrajectorySegment { t_start: t, t_end: seg_end, q: 0, w_start: 0.0, drain_rate: 0.0 });
            }
            break;
        }
        if seg_end > t {
            let w_start: f64 = atoms[i..].iter().map(|a| a - drained).sum();
            out.push(TrajectorySegment {
                t_start: t,
                t_end: seg_end,
                q,
                w_start: w_start.max(0.0),
                drain_rate: q as f64 * r.rate(q),
            });
            t = seg_end;
        }
        if i < departed {
            drained = atoms[i];
        }
    }
    phi(mu, x, r)
}

/// Stitches cycle schedules between arrivals into a piecewise description
/// of `Q(t)` and `W(t)` on `[0, horizon]`, starting from profile `mu0` at
/// time 0. Arrivals after `horizon` are ignored. A departure falling on an
/// arrival instant is processed first.
pub fn trajectory(
    mu0: &CountingMeasure,
    events: &[(f64, f64)],
    horizon: f64,
    r: &RateFunction,
) -> Result<Vec<TrajectorySegment>, DynamicsError> {
    check_duration(horizon)?;
    let mut prev = f64::NEG_INFINITY;
    for (index, &(time, sigma)) in events.iter().enumerate() {
        if !(time > prev) || time < 0.0 || !time.is_finite() {
            return Err(DynamicsError::UnorderedEvents { index, time });
        }
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(DynamicsError::InvalidDuration(sigma));
        }
        prev = time;
    }

    let mut out = Vec::new();
    let mut mu = mu0.clone();
    let mut t = 0.0;
    for &(time, sigma) in events.iter().take_while(|e| e.0 <= horizon) {
        mu = advance(&mu, t, time - t, r, &mut out)?;
        mu.insert(sigma)?;
        t = time;
    }
    advance(&mu, t, horizon - t, r, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn m(atoms: &[f64]) -> CountingMeasure {
        CountingMeasure::from_atoms(atoms.to_vec()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-12
    }

    /// Departure times by the step-by-step induction
    /// `T'_i = T'_{i-1} + (a_i - a_{i-1}) / r(N - i + 1)`.
    fn induction_departures(mu: &CountingMeasure, r: &RateFunction, base: f64) -> Vec<f64> {
        let n = mu.num_atoms();
        let mut prev_t = base;
        let mut prev_a = 0.0;
        mu.atoms()
            .iter()
            .enumerate()
            .map(|(k, &a)| {
                prev_t += (a - prev_a) / r.rate(n - k);
                prev_a = a;
                prev_t
            })
            .collect()
    }

    #[test]
    fn schedule_examples() {
        let ps = RateFunction::classical_ps();
        let s = departure_schedule(&m(&[2.0, 4.0]), &ps, 0.0, 5.0).unwrap();
        assert!(close(s.departure_times[0], 4.0) && close(s.departure_times[1], 6.0));
        assert_eq!(s.last_departure_index, 1);
        assert!(close(s.gamma, 3.0));

        let half = RateFunction::half_interference();
        let s = departure_schedule(&m(&[1.5]), &half, 0.0, 1.0).unwrap();
        assert!(close(s.departure_times[0], 1.5));

        let s = departure_schedule(&m(&[1.0, 2.0, 3.0]), &RateFunction::pure_delay(), 0.0, 0.0).unwrap();
        assert_eq!(s.departure_times, vec![1.0, 2.0, 3.0]);
        assert!(departure_schedule(&CountingMeasure::zero(), &ps, 0.0, 1.0).is_err());
    }

    #[test]
    fn closed_form_agrees_with_induction() {
        let profiles = [
            m(&[0.2, 0.9, 0.9, 3.1, 4.0, 8.8]),
            m(&[5.0]),
            m(&[1.0, 1.0, 1.0, 2.0]),
        ];
        let rates = [
            RateFunction::classical_ps(),
            RateFunction::half_interference(),
            RateFunction::nominal_table(),
            RateFunction::pure_delay(),
        ];
        for mu in &profiles {
            for r in &rates {
                let s = departure_schedule(mu, r, 10.0, 1.0).unwrap();
                let ind = induction_departures(mu, r, 10.0);
                for (a, b) in s.departure_times.iter().zip(&ind) {
                    assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                }
                assert!(s.departure_times.windows(2).all(|w| w[0] <= w[1] + 1e-12));
            }
        }
    }

    #[test]
    fn single_customer_trajectory() {
        let ps = RateFunction::classical_ps();
        let segs = trajectory(&CountingMeasure::zero(), &[(0.0, 2.0)], 3.0, &ps).unwrap();
        assert_eq!(segs.len(), 2);
        assert_eq!((segs[0].q, segs[0].t_start, segs[0].t_end), (1, 0.0, 2.0));
        assert!(close(segs[0].w_start, 2.0) && close(segs[0].drain_rate, 1.0));
        assert_eq!((segs[1].q, segs[1].t_start, segs[1].t_end), (0, 2.0, 3.0));
    }

    #[test]
    fn classical_ps_busy_period_drains_at_unit_rate() {
        let ps = RateFunction::classical_ps();
        let segs = trajectory(&CountingMeasure::zero(), &[(0.0, 2.0), (1.0, 2.0)], 5.0, &ps).unwrap();
        let qs: Vec<usize> = segs.iter().map(|s| s.q).collect();
        assert_eq!(qs, vec![1, 2, 1, 0]);
        let ends: Vec<f64> = segs.iter().map(|s| s.t_end).collect();
        for (a, b) in ends.iter().zip([1.0, 3.0, 4.0, 5.0]) {
            assert!(close(*a, b));
        }
        for s in &segs[..3] {
            assert!(close(s.drain_rate, 1.0));
        }
        // busy period of total length 4
        let busy: f64 = segs.iter().filter(|s| s.q > 0).map(|s| s.t_end - s.t_start).sum();
        assert!(close(busy, 4.0));
    }

    #[test]
    fn interference_halves_drain_rate() {
        let half = RateFunction::half_interference();
        let segs = trajectory(&CountingMeasure::zero(), &[(0.0, 1.0), (0.5, 1.0)], 10.0, &half).unwrap();
        assert!(close(segs[0].drain_rate, 1.0));
        assert_eq!(segs[1].q, 2);
        assert!(close(segs[1].drain_rate, 0.5));
        // at t = 0.5 the profile is {0.5, 1}; both drain at 1/4 until the
        // first finishes at t = 2.5.
        assert!(close(segs[1].t_end, 2.5));
        assert_eq!(segs[2].q, 1);
        assert!(close(segs[2].t_end, 3.0));
    }

    #[test]
    fn departure_on_arrival_instant_goes_first() {
        let ps = RateFunction::classical_ps();
        let segs = trajectory(&CountingMeasure::zero(), &[(0.0, 1.0), (1.0, 1.0)], 3.0, &ps).unwrap();
        let qs: Vec<usize> = segs.iter().map(|s| s.q).collect();
        assert_eq!(qs, vec![1, 1, 0]);
    }

    #[test]
    fn rejects_unordered_events() {
        let ps = RateFunction::classical_ps();
        let err = trajectory(&CountingMeasure::zero(), &[(1.0, 1.0), (1.0, 2.0)], 3.0, &ps).unwrap_err();
        assert_eq!(err, DynamicsError::UnorderedEvents { index: 1, time: 1.0 });
        assert!(trajectory(&CountingMeasure::zero(), &[(-1.0, 1.0)], 3.0, &ps).is_err());
    }

    #[test]
    fn workload_continuity_and_jump_count() {
        let r = RateFunction::nominal_table();
        let events = [(0.0, 2.0), (0.7, 0.4), (1.1, 3.0), (1.2, 0.1), (4.0, 1.0), (9.5, 0.3)];
        let segs = trajectory(&m(&[0.5, 1.5]), &events, 12.0, &r).unwrap();
        assert!(close(segs[0].t_start, 0.0));
        assert!(close(segs.last().unwrap().t_end, 12.0));
        let mut arrivals_seen = 0;
        let mut up = 0;
        let mut down = 0;
        for w in segs.windows(2) {
            assert!(close(w[0].t_end, w[1].t_start));
            let at_arrival = events.iter().position(|e| close(e.0, w[1].t_start));
            match at_arrival {
                Some(k) => {
                    arrivals_seen += 1;
                    assert!((w[0].w_end() + events[k].1 - w[1].w_start).abs() < 1e-9);
                }
                None => assert!((w[0].w_end() - w[1].w_start).abs() < 1e-9),
            }
            if w[1].q > w[0].q {
                up += w[1].q - w[0].q;
            } else {
                down += w[0].q - w[1].q;
            }
        }
        // every segment boundary is an arrival or a departure; arrivals at
        // t = 0 are absorbed into the first segment
        let initial_q = segs[0].q;
        assert_eq!(initial_q, 3);
        assert_eq!(arrivals_seen, events.len() - 1);
        // each customer leaves by t = 12, and each departure is a -1 jump
        // unless it coincides with an arrival
        assert_eq!(segs.last().unwrap().q, 0);
        assert_eq!(initial_q + up, down);
    }
}

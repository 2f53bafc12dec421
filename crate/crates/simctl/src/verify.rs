//! Statistical cross-checks against classical closed forms and the
//! instability detector, plus the combined verification run.

use psq_core::checks::{all_suites, SuiteOutcome};
use psq_core::input::{Dist, InputModel, MarkedInputGenerator};
use psq_core::rates::RateFunction;
use psq_core::stationary::{backward_coupling_ps, check_stability, Verdict};
use psq_core::stats::linear_fit;
use serde::Serialize;

use crate::campaign::{forward_run, gginf_campaign, mean_se, perfect_campaign, Pool};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl From<SuiteOutcome> for CheckLine {
    fn from(s: SuiteOutcome) -> Self {
        Self {
            name: s.name.to_string(),
            passed: s.passed(),
            detail: format!("{} cases, {} failures; {}", s.cases, s.failures, s.detail),
        }
    }
}

fn mm(mean_xi: f64, mean_sigma: f64) -> InputModel {
    InputModel::iid(Dist::Exponential { mean: mean_xi }, Dist::Exponential { mean: mean_sigma }).expect("positive means")
}

/// Mean stationary queue length of M/M/1-PS at load 0.5 against 1.
pub fn mm1_ps_mean(pool: &Pool, seed: u64, samples: u64) -> CheckLine {
    let rows = perfect_campaign(pool, &mm(2.0, 1.0), &RateFunction::classical_ps(), seed, samples, 100_000)
        .expect("classical rate is valid");
    let coupled = rows.iter().filter(|r| r.coupled).count() as u64;
    let (mean, se) = mean_se(rows.iter().filter_map(|r| r.customers).map(|n| n as f64));
    CheckLine {
        name: "M/M/1-PS mean queue length".into(),
        passed: coupled == samples && (mean - 1.0).abs() <= 3.0 * se,
        detail: format!("mean {mean:.5} +- {se:.5} (target 1) over {coupled}/{samples} samples"),
    }
}

/// Mean stationary occupancy of M/M/infinity at offered load 2 against 2.
pub fn mminf_mean(pool: &Pool, seed: u64, samples: u64) -> CheckLine {
    let rows = gginf_campaign(pool, &mm(1.0, 2.0), seed, samples, 1_000_000);
    let converged = rows.iter().filter(|r| r.converged).count() as u64;
    let (mean, se) = mean_se(rows.iter().filter(|r| r.converged).map(|r| r.customers as f64));
    CheckLine {
        name: "M/M/inf mean occupancy".into(),
        passed: converged == samples && (mean - 2.0).abs() <= 3.0 * se,
        detail: format!("mean {mean:.5} +- {se:.5} (target 2) over {converged}/{samples} samples"),
    }
}

/// Deterministic overload: unstable verdict, no coupling, and linear
/// growth of the forward queue length.
pub fn instability(steps: u64, max_lookback: u64) -> CheckLine {
    let g = MarkedInputGenerator::new(InputModel::deterministic(1.0, 2.0).expect("valid"), 0);
    let r = RateFunction::classical_ps();
    let verdict = check_stability(&g, &r, 10_000).verdict;
    let coupling = backward_coupling_ps(&g, &r, max_lookback).expect("valid rate");
    let (_, counts) = forward_run(&g, &r, steps, None);
    let thin = (steps / 1000).max(1) as usize;
    let fit = linear_fit(counts.iter().enumerate().step_by(thin).map(|(n, &q)| ((n + 1) as f64, q as f64)));
    let (slope, slope_se) = fit.map_or((f64::NAN, f64::NAN), |f| (f.slope, f.slope_se));
    let ratio = *counts.last().unwrap_or(&0) as f64 / steps as f64;
    CheckLine {
        name: "instability detection".into(),
        passed: verdict == Verdict::Unstable && !coupling.coupled && slope > 3.0 * slope_se && slope > 0.0,
        detail: format!(
            "verdict {verdict:?}, coupled {}, slope {slope:.6} +- {slope_se:.2e}, Q_n/n at n={steps}: {ratio:.6}",
            coupling.coupled
        ),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyScale {
    pub cases: u64,
    pub replications: u64,
    pub steps: u64,
    pub closed_form_samples: u64,
    pub forward_steps: u64,
}

impl VerifyScale {
    pub const FULL: Self =
        Self { cases: 10_000, replications: 1_000, steps: 10_000, closed_form_samples: 100_000, forward_steps: 100_000 };
    pub const QUICK: Self =
        Self { cases: 1_000, replications: 100, steps: 2_000, closed_form_samples: 10_000, forward_steps: 10_000 };
}

pub fn verify_all(pool: &Pool, seed: u64, scale: VerifyScale) -> Vec<CheckLine> {
    let mut lines: Vec<CheckLine> =
        all_suites(seed, scale.cases, scale.replications, scale.steps).into_iter().map(Into::into).collect();
    lines.push(mm1_ps_mean(pool, seed ^ 0x51, scale.closed_form_samples));
    lines.push(mminf_mean(pool, seed ^ 0x52, scale.closed_form_samples));
    lines.push(instability(scale.forward_steps, 10_000));
    lines
}

//! Replication campaigns. Replication `i` uses seed
//! `replication_seed(base_seed, i)` and results are collected in
//! replication order, so the worker count never changes the output.

use psq_core::dynamics::ForwardQueue;
use psq_core::input::{replication_seed, InputModel, MarkedInputGenerator};
use psq_core::rates::{RateFunction, RateKind};
use psq_core::stationary::{
    backward_coupling_ps, check_stability, loynes_l, stationary_profile_gginf, StationaryError, Verdict,
};
use psq_core::stats::RunningStats;
use rayon::prelude::*;
use serde::Serialize;

/// A worker pool of fixed size.
pub struct Pool(rayon::ThreadPool);

impl Pool {
    /// `jobs = 0` uses the available parallelism.
    pub fn new(jobs: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool");
        Self(pool)
    }

    pub fn map<T, F>(&self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        self.0.install(|| (0..n).into_par_iter().map(f).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardRow {
    pub replication: u64,
    pub seed: u64,
    pub steps: u64,
    pub final_customers: usize,
    pub final_workload: f64,
    pub mean_customers: f64,
    pub mean_workload: f64,
    pub departures: u64,
}

/// State after each of the first steps of a forward run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TracePoint {
    pub n: u64,
    pub customers: usize,
    pub workload: f64,
}

/// Runs the queue from empty for `steps` arrivals.
pub fn forward_run(
    g: &MarkedInputGenerator,
    r: &RateFunction,
    steps: u64,
    mut trace: Option<&mut Vec<TracePoint>>,
) -> (u64, Vec<usize>) {
    let mut q = ForwardQueue::new(r.clone());
    let mut departures = 0u64;
    let mut counts = Vec::with_capacity(steps as usize);
    for n in 0..steps {
        let mk = g.sample(n as i64);
        departures += q.step(mk.sigma, mk.xi).expect("generated marks are valid") as u64;
        counts.push(q.len());
        if let Some(t) = trace.as_deref_mut() {
            t.push(TracePoint { n: n + 1, customers: q.len(), workload: q.workload() });
        }
    }
    (departures, counts)
}

pub fn forward_campaign(
    pool: &Pool,
    model: &InputModel,
    r: &RateFunction,
    base_seed: u64,
    replications: u64,
    steps: u64,
) -> Vec<ForwardRow> {
    let base = MarkedInputGenerator::new(model.clone(), base_seed);
    pool.map(replications, |i| {
        let seed = replication_seed(base_seed, i);
        let g = base.with_seed(seed);
        let mut q = ForwardQueue::new(r.clone());
        let (mut nstats, mut wstats) = (RunningStats::new(), RunningStats::new());
        let mut departures = 0u64;
        for n in 0..steps {
            let mk = g.sample(n as i64);
            departures += q.step(mk.sigma, mk.xi).expect("generated marks are valid") as u64;
            nstats.push(q.len() as f64);
            wstats.push(q.workload());
        }
        ForwardRow {
            replication: i,
            seed,
            steps,
            final_customers: q.len(),
            final_workload: q.workload(),
            mean_customers: nstats.mean(),
            mean_workload: wstats.mean(),
            departures,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GgInfRow {
    pub replication: u64,
    pub seed: u64,
    pub converged: bool,
    pub customers: usize,
    pub workload: f64,
    pub loynes_l: f64,
    pub terms_scanned: u64,
    pub atoms: Vec<f64>,
}

pub fn gginf_campaign(
    pool: &Pool,
    model: &InputModel,
    base_seed: u64,
    replications: u64,
    max_lookback: u64,
) -> Vec<GgInfRow> {
    let base = MarkedInputGenerator::new(model.clone(), base_seed);
    pool.map(replications, |i| {
        let seed = replication_seed(base_seed, i);
        let g = base.with_seed(seed);
        let p = stationary_profile_gginf(&g, max_lookback);
        let l = loynes_l(&g, max_lookback);
        GgInfRow {
            replication: i,
            seed,
            converged: p.converged && l.converged,
            customers: p.profile.num_atoms(),
            workload: p.profile.workload(),
            loynes_l: l.value,
            terms_scanned: p.terms_scanned.max(l.terms_scanned),
            atoms: p.profile.into_atoms(),
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerfectRow {
    pub replication: u64,
    pub seed: u64,
    pub coupled: bool,
    pub regeneration_index: Option<i64>,
    pub customers: Option<usize>,
    pub workload: Option<f64>,
    pub iterations: u64,
    pub atoms: Option<Vec<f64>>,
}

pub fn perfect_campaign(
    pool: &Pool,
    model: &InputModel,
    r: &RateFunction,
    base_seed: u64,
    replications: u64,
    max_lookback: u64,
) -> Result<Vec<PerfectRow>, StationaryError> {
    // surface an invalid rate once rather than per replication
    backward_coupling_ps(&MarkedInputGenerator::new(model.clone(), base_seed), r, 1)?;
    let base = MarkedInputGenerator::new(model.clone(), base_seed);
    let rows = pool.map(replications, |i| {
        let seed = replication_seed(base_seed, i);
        let rep = backward_coupling_ps(&base.with_seed(seed), r, max_lookback).expect("rate validated above");
        let profile = rep.stationary_profile;
        PerfectRow {
            replication: i,
            seed,
            coupled: rep.coupled,
            regeneration_index: rep.regeneration_index,
            customers: profile.as_ref().map(|p| p.num_atoms()),
            workload: profile.as_ref().map(|p| p.workload()),
            iterations: rep.iterations_used,
            atoms: profile.map(|p| p.into_atoms()),
        }
    });
    Ok(rows)
}

/// Mean and standard error of `values`.
pub fn mean_se(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let s: RunningStats = values.into_iter().collect();
    (s.mean(), s.std_error())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub rho: f64,
    pub mean_sigma: f64,
    pub verdict: String,
    pub rho_hat: f64,
    pub coupling_frequency: f64,
    pub mean_customers: f64,
    pub se_customers: f64,
    pub mean_workload: f64,
    pub se_workload: f64,
    pub replications: u64,
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Stable => "stable",
        Verdict::Unstable => "unstable",
        Verdict::Inconclusive => "inconclusive",
    }
}

/// Load `rho` for `model` under `r`: `E[sigma] / (K_r E[xi])`, or
/// `E[sigma] / E[xi]` for the infinite-server system.
pub fn load(model: &InputModel, r: &RateFunction) -> f64 {
    if matches!(r.kind(), RateKind::PureDelay) {
        model.mean_sigma() / model.mean_xi()
    } else {
        model.mean_sigma() / (r.floor() * model.mean_xi())
    }
}

/// For each `rho`, rescales the service law to that load and draws
/// `replications` stationary samples.
#[allow(clippy::too_many_arguments)]
pub fn sweep(
    pool: &Pool,
    model: &InputModel,
    r: &RateFunction,
    grid: &[f64],
    base_seed: u64,
    replications: u64,
    max_lookback: u64,
    stability_samples: u64,
) -> Result<Vec<SweepRow>, StationaryError> {
    let base_load = load(model, r);
    let infinite_server = matches!(r.kind(), RateKind::PureDelay);
    let mut out = Vec::with_capacity(grid.len());
    for (point, &rho) in grid.iter().enumerate() {
        let scaled = model.scale_sigma(rho / base_load);
        let seed = replication_seed(base_seed, 1_000_003 * point as u64 + 17);
        let (verdict, rho_hat) = if infinite_server {
            (String::from("not_applicable"), rho)
        } else {
            let report = check_stability(&MarkedInputGenerator::new(scaled.clone(), seed), r, stability_samples as usize);
            (verdict_name(report.verdict).to_string(), report.rho_hat)
        };
        let samples: Vec<(bool, f64, f64)> = if infinite_server {
            gginf_campaign(pool, &scaled, seed, replications, max_lookback)
                .into_iter()
                .map(|row| (row.converged, row.customers as f64, row.workload))
                .collect()
        } else {
            perfect_campaign(pool, &scaled, r, seed, replications, max_lookback)?
                .into_iter()
                .map(|row| (row.coupled, row.customers.unwrap_or(0) as f64, row.workload.unwrap_or(0.0)))
                .collect()
        };
        let ok: Vec<&(bool, f64, f64)> = samples.iter().filter(|s| s.0).collect();
        let (mean_customers, se_customers) = mean_se(ok.iter().map(|s| s.1));
        let (mean_workload, se_workload) = mean_se(ok.iter().map(|s| s.2));
        let empty = ok.is_empty();
        out.push(SweepRow {
            rho,
            mean_sigma: scaled.mean_sigma(),
            verdict,
            rho_hat,
            coupling_frequency: ok.len() as f64 / replications as f64,
            mean_customers: if empty { f64::NAN } else { mean_customers },
            se_customers: if empty { f64::NAN } else { se_customers },
            mean_workload: if empty { f64::NAN } else { mean_workload },
            se_workload: if empty { f64::NAN } else { se_workload },
            replications,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use psq_core::input::Dist;

    fn mm(mean_xi: f64, mean_sigma: f64) -> InputModel {
        InputModel::iid(Dist::Exponential { mean: mean_xi }, Dist::Exponential { mean: mean_sigma }).unwrap()
    }

    #[test]
    fn results_do_not_depend_on_worker_count() {
        let model = mm(3.0, 1.0);
        let r = RateFunction::half_interference();
        let a = perfect_campaign(&Pool::new(1), &model, &r, 5, 40, 10_000).unwrap();
        let b = perfect_campaign(&Pool::new(4), &model, &r, 5, 40, 10_000).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[3].seed, replication_seed(5, 3));
    }

    #[test]
    fn sweep_verdict_flips_at_unit_load() {
        let model = mm(1.0, 0.5);
        let grid = [0.3, 0.6, 0.9, 1.2, 1.5];
        let rows = sweep(&Pool::new(0), &model, &RateFunction::classical_ps(), &grid, 1, 20, 2000, 100_000).unwrap();
        let verdicts: Vec<&str> = rows.iter().map(|r| r.verdict.as_str()).collect();
        assert_eq!(verdicts, ["stable", "stable", "stable", "unstable", "unstable"]);
        assert!((rows[1].mean_sigma - 0.6).abs() < 1e-12);
        assert_eq!(rows[4].coupling_frequency, 0.0);
        assert!(rows[0].coupling_frequency >= rows[4].coupling_frequency);
    }

    #[test]
    fn pure_delay_load_uses_unit_rate() {
        let model = mm(1.0, 0.5);
        assert_eq!(load(&model, &RateFunction::pure_delay()), 0.5);
        assert_eq!(load(&model, &RateFunction::half_interference()), 1.0);
    }
}

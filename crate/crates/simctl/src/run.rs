//! Executes one configured experiment and writes its artifacts.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use psq_core::checks::all_suites;
use psq_core::stationary::StationaryError;
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::campaign::{self, mean_se, Pool};
use crate::config::{ConfigError, ExperimentConfig, Format, Mode};
use crate::output::{fmt_f64, fmt_opt, sha256_hex, to_json, write_atomic, Table};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid config: {0}")]
    Config(#[from] ConfigError),
    #[error("I/O failure on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{count} replication(s) exhausted the lookback without a result (strict mode); partial results in {}", out_dir.display())]
    Exhausted { count: u64, out_dir: PathBuf },
    #[error("{0} invariant suite(s) failed")]
    SuitesFailed(u64),
}

impl SimError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::SuitesFailed(_) => 1,
            Self::Config(_) => 2,
            Self::Io { .. } => 3,
            Self::Exhausted { .. } => 4,
        }
    }
}

impl From<StationaryError> for SimError {
    fn from(e: StationaryError) -> Self {
        Self::Config(ConfigError(format!("[rate]: {e}")))
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SimError + '_ {
    move |source| SimError::Io { path: path.to_path_buf(), source }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub jobs: usize,
    pub strict: bool,
    pub out_dir: Option<PathBuf>,
    /// Forces a load sweep over this grid.
    pub rho: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub exhausted: u64,
}

pub fn run_file(path: &Path, opts: &RunOptions) -> Result<RunOutcome, SimError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| ConfigError(format!("{} is not UTF-8 text", path.display())))?;
    let cfg = ExperimentConfig::from_toml(&text)?;
    run_config(&cfg, &bytes, opts)
}

struct Artifacts {
    dir: PathBuf,
    written: Vec<(String, String)>,
    paths: Vec<PathBuf>,
}

impl Artifacts {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), SimError> {
        let path = write_atomic(&self.dir, name, bytes).map_err(io_err(&self.dir.join(name)))?;
        self.written.push((name.to_string(), sha256_hex(bytes)));
        self.paths.push(path);
        Ok(())
    }

    fn results<T: Serialize>(&mut self, format: Format, table: Table, rows: &T) -> Result<(), SimError> {
        match format {
            Format::Csv => {
                let bytes = table.to_csv().map_err(io_err(&self.dir))?;
                self.write("results.csv", &bytes)
            }
            Format::Json => {
                let bytes = to_json(rows).map_err(io_err(&self.dir))?;
                self.write("results.json", &bytes)
            }
        }
    }
}

pub fn run_config(cfg: &ExperimentConfig, config_bytes: &[u8], opts: &RunOptions) -> Result<RunOutcome, SimError> {
    let started = Instant::now();
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.base_seed = seed;
    }
    cfg.strict |= opts.strict;
    let mode = if opts.rho.is_some() { Mode::StabilitySweep } else { cfg.mode };
    let grid = match (&opts.rho, &cfg.sweep) {
        (Some(g), _) => Some(g.clone()),
        (None, Some(s)) => Some(s.rho.values()?),
        (None, None) => None,
    };
    let out_dir = opts.out_dir.clone().unwrap_or_else(|| cfg.output.clone());
    let pool = Pool::new(opts.jobs);
    let mut art = Artifacts { dir: out_dir.clone(), written: Vec::new(), paths: Vec::new() };
    let mut exhausted = 0u64;
    let mut suites_failed = 0u64;

    let summary = match mode {
        Mode::ForwardSim => {
            let model = cfg.input_model()?;
            let r = cfg.rate_function()?;
            let rows = campaign::forward_campaign(&pool, &model, &r, cfg.base_seed, cfg.replications, cfg.horizon);
            let mut t = Table::new(vec![
                "replication",
                "seed",
                "steps",
                "final_customers",
                "final_workload",
                "mean_customers",
                "mean_workload",
                "departures",
            ]);
            for row in &rows {
                t.push(vec![
                    row.replication.to_string(),
                    row.seed.to_string(),
                    row.steps.to_string(),
                    row.final_customers.to_string(),
                    fmt_f64(row.final_workload),
                    fmt_f64(row.mean_customers),
                    fmt_f64(row.mean_workload),
                    row.departures.to_string(),
                ]);
            }
            art.results(cfg.format, t, &rows)?;
            if cfg.trace {
                let g = psq_core::input::MarkedInputGenerator::new(model, psq_core::input::replication_seed(cfg.base_seed, 0));
                let mut trace = Vec::new();
                campaign::forward_run(&g, &r, cfg.horizon, Some(&mut trace));
                let mut t = Table::new(vec!["n", "customers", "workload"]);
                for p in &trace {
                    t.push(vec![p.n.to_string(), p.customers.to_string(), fmt_f64(p.workload)]);
                }
                art.write("trace.csv", &t.to_csv().map_err(io_err(&out_dir))?)?;
            }
            let (n, n_se) = mean_se(rows.iter().map(|r| r.mean_customers));
            let (w, w_se) = mean_se(rows.iter().map(|r| r.mean_workload));
            json!({
                "replications": cfg.replications,
                "steps": cfg.horizon,
                "mean_customers": n, "se_customers": n_se,
                "mean_workload": w, "se_workload": w_se,
            })
        }
        Mode::GginfStationary => {
            let model = cfg.input_model()?;
            let rows = campaign::gginf_campaign(&pool, &model, cfg.base_seed, cfg.replications, cfg.max_lookback);
            let mut t = Table::new(vec![
                "replication",
                "seed",
                "converged",
                "customers",
                "workload",
                "loynes_l",
                "terms_scanned",
            ]);
            for row in &rows {
                t.push(vec![
                    row.replication.to_string(),
                    row.seed.to_string(),
                    row.converged.to_string(),
                    row.customers.to_string(),
                    fmt_f64(row.workload),
                    fmt_f64(row.loynes_l),
                    row.terms_scanned.to_string(),
                ]);
            }
            art.results(cfg.format, t, &rows)?;
            let ok: Vec<_> = rows.iter().filter(|r| r.converged).collect();
            exhausted = (rows.len() - ok.len()) as u64;
            let (p0, p0_se) = mean_se(ok.iter().map(|r| if r.loynes_l == 0.0 { 1.0 } else { 0.0 }));
            let (n, n_se) = mean_se(ok.iter().map(|r| r.customers as f64));
            let (w, w_se) = mean_se(ok.iter().map(|r| r.workload));
            json!({
                "replications": cfg.replications,
                "converged": ok.len(),
                "prob_empty": p0, "se_prob_empty": p0_se,
                "mean_customers": n, "se_customers": n_se,
                "mean_workload": w, "se_workload": w_se,
            })
        }
        Mode::PsPerfectSample => {
            let model = cfg.input_model()?;
            let r = cfg.rate_function()?;
            let rows =
                campaign::perfect_campaign(&pool, &model, &r, cfg.base_seed, cfg.replications, cfg.max_lookback)?;
            let mut t = Table::new(vec!["seed", "coupled", "regeneration_index", "customers", "workload", "iterations"]);
            for row in &rows {
                t.push(vec![
                    row.seed.to_string(),
                    row.coupled.to_string(),
                    fmt_opt(row.regeneration_index),
                    fmt_opt(row.customers),
                    row.workload.map(fmt_f64).unwrap_or_default(),
                    row.iterations.to_string(),
                ]);
            }
            art.results(cfg.format, t, &rows)?;
            let ok: Vec<_> = rows.iter().filter(|r| r.coupled).collect();
            exhausted = (rows.len() - ok.len()) as u64;
            let (n, n_se) = mean_se(ok.iter().filter_map(|r| r.customers).map(|n| n as f64));
            let (w, w_se) = mean_se(ok.iter().filter_map(|r| r.workload));
            json!({
                "replications": cfg.replications,
                "coupled": ok.len(),
                "coupling_frequency": ok.len() as f64 / cfg.replications as f64,
                "rho": campaign::load(&model, &r),
                "mean_customers": n, "se_customers": n_se,
                "mean_workload": w, "se_workload": w_se,
            })
        }
        Mode::StabilitySweep => {
            let model = cfg.input_model()?;
            let r = cfg.rate_function()?;
            let grid = grid.ok_or_else(|| ConfigError("a load sweep needs a rho grid ([sweep] rho or --rho)".into()))?;
            let samples = cfg.sweep.as_ref().map_or(100_000, |s| s.stability_samples);
            let rows = campaign::sweep(
                &pool,
                &model,
                &r,
                &grid,
                cfg.base_seed,
                cfg.replications,
                cfg.max_lookback,
                samples,
            )?;
            let mut t = Table::new(vec![
                "rho",
                "mean_sigma",
                "verdict",
                "rho_hat",
                "coupling_frequency",
                "mean_customers",
                "se_customers",
                "mean_workload",
                "se_workload",
                "replications",
            ]);
            for row in &rows {
                t.push(vec![
                    fmt_f64(row.rho),
                    fmt_f64(row.mean_sigma),
                    row.verdict.clone(),
                    fmt_f64(row.rho_hat),
                    fmt_f64(row.coupling_frequency),
                    fmt_f64(row.mean_customers),
                    fmt_f64(row.se_customers),
                    fmt_f64(row.mean_workload),
                    fmt_f64(row.se_workload),
                    row.replications.to_string(),
                ]);
            }
            exhausted = rows
                .iter()
                .map(|r| ((1.0 - r.coupling_frequency) * r.replications as f64).round() as u64)
                .sum();
            art.results(cfg.format, t, &rows)?;
            json!({ "grid_points": rows.len(), "replications_per_point": cfg.replications, "exhausted": exhausted })
        }
        Mode::InvariantSuite => {
            let scale = cfg.suite.unwrap_or_default();
            let outcomes = all_suites(cfg.base_seed, scale.cases, scale.replications, scale.steps);
            let mut t = Table::new(vec!["suite", "cases", "failures", "passed", "detail"]);
            for o in &outcomes {
                t.push(vec![
                    o.name.to_string(),
                    o.cases.to_string(),
                    o.failures.to_string(),
                    o.passed().to_string(),
                    o.detail.clone(),
                ]);
            }
            suites_failed = outcomes.iter().filter(|o| !o.passed()).count() as u64;
            art.results(cfg.format, t, &outcomes)?;
            json!({ "suites": outcomes.len(), "failed": suites_failed })
        }
    };
    art.write("summary.json", &to_json(&summary).map_err(io_err(&out_dir))?)?;

    let files: Vec<_> = art.written.iter().map(|(name, hash)| json!({ "name": name, "sha256": hash })).collect();
    let manifest = json!({
        "schema_id": crate::config::SCHEMA_ID,
        "simctl_version": env!("CARGO_PKG_VERSION"),
        "psq_core_version": psq_core::VERSION,
        "mode": mode.as_str(),
        "config_sha256": sha256_hex(config_bytes),
        "base_seed": cfg.base_seed,
        "strict": cfg.strict,
        "jobs": pool_size(opts.jobs),
        "files": files,
        "wall_time_seconds": started.elapsed().as_secs_f64(),
    });
    art.write("manifest.json", &to_json(&manifest).map_err(io_err(&out_dir))?)?;

    if suites_failed > 0 {
        return Err(SimError::SuitesFailed(suites_failed));
    }
    if cfg.strict && exhausted > 0 {
        return Err(SimError::Exhausted { count: exhausted, out_dir });
    }
    Ok(RunOutcome { out_dir, files: art.paths, exhausted })
}

fn pool_size(jobs: usize) -> usize {
    if jobs == 0 {
        rayon::current_num_threads()
    } else {
        jobs
    }
}

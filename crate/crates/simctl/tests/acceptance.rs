//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use psq_core::checks::{
    backward_fixed_points, gamma_unimodality, gginf_fixed_point, oracle_equivalence, perfect_sampling,
    profile_monotonicity, rate_monotonicity, workload_domination, SuiteOutcome,
};
use simctl::campaign::Pool;
use simctl::run::{run_file, RunOptions};
use simctl::verify::{instability, mm1_ps_mean, mminf_mean, CheckLine};

struct Criterion {
    id: u32,
    title: &'static str,
    passed: bool,
    detail: String,
    elapsed: Duration,
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed())
}

fn suite(id: u32, title: &'static str, budget: Option<Duration>, f: impl FnOnce() -> SuiteOutcome) -> Criterion {
    let (outcome, elapsed) = timed(f);
    let in_time = budget.is_none_or(|b| elapsed <= b);
    let mut detail = format!("{} cases, {} failures", outcome.cases, outcome.failures);
    if !outcome.detail.is_empty() {
        detail = format!("{detail}; {}", outcome.detail);
    }
    if !in_time {
        detail = format!("{detail}; over time budget {budget:?}");
    }
    Criterion { id, title, passed: outcome.passed() && outcome.cases > 0 && in_time, detail, elapsed }
}

fn lines(id: u32, title: &'static str, budget: Option<Duration>, f: impl FnOnce() -> Vec<CheckLine>) -> Criterion {
    let (checks, elapsed) = timed(f);
    let in_time = budget.is_none_or(|b| elapsed <= b);
    let mut detail = checks.iter().map(|c| format!("{}: {}", c.name, c.detail)).collect::<Vec<_>>().join(" | ");
    if !in_time {
        detail = format!("{detail}; over time budget {budget:?}");
    }
    Criterion { id, title, passed: in_time && checks.iter().all(|c| c.passed), detail, elapsed }
}

fn result_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .expect("output dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.file_name().is_some_and(|n| n != "manifest.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).expect("readable")))
        .collect();
    files.sort();
    files
}

fn determinism() -> (bool, String) {
    let configs_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut configs: Vec<PathBuf> = fs::read_dir(&configs_dir)
        .expect("configs directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    configs.sort();
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut report = Vec::new();
    let mut ok = !configs.is_empty();
    for cfg in &configs {
        let name = cfg.file_stem().unwrap().to_string_lossy().into_owned();
        let mut outputs = Vec::new();
        for (run, jobs) in [(0, 1), (1, 4)] {
            let opts = RunOptions { out_dir: Some(tmp.path().join(format!("{name}-{run}"))), jobs, ..Default::default() };
            match run_file(cfg, &opts) {
                Ok(outcome) => outputs.push(result_files(&outcome.out_dir)),
                Err(e) => {
                    ok = false;
                    report.push(format!("{name}: {e}"));
                }
            }
        }
        if outputs.len() == 2 {
            let same = outputs[0] == outputs[1] && !outputs[0].is_empty();
            ok &= same;
            report.push(format!("{name}: {} files {}", outputs[0].len(), if same { "identical" } else { "DIFFER" }));
        }
    }
    (ok, report.join(", "))
}

fn main() {
    let seed = 20_240_601;
    let pool = Pool::new(0);
    let secs = Duration::from_secs;
    let mut results = Vec::new();

    results.push(suite(1, "closed-form update equals fluid oracle", Some(secs(10)), || {
        oracle_equivalence(seed, 10_000)
    }));
    results.push(suite(2, "gamma is the maximum and gamma_i is unimodal", None, || {
        gamma_unimodality(seed + 1, 10_000)
    }));
    results.push(suite(3, "update is monotone in the profile", None, || profile_monotonicity(seed + 2, 10_000)));
    results.push(suite(4, "update is monotone in the rate", None, || rate_monotonicity(seed + 3, 10_000)));
    results.push(suite(5, "infinite-server stationary profile fixed point", None, || {
        gginf_fixed_point(seed + 4, 1_000, 1_000_000)
    }));
    results.push(suite(6, "L and W one-step fixed points", None, || backward_fixed_points(seed + 5, 1_000, 1_000_000)));
    results.push(suite(7, "perfect sampling couples and is stationary", Some(secs(120)), || {
        perfect_sampling(seed + 6, 1_000, 10_000, 0.99)
    }));
    results.push(suite(8, "workload identity and domination", None, || workload_domination(seed + 7, 10_000)));
    results.push(lines(9, "M/M/1-PS and M/M/inf closed forms", Some(secs(300)), || {
        vec![mm1_ps_mean(&pool, seed + 8, 100_000), mminf_mean(&pool, seed + 9, 100_000)]
    }));
    results.push(lines(10, "instability detection", None, || vec![instability(100_000, 10_000)]));
    let ((ok, detail), elapsed) = timed(determinism);
    results.push(Criterion { id: 11, title: "equal seeds give byte-identical outputs", passed: ok, detail, elapsed });

    let mut failed = 0;
    for c in &results {
        println!(
            "criterion {:>2} [PRIMARY] {} - {} ({:.2}s): {}",
            c.id,
            if c.passed { "PASS" } else { "FAIL" },
            c.title,
            c.elapsed.as_secs_f64(),
            c.detail
        );
        failed += usize::from(!c.passed);
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

//! Command-line interface.

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::campaign::Pool;
use crate::config::RhoGrid;
use crate::output::{to_json, write_atomic};
use crate::run::{run_file, RunOptions};
use crate::verify::{verify_all, VerifyScale};

#[derive(Debug, Parser)]
#[command(name = "simctl", version, about = "Simulation and perfect sampling of processor-sharing queues")]
pub struct Cli {
    /// Override the configured base seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = available parallelism).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Fail with exit code 4 when a replication exhausts its lookback.
    #[arg(long, global = true)]
    pub strict: bool,
    /// Output directory.
    #[arg(long, global = true, env = "SIMCTL_OUT_DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Sweep the load over a grid, e.g. --rho 0.1:1.5:0.1.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        rho: String,
    },
    /// Run every invariant suite and closed-form check.
    Verify {
        #[arg(long, value_enum, default_value_t = Scale::Full)]
        scale: Scale,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    Full,
    Quick,
}

pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    execute(cli)
}

pub fn execute(cli: Cli) -> i32 {
    let mut opts = RunOptions { seed: cli.seed, jobs: cli.jobs, strict: cli.strict, out_dir: cli.out.clone(), rho: None };
    let config = match cli.command {
        Command::Verify { scale } => return verify(&cli.out, cli.seed.unwrap_or(20_240_601), cli.jobs, scale),
        Command::Run { config } => config,
        Command::Sweep { config, rho } => {
            match RhoGrid::Range(rho).values() {
                Ok(grid) => opts.rho = Some(grid),
                Err(e) => {
                    eprintln!("error: invalid config: {e}");
                    return 2;
                }
            }
            config
        }
    };
    match run_file(&config, &opts) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            if outcome.exhausted > 0 {
                eprintln!("note: {} replication(s) exhausted the lookback", outcome.exhausted);
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn verify(out: &Option<PathBuf>, seed: u64, jobs: usize, scale: Scale) -> i32 {
    let scale = match scale {
        Scale::Full => VerifyScale::FULL,
        Scale::Quick => VerifyScale::QUICK,
    };
    let lines = verify_all(&Pool::new(jobs), seed, scale);
    for l in &lines {
        println!("{} {}: {}", if l.passed { "PASS" } else { "FAIL" }, l.name, l.detail);
    }
    if let Some(dir) = out {
        let written = to_json(&lines).and_then(|bytes| write_atomic(dir, "verify.json", &bytes));
        if let Err(e) = written {
            eprintln!("error: I/O failure on {}: {e}", dir.display());
            return 3;
        }
    }
    if lines.iter().all(|l| l.passed) {
        0
    } else {
        1
    }
}

//! Experiment runner for processor-sharing queue simulations: TOML
//! configs, replication campaigns on a worker pool, load sweeps and
//! invariant verification, with CSV/JSON artifacts written atomically.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod campaign;
pub mod cli;
pub mod config;
pub mod output;
pub mod run;
pub mod verify;

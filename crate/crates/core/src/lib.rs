//! Generalized processor-sharing queues with a count-dependent per-customer
//! rate `r(n)`, represented as a counting measure of remaining processing
//! times.
//!
//! - [`measures`]: counting measures, the shift `tau_y` and the integral order.
//! - [`rates`]: rate functions and their validation.
//! - [`dynamics`]: the one-step recursion `Phi`, departure schedules and a
//!   fluid reference implementation.
//! - [`input`]: counter-based, shift-indexable marked input sequences.
//! - [`stationary`]: Loynes constructions, perfect sampling and stability.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod checks;
pub mod dynamics;
pub mod input;
pub mod measures;
pub mod rates;
pub mod stationary;
pub mod stats;

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

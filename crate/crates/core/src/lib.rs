//! Measurement synthesis, attack injection and temporal graph neural network
//! detection for power-grid real power injections.
//!
//! The crate is `no_std` and only needs an allocator. File formats, the CLI
//! and thread pools live in the `gridsentry` companion crate.
//!
//! Pipeline, in module order:
//!
//! - [`grid`]: case-file parsing and the graph operators derived from it.
//! - [`scenario`]: load profiles, DC power flow and clean measurement series.
//! - [`attack`]: FDIA and ramp injection with ground-truth labels.
//! - [`estimation`]: DC weighted least squares and the residual bad-data test.
//! - [`nn`]: layers with hand-written backward passes, loss and optimizer.
//! - [`model`]: the temporal GNN detector and the snapshot baseline.
//! - [`train`], [`metrics`], [`sweep`]: training loop, scoring and sweeps.

#![no_std]
// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod attack;
pub mod error;
pub mod estimation;
pub mod grid;
pub mod linalg;
pub mod math;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scenario;
pub mod sweep;
pub mod train;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

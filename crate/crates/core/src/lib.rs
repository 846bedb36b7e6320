//! Turbo equalization over ISI channels with coarsely quantized messages.
//!
//! The crate designs lookup-table (LUT) equalizers with the information
//! bottleneck method, runs them against log-domain BCJR equalizers inside an
//! LDPC turbo loop, and estimates the hardware area of both families with a
//! transistor-count model.

// Index loops mirror the trellis notation; negated float comparisons also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod bcjr;
pub mod channel;
pub mod error;
pub mod hw;
pub mod ib;
pub mod ldpc;
pub mod lut;
pub mod selftest;
pub mod sim;
pub mod turbo;

pub use error::{Error, Result};

/// Converts natural-log information to bits.
pub(crate) const LOG2_E: f64 = std::f64::consts::LOG2_E;

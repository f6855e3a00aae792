//! Nonanticipative rate distortion.
//!
//! Two source families are covered:
//!
//! - finite-alphabet (first-order Markov or i.i.d.) sources, for which
//!   [`finite`] evaluates directed information, solves the tilted-kernel
//!   fixed point and traces rate-distortion curves;
//! - partially observed linear Gauss-Markov sources, for which [`gauss`]
//!   builds the causal encoder / additive Gaussian noise channel / decoder /
//!   filter cascade whose rate matches the channel capacity.
//!
//! [`waterfill`] holds the reverse water-filling allocation shared by the
//! Gaussian path. All rates are in nats unless a name says otherwise.

pub mod error;
pub mod finite;
pub mod gauss;
mod linalg;
pub mod model;
pub mod waterfill;

pub use error::{Error, Result};

/// Absolute tolerance for normalization of stored probability tables.
pub const PROB_TOL: f64 = 1e-12;

/// Convert a quantity in nats to bits.
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

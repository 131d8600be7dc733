//! Ergodic secrecy rates of correlated MIMO wiretap channels.
//!
//! The crate evaluates the large-system (deterministic-equivalent) mutual
//! information of Kronecker-correlated MIMO channels, designs transmit
//! covariances with isotropic, water-filling and GSVD-beamforming strategies,
//! and cross-checks every deterministic number against a seeded Monte Carlo
//! estimator.
//!
//! Module map:
//! - [`matdecomp`]: complex dense matrices, Cholesky log-determinant,
//!   Hermitian eigen-decomposition, square roots and the generalized SVD.
//! - [`channel`]: Gaussian power-azimuth-spectrum correlation matrices,
//!   per-link statistics and Kronecker channel sampling.
//! - [`detequiv`]: fixed-point solver and large-system mutual information.
//! - [`precoders`]: transmit covariance strategies and the outer design loop.
//! - [`montecarlo`]: reproducible ergodic mutual-information estimates.
//! - [`expcli`]: experiment configuration, figure presets and CSV sweeps.
//!
//! All rates are carried in nats per transmit antenna internally; conversion
//! to bits happens only when reporting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod detequiv;
mod error;
pub mod expcli;
pub mod matdecomp;
pub mod montecarlo;
pub mod precoders;

pub use error::{Error, Result};

/// Converts a decibel value to a linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Converts nats to bits.
pub fn nats_to_bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

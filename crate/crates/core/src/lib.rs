//! # qmetro
//!
//! Information-theoretic analysis of quantum metrology.
//!
//! The crate covers two workflows:
//!
//! - **Optimal extraction.** Given a parameter-imprinting channel, a prior
//!   and a number of probes, compute the mutual information H(m:φ) between
//!   measurement outcomes and the parameter, search for the strategy
//!   (initial state plus rank-one POVM) that maximizes it, and certify the
//!   result against the first-order stationarity conditions.
//! - **Quantum-classical parallel (QCP) strategy.** GHZ groups of
//!   2^{L−1−ℓ} probes read out by adaptive single-probe parity
//!   measurements. The outcome law is a Fejér kernel, its mutual
//!   information grows like ln N, and repeated estimation links it to the
//!   variance picture.
//!
//! All information quantities are in nats; all angles are in radians.
//!
//! ## Modules
//!
//! - [`qcore`]: dense complex vectors/operators, Jacobi `eigh`, POVMs.
//! - [`channel`]: exp(−i Σ φ_i H_i) and its N-fold parallel extension.
//! - [`infomeasure`]: priors, quadrature, outcome probabilities, MI.
//! - [`extraction`]: residuals of the stationarity conditions, analytic
//!   gradients, Naimark dilation, Riemannian optimizer.
//! - [`qcp`]: closed-form and adaptive outcome laws, sampling, MI.
//! - [`bridge`]: repeated estimation, Gaussian conditional entropy,
//!   upper bounds, histogram MI, scaling fits.

#![forbid(unsafe_code)]

pub mod bridge;
pub mod channel;
pub mod error;
pub mod extraction;
pub mod infomeasure;
pub mod numeric;
pub mod qcore;
pub mod qcp;

pub use error::{Error, Result};

//! Desk-scale study of dataset traits that affect GAN learnability.
//!
//! The crate generates parameterized convex-polygon image datasets, trains
//! DCGAN-style models under four adversarial loss formulations, scores image
//! collections with a classifier-based Inception Score, and reproduces the
//! study's tables, trend checks, and loss-smoothness diagnostics.

pub mod autodiff;
pub mod gan;
pub mod metrics;
pub mod rng;
pub mod shapegen;

/// Crate version recorded into sweep reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

//! Wasserstein-2 gradient flows on particle systems.
//!
//! Discrete measures in `R^d`, exact and entropic optimal transport,
//! constant-speed geodesics with their time-changed gradient-flow curve,
//! the forward Euler scheme on that curve, and the W2-FE training loop
//! (persistent generator fitting against Euler-step targets).

pub mod error;
pub mod euler;
pub mod geodesics;
pub mod measures;
pub mod neural;
pub mod ot;
pub mod trainer;

pub use error::W2Error;
pub use measures::{GaussianSpec, ParticleCloud};
pub use ot::{Assignment, CostMatrix, DualPotentials, TransportPlan};

/// Convenience result alias used across the crate.
pub type Result<T> = std::result::Result<T, W2Error>;

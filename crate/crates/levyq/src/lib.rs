//! Stationary workload analysis for two coupled queues driven by independent
//! spectrally-positive Lévy processes.
//!
//! The model is the two-dimensional reflection
//!
//! ```text
//! W1(t) = W1(0) + X1(t) - r1 L2(t) + L1(t),
//! W2(t) = W2(0) + X2(t) - r2 L1(t) + L2(t),
//! ```
//!
//! with `r1, r2 >= 0`, `r1 r2 < 1`, workloads `Wi >= 0` and regulators `Li`
//! nondecreasing, increasing only while the corresponding workload sits at
//! zero. Each idle server donates fractions `r1`/`r2` of its capacity to the
//! other queue, which covers both the coupled processor model and two-node
//! fluid networks with independent input.
//!
//! The crate computes the exact joint Laplace-Stieltjes transform
//! `E exp(-a1 W1 - a2 W2)` of the stationary workloads. The transform is
//! assembled from Wiener-Hopf factors of two auxiliary pure-jump processes
//! built from the fundamental subordinators of the inputs ([`wiener_hopf`],
//! [`transform`]), inverted to marginal distributions ([`inversion`]), and
//! every analytic quantity can be cross-validated against an exact-path
//! Monte-Carlo simulator of the reflected system ([`sim`]).
//!
//! Supported inputs are compound Poisson minus linear drift (exponential,
//! Erlang, hyperexponential or deterministic jumps), Brownian motion with
//! drift, and pure negative drift. All operations are pure functions of
//! immutable values and safe to call concurrently.

pub mod auxiliary;
pub mod error;
pub mod first_passage;
pub mod inversion;
pub mod models;
pub mod sim;
pub mod transform;
pub mod wiener_hopf;

pub use error::Error;
pub use models::{CoupledSystem, FluidNetwork, JumpLaw, LevyModel, NetworkInput, Stability};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Complex scalar used throughout.
pub type Complex = num_complex::Complex<f64>;

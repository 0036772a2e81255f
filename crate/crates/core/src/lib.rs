//! Gradient estimators for discrete exponential-family distributions.
//!
//! The crate is organised bottom-up:
//!
//! - [`polytope`]: constrained state spaces, exact enumeration, PMF, marginals and
//!   the exact gradient of an expected loss (the oracle everything else is
//!   measured against).
//! - [`solvers`]: MAP solvers (top-k, Kruskal, grid Dijkstra).
//! - [`noise`]: perturbation distributions and Perturb-and-MAP sampling.
//! - [`estimators`]: SFE, STE, Gumbel-Softmax, IMLE (forward/central) and
//!   adaptive IMLE.
//! - [`control`]: the adaptive step-size controller driving adaptive IMLE.
//! - [`losses`] and [`optim`]: toy downstream losses and first-order optimizers.
//! - [`bench`]: seeded synthetic experiments and their CSV records.

pub mod bench;
pub mod control;
mod error;
pub mod estimators;
pub mod losses;
pub mod noise;
pub mod optim;
pub mod polytope;
pub mod solvers;

pub use control::AimleController;
pub use error::{Error, Result};
pub use estimators::{Downstream, GradientEstimate, ImleMode};
pub use noise::NoiseSpec;
pub use polytope::{DiscreteState, Neighborhood, ParamVector, PolytopeSpec, Temperature};

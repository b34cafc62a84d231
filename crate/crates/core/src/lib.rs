//! Two-block Gibbs sampling for the Bayesian linear mixed model
//!
//! ```text
//! y_ij = x_ijᵀ β + η_i + e_ij,   η_i ~ N(μ, 1/λ),   e_ij ~ N(0, 1/τ)
//! ```
//!
//! with flat priors on `β` and `μ` and gamma priors on the precisions `λ` and
//! `τ`. The chain studied here is the η-marginal chain on the scaled state
//! `η = (√q β, √q μ, η_1, …, η_q)`.
//!
//! The crate is organised by concern:
//!
//! - [`model`]: data, derived design aggregates, the drift function and the
//!   unnormalized posterior.
//! - [`kernel`]: the Gibbs transition, both RNG-driven and as a deterministic
//!   random mapping of a [`kernel::NoiseDraw`].
//! - [`linalg`]: small dense helpers and the numerical inequality verifiers.
//! - [`coupling`]: common-random-number couplings used to estimate drift and
//!   contraction constants and Wasserstein decay.
//! - [`bounds`]: explicit rate formulas turning those constants into
//!   Wasserstein and total-variation bounds.
//! - [`forge`]: synthetic data sets in configurable growth regimes.
//! - [`study`]: the end-to-end scaling study tying the above together.

pub mod bounds;
pub mod coupling;
pub mod diagnostics;
pub mod error;
pub mod forge;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod study;

pub use error::{Error, Result};
pub use kernel::{GibbsConstants, NoiseDraw, PrecisionPair, Step};
pub use model::{
    AssumptionReport, AssumptionThresholds, ChainState, DerivedDesign, Hyperparameters,
    MixedModelData, Model,
};

/// Version tag written into every JSON report.
pub const SCHEMA_VERSION: u32 = 1;

//! A desk-scale laboratory for tabular, finite-horizon POMDPs.
//!
//! The crate provides:
//!
//! - a layered POMDP data model with exact trajectory enumeration and
//!   exact / Monte-Carlo policy evaluation ([`model`], [`trajectory`],
//!   [`value`]);
//! - exact Bayesian belief filtering, windowed approximate beliefs, and the
//!   divergences used to compare them ([`belief`]);
//! - generators for perturbed Block MDPs, noisy-sensor chains, a hard
//!   uniform-mixing instance, and a smoothing toy instance, plus JSON
//!   persistence ([`generators`]);
//! - finite-horizon planners (latent, motor-noise-smoothed, optimal
//!   executable, frame-stacked surrogate) and tabular Q-learning
//!   ([`planning`]);
//! - expert distillation: the non-stationary forward imitation algorithm in
//!   population and finite-sample form, and behavior cloning ([`distill`]);
//! - decodability / belief-contraction / action-prediction error functionals
//!   and trajectory-distribution TV distance ([`metrics`]);
//! - an experiment grid runner emitting CSV and a bound-verification harness
//!   ([`grid`], [`verify`]).
//!
//! Everything is deterministic given seeds: random draws go through a
//! counter-based generator ([`rng`]) and all floating-point reductions run in
//! a fixed order, so repeated runs produce byte-identical output.

pub mod belief;
pub mod distill;
pub mod generators;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod planning;
pub mod policy;
pub mod rng;
pub mod trajectory;
pub mod value;
pub mod verify;

use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum LabError {
    /// A policy or argument does not match the model's per-step shapes.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A model failed validation on construction or load.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Bayes update conditioned on an observation with zero probability
    /// under the prior.
    #[error("impossible observation {obs} at step {step}: posterior normalizer is zero")]
    ImpossibleObservation { step: usize, obs: usize },

    /// A history or window has zero probability under the model.
    #[error("impossible history at step {step}: zero probability under the model")]
    ImpossibleHistory { step: usize },

    /// Exhaustive enumeration would exceed the configured cap.
    #[error("enumeration size {required} exceeds cap {cap}")]
    CapExceeded { required: u128, cap: u128 },

    /// A caller-supplied argument is out of range or inconsistent.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

/// Tolerance used when accepting probability rows before renormalizing.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Default cap on exhaustive enumeration (total trajectories or histories).
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

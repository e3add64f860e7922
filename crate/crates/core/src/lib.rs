//! Asynchronous ADMM for separable convex problems of the form
//!
//! ```text
//! minimize   sum_i f_i(x_i)
//! subject to D x + H z = 0,   x_i in X_i,   z in Z
//! ```
//!
//! where every row of `D` touches exactly one coordinate of `x` and `H` is
//! diagonal and invertible. At each iteration a random block of constraint
//! rows is activated and only the components and multipliers attached to that
//! block are updated.
//!
//! The crate is `no_std` (it needs `alloc`) and carries no IO. File formats,
//! benchmark generators and the command line live in the `asyncadmm` crate.

#![no_std]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod diagnostics;
pub mod edge;
pub mod engine;
mod error;
pub mod problem;
pub mod prox;
pub mod schedule;
mod vecops;

pub use error::{Error, Result};

pub use diagnostics::{
    compute_rate_constants, estimate_rate, fit_loglog, lyapunov, q_of_mu, update_ergodic,
    weighted_lagrangian, weighted_norm_sq, ErgodicAverages, RateConstants, RateFit, RateOptions,
    ReferenceSolution, ReferenceSource, WeightedNorm,
};
pub use edge::{
    build_reformulation, consensus_reference, edge_step, EdgeReformulation, Graph,
};
pub use engine::{
    dual_update, run, shadow_step, step, step_block, sync_admm_step, x_update, z_update,
    AsyncAdmm, InvariantCounters, MetricRecord, Probes, RunConfig, RunMetrics, ShadowIterates,
    StandardProblem, StepRecord,
};
pub use problem::{
    lagrangian, objective, residual, validate_constraints, ConstraintSystem, ConvexTerm, DEntry,
    FeasibleSet, PrimalDualState, ScalarConvex, SeparableProblem, TermKind, ValidationReport,
    Violation,
};
pub use prox::{solve_local, solve_z_block, LocalSubproblem, ZBlockSubproblem};
pub use schedule::{
    build_partition, derive_probabilities, sample_block, ActivationDistribution, ActiveSet,
    ProperPartition, RngStream,
};

/// Absolute tolerance used by default throughout the crate.
pub const DEFAULT_TOL: f64 = 1e-8;

/// Any state vector whose Euclidean norm exceeds this is treated as divergence.
pub const DIVERGENCE_NORM: f64 = 1e12;

//! Robust phase retrieval from corrupted magnitude-only measurements.
//!
//! The solver recovers a real signal θ* from responses yᵢ = ⟨xᵢ, θ*⟩² of
//! which up to k may be arbitrarily corrupted. It alternates between
//! residual-based trimming (keep the n − 2k best-fitting measurements) and a
//! nonconvex least-squares oracle: randomly initialized fixed-step gradient
//! descent with a data-driven initialization radius and a convex-branch
//! early return.
//!
//! Module map:
//! - [`signal`], [`data`], [`regime`]: shared domain types, the
//!   sign-invariant distance, and the corruption-regime quantities.
//! - [`datagen`]: seeded Gaussian-design generation, corruption adversaries,
//!   and the columnar dataset text format.
//! - [`objective`]: the quartic subset loss, gradient, Hessian quadratic
//!   form, and the closed-form expected landscape.
//! - [`oracle`]: the gradient-descent subset solver.
//! - [`altmin`]: preprocessing, subset selection, and the outer loop with
//!   its β-stopping rule.
//! - [`verify`]: independent oracles (finite differences, brute-force subset
//!   search) and Monte Carlo statistical checks.
//! - [`metrics`]: relative error, reported bounds, and sweep summaries.

pub mod altmin;
pub mod data;
pub mod datagen;
mod error;
pub mod metrics;
pub mod objective;
pub mod oracle;
pub mod regime;
pub mod signal;
pub mod verify;

pub use altmin::{run_altmin, AltMinConfig, AltMinResult, Termination};
pub use data::{IndexSet, Measurement, MeasurementSet};
pub use datagen::{
    apply_corruption, generate_clean, CorruptionKind, CorruptionPlan, CorruptionSelection, RngSeed,
};
pub use error::{Error, Result};
pub use metrics::TrialRecord;
pub use oracle::{run_oracle, Branch, KappaEstimator, OracleConfig, OracleResult};
pub use regime::{BoundConstants, RegimeParams};
pub use signal::{sign_invariant_distance, SignalVec};
pub use verify::CheckReport;

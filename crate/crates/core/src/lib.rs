//! Local maximal-margin Mahalanobis metrics learned from negative examples.
//!
//! For a query `x₀` and negatives `x₁ … x_n`, the metric solves
//!
//! ```text
//! min ½‖M‖²_F   s.t.   (x_i − x₀)ᵀ M (x_i − x₀) ≥ 2
//! ```
//!
//! as a fixed-bias SVM with the quadratic kernel `⟨a, b⟩²`. The optimum is
//! `M = Σ α_i x̃_i x̃_iᵀ` with `α_i ≥ 0`, so it is PSD without any projection
//! and is stored in that low-rank form. Tangent directions of known
//! transformations can be projected out to make the metric invariant.

pub mod error;
pub mod harness;
pub mod image;
pub mod invariance;
pub mod io;
pub(crate) mod linalg;
pub mod metric;
pub mod model;
pub mod oracle;
pub mod solver;

pub use error::{Error, Result};
pub use invariance::{build_invariant_metric, build_tangent_set, project_complement};
pub use metric::{build_local_metric, mahal_distance_sq, materialize, metric_rank};
pub use model::{
    validate_problem, DualSolution, EvalReport, ExemplarProblem, FeatureVector, LocalMetric, Slack,
    SupportPair, TangentSet,
};
pub use oracle::oracle_solve;
pub use solver::{dual_objective, quadratic_kernel, solve_dual, SolverConfig};

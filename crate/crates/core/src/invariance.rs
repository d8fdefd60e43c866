//! Transformation-invariant local metrics.
//!
//! Requiring `(T_j(x₀) − x₀)ᵀ M (T_j(x₀) − x₀) = 0` for a PSD `M` is the same
//! as `M v = 0` on `V = span{T_j(x₀) − x₀}`. Solving the ordinary problem on
//! the projections of the difference vectors onto `V⊥` gives a matrix built
//! only from vectors in `V⊥`, which therefore annihilates `V`.

use crate::error::{Error, Result};
use crate::linalg;
use crate::metric::select_support;
use crate::model::{
    DualSolution, ExemplarProblem, FeatureVector, LocalMetric, MetricProvenance, Slack, TangentSet,
};
use crate::solver::{solve_problem, DenseDiffs, DualProblem, Kernel, SolverConfig};

/// Residual fraction below which a tangent counts as already spanned.
pub const DEPENDENCE_TOLERANCE: f64 = 1e-10;

/// Orthonormalizes `transformed[j] − x0` by modified Gram–Schmidt with one
/// re-orthogonalization pass.
pub fn build_tangent_set(x0: &FeatureVector, transformed: &[FeatureVector]) -> Result<TangentSet> {
    let d = x0.dim();
    let mut raw = Vec::with_capacity(transformed.len());
    let mut basis: Vec<FeatureVector> = Vec::new();
    for t in transformed {
        t.ensure_dim(d)?;
        let r = linalg::sub(t, x0);
        let original = linalg::norm(&r);
        let mut w = r.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = linalg::dot(&w, b);
                linalg::axpy(-c, b, &mut w);
            }
        }
        let residual = linalg::norm(&w);
        if original > 0.0 && residual > DEPENDENCE_TOLERANCE * original {
            w.iter_mut().for_each(|v| *v /= residual);
            basis.push(FeatureVector::new(w)?);
        }
        raw.push(FeatureVector::new(r)?);
    }
    Ok(TangentSet::from_parts_unchecked(raw, basis))
}

/// `v − Σ_b ⟨v, b⟩ b` over the orthonormal basis.
pub fn project_complement(t: &TangentSet, v: &FeatureVector) -> Result<FeatureVector> {
    if let Some(d) = t.dim() {
        v.ensure_dim(d)?;
    }
    FeatureVector::new(t.project_out(v))
}

/// Result of an invariant solve.
#[derive(Debug, Clone)]
pub struct InvariantOutcome {
    pub metric: LocalMetric,
    pub solution: DualSolution,
    /// Set when the hard margin had to be relaxed.
    pub fallback: Option<SoftMarginFallback>,
}

/// Set when a hard-margin invariant solve had to be relaxed.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMarginFallback {
    pub c: f64,
    pub reason: String,
}

/// Learns the local metric of `p` that is blind to the directions in `t`.
pub fn build_invariant_metric(
    p: &ExemplarProblem,
    t: &TangentSet,
    cfg: &SolverConfig,
) -> Result<LocalMetric> {
    build_invariant_metric_checked(p, t, cfg, Slack::DEFAULT_C).map(|o| o.metric)
}

/// As [`build_invariant_metric`], reporting whether the hard margin had to
/// fall back to a soft margin with penalty `fallback_c`.
pub fn build_invariant_metric_checked(
    p: &ExemplarProblem,
    t: &TangentSet,
    cfg: &SolverConfig,
    fallback_c: f64,
) -> Result<InvariantOutcome> {
    let d = p.dim();
    if let Some(td) = t.dim() {
        if td != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: td,
            });
        }
    }
    let projected: Vec<Vec<f64>> = p
        .negatives()
        .iter()
        .map(|x| t.project_out(&linalg::sub(x, p.query())))
        .collect();
    let scale = p
        .negatives()
        .iter()
        .map(|x| linalg::norm(&linalg::sub(x, p.query())))
        .fold(0.0, f64::max);
    // Components that survive projection only as rounding noise are zero.
    let cutoff = 1e-12 * scale;
    let projected: Vec<Vec<f64>> = projected
        .into_iter()
        .map(|z| {
            if linalg::norm(&z) <= cutoff {
                vec![0.0; d]
            } else {
                z
            }
        })
        .collect();
    if projected.iter().all(|z| z.iter().all(|&v| v == 0.0)) {
        return Err(Error::Infeasible(
            "every negative lies in the tangent span of the query".into(),
        ));
    }

    let diffs = DenseDiffs::new(d, &projected)?;
    let solve = |slack: Slack| {
        let dual = DualProblem::new(&diffs, Kernel::Quadratic, p.margin(), slack);
        solve_problem(&dual, cfg, None, None)
    };
    let (sol, slack, fallback) = match (solve(p.slack()), p.slack()) {
        (Ok(sol), slack) => (sol, slack, None),
        (Err(Error::Infeasible(reason)), Slack::Hard) => {
            let slack = Slack::Soft(fallback_c);
            let sol = solve(slack)?;
            (
                sol,
                slack,
                Some(SoftMarginFallback {
                    c: fallback_c,
                    reason,
                }),
            )
        }
        (Err(e), _) => return Err(e),
    };

    let support = select_support(
        &sol.alphas,
        projected.iter().map(Vec::as_slice),
        cfg.support_threshold,
    )?;
    let metric = LocalMetric::new(
        p.query().clone(),
        support,
        Some(t.clone()),
        MetricProvenance {
            margin: p.margin(),
            slack,
            solver: cfg.clone(),
        },
    )?;
    Ok(InvariantOutcome {
        metric,
        solution: sol,
        fallback,
    })
}

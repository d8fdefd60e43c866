//! Local metrics in support-vector form: construction, distances and the
//! dense matrix view.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    DualSolution, ExemplarProblem, FeatureVector, LocalMetric, MetricProvenance, SupportPair,
};
use crate::solver::{solve_dual, SolverConfig};

/// Default cap on `d` for [`materialize`].
pub const MATERIALIZE_LIMIT: usize = 4096;

/// Relative singular-value cutoff used by [`metric_rank`].
pub const RANK_THRESHOLD: f64 = 1e-8;

/// Keeps the pairs whose coefficient exceeds `threshold · max α`.
pub(crate) fn select_support<'a>(
    alphas: &[f64],
    directions: impl IntoIterator<Item = &'a [f64]>,
    threshold: f64,
) -> Result<Vec<SupportPair>> {
    let max_alpha = alphas.iter().cloned().fold(0.0, f64::max);
    let cutoff = threshold * max_alpha;
    let mut support = Vec::new();
    for (&alpha, dir) in alphas.iter().zip(directions) {
        if alpha > 0.0 && alpha > cutoff {
            support.push(SupportPair {
                alpha,
                direction: FeatureVector::new(dir.to_vec())?,
            });
        }
    }
    Ok(support)
}

/// Learns the maximal-margin local metric of `p`.
pub fn build_local_metric(p: &ExemplarProblem, cfg: &SolverConfig) -> Result<LocalMetric> {
    build_local_metric_solved(p, cfg).map(|(m, _)| m)
}

/// As [`build_local_metric`], also returning the dual solution.
pub fn build_local_metric_solved(
    p: &ExemplarProblem,
    cfg: &SolverConfig,
) -> Result<(LocalMetric, DualSolution)> {
    let sol = solve_dual(p, cfg)?;
    let diffs = p.differences();
    let support = select_support(
        &sol.alphas,
        diffs.iter().map(Vec::as_slice),
        cfg.support_threshold,
    )?;
    let metric = LocalMetric::new(
        p.query().clone(),
        support,
        None,
        MetricProvenance {
            margin: p.margin(),
            slack: p.slack(),
            solver: cfg.clone(),
        },
    )?;
    Ok((metric, sol))
}

/// Projects `y − anchor` onto the complement of the metric's tangent span,
/// when it has one.
pub(crate) fn offset(m: &LocalMetric, y: &[f64]) -> Vec<f64> {
    let u = linalg::sub(y, m.anchor());
    match m.tangents() {
        Some(t) => t.project_out(&u),
        None => u,
    }
}

/// `(y − x₀)ᵀ M (y − x₀) = Σ_k α_k ⟨u_k, y − x₀⟩²`, without forming `M`.
pub fn mahal_distance_sq(m: &LocalMetric, y: &FeatureVector) -> Result<f64> {
    y.ensure_dim(m.dim())?;
    let u = offset(m, y);
    Ok(quadratic_form(m.support(), &u))
}

pub(crate) fn quadratic_form(support: &[SupportPair], u: &[f64]) -> f64 {
    support
        .iter()
        .map(|s| {
            let t = linalg::dot(&s.direction, u);
            s.alpha * t * t
        })
        .sum()
}

/// `trace(M) = Σ_k α_k ‖u_k‖²`
pub fn metric_trace(m: &LocalMetric) -> f64 {
    m.support()
        .iter()
        .map(|s| s.alpha * linalg::norm_sq(&s.direction))
        .sum()
}

pub fn materialize(m: &LocalMetric) -> Result<DMatrix<f64>> {
    materialize_with_limit(m, MATERIALIZE_LIMIT)
}

/// Dense `M = Σ_k α_k u_k u_kᵀ`, refusing dimensions above `limit`.
pub fn materialize_with_limit(m: &LocalMetric, limit: usize) -> Result<DMatrix<f64>> {
    let d = m.dim();
    if d > limit {
        return Err(Error::DimensionLimit { dim: d, limit });
    }
    let mut out = DMatrix::<f64>::zeros(d, d);
    for s in m.support() {
        let u = s.direction.as_slice();
        for j in 0..d {
            let cj = s.alpha * u[j];
            if cj == 0.0 {
                continue;
            }
            for i in j..d {
                out[(i, j)] += cj * u[i];
            }
        }
    }
    for j in 0..d {
        for i in j + 1..d {
            out[(j, i)] = out[(i, j)];
        }
    }
    Ok(out)
}

/// Numerical rank of the materialized matrix.
pub fn metric_rank(m: &LocalMetric) -> Result<usize> {
    let dense = materialize(m)?;
    if m.support().is_empty() {
        return Ok(0);
    }
    let eig = SymmetricEigen::new(dense);
    let largest = eig.eigenvalues.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if largest == 0.0 {
        return Ok(0);
    }
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|v| v.abs() > RANK_THRESHOLD * largest)
        .count();
    Ok(rank.min(m.support().len()))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// The identity metric at `anchor`: `d = ‖y − x₀‖²`.
pub fn identity_metric(anchor: FeatureVector, provenance: MetricProvenance) -> Result<LocalMetric> {
    let d = anchor.dim();
    let support = (0..d)
        .map(|k| {
            let mut e = vec![0.0; d];
            e[k] = 1.0;
            Ok(SupportPair {
                alpha: 1.0,
                direction: FeatureVector::new(e)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LocalMetric::new(anchor, support, None, provenance)
}

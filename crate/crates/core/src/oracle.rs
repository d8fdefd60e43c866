//! Reference solver used to cross-check coordinate ascent.
//!
//! Lemke's complementary pivoting on the KKT conditions of the dense dual.
//! It is exact up to rounding, shares no code with the coordinate-ascent
//! path beyond the vector dot product, and only accepts test-sized problems.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::invariance::{build_invariant_metric_checked, build_tangent_set};
use crate::linalg;
use crate::metric::{
    build_local_metric_solved, mahal_distance_sq, materialize, metric_rank, metric_trace,
    min_eigenvalue,
};
use crate::model::{DualSolution, ExemplarProblem, FeatureVector, Slack};
use crate::solver::SolverConfig;

pub const ORACLE_MAX_N: usize = 32;
pub const ORACLE_MAX_D: usize = 8;
pub const ORACLE_TOLERANCE: f64 = 1e-8;
/// Pivot entries below this fraction of their column's largest entry are
/// treated as rounding noise.
const PIVOT_EPS: f64 = 1e-9;

/// Solves `w = q + M z`, `w, z ≥ 0`, `wᵀz = 0` for a positive semidefinite
/// `M`. `None` on ray termination, which for PSD `M` means no solution.
fn lemke(m: &DMatrix<f64>, q: &[f64]) -> Option<(Vec<f64>, usize)> {
    let n = q.len();
    if q.iter().all(|&v| v >= 0.0) {
        return Some((vec![0.0; n], 0));
    }
    // columns: w (0..n), z (n..2n), z0 (2n); tableau rows are I w − M z − e z0 = q
    let cols = 2 * n + 1;
    let mut t = DMatrix::<f64>::zeros(n, cols);
    let mut rhs = q.to_vec();
    for i in 0..n {
        t[(i, i)] = 1.0;
        for j in 0..n {
            t[(i, n + j)] = -m[(i, j)];
        }
        t[(i, 2 * n)] = -1.0;
    }
    let mut basis: Vec<usize> = (0..n).collect();
    let pivot = |t: &mut DMatrix<f64>, rhs: &mut [f64], r: usize, c: usize| {
        let p = t[(r, c)];
        for k in 0..cols {
            t[(r, k)] /= p;
        }
        rhs[r] /= p;
        for i in 0..n {
            let f = t[(i, c)];
            if i != r && f != 0.0 {
                for k in 0..cols {
                    t[(i, k)] -= f * t[(r, k)];
                }
                rhs[i] -= f * rhs[r];
            }
        }
    };
    let mut row = (0..n).min_by(|&a, &b| q[a].total_cmp(&q[b]))?;
    let mut entering = 2 * n;
    let mut pivots = 0;
    loop {
        pivot(&mut t, &mut rhs, row, entering);
        let leaving = std::mem::replace(&mut basis[row], entering);
        pivots += 1;
        if leaving == 2 * n {
            break;
        }
        if pivots > 50 * n + 100 {
            return None;
        }
        entering = if leaving < n {
            leaving + n
        } else {
            leaving - n
        };
        // lexicographic ratio test on (rhs, B⁻¹ row) / pivot, which cannot
        // cycle; z0 leaves whenever it ties for the minimum ratio
        let key = |i: usize| -> Vec<f64> {
            let a = t[(i, entering)];
            std::iter::once(rhs[i].max(0.0))
                .chain((0..n).map(|k| t[(i, k)]))
                .map(|v| v / a)
                .collect()
        };
        let lex_less = |x: &[f64], y: &[f64]| -> bool {
            for (a, b) in x.iter().zip(y) {
                let tol = 1e-11 * a.abs().max(b.abs()).max(1.0);
                if a < &(b - tol) {
                    return true;
                }
                if a > &(b + tol) {
                    return false;
                }
            }
            false
        };
        let mut best: Option<(Vec<f64>, usize)> = None;
        let col_max = (0..n).map(|i| t[(i, entering)].abs()).fold(0.0, f64::max);
        for i in (0..n).filter(|&i| t[(i, entering)] > PIVOT_EPS * col_max) {
            let k = key(i);
            let better = match &best {
                None => true,
                Some((bk, b)) => {
                    let tied = (k[0] - bk[0]).abs() <= 1e-11 * k[0].abs().max(bk[0].abs()).max(1.0);
                    if tied && (basis[i] == 2 * n) != (basis[*b] == 2 * n) {
                        basis[i] == 2 * n
                    } else {
                        lex_less(&k, bk)
                    }
                }
            };
            if better {
                best = Some((k, i));
            }
        }
        row = best?.1;
    }
    let mut z = vec![0.0; n];
    for (i, &b) in basis.iter().enumerate() {
        if (n..2 * n).contains(&b) {
            z[b - n] = rhs[i].max(0.0);
        }
    }
    Some((z, pivots))
}

pub fn oracle_solve(p: &ExemplarProblem) -> Result<DualSolution> {
    let (n, d) = (p.len(), p.dim());
    if n > ORACLE_MAX_N || d > ORACLE_MAX_D {
        return Err(Error::ScaleExceeded {
            n,
            d,
            max_n: ORACLE_MAX_N,
            max_d: ORACLE_MAX_D,
        });
    }
    let diffs = p.differences();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        let t = linalg::dot(&diffs[i], &diffs[j]);
        t * t
    });
    let live: Vec<usize> = (0..n).filter(|&i| gram[(i, i)] > 0.0).collect();
    if live.is_empty() {
        return Err(Error::Infeasible("every difference vector is zero".into()));
    }
    let margin = p.margin();
    let k = live.len();
    let sub = DMatrix::from_fn(k, k, |a, b| gram[(live[a], live[b])]);
    // KKT of max mΣα − ½αᵀKα over 0 ≤ α ≤ C as a complementarity problem:
    // α ⊥ Kα − m + μ and, with a box, μ ⊥ C − α
    let (lcp_m, lcp_q) = match p.slack() {
        Slack::Hard => (sub, vec![-margin; k]),
        Slack::Soft(c) => {
            let mut m = DMatrix::<f64>::zeros(2 * k, 2 * k);
            m.view_mut((0, 0), (k, k)).copy_from(&sub);
            for i in 0..k {
                m[(i, k + i)] = 1.0;
                m[(k + i, i)] = -1.0;
            }
            let mut q = vec![-margin; k];
            q.extend(std::iter::repeat_n(c, k));
            (m, q)
        }
    };
    let (z, pivots) = lemke(&lcp_m, &lcp_q)
        .ok_or_else(|| Error::Infeasible("complementary pivoting found no solution".into()))?;
    let mut alphas = vec![0.0; n];
    let upper = match p.slack() {
        Slack::Hard => f64::INFINITY,
        Slack::Soft(c) => c,
    };
    for (a, &i) in live.iter().enumerate() {
        alphas[i] = z[a].min(upper);
    }

    let kkt = |alphas: &[f64]| -> (f64, Vec<f64>) {
        let grad: Vec<f64> = (0..n)
            .map(|i| margin - (0..n).map(|j| gram[(i, j)] * alphas[j]).sum::<f64>())
            .collect();
        let worst = live
            .iter()
            .map(|&i| {
                let g = grad[i];
                let v = if alphas[i] <= 0.0 {
                    g.max(0.0)
                } else if alphas[i] >= upper {
                    (-g).max(0.0)
                } else {
                    g.abs()
                };
                // rounding in Kα grows with the size of its terms
                let scale: f64 = (0..n).map(|j| (gram[(i, j)] * alphas[j]).abs()).sum();
                v / scale.max(margin)
            })
            .fold(0.0, f64::max);
        (worst, grad)
    };
    let (mut kkt_violation, mut grad) = kkt(&alphas);

    // re-solve the free coordinates of the final basis to shed tableau rounding
    let free: Vec<usize> = live
        .iter()
        .copied()
        .filter(|&i| alphas[i] > 0.0 && alphas[i] < upper)
        .collect();
    if !free.is_empty() {
        let kf = DMatrix::from_fn(free.len(), free.len(), |a, b| gram[(free[a], free[b])]);
        let rhs = nalgebra::DVector::from_fn(free.len(), |a, _| {
            let i = free[a];
            margin
                - (0..n)
                    .filter(|&j| alphas[j] >= upper)
                    .map(|j| gram[(i, j)] * upper)
                    .sum::<f64>()
        });
        if let Ok(x) = kf.svd(true, true).solve(&rhs, 1e-13) {
            let mut polished = alphas.clone();
            for (a, &i) in free.iter().enumerate() {
                polished[i] = x[a];
            }
            if polished.iter().all(|&v| v >= 0.0 && v <= upper) {
                let (v, g) = kkt(&polished);
                if v < kkt_violation {
                    (alphas, kkt_violation, grad) = (polished, v, g);
                }
            }
        }
    }
    // g(α) = m Σα − ½ αᵀKα = ½ Σ α_i (m + grad_i)
    let objective_value = (0..n).map(|i| 0.5 * alphas[i] * (margin + grad[i])).sum();
    let solution = DualSolution {
        alphas,
        iterations: pivots,
        kkt_violation,
        objective_value,
        converged: kkt_violation <= ORACLE_TOLERANCE,
    };
    if solution.converged {
        Ok(solution)
    } else {
        Err(Error::IterationLimit(Box::new(solution)))
    }
}

/// Solves the invariant problem in the coordinates of an orthonormal basis
/// of the complement of `span{t − x₀}`, found by eigendecomposition rather
/// than Gram–Schmidt. `transformed` holds the points `T_j(x₀)`.
pub fn subspace_oracle(p: &ExemplarProblem, transformed: &[FeatureVector]) -> Result<DualSolution> {
    let d = p.dim();
    let x0 = p.query();
    let mut span = DMatrix::<f64>::zeros(d, d);
    for t in transformed {
        t.ensure_dim(d)?;
        let r = nalgebra::DVector::from_vec(linalg::sub(t, x0));
        span += &r * r.transpose();
    }
    let eig = SymmetricEigen::new(span);
    let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let complement: Vec<usize> = (0..d)
        .filter(|&k| eig.eigenvalues[k] <= 1e-10 * top)
        .collect();
    if complement.is_empty() {
        return Err(Error::Infeasible(
            "the tangents span the whole space".into(),
        ));
    }
    let coords = |v: &[f64]| -> Result<FeatureVector> {
        let u = linalg::sub(v, x0);
        FeatureVector::new(
            complement
                .iter()
                .map(|&k| linalg::dot(eig.eigenvectors.column(k).as_slice(), &u))
                .collect(),
        )
    };
    let reduced = ExemplarProblem::new(
        FeatureVector::zeros(complement.len())?,
        p.negatives()
            .iter()
            .map(|x| coords(x))
            .collect::<Result<Vec<_>>>()?,
    )?
    .with_margin(p.margin())?
    .with_slack(p.slack())?;
    oracle_solve(&reduced)
}

/// A seeded random test problem with optional transformed copies of the query.
#[derive(Debug, Clone)]
pub struct RandomCase {
    pub problem: ExemplarProblem,
    /// `T_j(x₀)`; fewer than `d` of them so the complement is never empty.
    pub transformed: Vec<FeatureVector>,
}

/// Shortest difference, in full space and off the tangent span, that a
/// random negative may have. Shorter ones need `α ≈ 2/‖x − x₀‖⁴`, which
/// runs into the hard-margin cap.
pub const MIN_RANDOM_DIFF: f64 = 0.05;

/// Query, negatives and tangent steps with entries U[−1, 1]: `1..=max_n`
/// negatives in `1..=max_d` dimensions, `0..d` tangents. Negatives that
/// are (nearly) degenerate in either problem are redrawn.
pub fn random_case(seed: u64, max_n: usize, max_d: usize) -> Result<RandomCase> {
    if max_n == 0 || max_d == 0 {
        return Err(Error::InvalidConfig(
            "random problems need n, d >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_n);
    let d = rng.random_range(1..=max_d);
    let r = rng.random_range(0..d);
    let mut draw =
        |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-1.0..=1.0)).collect() };
    let query = draw(d);
    let steps: Vec<Vec<f64>> = (0..r).map(|_| draw(d)).collect();
    let span = DMatrix::from_fn(d, r, |i, j| steps[j][i]);
    let svd = (r > 0).then(|| span.clone().svd(true, true));
    let off_span = |u: &[f64]| -> f64 {
        let u = nalgebra::DVector::from_column_slice(u);
        match &svd {
            None => u.norm(),
            Some(svd) => {
                let c = svd.solve(&u, 1e-12).expect("both factors were computed");
                (&u - &span * c).norm()
            }
        }
    };
    let mut negatives = Vec::with_capacity(n);
    while negatives.len() < n {
        let x = draw(d);
        let u = linalg::sub(&x, &query);
        if linalg::norm_sq(&u).sqrt() >= MIN_RANDOM_DIFF && off_span(&u) >= MIN_RANDOM_DIFF {
            negatives.push(FeatureVector::new(x)?);
        }
    }
    let transformed = steps
        .iter()
        .map(|s| FeatureVector::new(query.iter().zip(s).map(|(a, b)| a + b).collect()))
        .collect::<Result<Vec<_>>>()?;
    Ok(RandomCase {
        problem: ExemplarProblem::new(FeatureVector::new(query)?, negatives)?,
        transformed,
    })
}

/// `|a − b| / max(|b|, 1e-12)`
pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// Tolerances of [`check_case`], matching the acceptance thresholds.
pub const PSD_TOLERANCE: f64 = 1e-8;
pub const MARGIN_SLACK: f64 = 1e-5;
pub const INVARIANCE_TOLERANCE: f64 = 1e-8;

/// Agreement and property measurements for one random case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseCheck {
    pub plain_gap: f64,
    pub invariant_gap: f64,
    /// `λ_min(M) / trace(M)`, zero for an empty metric.
    pub min_eig_ratio: f64,
    pub rank: usize,
    pub support: usize,
    /// Smallest squared distance of a non-degenerate negative.
    pub min_margin: f64,
    /// Largest `d(x₀ + r) / (trace(M) ‖r‖²)` over the tangents.
    pub invariance_ratio: f64,
}

impl CaseCheck {
    /// Human-readable descriptions of every failed property.
    pub fn violations(&self, rel_tol: f64, margin: f64) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.plain_gap <= rel_tol) {
            out.push(format!("plain objective gap {:e}", self.plain_gap));
        }
        if !(self.invariant_gap <= rel_tol) {
            out.push(format!("invariant objective gap {:e}", self.invariant_gap));
        }
        if !(self.min_eig_ratio >= -PSD_TOLERANCE) {
            out.push(format!("min eigenvalue / trace {:e}", self.min_eig_ratio));
        }
        if self.rank > self.support {
            out.push(format!("rank {} above support {}", self.rank, self.support));
        }
        if !(self.min_margin >= margin - MARGIN_SLACK) {
            out.push(format!("negative at squared distance {}", self.min_margin));
        }
        if !(self.invariance_ratio <= INVARIANCE_TOLERANCE) {
            out.push(format!(
                "tangent distance ratio {:e}",
                self.invariance_ratio
            ));
        }
        out
    }
}

/// Solves `case` with the production solvers and both oracles.
pub fn check_case(case: &RandomCase, cfg: &SolverConfig) -> Result<CaseCheck> {
    let p = &case.problem;
    let (m, sol) = build_local_metric_solved(p, cfg)?;
    let reference = oracle_solve(p)?;
    let dense = materialize(&m)?;
    let trace = metric_trace(&m);
    let min_eig_ratio = if trace > 0.0 {
        min_eigenvalue(&dense) / trace
    } else {
        0.0
    };
    let mut min_margin = f64::INFINITY;
    for x in p.negatives() {
        if linalg::sub(x, p.query()).iter().any(|&v| v != 0.0) {
            min_margin = min_margin.min(mahal_distance_sq(&m, x)?);
        }
    }

    let t = build_tangent_set(p.query(), &case.transformed)?;
    let inv = build_invariant_metric_checked(p, &t, cfg, Slack::DEFAULT_C)?;
    let inv_reference = subspace_oracle(p, &case.transformed)?;
    let inv_trace = metric_trace(&inv.metric);
    let mut invariance_ratio: f64 = 0.0;
    for r in t.raw() {
        let r2 = linalg::norm_sq(r);
        if r2 > 0.0 && inv_trace > 0.0 {
            let y =
                FeatureVector::new(p.query().iter().zip(r.iter()).map(|(a, b)| a + b).collect())?;
            let ratio = mahal_distance_sq(&inv.metric, &y)? / (inv_trace * r2);
            invariance_ratio = invariance_ratio.max(ratio);
        }
    }

    Ok(CaseCheck {
        plain_gap: relative_gap(sol.objective_value, reference.objective_value),
        invariant_gap: relative_gap(inv.solution.objective_value, inv_reference.objective_value),
        min_eig_ratio,
        rank: metric_rank(&m)?,
        support: m.support().len(),
        min_margin,
        invariance_ratio,
    })
}

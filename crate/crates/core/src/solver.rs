//! Fixed-bias kernel SVM dual, solved by randomized coordinate ascent.
//!
//! The metric problem `min ½‖M‖²  s.t.  x̃_iᵀ M x̃_i ≥ margin` is a kernel SVM
//! over the difference vectors `x̃_i = x_i − x₀` with the quadratic kernel
//! `k(a, b) = ⟨a, b⟩²` and the bias frozen. Its dual has box constraints
//! only:
//!
//! ```text
//! max  g(α) = Σ_i b_i α_i − ½ Σ_ij α_i α_j y_i y_j K_ij,   0 ≤ α_i ≤ C
//! ```
//!
//! with `y_i = +1, b_i = margin` for negatives. Rows with `y_i = −1, b_i = 0`
//! encode "must stay on the query side" constraints and are only used by the
//! exemplar-SVM baseline. The query itself maps to the zero matrix and is
//! never part of the dual.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DualSolution, ExemplarProblem, FeatureVector, Slack};

/// Internal box bound standing in for `C = ∞` under a hard margin.
pub const HARD_MARGIN_C: f64 = 1e12;

/// Sweeps between Newton steps on the free coordinates.
const NEWTON_EVERY: usize = 8;
/// Largest free set a Newton step is attempted on.
const NEWTON_MAX_FREE: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Maximum KKT violation accepted at convergence.
    pub tolerance: f64,
    /// Cap on coordinate sweeps; `None` means `1000 · n`.
    pub max_iterations: Option<usize>,
    /// Largest `n` for which computed kernel rows are retained.
    pub kernel_cache_limit: usize,
    /// Seed of the per-sweep random permutation.
    pub shuffle_seed: u64,
    /// Coefficients below this fraction of the largest one are dropped from
    /// the support of a learned metric.
    pub support_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tolerance: 1e-6,
            max_iterations: None,
            kernel_cache_limit: 8192,
            shuffle_seed: 0,
            support_threshold: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if !(self.support_threshold >= 0.0 && self.support_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "support_threshold must lie in [0, 1), got {}",
                self.support_threshold
            )));
        }
        Ok(())
    }

    fn sweep_cap(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or(1000 * n.max(1))
    }
}

/// `⟨a, b⟩²`, the kernel induced by `φ(x) = x xᵀ`.
pub fn quadratic_kernel(a: &FeatureVector, b: &FeatureVector) -> Result<f64> {
    a.ensure_dim(b.dim())?;
    let t = linalg::dot(a, b);
    Ok(t * t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// `⟨a, b⟩²`: learns a Mahalanobis matrix.
    Quadratic,
    /// `⟨a, b⟩`: learns a linear scorer (exemplar-SVM).
    Linear,
}

impl Kernel {
    #[inline]
    pub fn apply(self, dot: f64) -> f64 {
        match self {
            Kernel::Quadratic => dot * dot,
            Kernel::Linear => dot,
        }
    }
}

/// Inner products between the difference vectors of a problem.
pub trait DiffDots: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `‖x̃_i‖²`
    fn self_dot(&self, i: usize) -> f64;

    /// Writes `x̃_i · x̃_j` for every `j` into `out`.
    fn row_dots(&self, i: usize, out: &mut [f64]);
}

/// Difference vectors stored densely, row-major.
#[derive(Debug, Clone)]
pub struct DenseDiffs {
    dim: usize,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl DenseDiffs {
    pub fn new(dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(dim * rows.len());
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        let norms = data.chunks_exact(dim.max(1)).map(linalg::norm_sq).collect();
        Ok(DenseDiffs { dim, data, norms })
    }

    pub fn from_problem(p: &ExemplarProblem) -> Self {
        let dim = p.dim();
        let mut data = Vec::with_capacity(dim * p.len());
        for x in p.negatives() {
            data.extend(x.iter().zip(p.query().iter()).map(|(a, b)| a - b));
        }
        let norms = data.chunks_exact(dim).map(linalg::norm_sq).collect();
        DenseDiffs { dim, data, norms }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

impl DiffDots for DenseDiffs {
    fn len(&self) -> usize {
        self.norms.len()
    }

    fn self_dot(&self, i: usize) -> f64 {
        self.norms[i]
    }

    fn row_dots(&self, i: usize, out: &mut [f64]) {
        let xi = self.row(i);
        for (o, xj) in out.iter_mut().zip(self.data.chunks_exact(self.dim)) {
            *o = linalg::dot(xi, xj);
        }
    }
}

/// A fully specified box-constrained dual.
pub struct DualProblem<'a, D: DiffDots + ?Sized> {
    dots: &'a D,
    kernel: Kernel,
    /// `+1` for ordinary constraints, `−1` for query-side rows.
    labels: Vec<f64>,
    margin: f64,
    upper: f64,
    hard: bool,
}

impl<'a, D: DiffDots + ?Sized> DualProblem<'a, D> {
    /// All rows are ordinary margin constraints.
    pub fn new(dots: &'a D, kernel: Kernel, margin: f64, slack: Slack) -> Self {
        let labels = vec![1.0; dots.len()];
        Self::with_labels(dots, kernel, margin, slack, labels)
    }

    pub fn with_labels(
        dots: &'a D,
        kernel: Kernel,
        margin: f64,
        slack: Slack,
        labels: Vec<f64>,
    ) -> Self {
        assert_eq!(labels.len(), dots.len(), "one label per row");
        let (upper, hard) = match slack {
            Slack::Hard => (HARD_MARGIN_C, true),
            Slack::Soft(c) => (c, false),
        };
        DualProblem {
            dots,
            kernel,
            labels,
            margin,
            upper,
            hard,
        }
    }

    fn target(&self, i: usize) -> f64 {
        if self.labels[i] > 0.0 {
            self.margin
        } else {
            0.0
        }
    }

    fn kernel_row(&self, i: usize, out: &mut [f64]) {
        self.dots.row_dots(i, out);
        for v in out.iter_mut() {
            *v = self.kernel.apply(*v);
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct SolveTrace {
    /// Dual objective after every sweep.
    pub objective_per_sweep: Vec<f64>,
    /// Coordinate updates performed in total.
    pub updates: usize,
    /// Kernel rows computed (cache misses).
    pub rows_computed: usize,
}

/// Lazily filled kernel rows; rows are retained only when `retain` is set.
struct RowStore {
    rows: Vec<Option<Box<[f64]>>>,
    scratch: Vec<f64>,
    retain: bool,
    computed: usize,
}

impl RowStore {
    fn new(n: usize, retain: bool) -> Self {
        RowStore {
            rows: if retain { vec![None; n] } else { Vec::new() },
            scratch: vec![0.0; n],
            retain,
            computed: 0,
        }
    }

    fn get<D: DiffDots + ?Sized>(&mut self, p: &DualProblem<'_, D>, i: usize) -> &[f64] {
        if self.retain {
            if self.rows[i].is_none() {
                let mut row = vec![0.0; p.labels.len()].into_boxed_slice();
                p.kernel_row(i, &mut row);
                self.rows[i] = Some(row);
                self.computed += 1;
            }
            self.rows[i].as_deref().unwrap()
        } else {
            p.kernel_row(i, &mut self.scratch);
            self.computed += 1;
            &self.scratch
        }
    }
}

/// Violation of the optimality conditions at coordinate `i`.
#[inline]
fn coordinate_violation(alpha: f64, grad: f64, upper: f64, hard: bool) -> f64 {
    if alpha <= 0.0 {
        grad.max(0.0)
    } else if !hard && alpha >= upper {
        (-grad).max(0.0)
    } else {
        grad.abs()
    }
}

/// Runs coordinate ascent from `init` (zero when `None`).
pub fn solve_problem<D: DiffDots + ?Sized>(
    p: &DualProblem<'_, D>,
    cfg: &SolverConfig,
    init: Option<&[f64]>,
    mut trace: Option<&mut SolveTrace>,
) -> Result<DualSolution> {
    cfg.validate()?;
    let n = p.labels.len();
    let diag: Vec<f64> = (0..n).map(|i| p.kernel.apply(p.dots.self_dot(i))).collect();
    let active: Vec<usize> = (0..n).filter(|&i| diag[i] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::Infeasible(
            "every difference vector is zero; no constraint can be met".into(),
        ));
    }

    let mut alpha = match init {
        Some(a) => {
            if a.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: a.len(),
                });
            }
            a.iter()
                .zip(&diag)
                .map(|(&v, &k)| if k > 0.0 { v.clamp(0.0, p.upper) } else { 0.0 })
                .collect()
        }
        None => vec![0.0; n],
    };

    let mut rows = RowStore::new(n, n <= cfg.kernel_cache_limit);
    // f_i = Σ_j α_j y_j K_ij
    let mut f = vec![0.0; n];
    let recompute_f = |alpha: &[f64], f: &mut [f64], rows: &mut RowStore| {
        f.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n {
            if alpha[j] > 0.0 {
                let s = alpha[j] * p.labels[j];
                linalg::axpy(s, rows.get(p, j), f);
            }
        }
    };
    recompute_f(&alpha, &mut f, &mut rows);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
    let mut order = active.clone();
    let cap = cfg.sweep_cap(n);
    let tol = cfg.tolerance;
    let mut sweeps = 0;
    let mut updates = 0;

    let converged = loop {
        if sweeps >= cap {
            break false;
        }
        order.shuffle(&mut rng);
        let mut sweep_updates = 0;
        for &i in &order {
            let y = p.labels[i];
            let grad = p.target(i) - y * f[i];
            if coordinate_violation(alpha[i], grad, p.upper, p.hard) <= tol {
                continue;
            }
            let new = (alpha[i] + grad / diag[i]).clamp(0.0, p.upper);
            let delta = new - alpha[i];
            if delta == 0.0 {
                continue;
            }
            alpha[i] = new;
            linalg::axpy(delta * y, rows.get(p, i), &mut f);
            sweep_updates += 1;
        }
        sweeps += 1;
        updates += sweep_updates;
        if p.hard && alpha.iter().any(|&a| a >= p.upper) {
            return Err(Error::Infeasible(
                "dual coefficients diverged; constraints cannot be met with a hard margin".into(),
            ));
        }
        if sweep_updates > 0 && sweeps % NEWTON_EVERY == 0 {
            newton_step(p, &mut alpha, &mut f, &mut rows);
        }
        if let Some(t) = trace.as_deref_mut() {
            t.objective_per_sweep.push(objective_from_f(p, &alpha, &f));
        }
        if sweep_updates == 0 {
            // Incremental updates drift; confirm against an exact gradient.
            recompute_f(&alpha, &mut f, &mut rows);
            if max_violation(p, &alpha, &f, &diag) <= tol {
                break true;
            }
        }
    };

    if let Some(t) = trace {
        t.updates = updates;
        t.rows_computed = rows.computed;
    }
    let kkt_violation = max_violation(p, &alpha, &f, &diag);
    let objective_value = objective_from_f(p, &alpha, &f);
    let solution = DualSolution {
        alphas: alpha,
        iterations: sweeps,
        kkt_violation,
        objective_value,
        converged,
    };
    if converged {
        Ok(solution)
    } else {
        Err(Error::IterationLimit(Box::new(solution)))
    }
}

/// Exact ascent on the free coordinates F. With `Q` the signed kernel and
/// `g` the gradient on F, the Newton direction `Δ = Q_FF⁺ g` is followed up
/// to the first bound; along it the dual is `c (t − t²/2)` with `c ≥ 0`, so
/// any step in `[0, 1]` improves it. When `Q_FF` is singular, the part of
/// `g` outside its range raises the dual linearly and is followed until a
/// coefficient reaches zero. Coordinate ascent crawls on nearly parallel
/// constraints; this finishes them off.
fn newton_step<D: DiffDots + ?Sized>(
    p: &DualProblem<'_, D>,
    alpha: &mut [f64],
    f: &mut [f64],
    rows: &mut RowStore,
) {
    for _ in 0..8 {
        let free: Vec<usize> = (0..alpha.len())
            .filter(|&i| alpha[i] > 0.0 && (p.hard || alpha[i] < p.upper))
            .collect();
        if free.is_empty() || free.len() > NEWTON_MAX_FREE {
            return;
        }
        let k = free.len();
        let mut q = DMatrix::<f64>::zeros(k, k);
        for (a, &i) in free.iter().enumerate() {
            let row = rows.get(p, i);
            for (b, &j) in free.iter().enumerate() {
                q[(a, b)] = p.labels[i] * p.labels[j] * row[j];
            }
        }
        let g = DVector::from_iterator(k, free.iter().map(|&i| p.target(i) - p.labels[i] * f[i]));
        let svd = q.clone().svd(true, true);
        let cutoff = 1e-12 * svd.singular_values.max();
        let Ok(newton) = svd.solve(&g, cutoff) else {
            return;
        };
        let residual = &g - &q * &newton;
        let (direction, mut t) = if residual.norm() > 1e-9 * g.norm() {
            // linear ascent; stop early only if curvature shows up after all
            let curve = residual.dot(&(&q * &residual));
            let peak = if curve > 0.0 {
                residual.norm_squared() / curve
            } else {
                f64::INFINITY
            };
            (residual, peak)
        } else {
            (newton, 1.0)
        };
        if !direction.iter().all(|v| v.is_finite()) {
            return;
        }
        let mut blocking = None;
        for (a, &i) in free.iter().enumerate() {
            let limit = if direction[a] < 0.0 {
                -alpha[i] / direction[a]
            } else if !p.hard && direction[a] > 0.0 {
                (p.upper - alpha[i]) / direction[a]
            } else {
                continue;
            };
            if limit < t {
                t = limit;
                blocking = Some(a);
            }
        }
        if !(t > 0.0 && t.is_finite()) {
            return;
        }
        for (a, &i) in free.iter().enumerate() {
            let mut new = (alpha[i] + t * direction[a]).clamp(0.0, p.upper);
            if blocking == Some(a) {
                new = if direction[a] < 0.0 { 0.0 } else { p.upper };
            }
            let step = new - alpha[i];
            if step != 0.0 {
                alpha[i] = new;
                linalg::axpy(step * p.labels[i], rows.get(p, i), f);
            }
        }
        if blocking.is_none() {
            return;
        }
    }
}

fn max_violation<D: DiffDots + ?Sized>(
    p: &DualProblem<'_, D>,
    alpha: &[f64],
    f: &[f64],
    diag: &[f64],
) -> f64 {
    (0..alpha.len())
        .filter(|&i| diag[i] > 0.0)
        .map(|i| {
            let grad = p.target(i) - p.labels[i] * f[i];
            coordinate_violation(alpha[i], grad, p.upper, p.hard)
        })
        .fold(0.0, f64::max)
}

fn objective_from_f<D: DiffDots + ?Sized>(p: &DualProblem<'_, D>, alpha: &[f64], f: &[f64]) -> f64 {
    (0..alpha.len())
        .map(|i| alpha[i] * (p.target(i) - 0.5 * p.labels[i] * f[i]))
        .sum()
}

/// Solves the metric dual of `p` with the quadratic kernel.
pub fn solve_dual(p: &ExemplarProblem, cfg: &SolverConfig) -> Result<DualSolution> {
    let diffs = DenseDiffs::from_problem(p);
    let dual = DualProblem::new(&diffs, Kernel::Quadratic, p.margin(), p.slack());
    solve_problem(&dual, cfg, None, None)
}

/// As [`solve_dual`], starting from `init` and recording per-sweep progress.
pub fn solve_dual_traced(
    p: &ExemplarProblem,
    cfg: &SolverConfig,
    init: Option<&[f64]>,
) -> Result<(DualSolution, SolveTrace)> {
    let diffs = DenseDiffs::from_problem(p);
    let dual = DualProblem::new(&diffs, Kernel::Quadratic, p.margin(), p.slack());
    let mut trace = SolveTrace::default();
    let sol = solve_problem(&dual, cfg, init, Some(&mut trace))?;
    Ok((sol, trace))
}

/// `g(α) = margin · Σα_i − ½ Σ_ij α_i α_j ⟨x̃_i, x̃_j⟩²`, evaluated directly.
pub fn dual_objective(p: &ExemplarProblem, alphas: &[f64]) -> Result<f64> {
    if alphas.len() != p.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: alphas.len(),
        });
    }
    if alphas.iter().any(|&a| !(a >= 0.0)) {
        return Err(Error::InvalidInput(
            "dual coefficients must be nonnegative".into(),
        ));
    }
    let diffs = p.differences();
    let mut quad = 0.0;
    for (i, xi) in diffs.iter().enumerate() {
        if alphas[i] == 0.0 {
            continue;
        }
        for (j, xj) in diffs.iter().enumerate() {
            let t = linalg::dot(xi, xj);
            quad += alphas[i] * alphas[j] * t * t;
        }
    }
    Ok(p.margin() * alphas.iter().sum::<f64>() - 0.5 * quad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn axes_problem() -> ExemplarProblem {
        ExemplarProblem::new(fv(&[0.0, 0.0]), vec![fv(&[1.0, 0.0]), fv(&[0.0, 1.0])]).unwrap()
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(
            quadratic_kernel(&fv(&[1.0, 0.0]), &fv(&[1.0, 0.0])).unwrap(),
            1.0
        );
        assert_eq!(
            quadratic_kernel(&fv(&[1.0, 0.0]), &fv(&[0.0, 1.0])).unwrap(),
            0.0
        );
        assert_eq!(
            quadratic_kernel(&fv(&[1.0, 2.0]), &fv(&[3.0, 1.0])).unwrap(),
            25.0
        );
        assert!(matches!(
            quadratic_kernel(&fv(&[1.0]), &fv(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn axes_fixture_solves_to_two_two() {
        let sol = solve_dual(&axes_problem(), &SolverConfig::default()).unwrap();
        assert!((sol.alphas[0] - 2.0).abs() < 1e-9);
        assert!((sol.alphas[1] - 2.0).abs() < 1e-9);
        assert!((sol.objective_value - 4.0).abs() < 1e-9);
        assert!(sol.converged);
        assert!(sol.kkt_violation <= 1e-6);
    }

    #[test]
    fn single_negative_closed_form() {
        let p = ExemplarProblem::new(fv(&[0.0, 0.0]), vec![fv(&[1.0, 0.0])]).unwrap();
        let sol = solve_dual(&p, &SolverConfig::default()).unwrap();
        assert!((sol.alphas[0] - 2.0).abs() < 1e-12);
        // f_1 = α K_11 = 2
        let f1 = sol.alphas[0] * quadratic_kernel(&fv(&[1.0, 0.0]), &fv(&[1.0, 0.0])).unwrap();
        assert!((f1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn warm_start_at_optimum_needs_no_updates() {
        let p = axes_problem();
        let (sol, trace) =
            solve_dual_traced(&p, &SolverConfig::default(), Some(&[2.0, 2.0])).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(trace.updates, 0);
        assert_eq!(sol.alphas, vec![2.0, 2.0]);
    }

    #[test]
    fn dual_objective_examples() {
        let p = axes_problem();
        assert_eq!(dual_objective(&p, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(dual_objective(&p, &[2.0, 2.0]).unwrap(), 4.0);
        assert_eq!(dual_objective(&p, &[1.0, 1.0]).unwrap(), 3.0);
        assert!(dual_objective(&p, &[1.0]).is_err());
        assert!(dual_objective(&p, &[-1.0, 0.0]).is_err());
    }

    #[test]
    fn degenerate_negatives_are_skipped() {
        let p =
            ExemplarProblem::new(fv(&[0.0, 0.0]), vec![fv(&[0.0, 0.0]), fv(&[1.0, 0.0])]).unwrap();
        let sol = solve_dual(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.alphas[0], 0.0);
        assert!((sol.alphas[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn all_degenerate_is_infeasible() {
        let p = ExemplarProblem::new(fv(&[1.0, 1.0]), vec![fv(&[1.0, 1.0])]).unwrap();
        assert!(matches!(
            solve_dual(&p, &SolverConfig::default()),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn soft_margin_caps_alphas() {
        let p = axes_problem().with_slack(Slack::Soft(0.5)).unwrap();
        let sol = solve_dual(&p, &SolverConfig::default()).unwrap();
        assert_eq!(sol.alphas, vec![0.5, 0.5]);
    }

    #[test]
    fn iteration_limit_returns_partial_solution() {
        let p = ExemplarProblem::new(
            fv(&[0.0, 0.0]),
            vec![fv(&[1.0, 0.2]), fv(&[0.9, 0.5]), fv(&[0.3, 1.0])],
        )
        .unwrap();
        let cfg = SolverConfig {
            max_iterations: Some(1),
            tolerance: 1e-14,
            ..SolverConfig::default()
        };
        match solve_dual(&p, &cfg) {
            Err(Error::IterationLimit(sol)) => {
                assert_eq!(sol.iterations, 1);
                assert!(!sol.converged);
                assert!(sol.kkt_violation > 1e-14);
            }
            other => panic!("expected IterationLimit, got {other:?}"),
        }
    }

    #[test]
    fn uncached_rows_give_same_answer() {
        let p = ExemplarProblem::new(
            fv(&[0.1, 0.0, -0.2]),
            vec![
                fv(&[1.0, 0.2, 0.0]),
                fv(&[0.9, 0.5, 0.1]),
                fv(&[0.3, 1.0, -0.4]),
                fv(&[-0.5, 0.3, 0.8]),
            ],
        )
        .unwrap();
        let cached = solve_dual(&p, &SolverConfig::default()).unwrap();
        let cfg = SolverConfig {
            kernel_cache_limit: 0,
            ..SolverConfig::default()
        };
        let uncached = solve_dual(&p, &cfg).unwrap();
        assert_eq!(cached.alphas, uncached.alphas);
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig {
            tolerance: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            max_iterations: Some(0),
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}

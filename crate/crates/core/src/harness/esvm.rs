//! Exemplar-SVM baseline: the same fixed-bias dual with a linear kernel.

use super::config::ExperimentConfig;
use super::gram::{Gram, GramDiffs, StackedDiffs};
use super::learn::{negative_indices, tangents_for};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{DualSolution, ExemplarProblem, FeatureVector, Slack};
use crate::solver::{solve_problem, DenseDiffs, DiffDots, DualProblem, Kernel, SolverConfig};

/// `score(q) = w · (q − x₀)`; larger means further from the exemplar.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearScorer {
    anchor: FeatureVector,
    weights: Vec<f64>,
    offset: f64,
    pub converged: bool,
}

impl LinearScorer {
    fn new(anchor: FeatureVector, weights: Vec<f64>, converged: bool) -> Self {
        let offset = linalg::dot(&weights, &anchor);
        LinearScorer {
            anchor,
            weights,
            offset,
            converged,
        }
    }

    pub fn anchor(&self) -> &FeatureVector {
        &self.anchor
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn score(&self, q: &FeatureVector) -> Result<f64> {
        q.ensure_dim(self.anchor.dim())?;
        Ok(self.score_slice(q))
    }

    pub(crate) fn score_slice(&self, q: &[f64]) -> f64 {
        linalg::dot(&self.weights, q) - self.offset
    }
}

fn solve_linear<D: DiffDots + ?Sized>(
    dots: &D,
    labels: Vec<f64>,
    margin: f64,
    c: f64,
    cfg: &SolverConfig,
) -> Result<DualSolution> {
    let dual = DualProblem::with_labels(dots, Kernel::Linear, margin, Slack::Soft(c), labels);
    match solve_problem(&dual, cfg, None, None) {
        Err(Error::IterationLimit(partial)) => Ok(*partial),
        other => other,
    }
}

fn check_c(c: f64) -> Result<()> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "eSVM C must be positive, got {c}"
        )));
    }
    Ok(())
}

/// Soft-margin linear exemplar-SVM at `p.query()` against `p.negatives()`.
/// Each of `positives` adds a row `x − x₀` asking for a non-positive score.
pub fn exemplar_svm_baseline(
    p: &ExemplarProblem,
    positives: &[FeatureVector],
    c: f64,
    cfg: &SolverConfig,
) -> Result<LinearScorer> {
    check_c(c)?;
    let x0 = p.query();
    let mut rows = p.differences();
    for x in positives {
        x.ensure_dim(p.dim())?;
        rows.push(linalg::sub(x, x0));
    }
    let mut labels = vec![1.0; p.len()];
    labels.resize(rows.len(), -1.0);
    let diffs = DenseDiffs::new(p.dim(), &rows)?;
    let sol = solve_linear(&diffs, labels.clone(), p.margin(), c, cfg)?;
    let mut w = vec![0.0; p.dim()];
    for ((a, y), r) in sol.alphas.iter().zip(&labels).zip(&rows) {
        if *a > 0.0 {
            linalg::axpy(a * y, r, &mut w);
        }
    }
    Ok(LinearScorer::new(x0.clone(), w, sol.converged))
}

/// The harness variant working from the shared training Gram matrix.
pub(crate) fn learn_linear(
    train: &crate::io::LabeledSet,
    gram: &Gram,
    i: usize,
    shifts: bool,
    cfg: &ExperimentConfig,
) -> Result<LinearScorer> {
    let x = train.vectors();
    let x0 = &x[i];
    let members = negative_indices(train.labels(), i, cfg.negatives_per_exemplar, cfg.seed);
    if members.is_empty() {
        return Err(Error::InvalidInput(format!(
            "exemplar {i} has no other-class data"
        )));
    }
    let base = GramDiffs::new(gram, members.clone(), gram.row(i), gram.get(i, i));
    let extra: Vec<Vec<f64>> = if shifts {
        tangents_for(x0, cfg)?
            .raw()
            .iter()
            .map(|r| r.as_slice().to_vec())
            .collect()
    } else {
        Vec::new()
    };
    let cross: Vec<Vec<f64>> = extra
        .iter()
        .map(|e| {
            let ex0 = linalg::dot(e, x0);
            members
                .iter()
                .map(|&m| linalg::dot(e, &x[m]) - ex0)
                .collect()
        })
        .collect();
    let stacked = StackedDiffs::new(&base, &extra, cross);
    let mut labels = vec![1.0; members.len()];
    labels.resize(stacked.len(), -1.0);
    let sol = solve_linear(&stacked, labels, cfg.margin, cfg.esvm_c, &cfg.solver)?;

    let mut w = vec![0.0; x0.dim()];
    let mut anchor_weight = 0.0;
    for (a, &m) in sol.alphas.iter().zip(&members) {
        if *a > 0.0 {
            linalg::axpy(*a, &x[m], &mut w);
            anchor_weight += a;
        }
    }
    linalg::axpy(-anchor_weight, x0, &mut w);
    for (a, e) in sol.alphas[members.len()..].iter().zip(&extra) {
        if *a > 0.0 {
            linalg::axpy(-a, e, &mut w);
        }
    }
    Ok(LinearScorer::new(x0.clone(), w, sol.converged))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn single_negative_direction() {
        let p = ExemplarProblem::new(fv(&[0.0, 0.0]), vec![fv(&[1.0, 0.0])]).unwrap();
        let s = exemplar_svm_baseline(&p, &[], 1.0, &SolverConfig::default()).unwrap();
        assert!(s.weights()[0] > 0.0);
        assert_eq!(s.weights()[1], 0.0);
        assert_eq!(s.score(&fv(&[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_negatives_cancel() {
        let p =
            ExemplarProblem::new(fv(&[0.0, 0.0]), vec![fv(&[0.0, 1.0]), fv(&[0.0, -1.0])]).unwrap();
        let s = exemplar_svm_baseline(&p, &[], 1.0, &SolverConfig::default()).unwrap();
        assert!(s.weights()[1].abs() < 1e-12);
    }

    #[test]
    fn positives_pull_score_down() {
        let x0 = fv(&[0.0, 0.0]);
        let p = ExemplarProblem::new(x0, vec![fv(&[1.0, 0.0]), fv(&[1.0, 1.0])]).unwrap();
        let cfg = SolverConfig::default();
        let plain = exemplar_svm_baseline(&p, &[], 1.0, &cfg).unwrap();
        let shifted = exemplar_svm_baseline(&p, &[fv(&[0.0, 0.5])], 1.0, &cfg).unwrap();
        let q = fv(&[0.0, 0.5]);
        assert!(shifted.score(&q).unwrap() < plain.score(&q).unwrap());
    }

    #[test]
    fn gram_variant_matches_dense() {
        use crate::io::make_blobs;
        let set = make_blobs(2, 4, 3, 0.5, 2).unwrap();
        let cfg = ExperimentConfig::default();
        let gram = Gram::new(set.vectors());
        let i = 1;
        let s = learn_linear(&set, &gram, i, false, &cfg).unwrap();
        let negs: Vec<FeatureVector> = (0..set.len())
            .filter(|&j| set.labels()[j] != set.labels()[i])
            .map(|j| set.vectors()[j].clone())
            .collect();
        let p = ExemplarProblem::new(set.vectors()[i].clone(), negs).unwrap();
        let d = exemplar_svm_baseline(&p, &[], cfg.esvm_c, &cfg.solver).unwrap();
        for (a, b) in s.weights().iter().zip(d.weights()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

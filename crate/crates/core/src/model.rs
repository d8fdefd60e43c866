//! Shared domain types and their validity rules.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Deref;

use crate::error::{Error, Result};
use crate::linalg;
use crate::solver::SolverConfig;

/// Default fixed margin of the metric constraints.
pub const DEFAULT_MARGIN: f64 = 2.0;

/// A dense, finite, non-empty real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput(
                "feature vector must have d >= 1".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite entry {} at position {i}",
                values[i]
            )));
        }
        Ok(FeatureVector(values))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub(crate) fn ensure_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        FeatureVector::new(values)
    }
}

/// Hard margin, or soft margin with slack penalty `C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slack {
    Hard,
    Soft(f64),
}

impl Slack {
    /// Conventional soft-margin penalty when none is given.
    pub const DEFAULT_C: f64 = 1.0;

    fn validate(self) -> Result<Self> {
        match self {
            Slack::Soft(c) if !(c.is_finite() && c > 0.0) => Err(Error::InvalidInput(format!(
                "soft-margin C must be positive and finite, got {c}"
            ))),
            other => Ok(other),
        }
    }
}

impl fmt::Display for Slack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slack::Hard => f.write_str("hard"),
            Slack::Soft(c) => write!(f, "{c:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemWarning {
    /// The negative coincides with the query; it is left out of the solve.
    DegenerateNegative { index: usize },
}

impl fmt::Display for ProblemWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProblemWarning::DegenerateNegative { index } => {
                write!(f, "degenerate negative at index {index}")
            }
        }
    }
}

/// Checks a query against its negatives. Dimension mismatches are errors,
/// negatives equal to the query are reported as warnings.
pub fn validate_problem(
    query: &FeatureVector,
    negatives: &[FeatureVector],
) -> Result<Vec<ProblemWarning>> {
    let d = query.dim();
    let mut warnings = Vec::new();
    for (index, x) in negatives.iter().enumerate() {
        x.ensure_dim(d)?;
        if x.as_slice() == query.as_slice() {
            warnings.push(ProblemWarning::DegenerateNegative { index });
        }
    }
    Ok(warnings)
}

/// One query point and the negatives it must be separated from.
#[derive(Debug, Clone)]
pub struct ExemplarProblem {
    query: FeatureVector,
    negatives: Vec<FeatureVector>,
    margin: f64,
    slack: Slack,
    warnings: Vec<ProblemWarning>,
}

impl ExemplarProblem {
    /// Hard-margin problem with the default margin of 2.
    pub fn new(query: FeatureVector, negatives: Vec<FeatureVector>) -> Result<Self> {
        if negatives.is_empty() {
            return Err(Error::InvalidInput(
                "at least one negative is required".into(),
            ));
        }
        let warnings = validate_problem(&query, &negatives)?;
        Ok(ExemplarProblem {
            query,
            negatives,
            margin: DEFAULT_MARGIN,
            slack: Slack::Hard,
            warnings,
        })
    }

    pub fn with_margin(mut self, margin: f64) -> Result<Self> {
        if !(margin.is_finite() && margin > 0.0) {
            return Err(Error::InvalidInput(format!(
                "margin must be positive, got {margin}"
            )));
        }
        self.margin = margin;
        Ok(self)
    }

    pub fn with_slack(mut self, slack: Slack) -> Result<Self> {
        self.slack = slack.validate()?;
        Ok(self)
    }

    pub fn query(&self) -> &FeatureVector {
        &self.query
    }

    pub fn negatives(&self) -> &[FeatureVector] {
        &self.negatives
    }

    pub fn dim(&self) -> usize {
        self.query.dim()
    }

    pub fn len(&self) -> usize {
        self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.negatives.is_empty()
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn slack(&self) -> Slack {
        self.slack
    }

    pub fn warnings(&self) -> &[ProblemWarning] {
        &self.warnings
    }

    /// Difference vectors `x_i - x0`, one per negative (degenerate ones are zero).
    pub fn differences(&self) -> Vec<Vec<f64>> {
        self.negatives
            .iter()
            .map(|x| linalg::sub(x, &self.query))
            .collect()
    }
}

/// Dual coefficients returned by a solve, one per negative.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alphas: Vec<f64>,
    /// Completed coordinate sweeps (or gradient steps for the oracle).
    pub iterations: usize,
    pub kkt_violation: f64,
    pub objective_value: f64,
    pub converged: bool,
}

/// One term `alpha * u u^T` of a learned metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPair {
    pub alpha: f64,
    pub direction: FeatureVector,
}

/// Settings a metric was learned with, kept for serialization and reports.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricProvenance {
    pub margin: f64,
    pub slack: Slack,
    pub solver: SolverConfig,
}

/// Orthonormalized tangent directions `T_j(x0) - x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentSet {
    raw: Vec<FeatureVector>,
    basis: Vec<FeatureVector>,
}

impl TangentSet {
    pub const ORTHO_TOLERANCE: f64 = 1e-10;
    pub const SPAN_TOLERANCE: f64 = 1e-8;

    /// Assembles a tangent set from precomputed parts, checking orthonormality
    /// of the basis and that every raw tangent lies in its span.
    pub fn from_parts(raw: Vec<FeatureVector>, basis: Vec<FeatureVector>) -> Result<Self> {
        let d = raw.first().or(basis.first()).map(|v| v.dim()).unwrap_or(0);
        for v in raw.iter().chain(&basis) {
            v.ensure_dim(d)?;
        }
        for (i, b) in basis.iter().enumerate() {
            if (linalg::norm(b) - 1.0).abs() > Self::ORTHO_TOLERANCE {
                return Err(Error::InvalidInput(format!(
                    "basis vector {i} is not unit norm"
                )));
            }
            for (j, c) in basis.iter().enumerate().skip(i + 1) {
                if linalg::dot(b, c).abs() > Self::ORTHO_TOLERANCE {
                    return Err(Error::InvalidInput(format!(
                        "basis vectors {i} and {j} are not orthogonal"
                    )));
                }
            }
        }
        let set = TangentSet { raw, basis };
        for (j, r) in set.raw.iter().enumerate() {
            let residual = linalg::norm(&set.project_out(r));
            if residual > Self::SPAN_TOLERANCE * linalg::norm(r).max(f64::MIN_POSITIVE) {
                return Err(Error::InvalidInput(format!(
                    "raw tangent {j} is not in the span of the basis"
                )));
            }
        }
        Ok(set)
    }

    pub(crate) fn from_parts_unchecked(raw: Vec<FeatureVector>, basis: Vec<FeatureVector>) -> Self {
        TangentSet { raw, basis }
    }

    pub fn raw(&self) -> &[FeatureVector] {
        &self.raw
    }

    pub fn basis(&self) -> &[FeatureVector] {
        &self.basis
    }

    pub fn dim(&self) -> Option<usize> {
        self.raw.first().or(self.basis.first()).map(|v| v.dim())
    }

    /// `v - sum_b (v.b) b` without dimension checks.
    pub(crate) fn project_out(&self, v: &[f64]) -> Vec<f64> {
        let mut out = v.to_vec();
        for b in &self.basis {
            let c = linalg::dot(&out, b);
            linalg::axpy(-c, b, &mut out);
        }
        out
    }
}

/// A learned local metric `M = sum_k alpha_k u_k u_k^T` anchored at `x0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMetric {
    anchor: FeatureVector,
    support: Vec<SupportPair>,
    tangents: Option<TangentSet>,
    provenance: MetricProvenance,
}

impl LocalMetric {
    pub fn new(
        anchor: FeatureVector,
        support: Vec<SupportPair>,
        tangents: Option<TangentSet>,
        provenance: MetricProvenance,
    ) -> Result<Self> {
        let d = anchor.dim();
        for (k, pair) in support.iter().enumerate() {
            pair.direction.ensure_dim(d)?;
            if !(pair.alpha.is_finite() && pair.alpha > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "support coefficient {k} must be positive, got {}",
                    pair.alpha
                )));
            }
        }
        if let Some(dim) = tangents.as_ref().and_then(TangentSet::dim) {
            if dim != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: dim,
                });
            }
        }
        Ok(LocalMetric {
            anchor,
            support,
            tangents,
            provenance,
        })
    }

    pub fn anchor(&self) -> &FeatureVector {
        &self.anchor
    }

    pub fn support(&self) -> &[SupportPair] {
        &self.support
    }

    pub fn tangents(&self) -> Option<&TangentSet> {
        self.tangents.as_ref()
    }

    pub fn provenance(&self) -> &MetricProvenance {
        &self.provenance
    }

    pub fn dim(&self) -> usize {
        self.anchor.dim()
    }
}

/// Error counts for one class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassTally {
    pub errors: usize,
    pub total: usize,
}

impl ClassTally {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.errors as f64 / self.total as f64
        }
    }
}

/// Results of one evaluated method.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub task_name: String,
    pub error_rate: f64,
    pub per_class: BTreeMap<String, ClassTally>,
    /// Held-out error per fold (pair verification only).
    pub fold_errors: Vec<f64>,
    /// Wall-clock seconds per stage. Not part of the deterministic report files.
    pub timings: Vec<(String, f64)>,
    pub config_echo: Vec<(String, String)>,
    /// Deterministic run statistics such as learning failures.
    pub diagnostics: Vec<(String, String)>,
}

impl EvalReport {
    /// Builds a report whose error rate is derived from the per-class tallies.
    pub fn from_tallies(
        task_name: impl Into<String>,
        per_class: BTreeMap<String, ClassTally>,
        config_echo: Vec<(String, String)>,
    ) -> Self {
        let (errors, total) = per_class
            .values()
            .fold((0, 0), |(e, t), c| (e + c.errors, t + c.total));
        let error_rate = if total == 0 {
            0.0
        } else {
            errors as f64 / total as f64
        };
        EvalReport {
            task_name: task_name.into(),
            error_rate,
            per_class,
            fold_errors: Vec::new(),
            timings: Vec::new(),
            config_echo,
            diagnostics: Vec::new(),
        }
    }

    pub fn per_class_errors(&self) -> BTreeMap<String, f64> {
        self.per_class
            .iter()
            .map(|(k, v)| (k.clone(), v.rate()))
            .collect()
    }

    pub fn total(&self) -> usize {
        self.per_class.values().map(|c| c.total).sum()
    }

    pub fn errors(&self) -> usize {
        self.per_class.values().map(|c| c.errors).sum()
    }

    /// Mean and sample standard deviation of the fold errors.
    pub fn fold_summary(&self) -> Option<(f64, f64)> {
        let k = self.fold_errors.len();
        if k == 0 {
            return None;
        }
        let mean = self.fold_errors.iter().sum::<f64>() / k as f64;
        let var = if k > 1 {
            self.fold_errors
                .iter()
                .map(|e| (e - mean).powi(2))
                .sum::<f64>()
                / (k - 1) as f64
        } else {
            0.0
        };
        Some((mean, var.sqrt()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn feature_vector_rejects_nan_and_empty() {
        assert!(FeatureVector::new(vec![]).is_err());
        assert!(FeatureVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(FeatureVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn well_formed_problem_has_no_warnings() {
        let w = validate_problem(&fv(&[0.0, 0.0]), &[fv(&[1.0, 0.0])]).unwrap();
        assert!(w.is_empty());
    }

    #[test]
    fn degenerate_negative_is_a_warning() {
        let w = validate_problem(&fv(&[0.0, 0.0]), &[fv(&[0.0, 0.0]), fv(&[1.0, 0.0])]).unwrap();
        assert_eq!(w, vec![ProblemWarning::DegenerateNegative { index: 0 }]);
        assert_eq!(w[0].to_string(), "degenerate negative at index 0");
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let err = validate_problem(&fv(&[0.0, 0.0]), &[fv(&[1.0, 0.0, 0.0])]).unwrap_err();
        assert!(matches!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                found: 3
            }
        ));
        assert!(ExemplarProblem::new(fv(&[0.0, 0.0]), vec![fv(&[1.0, 0.0, 0.0])]).is_err());
    }

    #[test]
    fn problem_invariants_enforced_at_construction() {
        assert!(ExemplarProblem::new(fv(&[0.0]), vec![]).is_err());
        let p = ExemplarProblem::new(fv(&[0.0]), vec![fv(&[1.0])]).unwrap();
        assert_eq!(p.margin(), 2.0);
        assert!(p.clone().with_margin(0.0).is_err());
        assert!(p.clone().with_margin(-1.0).is_err());
        assert!(p.clone().with_slack(Slack::Soft(0.0)).is_err());
        assert!(p.with_slack(Slack::Soft(0.5)).is_ok());
    }

    #[test]
    fn metric_rejects_nonpositive_alpha() {
        let prov = MetricProvenance {
            margin: 2.0,
            slack: Slack::Hard,
            solver: SolverConfig::default(),
        };
        let pair = SupportPair {
            alpha: 0.0,
            direction: fv(&[1.0, 0.0]),
        };
        assert!(LocalMetric::new(fv(&[0.0, 0.0]), vec![pair], None, prov).is_err());
    }

    #[test]
    fn tangent_parts_are_checked() {
        let raw = vec![fv(&[2.0, 0.0])];
        assert!(TangentSet::from_parts(raw.clone(), vec![fv(&[1.0, 0.0])]).is_ok());
        assert!(TangentSet::from_parts(raw.clone(), vec![fv(&[0.0, 1.0])]).is_err());
        assert!(TangentSet::from_parts(raw, vec![fv(&[2.0, 0.0])]).is_err());
    }

    #[test]
    fn report_rate_follows_tallies() {
        let mut per_class = BTreeMap::new();
        per_class.insert(
            "a".to_string(),
            ClassTally {
                errors: 1,
                total: 4,
            },
        );
        per_class.insert(
            "b".to_string(),
            ClassTally {
                errors: 0,
                total: 4,
            },
        );
        let r = EvalReport::from_tallies("t", per_class, vec![]);
        assert_eq!(r.error_rate, 0.125);
        assert_eq!(r.per_class_errors()["a"], 0.25);
    }
}

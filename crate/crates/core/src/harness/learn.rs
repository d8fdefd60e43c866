//! Per-exemplar metric learning over a training set.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, NegativeBudget};
use super::gram::{Gram, GramDiffs};
use super::run_indexed;
use crate::error::{Error, Result};
use crate::image::{make_tangents, RasterImage};
use crate::invariance::build_tangent_set;
use crate::io::LabeledSet;
use crate::linalg;
use crate::model::{FeatureVector, LocalMetric, MetricProvenance, Slack, SupportPair, TangentSet};
use crate::solver::{solve_problem, DiffDots, DualProblem, Kernel};

/// Which local metric to learn per exemplar.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Plain,
    Invariant,
}

/// Other-class indices for exemplar `i`, subsampled to the budget with a
/// stream of `seed` private to `i`. Returned sorted.
pub fn negative_indices(
    labels: &[usize],
    i: usize,
    budget: NegativeBudget,
    seed: u64,
) -> Vec<usize> {
    let others: Vec<usize> = (0..labels.len())
        .filter(|&j| labels[j] != labels[i])
        .collect();
    match budget {
        NegativeBudget::Count(k) if k < others.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, others.len(), k)
                .into_iter()
                .map(|p| others[p])
                .collect();
            picked.sort_unstable();
            picked
        }
        _ => others,
    }
}

/// Tangent set of training vector `x` under the configured transformations.
pub(crate) fn tangents_for(x: &FeatureVector, cfg: &ExperimentConfig) -> Result<TangentSet> {
    let (w, h) = cfg
        .image_shape
        .ok_or_else(|| Error::InvalidConfig("tangents need an image shape".into()))?;
    let img = RasterImage::from_feature(w, h, x)?;
    let moved = make_tangents(&img, cfg.tangent_spec.transforms())?;
    build_tangent_set(x, &moved)
}

/// A learned metric whose support directions are `x_m − x_anchor` (projected
/// off the tangent basis when present), referenced by training index.
#[derive(Debug, Clone)]
pub(crate) struct CompactMetric {
    anchor: usize,
    /// `(α, training index)`
    support: Vec<(f64, usize)>,
    tangents: Option<TangentSet>,
    /// `⟨b, x_anchor⟩` per basis vector
    basis_anchor: Vec<f64>,
    /// `⟨b, x_m − x_anchor⟩` per support member, row-major
    coeffs: Vec<f64>,
    pub slack: Slack,
    pub fell_back: bool,
    pub converged: bool,
}

impl CompactMetric {
    fn rank(&self) -> usize {
        self.basis_anchor.len()
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    /// Squared local distance from the anchor to `q`, given
    /// `cross[j] = ⟨x_j, q⟩` for every training index.
    pub fn distance(&self, gram: &Gram, cross: &[f64], q: &[f64]) -> f64 {
        let i = self.anchor;
        let base_i = gram.get(i, i) - cross[i];
        let r = self.rank();
        let bq: Vec<f64> = match &self.tangents {
            Some(t) if r > 0 => t
                .basis()
                .iter()
                .zip(&self.basis_anchor)
                .map(|(b, ba)| linalg::dot(b, q) - ba)
                .collect(),
            _ => Vec::new(),
        };
        let row = gram.row(i);
        self.support
            .iter()
            .enumerate()
            .map(|(k, &(alpha, m))| {
                let mut t = cross[m] - row[m] + base_i;
                if r > 0 {
                    t -= linalg::dot(&self.coeffs[k * r..(k + 1) * r], &bq);
                }
                alpha * t * t
            })
            .sum()
    }

    pub fn to_local_metric(
        &self,
        train: &[FeatureVector],
        cfg: &ExperimentConfig,
    ) -> Result<LocalMetric> {
        let x0 = &train[self.anchor];
        let support = self
            .support
            .iter()
            .map(|&(alpha, m)| {
                let u = linalg::sub(&train[m], x0);
                let u = match &self.tangents {
                    Some(t) => t.project_out(&u),
                    None => u,
                };
                Ok(SupportPair {
                    alpha,
                    direction: FeatureVector::new(u)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        LocalMetric::new(
            x0.clone(),
            support,
            self.tangents.clone(),
            MetricProvenance {
                margin: cfg.margin,
                slack: self.slack,
                solver: cfg.solver.clone(),
            },
        )
    }
}

/// Learns the metric of training datum `i` against other-class data.
pub(crate) fn learn_compact(
    train: &LabeledSet,
    gram: &Gram,
    i: usize,
    kind: MetricKind,
    cfg: &ExperimentConfig,
) -> Result<CompactMetric> {
    let x = train.vectors();
    let members = negative_indices(train.labels(), i, cfg.negatives_per_exemplar, cfg.seed);
    if members.is_empty() {
        return Err(Error::InvalidInput(format!(
            "exemplar {i} has no other-class data"
        )));
    }
    let mut diffs = GramDiffs::new(gram, members, gram.row(i), gram.get(i, i));
    let mut tangents = None;
    let mut basis_anchor = Vec::new();
    let mut member_coeffs = Vec::new();
    if kind == MetricKind::Invariant {
        let t = tangents_for(&x[i], cfg)?;
        basis_anchor = t.basis().iter().map(|b| linalg::dot(b, &x[i])).collect();
        let r = basis_anchor.len();
        member_coeffs = Vec::with_capacity(r * diffs.len());
        for &m in diffs.members() {
            for (b, ba) in t.basis().iter().zip(&basis_anchor) {
                member_coeffs.push(linalg::dot(b, &x[m]) - ba);
            }
        }
        let scale = (0..diffs.len())
            .map(|a| diffs.self_dot(a))
            .fold(0.0, f64::max);
        diffs = diffs.with_projection(member_coeffs.clone(), r, 1e-12 * scale);
        if (0..diffs.len()).all(|a| diffs.self_dot(a) == 0.0) {
            return Err(Error::Infeasible(format!(
                "every negative of exemplar {i} lies in its tangent span"
            )));
        }
        tangents = Some(t);
    }

    let solve = |slack: Slack| {
        let dual = DualProblem::new(&diffs, Kernel::Quadratic, cfg.margin, slack);
        match solve_problem(&dual, &cfg.solver, None, None) {
            Ok(sol) => Ok(sol),
            Err(Error::IterationLimit(partial)) => Ok(*partial),
            Err(e) => Err(e),
        }
    };
    let (sol, slack, fell_back) = match (solve(cfg.metric_slack), cfg.metric_slack) {
        (Ok(sol), slack) => (sol, slack, false),
        (Err(Error::Infeasible(_)), Slack::Hard) if diffs.len() > 0 => {
            let slack = Slack::Soft(Slack::DEFAULT_C);
            (solve(slack)?, slack, true)
        }
        (Err(e), _) => return Err(e),
    };

    let r = basis_anchor.len();
    let max_alpha = sol.alphas.iter().cloned().fold(0.0, f64::max);
    let cutoff = cfg.solver.support_threshold * max_alpha;
    let mut support = Vec::new();
    let mut coeffs = Vec::new();
    for (a, &alpha) in sol.alphas.iter().enumerate() {
        if alpha > 0.0 && alpha > cutoff {
            support.push((alpha, diffs.members()[a]));
            coeffs.extend_from_slice(&member_coeffs[a * r..(a + 1) * r]);
        }
    }
    Ok(CompactMetric {
        anchor: i,
        support,
        tangents,
        basis_anchor,
        coeffs,
        slack,
        fell_back,
        converged: sol.converged,
    })
}

pub(crate) fn check_training_set(train: &LabeledSet) -> Result<()> {
    if train.class_count() < 2 {
        return Err(Error::InvalidInput(
            "metric learning needs at least two classes in the training set".into(),
        ));
    }
    Ok(())
}

pub(crate) fn learn_compact_all(
    train: &LabeledSet,
    gram: &Gram,
    kind: MetricKind,
    cfg: &ExperimentConfig,
) -> Result<Vec<Result<CompactMetric>>> {
    check_training_set(train)?;
    run_indexed(cfg.workers, train.len(), |i| {
        learn_compact(train, gram, i, kind, cfg)
    })
}

/// One metric per training datum, learned against the data of every other
/// class (subsampled per the configured budget). A failing exemplar yields
/// an `Err` in its slot rather than aborting the run.
pub fn learn_all_metrics(
    train: &LabeledSet,
    kind: MetricKind,
    cfg: &ExperimentConfig,
) -> Result<Vec<Result<LocalMetric>>> {
    cfg.validate()?;
    if kind == MetricKind::Invariant && cfg.image_shape.is_none() {
        return Err(Error::InvalidConfig(
            "invariant metrics need an image shape".into(),
        ));
    }
    let gram = Gram::new(train.vectors());
    let compact = learn_compact_all(train, &gram, kind, cfg)?;
    Ok(compact
        .into_iter()
        .map(|c| c.and_then(|c| c.to_local_metric(train.vectors(), cfg)))
        .collect())
}

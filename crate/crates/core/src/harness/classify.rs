//! Test-set classification with every configured scoring method.

use std::collections::BTreeMap;
use std::time::Instant;

use super::config::{ExperimentConfig, Method};
use super::esvm::{learn_linear, LinearScorer};
use super::gram::Gram;
use super::knn::vote;
use super::learn::{check_training_set, learn_compact_all, CompactMetric, MetricKind};
use super::run_indexed;
use crate::error::{Error, Result};
use crate::io::LabeledSet;
use crate::linalg;
use crate::model::{ClassTally, EvalReport};

enum Scorers {
    L2,
    Metrics(Vec<Result<CompactMetric>>),
    Linear(Vec<Result<LinearScorer>>),
}

fn first(set: &LabeledSet, limit: usize) -> LabeledSet {
    if set.len() <= limit {
        set.clone()
    } else {
        set.subset(&(0..limit).collect::<Vec<_>>())
    }
}

fn diagnostics(scorers: &Scorers) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut put = |k: &str, v: String| out.push((k.to_string(), v));
    match scorers {
        Scorers::L2 => {}
        Scorers::Metrics(ms) => {
            let ok: Vec<&CompactMetric> = ms.iter().filter_map(|m| m.as_ref().ok()).collect();
            put("learn_failures", (ms.len() - ok.len()).to_string());
            put(
                "soft_fallbacks",
                ok.iter().filter(|m| m.fell_back).count().to_string(),
            );
            put(
                "unconverged",
                ok.iter().filter(|m| !m.converged).count().to_string(),
            );
            let support: usize = ok.iter().map(|m| m.support_len()).sum();
            let mean = if ok.is_empty() {
                0.0
            } else {
                support as f64 / ok.len() as f64
            };
            put("mean_support", format!("{mean:.3}"));
        }
        Scorers::Linear(ls) => {
            let ok: Vec<&LinearScorer> = ls.iter().filter_map(|m| m.as_ref().ok()).collect();
            put("learn_failures", (ls.len() - ok.len()).to_string());
            put(
                "unconverged",
                ok.iter().filter(|m| !m.converged).count().to_string(),
            );
        }
    }
    out
}

/// kNN error of each configured method on `test`, using the first
/// `train_limit` / `test_limit` rows of the given sets. Exemplars whose
/// learning failed never become neighbors; their count is reported.
pub fn evaluate_classification(
    train: &LabeledSet,
    test: &LabeledSet,
    cfg: &ExperimentConfig,
) -> Result<Vec<EvalReport>> {
    cfg.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidInput(
            "train and test sets must be non-empty".into(),
        ));
    }
    if train.dim() != test.dim() {
        return Err(Error::DimensionMismatch {
            expected: train.dim().unwrap_or(0),
            found: test.dim().unwrap_or(0),
        });
    }
    if let Some((w, h)) = cfg.image_shape {
        if train.dim() != Some(w * h) {
            return Err(Error::InvalidConfig(format!(
                "image shape {w}x{h} does not match dimension {}",
                train.dim().unwrap_or(0)
            )));
        }
    }
    let train = first(train, cfg.train_limit);
    let test = first(test, cfg.test_limit).aligned_to(&train);
    check_training_set(&train)?;
    if cfg.k_neighbors > train.len() {
        return Err(Error::InvalidConfig(format!(
            "k = {} exceeds the {} training data",
            cfg.k_neighbors,
            train.len()
        )));
    }

    let start = Instant::now();
    let gram = Gram::new(train.vectors());
    let gram_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let x = train.vectors();
    let cross: Vec<Vec<f64>> = run_indexed(cfg.workers, test.len(), |t| {
        let q = &test.vectors()[t];
        x.iter().map(|xi| linalg::dot(xi, q)).collect()
    })?;
    let cross_secs = start.elapsed().as_secs_f64();

    let mut reports = Vec::new();
    for &method in &cfg.methods {
        let start = Instant::now();
        let scorers = match method {
            Method::L2 => Scorers::L2,
            Method::LocalMahal => {
                Scorers::Metrics(learn_compact_all(&train, &gram, MetricKind::Plain, cfg)?)
            }
            Method::InvMahal => Scorers::Metrics(learn_compact_all(
                &train,
                &gram,
                MetricKind::Invariant,
                cfg,
            )?),
            Method::Esvm | Method::EsvmShifts => {
                let shifts = method == Method::EsvmShifts;
                Scorers::Linear(run_indexed(cfg.workers, train.len(), |i| {
                    learn_linear(&train, &gram, i, shifts, cfg)
                })?)
            }
        };
        let learn_secs = start.elapsed().as_secs_f64();

        let start = Instant::now();
        let predictions = run_indexed(cfg.workers, test.len(), |t| {
            let q = test.vectors()[t].as_slice();
            let c = &cross[t];
            let qq = linalg::norm_sq(q);
            let d: Vec<f64> = match &scorers {
                Scorers::L2 => (0..train.len())
                    .map(|i| qq - 2.0 * c[i] + gram.get(i, i))
                    .collect(),
                Scorers::Metrics(ms) => ms
                    .iter()
                    .map(|m| match m {
                        Ok(m) => m.distance(&gram, c, q),
                        Err(_) => f64::INFINITY,
                    })
                    .collect(),
                Scorers::Linear(ls) => ls
                    .iter()
                    .map(|s| match s {
                        Ok(s) => s.score_slice(q),
                        Err(_) => f64::INFINITY,
                    })
                    .collect(),
            };
            vote(&d, train.labels(), cfg.k_neighbors)
        })?;
        let score_secs = start.elapsed().as_secs_f64();

        let mut per_class: BTreeMap<String, ClassTally> = BTreeMap::new();
        for (t, &pred) in predictions.iter().enumerate() {
            let truth = test.labels()[t];
            let e = per_class
                .entry(test.label_name(truth).to_string())
                .or_default();
            e.total += 1;
            if pred != truth {
                e.errors += 1;
            }
        }
        let mut report = EvalReport::from_tallies(method.name(), per_class, cfg.echo());
        report.diagnostics = diagnostics(&scorers);
        report.timings = vec![
            ("gram".into(), gram_secs),
            ("cross_dots".into(), cross_secs),
            ("learn".into(), learn_secs),
            ("score".into(), score_secs),
        ];
        reports.push(report);
    }
    Ok(reports)
}

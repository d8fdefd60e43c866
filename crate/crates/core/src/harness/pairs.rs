//! Same/not-same verification of feature-vector pairs.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ExperimentConfig, Method, NegativeBudget};
use super::knn::squared_l2;
use super::run_indexed;
use crate::error::{Error, Result};
use crate::metric::{build_local_metric, mahal_distance_sq};
use crate::model::{ClassTally, EvalReport, ExemplarProblem, FeatureVector, LocalMetric, Slack};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub a: FeatureVector,
    pub b: FeatureVector,
    pub same: bool,
}

const SAME: &str = "same";
const NOT_SAME: &str = "not_same";

/// Threshold maximizing accuracy of "same iff score ≤ θ" on `scored`.
/// Candidates are −∞ and the midpoints between consecutive distinct
/// scores, plus the largest score; the smallest best candidate wins.
pub fn best_threshold(scored: &[(f64, bool)]) -> f64 {
    let mut s: Vec<(f64, bool)> = scored.to_vec();
    s.sort_by(|a, b| a.0.total_cmp(&b.0));
    let not_same = s.iter().filter(|p| !p.1).count();
    let (mut best, mut best_correct) = (f64::NEG_INFINITY, not_same);
    let mut correct = not_same;
    for (i, &(score, same)) in s.iter().enumerate() {
        correct = if same { correct + 1 } else { correct - 1 };
        let next = s.get(i + 1).map(|p| p.0);
        if next == Some(score) {
            continue;
        }
        if correct > best_correct {
            best_correct = correct;
            best = match next {
                Some(n) if score.is_finite() && n.is_finite() => 0.5 * (score + n),
                _ => score,
            };
        }
    }
    best
}

fn pair_metric(
    x: &FeatureVector,
    bank: &[FeatureVector],
    stream: u64,
    cfg: &ExperimentConfig,
) -> Result<LocalMetric> {
    let chosen: Vec<FeatureVector> = match cfg.negatives_per_exemplar {
        NegativeBudget::Count(k) if k < bank.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(stream);
            let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, bank.len(), k).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| bank[i].clone()).collect()
        }
        _ => bank.to_vec(),
    };
    let p = ExemplarProblem::new(x.clone(), chosen)?
        .with_margin(cfg.margin)?
        .with_slack(cfg.metric_slack)?;
    match build_local_metric(&p, &cfg.solver) {
        Err(Error::Infeasible(_)) if cfg.metric_slack == Slack::Hard => {
            build_local_metric(&p.with_slack(Slack::Soft(Slack::DEFAULT_C))?, &cfg.solver)
        }
        other => other,
    }
}

/// Scores every pair with each configured method (`l2` or `local_mahal`)
/// and reports held-out error over `folds` round-robin folds, each fold's
/// threshold chosen on the remaining folds. Local metrics are learned at
/// both members of a pair against `bank`; the score is the mean of the two
/// directed distances.
pub fn verify_pairs(
    pairs: &[LabeledPair],
    bank: &[FeatureVector],
    folds: usize,
    cfg: &ExperimentConfig,
) -> Result<Vec<EvalReport>> {
    if folds < 2 {
        return Err(Error::InsufficientFolds(folds));
    }
    if pairs.len() < folds {
        return Err(Error::InvalidInput(format!(
            "{} pairs cannot fill {folds} folds",
            pairs.len()
        )));
    }
    if cfg.workers == 0 || cfg.methods.is_empty() {
        return Err(Error::InvalidConfig(
            "need >= 1 worker and >= 1 method".into(),
        ));
    }
    cfg.solver.validate()?;
    let d = pairs[0].a.dim();
    for p in pairs {
        p.a.ensure_dim(d)?;
        p.b.ensure_dim(d)?;
    }
    for x in bank {
        x.ensure_dim(d)?;
    }

    let mut reports = Vec::new();
    for &method in &cfg.methods {
        let start = Instant::now();
        let scores: Vec<Result<f64>> = match method {
            Method::L2 => pairs.iter().map(|p| Ok(squared_l2(&p.a, &p.b))).collect(),
            Method::LocalMahal => {
                if bank.is_empty() {
                    return Err(Error::InvalidInput(
                        "local metrics need a negatives bank".into(),
                    ));
                }
                run_indexed(cfg.workers, pairs.len(), |k| {
                    let p = &pairs[k];
                    let ma = pair_metric(&p.a, bank, 2 * k as u64, cfg)?;
                    let mb = pair_metric(&p.b, bank, 2 * k as u64 + 1, cfg)?;
                    Ok(0.5 * (mahal_distance_sq(&ma, &p.b)? + mahal_distance_sq(&mb, &p.a)?))
                })?
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "method {other} is not available for pair verification"
                )))
            }
        };
        let failures = scores.iter().filter(|s| s.is_err()).count();
        let scored: Vec<(f64, bool)> = scores
            .into_iter()
            .zip(pairs)
            .map(|(s, p)| (s.unwrap_or(f64::INFINITY), p.same))
            .collect();
        let score_secs = start.elapsed().as_secs_f64();

        let mut per_class: BTreeMap<String, ClassTally> = BTreeMap::new();
        let mut fold_errors = Vec::with_capacity(folds);
        for f in 0..folds {
            let train: Vec<(f64, bool)> = (0..scored.len())
                .filter(|k| k % folds != f)
                .map(|k| scored[k])
                .collect();
            let theta = best_threshold(&train);
            let (mut errors, mut total) = (0, 0);
            for &(s, same) in scored.iter().skip(f).step_by(folds) {
                let wrong = (s <= theta) != same;
                let e = per_class
                    .entry(if same { SAME } else { NOT_SAME }.to_string())
                    .or_default();
                e.total += 1;
                total += 1;
                if wrong {
                    e.errors += 1;
                    errors += 1;
                }
            }
            fold_errors.push(errors as f64 / total as f64);
        }

        let mut echo = cfg.echo();
        echo.retain(|(k, _)| {
            !matches!(
                k.as_str(),
                "train_limit" | "test_limit" | "k" | "tangents" | "image_shape" | "esvm_c"
            )
        });
        echo.push(("folds".into(), folds.to_string()));
        echo.push(("pairs".into(), pairs.len().to_string()));
        echo.push(("bank".into(), bank.len().to_string()));
        let mut report = EvalReport::from_tallies(method.name(), per_class, echo);
        report.fold_errors = fold_errors;
        if method == Method::LocalMahal {
            report.diagnostics = vec![("learn_failures".into(), failures.to_string())];
        }
        report.timings = vec![("score".into(), score_secs)];
        reports.push(report);
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn threshold_separates_clean_scores() {
        let t = best_threshold(&[(0.1, true), (0.2, true), (1.0, false), (3.0, false)]);
        assert!((t - 0.6).abs() < 1e-12);
        assert_eq!(best_threshold(&[(1.0, false)]), f64::NEG_INFINITY);
        assert_eq!(best_threshold(&[(1.0, true), (2.0, true)]), 2.0);
    }

    #[test]
    fn identical_pair_scores_zero() {
        let a = fv(&[0.3, 0.4]);
        let bank = vec![fv(&[1.0, 0.0]), fv(&[0.0, 1.0])];
        let cfg = ExperimentConfig::default();
        let m = pair_metric(&a, &bank, 0, &cfg).unwrap();
        assert_eq!(mahal_distance_sq(&m, &a).unwrap(), 0.0);
    }

    #[test]
    fn single_fold_rejected() {
        let p = LabeledPair {
            a: fv(&[0.0]),
            b: fv(&[1.0]),
            same: false,
        };
        assert!(matches!(
            verify_pairs(&[p], &[], 1, &ExperimentConfig::default()),
            Err(Error::InsufficientFolds(1))
        ));
    }
}

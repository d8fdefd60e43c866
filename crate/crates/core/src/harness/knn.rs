//! k-nearest-neighbor voting over per-exemplar distances.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::metric::mahal_distance_sq;
use crate::model::{FeatureVector, LocalMetric};

/// Majority label among the `k` smallest distances. Neighbors are ranked by
/// distance, then index; vote ties go to the smaller summed distance, then
/// the smaller label id.
pub fn vote(distances: &[f64], labels: &[usize], k: usize) -> usize {
    debug_assert!(k >= 1 && k <= distances.len());
    let by_rank = |a: &usize, b: &usize| distances[*a].total_cmp(&distances[*b]).then(a.cmp(b));
    let mut idx: Vec<usize> = (0..distances.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, by_rank);
        idx.truncate(k);
    }
    idx.sort_unstable_by(by_rank);
    let mut tally: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for &i in &idx {
        let e = tally.entry(labels[i]).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += distances[i];
    }
    let mut best: Option<(usize, usize, f64)> = None;
    for (&label, &(count, sum)) in &tally {
        let better = match best {
            None => true,
            Some((_, c, s)) => count > c || (count == c && sum < s),
        };
        if better {
            best = Some((label, count, sum));
        }
    }
    best.map(|b| b.0).expect("k >= 1")
}

fn check_k(k: usize, n: usize, labels: usize) -> Result<()> {
    if labels != n {
        return Err(Error::InvalidInput(format!(
            "{n} exemplars but {labels} labels"
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "k must lie in 1..={n}, got {k}"
        )));
    }
    Ok(())
}

/// Classifies `query` by its local distance from every exemplar.
pub fn knn_classify(
    metrics: &[LocalMetric],
    train_labels: &[usize],
    query: &FeatureVector,
    k: usize,
) -> Result<usize> {
    check_k(k, metrics.len(), train_labels.len())?;
    let d = metrics
        .iter()
        .map(|m| mahal_distance_sq(m, query))
        .collect::<Result<Vec<_>>>()?;
    Ok(vote(&d, train_labels, k))
}

/// `Σ_k (q_k − x_k)²`
pub fn squared_l2(q: &[f64], x: &[f64]) -> f64 {
    q.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Plain Euclidean kNN, with the same neighbor and vote tie rules.
pub fn l2_knn_classify(
    train: &[FeatureVector],
    train_labels: &[usize],
    query: &FeatureVector,
    k: usize,
) -> Result<usize> {
    check_k(k, train.len(), train_labels.len())?;
    let d: Vec<f64> = train
        .iter()
        .map(|x| {
            query.ensure_dim(x.dim())?;
            Ok(squared_l2(query, x))
        })
        .collect::<Result<_>>()?;
    Ok(vote(&d, train_labels, k))
}

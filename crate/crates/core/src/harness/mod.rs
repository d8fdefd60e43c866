//! Evaluation protocols: per-exemplar learning over a training set, kNN
//! classification, pair verification, baselines and solver timing.

pub mod bench;
pub mod classify;
pub mod config;
pub mod esvm;
pub mod gram;
pub mod knn;
pub mod learn;
pub mod mnist;
pub mod pairs;
pub mod report;

pub use bench::{bench_solver, loglog_slope, BenchData, BenchRow, BenchTable};
pub use classify::evaluate_classification;
pub use config::{parse_methods, ExperimentConfig, Method, NegativeBudget};
pub use esvm::{exemplar_svm_baseline, LinearScorer};
pub use knn::{knn_classify, l2_knn_classify, squared_l2, vote};
pub use learn::{learn_all_metrics, negative_indices, MetricKind};
pub use mnist::{desk_scale_split, seeded_split, shift_augment, ImagePool, MNIST_SHAPE};
pub use pairs::{verify_pairs, LabeledPair};

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Maps `f` over `0..n` on a pool of `workers` threads, in index order.
pub(crate) fn run_indexed<T, F>(workers: usize, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 {
        return Ok((0..n).map(f).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(f).collect()))
}

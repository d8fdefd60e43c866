//! Wall-clock timing of single metric solves over an `(n, d)` grid.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::io::LabeledSet;
use crate::metric::build_local_metric;
use crate::model::{ExemplarProblem, FeatureVector};
use crate::solver::SolverConfig;

/// Fewest repetitions a timing is reported over.
pub const MIN_REPS: usize = 5;

/// Fraction of nonzero pixels in synthetic digit-like vectors.
const SYNTHETIC_DENSITY: f64 = 0.19;

/// Where benchmark problems come from.
#[derive(Debug, Clone, Copy)]
pub enum BenchData<'a> {
    /// Sparse vectors in `[0, 1]` with roughly digit-like ink coverage.
    Synthetic { seed: u64 },
    /// The first datum as query, the first `n` data of other classes as
    /// negatives. `d` must equal the set's dimension.
    Labeled(&'a LabeledSet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub d: usize,
    pub reps: usize,
    pub median_secs: f64,
    pub min_secs: f64,
    pub max_secs: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub rows: Vec<BenchRow>,
    pub machine: Vec<(String, String)>,
}

fn synthetic(rng: &mut ChaCha8Rng, d: usize) -> Result<FeatureVector> {
    let mut v: Vec<f64> = (0..d)
        .map(|_| {
            if rng.random_bool(SYNTHETIC_DENSITY) {
                rng.random_range(0.0..=1.0)
            } else {
                0.0
            }
        })
        .collect();
    // no blank vectors, so tiny problems are never all-degenerate
    if v.iter().all(|&x| x == 0.0) {
        let k = rng.random_range(0..d);
        v[k] = rng.random_range(0.5..=1.0);
    }
    FeatureVector::new(v)
}

fn problem(data: BenchData<'_>, n: usize, d: usize) -> Result<ExemplarProblem> {
    match data {
        BenchData::Synthetic { seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let query = synthetic(&mut rng, d)?;
            let negatives = (0..n)
                .map(|_| synthetic(&mut rng, d))
                .collect::<Result<Vec<_>>>()?;
            ExemplarProblem::new(query, negatives)
        }
        BenchData::Labeled(set) => {
            if set.dim() != Some(d) {
                return Err(Error::InvalidConfig(format!(
                    "benchmark data has dimension {}, grid asks for {d}",
                    set.dim().unwrap_or(0)
                )));
            }
            let label = set.labels()[0];
            let negatives: Vec<FeatureVector> = (0..set.len())
                .filter(|&j| set.labels()[j] != label)
                .take(n)
                .map(|j| set.vectors()[j].clone())
                .collect();
            if negatives.len() < n {
                return Err(Error::InvalidInput(format!(
                    "only {} other-class data available for n = {n}",
                    negatives.len()
                )));
            }
            ExemplarProblem::new(set.vectors()[0].clone(), negatives)
        }
    }
}

fn median(sorted: &[f64]) -> f64 {
    let k = sorted.len();
    if k % 2 == 1 {
        sorted[k / 2]
    } else {
        0.5 * (sorted[k / 2 - 1] + sorted[k / 2])
    }
}

/// Host facts recorded next to timings.
pub fn machine_info() -> Vec<(String, String)> {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        })
        .unwrap_or_else(|| "unknown".into());
    let threads = std::thread::available_parallelism()
        .map(|n| n.get().to_string())
        .unwrap_or_else(|_| "unknown".into());
    vec![
        ("os".into(), std::env::consts::OS.into()),
        ("arch".into(), std::env::consts::ARCH.into()),
        ("cpu".into(), cpu),
        ("threads".into(), threads),
    ]
}

/// Times `reps` full metric solves (differences, dual, support selection)
/// per grid point.
pub fn bench_solver(
    grid: &[(usize, usize)],
    reps: usize,
    data: BenchData<'_>,
    cfg: &SolverConfig,
) -> Result<BenchTable> {
    if reps < MIN_REPS {
        return Err(Error::InvalidConfig(format!(
            "need at least {MIN_REPS} repetitions, got {reps}"
        )));
    }
    if grid.iter().any(|&(n, d)| n == 0 || d == 0) {
        return Err(Error::InvalidConfig("grid sizes must be >= 1".into()));
    }
    cfg.validate()?;
    let mut rows = Vec::with_capacity(grid.len());
    for &(n, d) in grid {
        let p = problem(data, n, d)?;
        let mut times = Vec::with_capacity(reps);
        let mut support = 0;
        for _ in 0..reps {
            let start = Instant::now();
            let m = build_local_metric(&p, cfg)?;
            times.push(start.elapsed().as_secs_f64());
            support = m.support().len();
        }
        times.sort_by(f64::total_cmp);
        rows.push(BenchRow {
            n,
            d,
            reps,
            median_secs: median(&times),
            min_secs: times[0],
            max_secs: times[reps - 1],
            support,
        });
    }
    Ok(BenchTable {
        rows,
        machine: machine_info(),
    })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use locmahal::harness::report::{
    render_bench_csv, render_bench_report, render_csv, render_report, render_timings, write_text,
};
use locmahal::harness::{
    self, BenchData, ExperimentConfig, ImagePool, LabeledPair, Method, NegativeBudget,
};
use locmahal::image::{make_tangents, RasterImage, TangentSpec};
use locmahal::invariance::build_invariant_metric_checked;
use locmahal::io::{read_feature_table, save_metric, LabeledSet};
use locmahal::metric::{build_local_metric_solved, metric_rank, MATERIALIZE_LIMIT};
use locmahal::model::{EvalReport, ExemplarProblem, FeatureVector, Slack};
use locmahal::oracle::{check_case, random_case, ORACLE_MAX_D, ORACLE_MAX_N};
use locmahal::{build_tangent_set, Error, Result, SolverConfig};

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Seed for negative subsampling, augmentation and solver sweep order.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest allowed optimality violation of a solve.
    #[arg(long, default_value_t = 1e-6)]
    tolerance: f64,
    /// Sweep cap per solve [default: 1000 x number of negatives].
    #[arg(long)]
    max_iterations: Option<usize>,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iterations,
            shuffle_seed: self.seed,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct MetricArgs {
    /// Required squared distance of every negative.
    #[arg(long, default_value_t = 2.0)]
    margin: f64,
    /// Soft-margin penalty C [default: hard margin].
    #[arg(long)]
    soft_c: Option<f64>,
    /// Other-class data per exemplar: a count or "all".
    #[arg(long, default_value = "1000", value_parser = parse_budget)]
    negatives_per_exemplar: NegativeBudget,
}

impl MetricArgs {
    fn slack(&self) -> Slack {
        self.soft_c.map(Slack::Soft).unwrap_or(Slack::Hard)
    }
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// key=value report file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Comma-separated summary table.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Per-stage wall-clock seconds (CSV). Kept out of the report files.
    #[arg(long)]
    timings: Option<PathBuf>,
}

impl OutputArgs {
    fn write(&self, reports: &[EvalReport]) -> Result<()> {
        if let Some(p) = &self.report {
            write_text(p, &render_report(reports))?;
        }
        if let Some(p) = &self.csv {
            write_text(p, &render_csv(reports))?;
        }
        if let Some(p) = &self.timings {
            write_text(p, &render_timings(reports))?;
        }
        Ok(())
    }
}

fn parse_budget(s: &str) -> std::result::Result<NegativeBudget, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_tangents(s: &str) -> std::result::Result<TangentSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_shape(s: &str) -> std::result::Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got '{s}'"))?;
    let w: usize = w
        .trim()
        .parse()
        .map_err(|_| format!("bad width in '{s}'"))?;
    let h: usize = h
        .trim()
        .parse()
        .map_err(|_| format!("bad height in '{s}'"))?;
    if w == 0 || h == 0 {
        return Err("image sides must be >= 1".into());
    }
    Ok((w, h))
}

fn parse_odd_k(s: &str) -> std::result::Result<usize, String> {
    let k: usize = s.parse().map_err(|_| format!("'{s}' is not a count"))?;
    if k == 0 || k.is_multiple_of(2) {
        return Err(format!("k must be odd and >= 1, got {k}"));
    }
    Ok(k)
}

fn parse_size(s: &str) -> std::result::Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("'{s}' is not a size >= 1")),
    }
}

/// Methods in first-mention order, repeats dropped.
fn dedup(methods: &[Method]) -> Vec<Method> {
    let mut out: Vec<Method> = Vec::new();
    for m in methods {
        if !out.contains(m) {
            out.push(*m);
        }
    }
    out
}

fn load_images(
    images: &Path,
    labels: &Path,
    indices: Option<&[usize]>,
    deskew: bool,
) -> Result<(LabeledSet, (usize, usize))> {
    let pool = ImagePool::load(images, labels)?;
    let shape = pool
        .shape()
        .ok_or_else(|| Error::InvalidInput(format!("{} holds no images", images.display())))?;
    let all: Vec<usize> = (0..pool.len()).collect();
    Ok((pool.to_set(indices.unwrap_or(&all), deskew)?, shape))
}

// ---------------------------------------------------------------- learn

#[derive(Args, Debug)]
pub struct LearnArgs {
    /// Query: a row index into the data, or a feature-table file whose first
    /// row is the query. With an index, negatives are the rows of other
    /// labels; with a file, every data row is a negative.
    #[arg(long)]
    query: String,
    /// Feature table (label, then values) holding the data.
    #[arg(long, required_unless_present = "images", conflicts_with = "images")]
    negatives: Option<PathBuf>,
    /// IDX image file holding the data (with --labels).
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    /// IDX label file matching --images.
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    /// Deskew IDX images before use.
    #[arg(long)]
    deskew: bool,
    /// Transformations to be invariant to, e.g. "shift:1" or "shift:1,rot:5".
    #[arg(long, value_parser = parse_tangents)]
    tangents: Option<TangentSpec>,
    /// WIDTHxHEIGHT of table vectors, needed with --tangents.
    #[arg(long, value_parser = parse_shape)]
    image_shape: Option<(usize, usize)>,
    #[command(flatten)]
    metric: MetricArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Metric file to write.
    #[arg(long)]
    out: PathBuf,
}

fn sample_rows(rows: Vec<usize>, budget: NegativeBudget, seed: u64) -> Vec<usize> {
    match budget {
        NegativeBudget::Count(k) if k < rows.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, rows.len(), k)
                .into_iter()
                .map(|i| rows[i])
                .collect();
            picked.sort_unstable();
            picked
        }
        _ => rows,
    }
}

pub fn learn(a: LearnArgs) -> Result<ExitCode> {
    let (data, shape) = match (&a.negatives, &a.images, &a.labels) {
        (Some(t), _, _) => (read_feature_table(t)?, a.image_shape),
        (None, Some(i), Some(l)) => {
            let (set, shape) = load_images(i, l, None, a.deskew)?;
            (set, a.image_shape.or(Some(shape)))
        }
        _ => {
            return Err(Error::InvalidConfig(
                "give --negatives or --images/--labels".into(),
            ))
        }
    };
    let (query, negatives) = match a.query.parse::<usize>() {
        Ok(k) => {
            if k >= data.len() {
                return Err(Error::InvalidConfig(format!(
                    "query index {k} out of range for {} rows",
                    data.len()
                )));
            }
            let label = data.labels()[k];
            let budget = a.metric.negatives_per_exemplar;
            let rows = harness::negative_indices(data.labels(), k, budget, a.solver.seed);
            if rows.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "row {k} has no other-label rows"
                )));
            }
            debug_assert!(rows.iter().all(|&j| data.labels()[j] != label));
            (data.vectors()[k].clone(), rows)
        }
        Err(_) => {
            let q = read_feature_table(&a.query)?;
            let first =
                q.vectors().first().cloned().ok_or_else(|| {
                    Error::InvalidInput(format!("query file {} is empty", a.query))
                })?;
            let rows = sample_rows(
                (0..data.len()).collect(),
                a.metric.negatives_per_exemplar,
                a.solver.seed,
            );
            (first, rows)
        }
    };
    let negatives: Vec<FeatureVector> = negatives
        .iter()
        .map(|&j| data.vectors()[j].clone())
        .collect();
    let p = ExemplarProblem::new(query.clone(), negatives)?
        .with_margin(a.metric.margin)?
        .with_slack(a.metric.slack())?;
    for w in p.warnings() {
        eprintln!("warning: {w}");
    }
    let cfg = a.solver.config();
    cfg.validate()?;

    let start = Instant::now();
    let (metric, solution) = match &a.tangents {
        Some(spec) => {
            let (w, h) = shape.ok_or_else(|| {
                Error::InvalidConfig("--tangents on table data needs --image-shape".into())
            })?;
            let img = RasterImage::from_feature(w, h, &query)?;
            let moved = make_tangents(&img, spec.transforms())?;
            let t = build_tangent_set(&query, &moved)?;
            let out = build_invariant_metric_checked(&p, &t, &cfg, Slack::DEFAULT_C)?;
            if let Some(f) = &out.fallback {
                eprintln!(
                    "note: hard margin infeasible ({}); used C = {}",
                    f.reason, f.c
                );
            }
            (out.metric, out.solution)
        }
        None => build_local_metric_solved(&p, &cfg)?,
    };
    let secs = start.elapsed().as_secs_f64();
    save_metric(&a.out, &metric)?;
    let rank = if metric.dim() <= MATERIALIZE_LIMIT {
        metric_rank(&metric)?.to_string()
    } else {
        "n/a".into()
    };
    println!("support={}", metric.support().len());
    println!("rank={rank}");
    println!("solve_secs={secs:.4}");
    println!("kkt_violation={:e}", solution.kkt_violation);
    println!("sweeps={}", solution.iterations);
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- knn-eval

#[derive(Args, Debug)]
pub struct KnnEvalArgs {
    /// IDX training images.
    #[arg(long, requires_all = ["train_labels", "test_images", "test_labels"])]
    train_images: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// One IDX image pool (with --labels), split by --seed into train and test.
    #[arg(long, requires = "labels", conflicts_with_all = ["train_images", "table"])]
    images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    /// Feature table; without --test-table it is split by --seed.
    #[arg(long, conflicts_with = "train_images")]
    table: Option<PathBuf>,
    #[arg(long, requires = "table")]
    test_table: Option<PathBuf>,
    /// Use IDX images as stored instead of deskewing them.
    #[arg(long)]
    no_deskew: bool,
    /// Replace every test item by one seeded random transformation from --tangents.
    #[arg(long)]
    augment: bool,
    /// Methods: l2, esvm, esvm_shifts, local_mahal, inv_mahal.
    #[arg(long, default_value = "l2,local_mahal", value_delimiter = ',')]
    methods: Vec<Method>,
    /// Neighbors per vote (odd).
    #[arg(long, default_value = "3", value_parser = parse_odd_k)]
    k: usize,
    #[arg(long, default_value_t = 2000)]
    train_limit: usize,
    #[arg(long, default_value_t = 1000)]
    test_limit: usize,
    /// Transformations for inv_mahal, esvm_shifts and --augment.
    #[arg(long, default_value = "shift:1", value_parser = parse_tangents)]
    tangents: TangentSpec,
    /// WIDTHxHEIGHT of table vectors (taken from IDX files otherwise).
    #[arg(long, value_parser = parse_shape)]
    image_shape: Option<(usize, usize)>,
    /// Soft-margin penalty of the exemplar-SVM baselines.
    #[arg(long, default_value_t = 1.0)]
    esvm_c: f64,
    /// Worker threads for per-exemplar learning and scoring.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    metric: MetricArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

fn split_in_two(
    set: &LabeledSet,
    train: usize,
    test: usize,
    seed: u64,
) -> Result<(LabeledSet, LabeledSet)> {
    let n = set.len();
    let n_train = train.min(n.div_ceil(2));
    let n_test = test.min(n - n_train);
    let (a, b) = harness::seeded_split(n, n_train, n_test, seed)?;
    Ok((set.subset(&a), set.subset(&b)))
}

fn print_summary(reports: &[EvalReport]) {
    println!("{:<12} {:>8} {:>12}", "method", "error", "errors/total");
    for r in reports {
        let mut line = format!(
            "{:<12} {:>7.2}% {:>12}",
            r.task_name,
            100.0 * r.error_rate,
            format!("{}/{}", r.errors(), r.total())
        );
        if let Some((mean, std)) = r.fold_summary() {
            line.push_str(&format!(
                "   folds {:.2}% ± {:.2}%",
                100.0 * mean,
                100.0 * std
            ));
        }
        println!("{line}");
    }
}

pub fn knn_eval(a: KnnEvalArgs) -> Result<ExitCode> {
    let deskew = !a.no_deskew;
    let seed = a.solver.seed;
    let (train, test, shape) = if let (Some(ti), Some(tl), Some(si), Some(sl)) = (
        &a.train_images,
        &a.train_labels,
        &a.test_images,
        &a.test_labels,
    ) {
        let (train, shape) = load_images(ti, tl, None, deskew)?;
        let (test, test_shape) = load_images(si, sl, None, deskew)?;
        if test_shape != shape {
            return Err(Error::InvalidInput(
                "train and test images differ in size".into(),
            ));
        }
        (train, test, Some(shape))
    } else if let (Some(i), Some(l)) = (&a.images, &a.labels) {
        let pool = ImagePool::load(i, l)?;
        let n_train = a.train_limit.min(pool.len().saturating_sub(1));
        let n_test = a.test_limit.min(pool.len() - n_train);
        let (ta, tb) = harness::seeded_split(pool.len(), n_train, n_test, seed)?;
        (
            pool.to_set(&ta, deskew)?,
            pool.to_set(&tb, deskew)?,
            pool.shape(),
        )
    } else if let Some(t) = &a.table {
        let set = read_feature_table(t)?;
        let (train, test) = match &a.test_table {
            Some(tt) => (set, read_feature_table(tt)?),
            None => split_in_two(&set, a.train_limit, a.test_limit, seed)?,
        };
        (train, test, a.image_shape)
    } else {
        return Err(Error::InvalidConfig(
            "give --train-images/--train-labels/--test-images/--test-labels, --images/--labels or --table".into(),
        ));
    };
    let shape = a.image_shape.or(shape);
    let test = if a.augment {
        let s =
            shape.ok_or_else(|| Error::InvalidConfig("--augment needs an image shape".into()))?;
        harness::shift_augment(&test, s, &a.tangents, seed)?
    } else {
        test
    };
    let cfg = ExperimentConfig {
        train_limit: a.train_limit,
        test_limit: a.test_limit,
        k_neighbors: a.k,
        negatives_per_exemplar: a.metric.negatives_per_exemplar,
        tangent_spec: a.tangents.clone(),
        image_shape: shape,
        methods: dedup(&a.methods),
        seed,
        workers: a.workers,
        margin: a.metric.margin,
        metric_slack: a.metric.slack(),
        esvm_c: a.esvm_c,
        solver: a.solver.config(),
    };
    let reports = harness::evaluate_classification(&train, &test, &cfg)?;
    a.output.write(&reports)?;
    print_summary(&reports);
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- verify-pairs

#[derive(Args, Debug)]
pub struct PairsArgs {
    /// Feature table of pairs: label same/not_same (or 1/0), then the two
    /// vectors concatenated.
    #[arg(long)]
    pairs: PathBuf,
    /// Feature table of negatives the local metrics are learned against
    /// (labels ignored).
    #[arg(long)]
    bank: Option<PathBuf>,
    /// Round-robin cross-validation folds (>= 2).
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(2..))]
    folds: u64,
    /// Methods: l2, local_mahal.
    #[arg(long, default_value = "l2,local_mahal", value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[command(flatten)]
    metric: MetricArgs,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    output: OutputArgs,
}

fn read_pairs(path: &Path) -> Result<Vec<LabeledPair>> {
    let set = read_feature_table(path)?;
    let d = set.dim().unwrap_or(0);
    if d % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "pair rows need an even number of values, got {d}"
        )));
    }
    (0..set.len())
        .map(|i| {
            let (v, label) = set.get(i);
            let same = match label {
                "same" | "1" | "true" => true,
                "not_same" | "0" | "false" => false,
                other => {
                    return Err(Error::ParseError {
                        line: i + 1,
                        message: format!("pair label '{other}' is not same/not_same"),
                    })
                }
            };
            Ok(LabeledPair {
                a: FeatureVector::new(v[..d / 2].to_vec())?,
                b: FeatureVector::new(v[d / 2..].to_vec())?,
                same,
            })
        })
        .collect()
}

pub fn verify_pairs(a: PairsArgs) -> Result<ExitCode> {
    let pairs = read_pairs(&a.pairs)?;
    let bank = match &a.bank {
        Some(b) => read_feature_table(b)?.vectors().to_vec(),
        None => Vec::new(),
    };
    let cfg = ExperimentConfig {
        negatives_per_exemplar: a.metric.negatives_per_exemplar,
        methods: dedup(&a.methods),
        seed: a.solver.seed,
        workers: a.workers,
        margin: a.metric.margin,
        metric_slack: a.metric.slack(),
        solver: a.solver.config(),
        ..ExperimentConfig::default()
    };
    let reports = harness::verify_pairs(&pairs, &bank, a.folds as usize, &cfg)?;
    a.output.write(&reports)?;
    print_summary(&reports);
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- bench

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated negative counts.
    #[arg(long, default_value = "1000,2000,5000", value_delimiter = ',', value_parser = parse_size)]
    n: Vec<usize>,
    /// Comma-separated dimensions (must be the image size with --images).
    #[arg(long, default_value = "784", value_delimiter = ',', value_parser = parse_size)]
    d: Vec<usize>,
    /// Repetitions per grid point (>= 5); the median is reported.
    #[arg(long, default_value_t = 5)]
    reps: usize,
    /// IDX images to draw problems from instead of synthetic data.
    #[arg(long, requires = "labels")]
    images: Option<PathBuf>,
    #[arg(long, requires = "images")]
    labels: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Timing table (CSV).
    #[arg(long)]
    csv: Option<PathBuf>,
    /// key=value timing report with machine information.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn bench(a: BenchArgs) -> Result<ExitCode> {
    let (ns, ds) = (&a.n, &a.d);
    let grid: Vec<(usize, usize)> = ds
        .iter()
        .flat_map(|&d| ns.iter().map(move |&n| (n, d)))
        .collect();
    let set;
    let data = match (&a.images, &a.labels) {
        (Some(i), Some(l)) => {
            set = load_images(i, l, None, false)?.0;
            BenchData::Labeled(&set)
        }
        _ => BenchData::Synthetic {
            seed: a.solver.seed,
        },
    };
    let table = harness::bench_solver(&grid, a.reps, data, &a.solver.config())?;
    if let Some(p) = &a.csv {
        write_text(p, &render_bench_csv(&table))?;
    }
    if let Some(p) = &a.report {
        write_text(p, &render_bench_report(&table))?;
    }
    print!("{}", render_bench_csv(&table));
    for &d in ds {
        let pts: Vec<(f64, f64)> = table
            .rows
            .iter()
            .filter(|r| r.d == d)
            .map(|r| (r.n as f64, r.median_secs))
            .collect();
        if let Some(s) = harness::loglog_slope(&pts) {
            println!("# d={d}: log-log slope of time against n = {s:.2}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------- oracle-check

#[derive(Args, Debug)]
pub struct OracleArgs {
    /// Random problems to check.
    #[arg(long, default_value_t = 100)]
    trials: u64,
    /// Problem seeds are seed, seed + 1, ...
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest number of negatives.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..=ORACLE_MAX_N as u64))]
    max_n: u64,
    /// Largest dimension.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..=ORACLE_MAX_D as u64))]
    max_d: u64,
    /// Allowed relative gap between solver and oracle objectives.
    #[arg(long, default_value_t = 1e-4)]
    rel_tol: f64,
}

pub fn oracle_check(a: OracleArgs) -> Result<ExitCode> {
    let cfg = SolverConfig::default();
    let (mut worst_plain, mut worst_inv) = (0.0_f64, 0.0_f64);
    let mut failures = 0;
    for t in 0..a.trials {
        let seed = a.seed.wrapping_add(t);
        let case = random_case(seed, a.max_n as usize, a.max_d as usize)?;
        let problems = match check_case(&case, &cfg) {
            Ok(c) => {
                worst_plain = worst_plain.max(c.plain_gap);
                worst_inv = worst_inv.max(c.invariant_gap);
                c.violations(a.rel_tol, case.problem.margin())
            }
            Err(e) => vec![e.to_string()],
        };
        if !problems.is_empty() {
            failures += 1;
            println!("FAIL problem seed {seed}: {}", problems.join("; "));
        }
    }
    println!(
        "{} of {} trials passed; largest relative gap {:e} (plain), {:e} (invariant)",
        a.trials - failures,
        a.trials,
        worst_plain,
        worst_inv
    );
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

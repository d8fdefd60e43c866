use approx::assert_relative_eq;
use proptest::prelude::*;

use locmahal::metric::{metric_trace, min_eigenvalue};
use locmahal::oracle::{check_case, random_case, MIN_RANDOM_DIFF};
use locmahal::{
    build_invariant_metric, build_local_metric, build_tangent_set, mahal_distance_sq, materialize,
    metric_rank, oracle_solve, quadratic_kernel, solve_dual, ExemplarProblem, FeatureVector,
    SolverConfig,
};

fn fv(v: Vec<f64>) -> FeatureVector {
    FeatureVector::new(v).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Query and negatives in `[-1, 1]^d`; negatives too close to the query
/// are dropped.
fn problem(max_n: usize, max_d: usize) -> impl Strategy<Value = ExemplarProblem> {
    (1..=max_d, 1..=max_n)
        .prop_flat_map(|(d, n)| {
            (
                prop::collection::vec(-1.0..1.0f64, d),
                prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), n),
            )
        })
        .prop_filter_map("every negative degenerate", |(q, negs)| {
            let negs: Vec<FeatureVector> = negs
                .into_iter()
                .filter(|x| dist(x, &q) >= MIN_RANDOM_DIFF)
                .map(fv)
                .collect();
            if negs.is_empty() {
                None
            } else {
                ExemplarProblem::new(fv(q), negs).ok()
            }
        })
}

/// A problem plus tangent steps, fewer than the dimension.
fn problem_with_tangents() -> impl Strategy<Value = (ExemplarProblem, Vec<FeatureVector>)> {
    problem(15, 6).prop_flat_map(|p| {
        let d = p.dim();
        let steps = prop::collection::vec(prop::collection::vec(-1.0..1.0f64, d), 0..d);
        (Just(p), steps).prop_map(|(p, steps)| {
            let moved = steps
                .into_iter()
                .map(|s| fv(p.query().iter().zip(&s).map(|(a, b)| a + b).collect()))
                .collect();
            (p, moved)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn kernel_is_inner_product_of_outer_products(
        (x, y) in (1usize..10).prop_flat_map(|d| (
            prop::collection::vec(-3.0..3.0f64, d),
            prop::collection::vec(-3.0..3.0f64, d),
        ))
    ) {
        let mut explicit = 0.0;
        for i in 0..x.len() {
            for j in 0..x.len() {
                explicit += x[i] * x[j] * y[i] * y[j];
            }
        }
        let k = quadratic_kernel(&fv(x), &fv(y)).unwrap();
        prop_assert!((explicit - k).abs() <= 1e-10 * k.abs().max(1e-300));
    }

    #[test]
    fn learned_metric_is_psd_and_meets_margin(p in problem(50, 20)) {
        let m = build_local_metric(&p, &SolverConfig::default()).unwrap();
        let dense = materialize(&m).unwrap();
        prop_assert!(min_eigenvalue(&dense) >= -1e-8 * metric_trace(&m));
        prop_assert!(metric_rank(&m).unwrap() <= m.support().len());
        for x in p.negatives() {
            prop_assert!(mahal_distance_sq(&m, x).unwrap() >= p.margin() - 1e-5);
        }
    }

    #[test]
    fn low_rank_distance_matches_materialized(
        p in problem(20, 8),
        seed in prop::collection::vec(-2.0..2.0f64, 8),
    ) {
        let m = build_local_metric(&p, &SolverConfig::default()).unwrap();
        let dense = materialize(&m).unwrap();
        let y: Vec<f64> = seed[..p.dim()].to_vec();
        let u = nalgebra::DVector::from_iterator(
            p.dim(),
            y.iter().zip(p.query().iter()).map(|(a, b)| a - b),
        );
        let direct = (u.transpose() * &dense * &u)[(0, 0)];
        let low_rank = mahal_distance_sq(&m, &fv(y)).unwrap();
        assert_relative_eq!(low_rank, direct, max_relative = 1e-9, epsilon = 1e-12);
    }

    #[test]
    fn invariant_metric_ignores_tangents((p, moved) in problem_with_tangents()) {
        let t = build_tangent_set(p.query(), &moved).unwrap();
        let Ok(m) = build_invariant_metric(&p, &t, &SolverConfig::default()) else {
            // every difference fell inside the tangent span
            return Ok(());
        };
        let trace = metric_trace(&m);
        for r in t.raw() {
            let r2: f64 = r.iter().map(|v| v * v).sum();
            let y = fv(p.query().iter().zip(r.iter()).map(|(a, b)| a + b).collect());
            prop_assert!(mahal_distance_sq(&m, &y).unwrap() <= 1e-8 * trace * r2 + 1e-300);
        }
        // support directions lie in the complement of the tangent span
        for s in m.support() {
            let norm = s.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            for b in t.basis() {
                let dot: f64 = s.direction.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
                prop_assert!(dot.abs() <= 1e-9 * norm.max(1.0));
            }
        }
    }

    #[test]
    fn solver_agrees_with_oracle(p in problem(20, 5)) {
        let ours = solve_dual(&p, &SolverConfig::default()).unwrap();
        let reference = oracle_solve(&p).unwrap();
        prop_assert!(
            (ours.objective_value - reference.objective_value).abs()
                <= 1e-4 * (1.0 + reference.objective_value.abs())
        );
    }

    #[test]
    fn seeded_random_cases_pass(seed in any::<u64>()) {
        let case = random_case(seed, 20, 5).unwrap();
        let c = check_case(&case, &SolverConfig::default()).unwrap();
        let v = c.violations(1e-4, case.problem.margin());
        prop_assert!(v.is_empty(), "seed {}: {:?}", seed, v);
    }
}

mod common;

use common::*;
use gasflow_core::{
    is_monotone, project, project_1d, project_nd, ProjectionProblem, ProjectionSettings,
};
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(seed: u64, dim: usize, n: usize) -> ProjectionProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w = normalized_masses(&mut rng, n);
    let y: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    ProjectionProblem::new(dim, x, w, y)
}

#[test]
fn shuffled_sweeps_and_knn_pairs_reach_the_same_point() {
    for seed in 0..10 {
        let p = problem(seed, 2, 30);
        let exact = project_nd(&p).unwrap().projected;
        let settings = ProjectionSettings {
            shuffle_seed: Some(seed),
            ..ProjectionSettings::default()
        };
        let shuffled = project_nd(&p.clone().with_settings(settings))
            .unwrap()
            .projected;
        assert!(exact
            .iter()
            .zip(&shuffled)
            .all(|(a, b)| (a - b).abs() < 1e-8));
    }
}

#[test]
fn knn_restriction_only_enforces_listed_pairs() {
    let p = problem(4, 2, 40);
    let settings = ProjectionSettings {
        neighbor_k: Some(6),
        ..ProjectionSettings::default()
    };
    let r = project_nd(&p.clone().with_settings(settings)).unwrap();
    assert!(r.max_violation <= p.tol_feas());
    // the relaxed cone is larger, so the projection is at least as close
    let full = project_nd(&p).unwrap();
    let d_knn = weighted_dist(&p.weights, &r.projected, &p.targets, 2);
    let d_full = weighted_dist(&p.weights, &full.projected, &p.targets, 2);
    assert!(d_knn <= d_full + 1e-10);
}

#[test]
fn small_instances_match_enumeration() {
    for seed in 0..40 {
        let dim = 1 + (seed % 2) as usize;
        let p = problem(100 + seed, dim, 4);
        let oracle = brute_force_projection(dim, &p.base_points, &p.weights, &p.targets);
        let got = project(&p).unwrap().projected;
        for (a, b) in got.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-8, "seed {seed}: {a} vs {b}");
        }
    }
}

#[test]
fn dual_trace_of_pav_pairs_multipliers_with_gaps() {
    let mut p = problem(9, 1, 50);
    let mut idx: Vec<usize> = (0..50).collect();
    idx.sort_by(|&a, &b| p.base_points[a].total_cmp(&p.base_points[b]));
    p.base_points = idx.iter().map(|&i| p.base_points[i]).collect();
    p.weights = idx.iter().map(|&i| p.weights[i]).collect();
    p.targets = idx.iter().map(|&i| p.targets[i]).collect();
    let r = project_1d(&p).unwrap();
    let direct: f64 = (0..50)
        .map(|i| -p.weights[i] * (p.targets[i] - r.projected[i]) * p.base_points[i])
        .sum();
    assert!((r.dual_trace.unwrap() - direct).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_is_monotone_contractive_idempotent(seed in any::<u64>(), dim in 1usize..=2, n in 2usize..25) {
        let p = problem(seed, dim, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let other: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let q = ProjectionProblem::new(dim, p.base_points.clone(), p.weights.clone(), other.clone());
        let a = project(&p).unwrap().projected;
        let b = project(&q).unwrap().projected;
        prop_assert!(is_monotone(&p.base_points, &a, dim, 1e-9).monotone);
        let lhs = weighted_dist(&p.weights, &a, &b, dim);
        let rhs = weighted_dist(&p.weights, &p.targets, &other, dim);
        prop_assert!(lhs <= rhs + 1e-12);
        let again = project(&ProjectionProblem::new(dim, p.base_points.clone(), p.weights.clone(), a.clone())).unwrap();
        prop_assert!(weighted_dist(&p.weights, &again.projected, &a, dim) <= 1e-10);
    }

    #[test]
    fn monotone_targets_are_fixed(seed in any::<u64>(), dim in 1usize..=2, n in 2usize..25, scale in 0.1f64..3.0) {
        let p = problem(seed, dim, n);
        let y: Vec<f64> = p.base_points.iter().map(|x| scale * x + 0.25).collect();
        let r = project(&ProjectionProblem::new(dim, p.base_points.clone(), p.weights.clone(), y.clone())).unwrap();
        prop_assert!(r.projected.iter().zip(&y).all(|(a, b)| (a - b).abs() <= 1e-12));
        prop_assert_eq!(r.max_violation, 0.0);
    }
}

mod common;

use approx::assert_relative_eq;
use common::*;
use gasflow_core::pressureless::stress_trace;
use gasflow_core::{
    kinetic_energy, project, total_momentum, FluidState, PressurelessStep, ProjectionProblem,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn weighted_inner(m: &[f64], a: &[f64], b: &[f64], dim: usize) -> f64 {
    (0..m.len())
        .map(|i| {
            m[i] * (0..dim)
                .map(|k| a[i * dim + k] * b[i * dim + k])
                .sum::<f64>()
        })
        .sum()
}

#[test]
fn cluster_stress_trace_matches_closed_forms() {
    let tau = 0.25;
    let s = cluster_state(10_000);
    let (_, map, report) = PressurelessStep::new(tau).step(&s).unwrap();
    let p = cluster_exact(tau);
    let beta = p / tau;
    let direct = stress_trace(&s, &map);
    assert_relative_eq!(direct, report.stress_trace, max_relative = 1e-14);
    assert_relative_eq!(direct, p.powi(3) / (16.0 * tau * tau), max_relative = 1e-3);
    let momentum_form = 0.5 * (1.0 - beta) * beta * tau - beta.powi(3) * tau * tau / 12.0;
    assert_relative_eq!(momentum_form, 2.19e-3, max_relative = 1e-2);
    assert_relative_eq!(direct, 1.5 / tau * momentum_form, max_relative = 1e-3);
}

#[test]
fn projection_optimality_identities_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..40 {
        let dim = 1 + case % 2;
        let s = random_state(&mut rng, dim, 30);
        let tau = 0.5;
        let y = s.free_transport(tau);
        let p = ProjectionProblem::new(dim, s.positions.clone(), s.masses.clone(), y.clone());
        let t = project(&p).unwrap().projected;
        let r: Vec<f64> = y.iter().zip(&t).map(|(a, b)| a - b).collect();
        // ⟨y − T, T⟩ = 0 and ⟨y − T, S − T⟩ ≤ 0 for monotone S
        let scale = 1.0 + weighted_inner(&s.masses, &y, &y, dim);
        assert!(weighted_inner(&s.masses, &r, &t, dim).abs() <= 1e-12 * scale);
        for (a, c) in [(1.0, 0.0), (2.0, 0.3), (0.5, -1.0)] {
            let sv: Vec<f64> = s.positions.iter().map(|x| a * x + c).collect();
            let diff: Vec<f64> = sv.iter().zip(&t).map(|(a, b)| a - b).collect();
            assert!(weighted_inner(&s.masses, &r, &diff, dim) <= 1e-12 * scale);
        }
    }
}

#[test]
fn step_commutes_with_translation_and_uniform_boost() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = random_state(&mut rng, 2, 25);
    let tau = 0.3;
    let (a, map_a, rep_a) = PressurelessStep::new(tau).step(&s).unwrap();

    let mut shifted = s.clone();
    for i in 0..s.len() {
        shifted.positions[2 * i] += 5.0;
        shifted.positions[2 * i + 1] -= 2.0;
    }
    let (b, map_b, rep_b) = PressurelessStep::new(tau).step(&shifted).unwrap();
    assert_eq!(a.len(), b.len());
    for i in 0..s.len() {
        assert!((map_b.targets[2 * i] - map_a.targets[2 * i] - 5.0).abs() < 1e-9);
        assert!((map_b.targets[2 * i + 1] - map_a.targets[2 * i + 1] + 2.0).abs() < 1e-9);
    }
    assert_relative_eq!(rep_a.acc_cost_sq, rep_b.acc_cost_sq, max_relative = 1e-8);
    assert_relative_eq!(
        rep_a.kinetic_after,
        rep_b.kinetic_after,
        max_relative = 1e-8
    );
}

#[test]
fn sticky_clusters_never_split() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut s = random_state(&mut rng, 1, 60);
    let step = PressurelessStep::new(0.2);
    let mut sizes = Vec::new();
    for _ in 0..20 {
        let out = step.step_grouped(&s).unwrap();
        let total: usize = out.groups.iter().map(Vec::len).sum();
        assert_eq!(total, s.len());
        sizes.push(out.state.len());
        s = out.state;
    }
    assert!(sizes.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn head_on_collision_in_the_plane() {
    let s = FluidState::isentropic(
        2,
        vec![0.5, 0.5],
        vec![-1.0, 0.0, 1.0, 0.0],
        vec![2.0, 0.5, -2.0, 0.5],
    )
    .unwrap();
    let (next, _, rep) = PressurelessStep::new(1.0).step(&s).unwrap();
    assert_eq!(next.len(), 1);
    assert_relative_eq!(next.positions[1], 0.5, epsilon = 1e-12);
    assert_relative_eq!(next.velocities[0], 0.0, epsilon = 1e-12);
    assert_relative_eq!(next.velocities[1], 0.5, epsilon = 1e-12);
    assert_eq!(rep.merged, 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steps_conserve_mass_momentum_entropy(seed in any::<u64>(), dim in 1usize..=2, n in 2usize..40, tau in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, dim, n);
        let (next, _, rep) = PressurelessStep::new(tau).step(&s).unwrap();
        let mass: f64 = next.masses.iter().sum();
        prop_assert!((mass - 1.0).abs() < 1e-12);
        for (a, b) in total_momentum(&next).iter().zip(total_momentum(&s)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((next.total_entropy() - s.total_entropy()).abs() < 1e-12);
        prop_assert!(kinetic_energy(&next) <= kinetic_energy(&s) + 1e-13);
        prop_assert!(rep.acc_cost_sq >= 0.0);
        prop_assert!(rep.stress_trace >= -1e-12);
        prop_assert_eq!(next.len() + rep.merged, s.len());
    }
}

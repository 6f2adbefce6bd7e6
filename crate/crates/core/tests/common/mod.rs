#![allow(dead_code)]

use gasflow_core::FluidState;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};

/// Heavy particle (mass ½, velocity 1) at the origin plus mass ½ spread
/// uniformly over (−1, 1) on the interior grid −1 + 2k/(n+1), at rest.
pub fn cluster_state(n: usize) -> FluidState {
    let mut m = vec![0.5 / n as f64; n];
    let mut x: Vec<f64> = (1..=n)
        .map(|k| -1.0 + 2.0 * k as f64 / (n + 1) as f64)
        .collect();
    let mut u = vec![0.0; n];
    m.push(0.5);
    x.push(0.0);
    u.push(1.0);
    let total: f64 = m.iter().sum();
    for v in &mut m {
        *v /= total;
    }
    FluidState::isentropic(1, m, x, u).unwrap()
}

/// Pooled position 2(√(1+τ) − 1) of the heavy particle's block.
pub fn cluster_exact(tau: f64) -> f64 {
    2.0 * ((1.0 + tau).sqrt() - 1.0)
}

/// Uniform density 1 on [−½, ½] sampled at n equispaced nodes with trapezoid
/// masses, at rest.
pub fn uniform_block(n: usize) -> FluidState {
    let x: Vec<f64> = (0..n).map(|k| -0.5 + k as f64 / (n - 1) as f64).collect();
    let mut m = vec![1.0 / (n - 1) as f64; n];
    m[0] *= 0.5;
    m[n - 1] *= 0.5;
    FluidState::isentropic(1, m, x, vec![0.0; n]).unwrap()
}

pub fn normalized_masses<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut m: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = m.iter().sum();
    for v in &mut m {
        *v /= s;
    }
    // push rounding into the largest mass so the sum is 1 to 1e-15
    let s: f64 = m.iter().sum();
    let imax = (0..n).max_by(|&a, &b| m[a].total_cmp(&m[b])).unwrap();
    m[imax] += 1.0 - s;
    m
}

/// Random pressureless state with zero total momentum.
pub fn random_state<R: Rng>(rng: &mut R, dim: usize, n: usize) -> FluidState {
    let m = normalized_masses(rng, n);
    let x: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut u: Vec<f64> = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    for k in 0..dim {
        let p: f64 = (0..n).map(|i| m[i] * u[i * dim + k]).sum();
        for i in 0..n {
            u[i * dim + k] -= p;
        }
    }
    FluidState::isentropic(dim, m, x, u).unwrap()
}

/// Random 1D state with separated particles, random entropies and zero
/// total momentum.
pub fn random_gas_1d<R: Rng>(rng: &mut R, n: usize) -> FluidState {
    let m = normalized_masses(rng, n);
    let mut x = Vec::with_capacity(n);
    let mut pos = -0.5;
    for _ in 0..n {
        x.push(pos);
        pos += rng.random_range(0.2..1.0) / n as f64;
    }
    let mut u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let p: f64 = (0..n).map(|i| m[i] * u[i]).sum();
    for v in &mut u {
        *v -= p;
    }
    let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    FluidState::new(1, m, x, u, s).unwrap()
}

/// Exact weighted projection onto {T : ⟨Tᵢ−Tⱼ, xᵢ−xⱼ⟩ ≥ 0 ∀ i<j} by
/// enumerating every subset of constraints treated as equalities, projecting
/// onto the corresponding subspace with a pseudo-inverse, and keeping the
/// closest feasible candidate.
pub fn brute_force_projection(dim: usize, x: &[f64], w: &[f64], y: &[f64]) -> Vec<f64> {
    let n = w.len();
    let nv = n * dim;
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((i, j));
        }
    }
    let minv = DVector::from_iterator(nv, (0..nv).map(|k| 1.0 / w[k / dim]));
    let yv = DVector::from_column_slice(y);
    let feasible = |t: &DVector<f64>| {
        pairs.iter().all(|&(i, j)| {
            let mut c = 0.0;
            for k in 0..dim {
                c += (t[i * dim + k] - t[j * dim + k]) * (x[i * dim + k] - x[j * dim + k]);
            }
            c >= -1e-9
        })
    };
    let dist =
        |t: &DVector<f64>| -> f64 { (0..nv).map(|k| w[k / dim] * (t[k] - yv[k]).powi(2)).sum() };
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << pairs.len()) {
        let rows: Vec<(usize, usize)> = pairs
            .iter()
            .enumerate()
            .filter(|(b, _)| mask & (1 << b) != 0)
            .map(|(_, &p)| p)
            .collect();
        let t = if rows.is_empty() {
            yv.clone()
        } else {
            let mut r = DMatrix::zeros(rows.len(), nv);
            for (q, &(i, j)) in rows.iter().enumerate() {
                for k in 0..dim {
                    let d = x[i * dim + k] - x[j * dim + k];
                    r[(q, i * dim + k)] = d;
                    r[(q, j * dim + k)] = -d;
                }
            }
            let rm = &r * DMatrix::from_diagonal(&minv);
            let g = &rm * r.transpose();
            let ginv = g.pseudo_inverse(1e-12).unwrap();
            let mu = ginv * (&r * &yv);
            &yv - rm.transpose() * mu
        };
        if !feasible(&t) {
            continue;
        }
        let dd = dist(&t);
        if best.as_ref().is_none_or(|(b, _)| dd < *b) {
            best = Some((dd, t));
        }
    }
    best.unwrap().1.as_slice().to_vec()
}

pub fn weighted_dist(w: &[f64], a: &[f64], b: &[f64], dim: usize) -> f64 {
    (0..a.len())
        .map(|k| w[k / dim] * (a[k] - b[k]).powi(2))
        .sum::<f64>()
        .sqrt()
}

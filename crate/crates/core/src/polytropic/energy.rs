//! Internal energy of a transported gas: the density h(A) = det(A^sym)^{1−γ}
//! and the cell sums built from it, with first and second derivatives with
//! respect to node targets.

use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::SmallMat;
use crate::numeric::{pairwise_sum, powf};
use crate::state::{FluidState, GasLaw};

use super::mesh::EnergyDiscretization;

/// h(A) = det(A^sym)^{1−γ} when A^sym is positive definite, +∞ otherwise.
pub fn h(a: &SmallMat, gamma: f64) -> f64 {
    let e = a.sym();
    if !e.is_positive_definite() {
        return f64::INFINITY;
    }
    powf(e.det(), 1.0 - gamma)
}

/// ∂h/∂A = (1−γ) det(E)^{−γ} cof(E) with E = A^sym, or `None` outside the
/// domain.
pub fn h_gradient(a: &SmallMat, gamma: f64) -> Option<SmallMat> {
    let e = a.sym();
    if !e.is_positive_definite() {
        return None;
    }
    Some(e.cofactor().scale((1.0 - gamma) * powf(e.det(), -gamma)))
}

/// Second derivative of h at A in directions dA₁, dA₂:
/// det(E)^{1−γ}[(1−γ)² tr(E⁻¹S₁) tr(E⁻¹S₂) − (1−γ) tr(E⁻¹S₁E⁻¹S₂)],
/// with Sᵢ the symmetric parts of dAᵢ.
pub fn h_hessian(a: &SmallMat, gamma: f64, da1: &SmallMat, da2: &SmallMat) -> f64 {
    let e = a.sym();
    let inv = e.inverse().expect("h_hessian outside the domain");
    let (s1, s2) = (inv * da1.sym(), inv * da2.sym());
    let g1 = 1.0 - gamma;
    powf(e.det(), g1) * (g1 * g1 * s1.trace() * s2.trace() - g1 * (s1 * s2).trace())
}

/// Σ_cells U(rₖ, Sₖ) h(∇T|ₖ) volₖ. Cells without mass contribute nothing.
pub fn internal_energy(disc: &EnergyDiscretization, targets: &[f64], law: &GasLaw) -> f64 {
    let coeff = disc.energy_coefficients(law);
    internal_energy_with(disc, &coeff, targets, law.gamma)
}

pub(crate) fn internal_energy_with(
    disc: &EnergyDiscretization,
    coeff: &[f64],
    targets: &[f64],
    gamma: f64,
) -> f64 {
    let mut terms = Vec::with_capacity(disc.num_cells());
    for k in 0..disc.num_cells() {
        if coeff[k] == 0.0 {
            continue;
        }
        let v = h(&disc.cell_gradient(k, targets), gamma);
        if v.is_infinite() {
            return f64::INFINITY;
        }
        terms.push(coeff[k] * v * disc.volume(k));
    }
    pairwise_sum(&terms)
}

/// Energy of the gas in its reference configuration, Σ U(rₖ, Sₖ) volₖ.
pub fn reference_internal_energy(disc: &EnergyDiscretization, law: &GasLaw) -> f64 {
    let coeff = disc.energy_coefficients(law);
    let terms: Vec<f64> = (0..disc.num_cells())
        .map(|k| coeff[k] * disc.volume(k))
        .collect();
    pairwise_sum(&terms)
}

/// Energy of the transported configuration with the full gradient:
/// Σ U(rₖ, Sₖ) det(∇T|ₖ)^{1−γ} volₖ. This is the internal energy of the new
/// state on the moved cells and never exceeds [`internal_energy`].
pub fn transported_internal_energy(
    disc: &EnergyDiscretization,
    targets: &[f64],
    law: &GasLaw,
) -> f64 {
    let coeff = disc.energy_coefficients(law);
    let mut terms = Vec::with_capacity(disc.num_cells());
    for k in 0..disc.num_cells() {
        if coeff[k] == 0.0 {
            continue;
        }
        let det = disc.cell_gradient(k, targets).det();
        if det <= 0.0 {
            return f64::INFINITY;
        }
        terms.push(coeff[k] * powf(det, 1.0 - law.gamma) * disc.volume(k));
    }
    pairwise_sum(&terms)
}

/// Ψ[T] = (3/4τ²) Σ mᵢ|(xᵢ+τuᵢ) − Tᵢ|² + 𝒰[T].
pub fn objective(
    disc: &EnergyDiscretization,
    state: &FluidState,
    targets: &[f64],
    tau: f64,
    law: &GasLaw,
) -> f64 {
    let y = state.free_transport(tau);
    quadratic_part(&state.masses, &y, targets, state.dim, tau) + internal_energy(disc, targets, law)
}

pub(crate) fn quadratic_part(m: &[f64], y: &[f64], t: &[f64], dim: usize, tau: f64) -> f64 {
    let terms: Vec<f64> = (0..m.len())
        .map(|i| {
            let mut s = 0.0;
            for k in 0..dim {
                let v = y[i * dim + k] - t[i * dim + k];
                s += v * v;
            }
            m[i] * s
        })
        .collect();
    0.75 / (tau * tau) * pairwise_sum(&terms)
}

/// Gradient of 𝒰 with respect to node targets (flat, same layout as
/// `targets`). Returns `None` outside the domain.
pub fn internal_energy_gradient(
    disc: &EnergyDiscretization,
    coeff: &[f64],
    targets: &[f64],
    gamma: f64,
) -> Option<Vec<f64>> {
    let d = disc.dim;
    let mut g = vec![0.0; targets.len()];
    for k in 0..disc.num_cells() {
        if coeff[k] == 0.0 {
            continue;
        }
        let dh = h_gradient(&disc.cell_gradient(k, targets), gamma)?;
        let w = coeff[k] * disc.volume(k);
        let basis = disc.basis(k);
        for (l, &v) in disc.cells[k].nodes(d).iter().enumerate() {
            for r in 0..d {
                let mut s = 0.0;
                for c in 0..d {
                    s += dh.a[r][c] * basis[l][c];
                }
                g[v * d + r] += w * s;
            }
        }
    }
    Some(g)
}

/// Per-cell Hessian blocks of 𝒰: for each cell, the local dof list
/// (node·d + component) and a dense row-major block.
pub(crate) fn internal_energy_hessian_blocks(
    disc: &EnergyDiscretization,
    coeff: &[f64],
    targets: &[f64],
    gamma: f64,
) -> Vec<(Vec<usize>, Vec<f64>)> {
    let d = disc.dim;
    let mut out = Vec::with_capacity(disc.num_cells());
    for k in 0..disc.num_cells() {
        if coeff[k] == 0.0 {
            continue;
        }
        let a = disc.cell_gradient(k, targets);
        let w = coeff[k] * disc.volume(k);
        let basis = disc.basis(k);
        let nodes = disc.cells[k].nodes(d);
        let mut dofs = Vec::with_capacity(nodes.len() * d);
        let mut dirs = Vec::with_capacity(nodes.len() * d);
        for (l, &v) in nodes.iter().enumerate() {
            for r in 0..d {
                dofs.push(v * d + r);
                let mut da = SmallMat::zeros(d);
                for c in 0..d {
                    da.a[r][c] = basis[l][c];
                }
                dirs.push(da);
            }
        }
        let nl = dofs.len();
        let mut block = vec![0.0; nl * nl];
        for p in 0..nl {
            for q in 0..=p {
                let v = w * h_hessian(&a, gamma, &dirs[p], &dirs[q]);
                block[p * nl + q] = v;
                block[q * nl + p] = v;
            }
        }
        out.push((dofs, block));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn h_examples() {
        assert_eq!(h(&SmallMat::identity(2), 1.4), 1.0);
        assert_eq!(h(&SmallMat::identity(3), 2.0), 1.0);
        assert_abs_diff_eq!(
            h(&SmallMat::identity(2).scale(2.0), 2.0),
            0.25,
            epsilon = 1e-15
        );
        let rot = SmallMat::from_row_major(2, &[1.0, 1.0, -1.0, 1.0]);
        assert_eq!(h(&rot, 2.0), 1.0);
        let neg = SmallMat::from_row_major(2, &[1.0, 0.0, 0.0, -0.5]);
        assert_eq!(h(&neg, 2.0), f64::INFINITY);
    }

    fn random_pd(rng: &mut ChaCha8Rng, d: usize) -> SmallMat {
        let mut b = SmallMat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                b.a[i][j] = rng.random_range(-1.0..1.0);
            }
        }
        let mut skew = SmallMat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                skew.a[i][j] = rng.random_range(-1.0..1.0);
            }
        }
        (b.transpose() * b) + SmallMat::identity(d).scale(0.2) + skew.skew()
    }

    #[test]
    fn h_is_convex_on_segments() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for d in 2..=3 {
            for _ in 0..500 {
                let (a, b) = (random_pd(&mut rng, d), random_pd(&mut rng, d));
                let l: f64 = rng.random_range(0.0..1.0);
                let gamma = rng.random_range(1.05..3.0);
                let mid = h(&(a.scale(l) + b.scale(1.0 - l)), gamma);
                let chord = l * h(&a, gamma) + (1.0 - l) * h(&b, gamma);
                assert!(mid <= chord + 1e-12 * chord.max(1.0));
            }
        }
    }

    #[test]
    fn h_gradient_and_hessian_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let eps = 1e-6;
        for d in 1..=3 {
            for _ in 0..20 {
                let a = random_pd(&mut rng, d);
                let gamma = 1.4;
                let g = h_gradient(&a, gamma).unwrap();
                for r in 0..d {
                    for c in 0..d {
                        let mut e = SmallMat::zeros(d);
                        e.a[r][c] = 1.0;
                        let fd = (h(&(a + e.scale(eps)), gamma) - h(&(a - e.scale(eps)), gamma))
                            / (2.0 * eps);
                        // h depends on the symmetric part only
                        assert_abs_diff_eq!(g.sym().a[r][c], fd, epsilon = 1e-6 * (1.0 + fd.abs()));
                        let mut f = SmallMat::zeros(d);
                        f.a[c][r] = 1.0;
                        let gp = h_gradient(&(a + f.scale(eps)), gamma)
                            .unwrap()
                            .sym()
                            .frob(&e);
                        let gm = h_gradient(&(a - f.scale(eps)), gamma)
                            .unwrap()
                            .sym()
                            .frob(&e);
                        let fd2 = (gp - gm) / (2.0 * eps);
                        let an = h_hessian(&a, gamma, &e, &f);
                        assert_abs_diff_eq!(an, fd2, epsilon = 1e-5 * (1.0 + fd2.abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn affine_map_on_uniform_block() {
        // uniform r = 1 on [-1/2, 1/2], γ = 2, κ = 1: 𝒰[T] = 1/b for slope b
        let n = 11;
        let x: Vec<f64> = (0..n).map(|k| -0.5 + k as f64 / (n - 1) as f64).collect();
        let mut m = vec![1.0 / (n - 1) as f64; n];
        m[0] *= 0.5;
        m[n - 1] *= 0.5;
        let s = FluidState::isentropic(1, m, x.clone(), vec![0.0; n]).unwrap();
        let disc = EnergyDiscretization::from_state(&s).unwrap();
        let law = GasLaw::polytropic(2.0, 1.0);
        for k in 0..disc.num_cells() {
            assert_abs_diff_eq!(disc.density(k), 1.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(internal_energy(&disc, &x, &law), 1.0, epsilon = 1e-12);
        let b = 1.5;
        let t: Vec<f64> = x.iter().map(|v| b * v + 0.3).collect();
        assert_abs_diff_eq!(internal_energy(&disc, &t, &law), 1.0 / b, epsilon = 1e-12);
        let mut bad = x.clone();
        bad.swap(3, 4);
        assert_eq!(internal_energy(&disc, &bad, &law), f64::INFINITY);
    }
}

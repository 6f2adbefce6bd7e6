//! Dense and banded symmetric solvers used by the Newton iteration and the
//! active-set polish of the projection.

use alloc::vec;
use alloc::vec::Vec;

use crate::numeric::sqrt;

/// Solves a symmetric tridiagonal system with diagonal `diag` and
/// off-diagonal `off` (length n−1). Returns `None` if a pivot is not positive,
/// which for our positive definite Hessians signals breakdown.
pub fn solve_tridiagonal_spd(diag: &[f64], off: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    assert_eq!(rhs.len(), n);
    assert_eq!(off.len(), n.saturating_sub(1));
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv <= 0.0 || !piv.is_finite() {
        return None;
    }
    d[0] = rhs[0] / piv;
    for i in 1..n {
        c[i - 1] = off[i - 1] / piv;
        piv = diag[i] - off[i - 1] * c[i - 1];
        if piv <= 0.0 || !piv.is_finite() {
            return None;
        }
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / piv;
    }
    for i in (0..n.saturating_sub(1)).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// In-place Cholesky factorization of a dense row-major SPD matrix (lower
/// triangle is overwritten with L). Returns false on a non-positive pivot.
pub fn cholesky_in_place(a: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let mut s = a[j * n + j];
        for k in 0..j {
            s -= a[j * n + k] * a[j * n + k];
        }
        if s <= 0.0 || !s.is_finite() {
            return false;
        }
        let ljj = sqrt(s);
        a[j * n + j] = ljj;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / ljj;
        }
    }
    true
}

/// Solves L Lᵀ x = b with the factor produced by [`cholesky_in_place`].
pub fn cholesky_solve(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    y
}

/// Solves a consistent symmetric positive semidefinite system G x = b with a
/// diagonally pivoted Cholesky factorization. Pivots below `rel_tol` times the
/// largest diagonal are treated as zero and the corresponding unknowns are set
/// to zero, which yields a basic solution when b lies in the range of G.
pub fn solve_psd_pivoted(g: &[f64], n: usize, b: &[f64], rel_tol: f64) -> Vec<f64> {
    let mut a = g.to_vec();
    let mut perm: Vec<usize> = (0..n).collect();
    let max_diag = (0..n).fold(0.0f64, |m, i| m.max(a[i * n + i]));
    let cutoff = rel_tol * max_diag.max(f64::MIN_POSITIVE);
    let mut rank = 0;
    // Right-looking factorization with symmetric pivoting on the largest
    // remaining diagonal entry. `a` stays in the permuted ordering.
    for j in 0..n {
        let (mut best, mut best_val) = (j, a[j * n + j]);
        for i in j + 1..n {
            if a[i * n + i] > best_val {
                best = i;
                best_val = a[i * n + i];
            }
        }
        if best_val <= cutoff {
            break;
        }
        if best != j {
            swap_sym(&mut a, n, j, best);
            perm.swap(j, best);
        }
        let ljj = sqrt(a[j * n + j]);
        a[j * n + j] = ljj;
        for i in j + 1..n {
            a[i * n + j] /= ljj;
        }
        for i in j + 1..n {
            let lij = a[i * n + j];
            for k in j + 1..=i {
                a[i * n + k] -= lij * a[k * n + j];
            }
            // keep the upper triangle mirrored so pivot search sees updates
            for k in j + 1..i {
                a[k * n + i] = a[i * n + k];
            }
        }
        rank += 1;
    }
    let pb: Vec<f64> = perm.iter().map(|&p| b[p]).collect();
    let mut y = vec![0.0; rank];
    for i in 0..rank {
        let mut s = pb[i];
        for k in 0..i {
            s -= a[i * n + k] * y[k];
        }
        y[i] = s / a[i * n + i];
    }
    for i in (0..rank).rev() {
        let mut s = y[i];
        for k in i + 1..rank {
            s -= a[k * n + i] * y[k];
        }
        y[i] = s / a[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in 0..rank {
        x[perm[i]] = y[i];
    }
    x
}

fn swap_sym(a: &mut [f64], n: usize, p: usize, q: usize) {
    for k in 0..n {
        a.swap(p * n + k, q * n + k);
    }
    for k in 0..n {
        a.swap(k * n + p, k * n + q);
    }
}

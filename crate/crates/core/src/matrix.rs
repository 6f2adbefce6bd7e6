//! Small dense d×d matrices (d ≤ 3) for cell gradients: symmetric part,
//! determinant, cofactor, positive-definiteness and inverse.

use core::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallMat {
    pub dim: usize,
    /// Row-major entries; only the leading `dim × dim` block is used.
    pub a: [[f64; 3]; 3],
}

impl SmallMat {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=3).contains(&dim), "SmallMat supports 1 ≤ d ≤ 3");
        SmallMat {
            dim,
            a: [[0.0; 3]; 3],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.a[i][i] = 1.0;
        }
        m
    }

    /// Builds a matrix from a row-major slice of length `dim²`.
    pub fn from_row_major(dim: usize, vals: &[f64]) -> Self {
        assert_eq!(vals.len(), dim * dim);
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.a[i][j] = vals[i * dim + j];
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] = v;
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                t.a[i][j] = self.a[j][i];
            }
        }
        t
    }

    /// Symmetric part (A + Aᵀ)/2.
    pub fn sym(&self) -> Self {
        let mut s = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                s.a[i][j] = 0.5 * (self.a[i][j] + self.a[j][i]);
            }
        }
        s
    }

    /// Skew part (A − Aᵀ)/2.
    pub fn skew(&self) -> Self {
        *self - self.sym()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.a[i][i]).sum()
    }

    pub fn det(&self) -> f64 {
        let a = &self.a;
        match self.dim {
            1 => a[0][0],
            2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
            _ => {
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                    - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            }
        }
    }

    /// Cofactor matrix: `cof(A)[i][j] = (−1)^{i+j} minor_{ij}(A)`, so that
    /// `cof(A)ᵀ A = det(A) I`.
    pub fn cofactor(&self) -> Self {
        let a = &self.a;
        let mut c = Self::zeros(self.dim);
        match self.dim {
            1 => c.a[0][0] = 1.0,
            2 => {
                c.a[0][0] = a[1][1];
                c.a[0][1] = -a[1][0];
                c.a[1][0] = -a[0][1];
                c.a[1][1] = a[0][0];
            }
            _ => {
                for i in 0..3 {
                    for j in 0..3 {
                        let (r0, r1) = ((i + 1) % 3, (i + 2) % 3);
                        let (c0, c1) = ((j + 1) % 3, (j + 2) % 3);
                        // Cyclic index choice absorbs the checkerboard sign.
                        c.a[i][j] = a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0];
                    }
                }
            }
        }
        c
    }

    /// Inverse via the adjugate; `None` when the determinant vanishes.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.cofactor().transpose().scale(1.0 / d))
    }

    /// True when the symmetric matrix is positive definite (leading principal
    /// minors all positive).
    pub fn is_positive_definite(&self) -> bool {
        let a = &self.a;
        match self.dim {
            1 => a[0][0] > 0.0,
            2 => a[0][0] > 0.0 && self.det() > 0.0,
            _ => a[0][0] > 0.0 && a[0][0] * a[1][1] - a[0][1] * a[1][0] > 0.0 && self.det() > 0.0,
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.a[i][j] *= s;
            }
        }
        m
    }

    /// Frobenius inner product tr(AᵀB).
    pub fn frob(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.a[i][j] * other.a[i][j];
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        let mut s: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s = s.max(self.a[i][j].abs());
            }
        }
        s
    }
}

impl Add for SmallMat {
    type Output = SmallMat;
    fn add(self, rhs: SmallMat) -> SmallMat {
        let mut m = self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.a[i][j] += rhs.a[i][j];
            }
        }
        m
    }
}

impl Sub for SmallMat {
    type Output = SmallMat;
    fn sub(self, rhs: SmallMat) -> SmallMat {
        self + rhs.scale(-1.0)
    }
}

impl Mul for SmallMat {
    type Output = SmallMat;
    fn mul(self, rhs: SmallMat) -> SmallMat {
        let mut m = SmallMat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let mut s = 0.0;
                for k in 0..self.dim {
                    s += self.a[i][k] * rhs.a[k][j];
                }
                m.a[i][j] = s;
            }
        }
        m
    }
}

/// det(S + A) ≥ det(S) for symmetric positive semidefinite `s` and skew `a`,
/// up to `1e-12 · scale` where `scale` is the largest entry magnitude to the
/// power d.
pub fn det_inequality_check(s: &SmallMat, a: &SmallMat) -> bool {
    let scale = s.max_abs().max(a.max_abs()).max(1.0);
    let scale = (0..s.dim).fold(1.0, |acc, _| acc * scale);
    (*s + *a).det() >= s.det() - 1e-12 * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_mat(rng: &mut ChaCha8Rng, dim: usize) -> SmallMat {
        let mut m = SmallMat::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.a[i][j] = rng.random_range(-2.0..2.0);
            }
        }
        m
    }

    #[test]
    fn cofactor_satisfies_cramer() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in 1..=3 {
            for _ in 0..200 {
                let a = random_mat(&mut rng, dim);
                let lhs = a.cofactor().transpose() * a;
                let rhs = SmallMat::identity(dim).scale(a.det());
                assert!((lhs - rhs).max_abs() < 1e-12, "{lhs:?} vs {rhs:?}");
            }
        }
    }

    #[test]
    fn inverse_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for dim in 1..=3 {
            let a = random_mat(&mut rng, dim) + SmallMat::identity(dim).scale(5.0);
            let inv = a.inverse().unwrap();
            assert!(((a * inv) - SmallMat::identity(dim)).max_abs() < 1e-12);
        }
    }

    #[test]
    fn sym_plus_skew_recovers_matrix() {
        let a = SmallMat::from_row_major(2, &[1.0, 1.0, -1.0, 1.0]);
        assert_eq!(a.sym(), SmallMat::identity(2));
        assert_eq!(a.sym() + a.skew(), a);
    }

    #[test]
    fn positive_definite_test() {
        assert!(SmallMat::identity(3).is_positive_definite());
        assert!(!SmallMat::from_row_major(2, &[1.0, 0.0, 0.0, -1.0]).is_positive_definite());
        assert!(!SmallMat::from_row_major(2, &[1.0, 2.0, 2.0, 1.0]).is_positive_definite());
    }

    #[test]
    fn det_inequality_examples() {
        let s = SmallMat::identity(2);
        let a = SmallMat::from_row_major(2, &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!((s + a).det(), 2.0);
        assert!(det_inequality_check(&s, &a));
        assert!(det_inequality_check(&s, &SmallMat::zeros(2)));
    }
}

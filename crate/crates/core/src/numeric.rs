//! Scalar helpers: deterministic pairwise summation and `libm` wrappers so the
//! crate builds without `std`.

use alloc::vec::Vec;

const BLOCK: usize = 16;

/// Pairwise (tree) summation. The result depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= BLOCK {
        let mut s = 0.0;
        for &x in xs {
            s += x;
        }
        return s;
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Pairwise sum of `f(0), ..., f(n-1)`.
pub fn sum_by(n: usize, f: impl FnMut(usize) -> f64) -> f64 {
    let terms: Vec<f64> = (0..n).map(f).collect();
    pairwise_sum(&terms)
}

#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub fn powf(x: f64, y: f64) -> f64 {
    libm::pow(x, y)
}

#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[inline]
pub fn cos(x: f64) -> f64 {
    libm::cos(x)
}

#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

#[inline]
pub fn floor(x: f64) -> f64 {
    libm::floor(x)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[inline]
pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Largest coordinate-wise gap between two equally sized slices.
#[inline]
pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |acc: f64, (x, y)| acc.max((x - y).abs()))
}

/// Diagonal of the axis-aligned bounding box of a flat point array.
pub fn bbox_diameter(points: &[f64], dim: usize) -> f64 {
    if points.is_empty() || dim == 0 {
        return 0.0;
    }
    let mut lo = points[..dim].to_vec();
    let mut hi = lo.clone();
    for p in points.chunks_exact(dim) {
        for k in 0..dim {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    sqrt(lo.iter().zip(&hi).map(|(a, b)| (b - a) * (b - a)).sum())
}

/// Weighted squared norm Σ wᵢ|aᵢ|² for a flat array of `dim`-vectors.
pub fn weighted_norm_sq(weights: &[f64], a: &[f64], dim: usize) -> f64 {
    sum_by(weights.len(), |i| {
        weights[i] * norm_sq(&a[i * dim..(i + 1) * dim])
    })
}

/// Weighted inner product Σ wᵢ⟨aᵢ, bᵢ⟩.
pub fn weighted_dot(weights: &[f64], a: &[f64], b: &[f64], dim: usize) -> f64 {
    sum_by(weights.len(), |i| {
        weights[i] * dot(&a[i * dim..(i + 1) * dim], &b[i * dim..(i + 1) * dim])
    })
}

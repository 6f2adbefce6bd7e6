//! Dissipation of internal energy along the straight-line interpolation
//! T_s = id + s(T − id)/τ:
//!
//! D = Σ_cells volₖ ∫₀^τ Δ_s s ds,
//! Δ_s = p det(E_s)^{−γ−1} (tr(cof E_s B))² + P det(E_s)^{−γ−1} tr((cof E_s B)²),
//!
//! with B = ((∇T)^sym − I)/τ, E_s = I + sB, and p, P evaluated at the cell's
//! reference density and entropy.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::matrix::SmallMat;
use crate::numeric::{cos, pairwise_sum, powf};
use crate::state::GasLaw;

use super::mesh::EnergyDiscretization;

/// Panel cap per cell for the adaptive dissipation quadrature.
const MAX_PANELS: usize = 400;

/// Gauss–Legendre nodes and weights on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = if n == 0 {
        0.0
    } else {
        n as f64 * (x * p1 - p0) / (x * x - 1.0)
    };
    (p, d)
}

/// Integrand Δ_s · s for one cell (per unit volume).
fn integrand(b: &SmallMat, s: f64, p_small: f64, p_big: f64, gamma: f64) -> f64 {
    let e = SmallMat::identity(b.dim) + b.scale(s);
    let det = e.det();
    if det <= 0.0 {
        return f64::INFINITY;
    }
    let cb = e.cofactor() * *b;
    let tr = cb.trace();
    let w = powf(det, -gamma - 1.0);
    (p_small * w * tr * tr + p_big * w * (cb * cb).trace()) * s
}

struct Rule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Rule {
    fn apply(&self, f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        let terms: Vec<f64> = self
            .x
            .iter()
            .zip(&self.w)
            .map(|(x, w)| w * f(c + h * x))
            .collect();
        h * pairwise_sum(&terms)
    }

    /// Globally adaptive integration: repeatedly bisects the panel with the
    /// largest error estimate (two half-panels against the whole) until the
    /// summed estimate meets `rel_tol`, reaches rounding level, or
    /// `max_panels` is hit.
    fn integrate(
        &self,
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        rel_tol: f64,
        max_panels: usize,
    ) -> f64 {
        let panel = |a: f64, b: f64, whole: f64| {
            let m = 0.5 * (a + b);
            let (l, r) = (self.apply(f, a, m), self.apply(f, m, b));
            Panel {
                a,
                b,
                left: l,
                right: r,
                err: (l + r - whole).abs(),
            }
        };
        let mut heap = BinaryHeap::new();
        heap.push(panel(a, b, self.apply(f, a, b)));
        loop {
            let (mut total, mut err, mut mag) = (0.0, 0.0, 0.0);
            for p in heap.iter() {
                total += p.left + p.right;
                err += p.err;
                mag += p.left.abs() + p.right.abs();
            }
            let done = err <= rel_tol * total.abs() || err <= 64.0 * f64::EPSILON * mag;
            if done || !total.is_finite() || heap.len() >= max_panels {
                let values: Vec<f64> = heap.iter().map(|p| p.left + p.right).collect();
                return pairwise_sum(&values);
            }
            let worst = heap.pop().expect("nonempty");
            let m = 0.5 * (worst.a + worst.b);
            heap.push(panel(worst.a, m, worst.left));
            heap.push(panel(m, worst.b, worst.right));
        }
    }
}

struct Panel {
    a: f64,
    b: f64,
    left: f64,
    right: f64,
    err: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err.total_cmp(&other.err).is_eq()
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Per-cell dissipation integrals volₖ ∫₀^τ Δ_s s ds.
pub fn cell_dissipation(
    disc: &EnergyDiscretization,
    targets: &[f64],
    tau: f64,
    law: &GasLaw,
    quad_pts: usize,
) -> Vec<f64> {
    let (x, w) = gauss_legendre(quad_pts.max(1));
    let rule = Rule { x, w };
    let d = disc.dim;
    (0..disc.num_cells())
        .map(|k| {
            let r = disc.density(k);
            let s_ent = disc.cells[k].entropy;
            let (pb, ps) = (
                law.pressure(r, s_ent),
                law.pressure_derivative_term(r, s_ent),
            );
            if pb == 0.0 && ps == 0.0 {
                return 0.0;
            }
            let b = (disc.cell_gradient(k, targets).sym() - SmallMat::identity(d)).scale(1.0 / tau);
            if b.max_abs() == 0.0 {
                return 0.0;
            }
            let f = |s: f64| integrand(&b, s, ps, pb, law.gamma);
            disc.volume(k) * rule.integrate(&f, 0.0, tau, 1e-14, MAX_PANELS)
        })
        .collect()
}

/// Total dissipation Σ_cells volₖ ∫₀^τ Δ_s s ds with `quad_pts`-point
/// Gauss–Legendre panels, refined adaptively.
pub fn dissipation_integral(
    disc: &EnergyDiscretization,
    targets: &[f64],
    tau: f64,
    law: &GasLaw,
    quad_pts: usize,
) -> f64 {
    pairwise_sum(&cell_dissipation(disc, targets, tau, law, quad_pts))
}

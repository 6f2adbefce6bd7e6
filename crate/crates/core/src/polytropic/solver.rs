//! Minimization of Ψ[T] = (3/4τ²) Σ mᵢ|yᵢ − Tᵢ|² + 𝒰[T] over maps with
//! finite internal energy. Ψ is smooth and strictly convex on that open set
//! and blows up at its boundary, so a damped Newton method that keeps
//! iterates inside converges from the identity. A proximal-gradient variant
//! (projection onto the monotone cone as the prox in 1D) is kept as an
//! alternative.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{cholesky_in_place, cholesky_solve, solve_tridiagonal_spd};
use crate::monotone::pav;
use crate::numeric::{dot, sqrt};
use crate::{Error, Result};

use super::energy::{
    internal_energy_gradient, internal_energy_hessian_blocks, internal_energy_with, quadratic_part,
};
use super::mesh::EnergyDiscretization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverKind {
    /// Damped Newton with feasibility and Armijo backtracking.
    #[default]
    Newton,
    /// Proximal gradient with backtracking; the prox is the weighted
    /// monotone projection in 1D and the identity in 2D.
    ProximalGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub kind: SolverKind,
    pub max_iters: usize,
    /// Relative stopping tolerance: on the squared Newton decrement, or on
    /// the distance bound from the gradient mapping for proximal gradient.
    pub rel_tol: f64,
    /// Gauss–Legendre points per panel for the dissipation integral.
    pub quad_pts: usize,
    /// Keep the objective value of every iterate.
    pub record_history: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            kind: SolverKind::Newton,
            max_iters: 10_000,
            rel_tol: 1e-10,
            quad_pts: 8,
            record_history: false,
        }
    }
}

pub(crate) struct Objective<'a> {
    pub disc: &'a EnergyDiscretization,
    pub masses: &'a [f64],
    pub y: &'a [f64],
    pub coeff: Vec<f64>,
    pub tau: f64,
    pub gamma: f64,
}

pub(crate) struct Solved {
    pub targets: Vec<f64>,
    pub iterations: usize,
    pub objective: f64,
    pub gradient_residual: f64,
    pub history: Vec<f64>,
}

impl Objective<'_> {
    fn dim(&self) -> usize {
        self.disc.dim
    }

    pub fn value(&self, t: &[f64]) -> f64 {
        let u = internal_energy_with(self.disc, &self.coeff, t, self.gamma);
        if u.is_infinite() {
            return f64::INFINITY;
        }
        quadratic_part(self.masses, self.y, t, self.dim(), self.tau) + u
    }

    pub fn gradient(&self, t: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim();
        let mut g = internal_energy_gradient(self.disc, &self.coeff, t, self.gamma)?;
        let c = 1.5 / (self.tau * self.tau);
        for i in 0..self.masses.len() {
            for k in 0..d {
                g[i * d + k] += c * self.masses[i] * (t[i * d + k] - self.y[i * d + k]);
            }
        }
        Some(g)
    }

    /// Solves H p = −g.
    fn newton_direction(&self, t: &[f64], g: &[f64]) -> Option<Vec<f64>> {
        let d = self.dim();
        let n = t.len();
        let c = 1.5 / (self.tau * self.tau);
        let blocks = internal_energy_hessian_blocks(self.disc, &self.coeff, t, self.gamma);
        if let (1, Some(chain)) = (d, self.disc.chain_1d()) {
            let mut pos = vec![0usize; n];
            for (k, &v) in chain.iter().enumerate() {
                pos[v] = k;
            }
            let mut diag: Vec<f64> = chain.iter().map(|&v| c * self.masses[v]).collect();
            let mut off = vec![0.0; n.saturating_sub(1)];
            for (dofs, b) in &blocks {
                let (pa, pb) = (pos[dofs[0]], pos[dofs[1]]);
                diag[pa] += b[0];
                diag[pb] += b[3];
                off[pa.min(pb)] += b[1];
            }
            let rhs: Vec<f64> = chain.iter().map(|&v| -g[v]).collect();
            let p = solve_tridiagonal_spd(&diag, &off, &rhs)?;
            let mut out = vec![0.0; n];
            for (k, &v) in chain.iter().enumerate() {
                out[v] = p[k];
            }
            return Some(out);
        }
        let mut h = vec![0.0; n * n];
        for i in 0..self.masses.len() {
            for k in 0..d {
                let r = i * d + k;
                h[r * n + r] += c * self.masses[i];
            }
        }
        for (dofs, b) in &blocks {
            let nl = dofs.len();
            for p in 0..nl {
                for q in 0..nl {
                    h[dofs[p] * n + dofs[q]] += b[p * nl + q];
                }
            }
        }
        if !cholesky_in_place(&mut h, n) {
            return None;
        }
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        Some(cholesky_solve(&h, n, &rhs))
    }
}

pub(crate) fn minimize(obj: &Objective, start: Vec<f64>, cfg: &SolverConfig) -> Result<Solved> {
    match cfg.kind {
        SolverKind::Newton => newton(obj, start, cfg),
        SolverKind::ProximalGradient => proximal_gradient(obj, start, cfg),
    }
}

fn newton(obj: &Objective, start: Vec<f64>, cfg: &SolverConfig) -> Result<Solved> {
    let mut t = start;
    let mut f = obj.value(&t);
    if !f.is_finite() {
        return Err(Error::InfiniteEnergy(
            "solver start point has infinite energy".into(),
        ));
    }
    let mut history = Vec::new();
    if cfg.record_history {
        history.push(f);
    }
    let tiny = f64::MIN_POSITIVE;
    let mut decrement_sq = f64::INFINITY;
    for it in 0..cfg.max_iters {
        let g = obj
            .gradient(&t)
            .ok_or_else(|| Error::InfiniteEnergy("iterate left the energy domain".into()))?;
        let p = obj
            .newton_direction(&t, &g)
            .ok_or(Error::SolverNotConverged {
                iterations: it,
                gradient_residual: f64::NAN,
                el_residual: f64::NAN,
            })?;
        let slope = dot(&g, &p);
        decrement_sq = (-slope).max(0.0);
        let scale = f.abs().max(tiny);
        if decrement_sq <= 1e-6 * cfg.rel_tol * cfg.rel_tol * scale {
            return Ok(Solved {
                targets: t,
                iterations: it,
                objective: f,
                gradient_residual: sqrt(decrement_sq / scale),
                history,
            });
        }
        // Below this predicted decrease, objective differences are rounding
        // noise and Armijo cannot be tested.
        let noisy = 0.5 * decrement_sq < 1e-13 * scale;
        let mut alpha = 1.0;
        let mut accepted = None;
        while alpha > 1e-14 {
            let trial: Vec<f64> = t.iter().zip(&p).map(|(a, b)| a + alpha * b).collect();
            let ft = obj.value(&trial);
            if ft.is_finite() {
                let ok = if noisy {
                    ft <= f + 1e-13 * scale
                } else {
                    ft <= f + 1e-4 * alpha * slope
                };
                if ok {
                    accepted = Some((trial, ft));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, ft)) => {
                t = trial;
                f = ft;
                if cfg.record_history {
                    history.push(f);
                }
            }
            None => {
                if decrement_sq <= cfg.rel_tol * cfg.rel_tol * scale {
                    return Ok(Solved {
                        targets: t,
                        iterations: it,
                        objective: f,
                        gradient_residual: sqrt(decrement_sq / scale),
                        history,
                    });
                }
                return Err(Error::SolverNotConverged {
                    iterations: it,
                    gradient_residual: sqrt(decrement_sq / scale),
                    el_residual: f64::NAN,
                });
            }
        }
    }
    Err(Error::SolverNotConverged {
        iterations: cfg.max_iters,
        gradient_residual: sqrt(decrement_sq / f.abs().max(tiny)),
        el_residual: f64::NAN,
    })
}

fn proximal_gradient(obj: &Objective, start: Vec<f64>, cfg: &SolverConfig) -> Result<Solved> {
    let d = obj.dim();
    let m = obj.masses;
    let chain = obj.disc.chain_1d();
    let prox = |z: Vec<f64>| -> Vec<f64> {
        match &chain {
            Some(chain) => {
                let w: Vec<f64> = chain.iter().map(|&v| m[v]).collect();
                let vals: Vec<f64> = chain.iter().map(|&v| z[v]).collect();
                let fit = pav(&w, &vals);
                let mut out = z;
                for (k, &v) in chain.iter().enumerate() {
                    out[v] = fit[k];
                }
                out
            }
            None => z,
        }
    };
    let mnorm_sq = |a: &[f64], b: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..m.len() {
            for k in 0..d {
                let v = a[i * d + k] - b[i * d + k];
                s += m[i] * v * v;
            }
        }
        s
    };

    let mut t = start;
    let mut f = obj.value(&t);
    if !f.is_finite() {
        return Err(Error::InfiniteEnergy(
            "solver start point has infinite energy".into(),
        ));
    }
    let mut history = Vec::new();
    if cfg.record_history {
        history.push(f);
    }
    let zero = vec![0.0; t.len()];
    let mut step = obj.tau * obj.tau;
    let mut last_move = f64::INFINITY;
    let mut g = obj
        .gradient(&t)
        .ok_or_else(|| Error::InfiniteEnergy("iterate left the energy domain".into()))?;
    for it in 0..cfg.max_iters {
        // Backtrack on the secant curvature ⟨∇Ψ(c) − ∇Ψ(t), c − t⟩ / |c − t|²
        // rather than on Ψ values, which stop resolving progress long
        // before the gradient does.
        let (next, fn_, gn, curv) = loop {
            let z: Vec<f64> = (0..t.len())
                .map(|k| t[k] - step * g[k] / m[k / d])
                .collect();
            let cand = prox(z);
            let fc = obj.value(&cand);
            let gc = if fc.is_finite() {
                obj.gradient(&cand)
            } else {
                None
            };
            if let Some(gc) = gc {
                let q = mnorm_sq(&cand, &t);
                let dg: f64 = (0..t.len())
                    .map(|k| (gc[k] - g[k]) * (cand[k] - t[k]))
                    .sum();
                let curv = if q > 0.0 { dg / q } else { 0.0 };
                if step * curv <= 1.0 {
                    break (cand, fc, gc, curv);
                }
            }
            step *= 0.5;
            if step < 1e-30 {
                return Err(Error::SolverNotConverged {
                    iterations: it,
                    gradient_residual: f64::NAN,
                    el_residual: f64::NAN,
                });
            }
        };
        // Gradient mapping; the quadratic part makes Ψ strongly convex with
        // modulus 3/(2τ²) in the mass norm, which bounds the distance to the
        // minimizer by |G|·2τ²/3.
        last_move = sqrt(mnorm_sq(&next, &t)) / step;
        let dist_bound = last_move * 2.0 * obj.tau * obj.tau / 3.0;
        t = next;
        f = fn_;
        g = gn;
        if step * curv < 0.5 {
            step *= 2.0;
        }
        if cfg.record_history {
            history.push(f);
        }
        let size = 1.0 + sqrt(mnorm_sq(&t, &zero));
        if dist_bound <= cfg.rel_tol * size {
            return Ok(Solved {
                targets: t,
                iterations: it + 1,
                objective: f,
                gradient_residual: dist_bound / size,
                history,
            });
        }
    }
    Err(Error::SolverNotConverged {
        iterations: cfg.max_iters,
        gradient_residual: last_move,
        el_residual: f64::NAN,
    })
}

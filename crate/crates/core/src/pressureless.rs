//! One step of the pressureless (sticky particle) scheme: project free
//! transport onto the monotone cone, recover the minimal-acceleration
//! velocity, merge particles that landed together, and book the energy.

use alloc::vec::Vec;

use crate::monotone::{project, ProjectionProblem, ProjectionSettings};
use crate::numeric::{pairwise_sum, sum_by};
use crate::state::{
    kinetic_energy, total_momentum, FluidState, MergeTolerance, StepOutcome, StepReport,
    TransportMap, TransportedState,
};
use crate::{Error, Result};

/// Minimal acceleration cost between (x, ξ) and (z, ζ) over time τ:
/// 3|(z−x)/τ − (ζ+ξ)/2|² + ¼|ζ−ξ|².
pub fn accel_cost_sq(x: &[f64], xi: &[f64], z: &[f64], zeta: &[f64], tau: f64) -> f64 {
    let mut a = 0.0;
    let mut b = 0.0;
    for k in 0..x.len() {
        let mid = (z[k] - x[k]) / tau - 0.5 * (zeta[k] + xi[k]);
        let jump = zeta[k] - xi[k];
        a += mid * mid;
        b += jump * jump;
    }
    3.0 * a + 0.25 * b
}

/// Arrival velocity minimizing the acceleration cost for a fixed arrival
/// point z: ξ − (3/2τ)((x + τξ) − z).
pub fn optimal_velocity(x: &[f64], xi: &[f64], z: &[f64], tau: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| xi[k] - 1.5 / tau * ((x[k] + tau * xi[k]) - z[k]))
        .collect()
}

/// Position at time t ∈ [0, τ] on the minimal-acceleration cubic joining
/// (x, ξ) to (z, ζ). For visualization only; stepping uses straight lines.
pub fn min_accel_path(
    x: &[f64],
    xi: &[f64],
    z: &[f64],
    zeta: &[f64],
    tau: f64,
    t: f64,
) -> Vec<f64> {
    let (s2, s3) = ((t / tau) * (t / tau), (t / tau) * (t / tau) * (t / tau));
    (0..x.len())
        .map(|k| {
            let dz = z[k] - x[k];
            x[k] + t * xi[k] + (3.0 * dz - tau * (zeta[k] + 2.0 * xi[k])) * s2
                - (2.0 * dz - tau * (zeta[k] + xi[k])) * s3
        })
        .collect()
}

/// Kinetic part of the stress trace: −(3/2τ²) Σ mᵢ⟨(xᵢ+τuᵢ) − Tᵢ, xᵢ⟩.
pub fn stress_trace(state: &FluidState, map: &TransportMap) -> f64 {
    let d = state.dim;
    let tau = map.tau;
    let s = sum_by(state.len(), |i| {
        let mut acc = 0.0;
        for k in 0..d {
            let x = state.positions[i * d + k];
            let y = x + tau * state.velocities[i * d + k];
            acc += (y - map.targets[i * d + k]) * x;
        }
        state.masses[i] * acc
    });
    -1.5 / (tau * tau) * s
}

#[derive(Debug, Clone, PartialEq)]
pub struct PressurelessStep {
    pub tau: f64,
    pub merge_tol: MergeTolerance,
    pub projection: ProjectionSettings,
}

impl PressurelessStep {
    pub fn new(tau: f64) -> Self {
        PressurelessStep {
            tau,
            merge_tol: MergeTolerance::default(),
            projection: ProjectionSettings::default(),
        }
    }

    pub fn step(&self, state: &FluidState) -> Result<(FluidState, TransportMap, StepReport)> {
        let out = self.step_grouped(state)?;
        Ok((out.state, out.map, out.report))
    }

    pub fn step_grouped(&self, state: &FluidState) -> Result<StepOutcome> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidInput("tau must be positive".into()));
        }
        let tau = self.tau;
        let d = state.dim;
        let n = state.len();
        let y = state.free_transport(tau);
        let problem =
            ProjectionProblem::new(d, state.positions.clone(), state.masses.clone(), y.clone())
                .with_settings(self.projection.clone());
        let projected = project(&problem)?;
        let mut map = TransportMap::new(d, tau, projected.projected);
        map.accepted = projected.max_violation <= problem.tol_feas();

        let t = &map.targets;
        let w: Vec<f64> = (0..n * d)
            .map(|k| state.velocities[k] - 1.5 / tau * (y[k] - t[k]))
            .collect();
        let merge_tol = self.merge_tol.resolve(t, d);
        let (next, groups) = TransportedState {
            state,
            targets: t,
            velocities: &w,
        }
        .merge(merge_tol);

        // Σ m|W − U|² over merged groups.
        let mut spread_terms = Vec::new();
        for (g, members) in groups.iter().enumerate() {
            if members.len() < 2 {
                continue;
            }
            for &i in members {
                let mut s = 0.0;
                for k in 0..d {
                    let v = w[i * d + k] - next.velocities[g * d + k];
                    s += v * v;
                }
                spread_terms.push(state.masses[i] * s);
            }
        }
        let residual = sum_by(n, |i| {
            let mut s = 0.0;
            for k in 0..d {
                let v = y[i * d + k] - t[i * d + k];
                s += v * v;
            }
            state.masses[i] * s
        });
        let acc_cost_sq = 0.75 / (tau * tau) * residual + pairwise_sum(&spread_terms);

        let report = StepReport {
            tau,
            acc_cost_sq,
            stress_trace: stress_trace(state, &map),
            kinetic_before: kinetic_energy(state),
            kinetic_after: kinetic_energy(&next),
            internal_before: 0.0,
            internal_after: 0.0,
            dissipation: 0.0,
            momentum_after: total_momentum(&next),
            merged: n - next.len(),
            optimality: None,
        };
        Ok(StepOutcome {
            state: next,
            map,
            report,
            groups,
        })
    }
}

//! One step of the polytropic scheme: minimize acceleration cost plus the
//! internal energy of the transported gas, then account energy, stress and
//! dissipation.

mod dissipation;
mod energy;
mod mesh;
mod solver;

use alloc::vec::Vec;

pub use dissipation::{cell_dissipation, dissipation_integral, gauss_legendre};
pub use energy::{
    h, h_gradient, h_hessian, internal_energy, internal_energy_gradient, objective,
    reference_internal_energy, transported_internal_energy,
};
pub use mesh::{Cell, EnergyDiscretization};
pub use solver::{SolverConfig, SolverKind};

use crate::matrix::SmallMat;
use crate::monotone::{is_monotone, ProjectionSettings};
use crate::numeric::{pairwise_sum, powf, sum_by};
use crate::pressureless::PressurelessStep;
use crate::state::{
    kinetic_energy, FluidState, GasLaw, GasMode, MergeTolerance, StepOutcome, StepReport,
    TransportMap,
};
use crate::{Error, Result};
use solver::{minimize, Objective};

/// Optimality diagnostics at the computed minimizer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Optimality {
    /// |(3/2τ²)Σm⟨y−T, T⟩ + Σ P det(ε)^{−γ} tr(cof(ε)∇T) vol| relative to
    /// the energy before the step.
    pub el_residual: f64,
    /// |−(3/2τ²)Σm⟨y−T, T⟩ − d(γ−1)𝒰[T]| relative to the energy before.
    pub cramer_residual: f64,
    /// Newton decrement relative to √Ψ, or for proximal gradient the
    /// distance bound from the gradient mapping relative to 1 + |T|.
    pub gradient_residual: f64,
    /// 𝒰[T] = Σ U h(∇T) vol, evaluated with the symmetric gradient.
    pub internal_relaxed: f64,
    pub objective: f64,
    pub iterations: usize,
    /// Largest violation of pairwise monotonicity ⟨Tᵢ−Tⱼ, xᵢ−xⱼ⟩ ≥ 0
    /// (checked after the fact in 2D; zero by construction in 1D).
    pub max_pairwise_violation: f64,
    /// Objective per iteration when requested.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolytropicStep {
    pub tau: f64,
    pub law: GasLaw,
    pub solver: SolverConfig,
    /// Used when κ = 0, where the step reduces to the pressureless one.
    pub projection: ProjectionSettings,
    pub merge_tol: MergeTolerance,
}

impl PolytropicStep {
    pub fn new(tau: f64, law: GasLaw) -> Self {
        PolytropicStep {
            tau,
            law,
            solver: SolverConfig::default(),
            projection: ProjectionSettings::default(),
            merge_tol: MergeTolerance::default(),
        }
    }

    /// Step with a discretization built from the state.
    pub fn step(&self, state: &FluidState) -> Result<StepOutcome> {
        if self.law.kappa == 0.0 {
            return self.pressureless_limit(state);
        }
        let disc = EnergyDiscretization::from_state(state)?;
        self.step_with(state, &disc)
    }

    /// Step on a given discretization whose nodes are the particles.
    pub fn step_with(
        &self,
        state: &FluidState,
        disc: &EnergyDiscretization,
    ) -> Result<StepOutcome> {
        self.law.validate()?;
        if self.law.mode != GasMode::Polytropic {
            return Err(Error::InvalidInput("gas law is not polytropic".into()));
        }
        if self.law.kappa == 0.0 {
            return self.pressureless_limit(state);
        }
        let (map, report, velocities) = solve_step(disc, state, self.tau, &self.law, &self.solver)?;
        let next = FluidState {
            dim: state.dim,
            masses: state.masses.clone(),
            positions: map.targets.clone(),
            velocities,
            entropies: state.entropies.clone(),
        };
        let groups = (0..state.len()).map(|i| alloc::vec![i]).collect();
        Ok(StepOutcome {
            state: next,
            map,
            report,
            groups,
        })
    }

    fn pressureless_limit(&self, state: &FluidState) -> Result<StepOutcome> {
        let p = PressurelessStep {
            tau: self.tau,
            merge_tol: self.merge_tol,
            projection: self.projection.clone(),
        };
        p.step_grouped(state)
    }
}

/// Minimizes the step objective and returns the map with its ledger.
pub fn minimize_step(
    disc: &EnergyDiscretization,
    state: &FluidState,
    tau: f64,
    law: &GasLaw,
    cfg: &SolverConfig,
) -> Result<(TransportMap, StepReport)> {
    let (map, report, _) = solve_step(disc, state, tau, law, cfg)?;
    Ok((map, report))
}

fn solve_step(
    disc: &EnergyDiscretization,
    state: &FluidState,
    tau: f64,
    law: &GasLaw,
    cfg: &SolverConfig,
) -> Result<(TransportMap, StepReport, Vec<f64>)> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput("tau must be positive".into()));
    }
    if disc.nodes.len() != state.positions.len() {
        return Err(Error::InvalidInput(
            "discretization nodes do not match the particles".into(),
        ));
    }
    let d = state.dim;
    let n = state.len();
    let y = state.free_transport(tau);
    let obj = Objective {
        disc,
        masses: &state.masses,
        y: &y,
        coeff: disc.energy_coefficients(law),
        tau,
        gamma: law.gamma,
    };
    let f_id = obj.value(&state.positions);
    if !f_id.is_finite() {
        return Err(Error::InfiniteEnergy("initial configuration".into()));
    }
    let f_free = obj.value(&y);
    let start = if f_free < f_id {
        y.clone()
    } else {
        state.positions.clone()
    };
    let solved = minimize(&obj, start, cfg)?;
    let t = solved.targets;

    let c = 1.5 / (tau * tau);
    let q_t = sum_by(n, |i| {
        let mut s = 0.0;
        for k in 0..d {
            s += (y[i * d + k] - t[i * d + k]) * t[i * d + k];
        }
        state.masses[i] * s
    });
    let q_x = sum_by(n, |i| {
        let mut s = 0.0;
        for k in 0..d {
            s += (y[i * d + k] - t[i * d + k]) * state.positions[i * d + k];
        }
        state.masses[i] * s
    });
    let residual_sq = sum_by(n, |i| {
        let mut s = 0.0;
        for k in 0..d {
            let v = y[i * d + k] - t[i * d + k];
            s += v * v;
        }
        state.masses[i] * s
    });

    // Pressure terms per cell: P det(ε)^{−γ} tr(cof(ε)∇T) vol and
    // P det(ε)^{−γ} tr(cof ε) vol.
    let mut el_terms = Vec::with_capacity(disc.num_cells());
    let mut stress_terms = Vec::with_capacity(disc.num_cells());
    for k in 0..disc.num_cells() {
        let p = law.pressure(disc.density(k), disc.cells[k].entropy);
        if p == 0.0 {
            continue;
        }
        let grad = disc.cell_gradient(k, &t);
        let eps = grad.sym();
        let cof = eps.cofactor();
        let w = p * powf(eps.det(), -law.gamma) * disc.volume(k);
        el_terms.push(w * (cof * grad).trace());
        stress_terms.push(w * cof.trace());
    }
    let el_pressure = pairwise_sum(&el_terms);
    let stress_pressure = pairwise_sum(&stress_terms);

    let internal_before = reference_internal_energy(disc, law);
    let internal_relaxed = internal_energy(disc, &t, law);
    let internal_after = transported_internal_energy(disc, &t, law);
    let kinetic_before = kinetic_energy(state);
    let norm = (kinetic_before + internal_before).max(f64::MIN_POSITIVE);

    let velocities: Vec<f64> = (0..n * d)
        .map(|k| state.velocities[k] - 1.5 / tau * (y[k] - t[k]))
        .collect();
    let kinetic_after = 0.5
        * sum_by(n, |i| {
            let mut s = 0.0;
            for k in 0..d {
                s += velocities[i * d + k] * velocities[i * d + k];
            }
            state.masses[i] * s
        });
    let momentum_after = (0..d)
        .map(|k| sum_by(n, |i| state.masses[i] * velocities[i * d + k]))
        .collect();

    let max_pairwise_violation = if d == 1 {
        0.0
    } else {
        (-is_monotone(&state.positions, &t, d, 0.0).worst_value).max(0.0)
    };
    let dissipation = dissipation_integral(disc, &t, tau, law, cfg.quad_pts);

    let optimality = Optimality {
        el_residual: (c * q_t + el_pressure).abs() / norm,
        cramer_residual: (-c * q_t - d as f64 * (law.gamma - 1.0) * internal_relaxed).abs() / norm,
        gradient_residual: solved.gradient_residual,
        internal_relaxed,
        objective: solved.objective,
        iterations: solved.iterations,
        max_pairwise_violation,
        history: solved.history,
    };
    let report = StepReport {
        tau,
        acc_cost_sq: 0.75 / (tau * tau) * residual_sq,
        stress_trace: -c * q_x - stress_pressure,
        kinetic_before,
        kinetic_after,
        internal_before,
        internal_after,
        dissipation,
        momentum_after,
        merged: 0,
        optimality: Some(optimality),
    };
    let scale = state.diameter().max(f64::MIN_POSITIVE);
    let mut map = TransportMap::new(d, tau, t);
    map.accepted = max_pairwise_violation <= 1e-10 * scale * scale;
    Ok((map, report, velocities))
}

/// det(S + A) ≥ det(S) for symmetric positive semidefinite S and skew A.
pub fn det_inequality_check(s: &SmallMat, a: &SmallMat) -> bool {
    crate::matrix::det_inequality_check(s, a)
}

//! Multi-step driver: recursive stepping on the grid tₖ = kτ, linear
//! interpolation inside a step, lineage bookkeeping, and trajectory
//! diagnostics (1D Wasserstein distance, Kantorovich norm, Lipschitz bounds).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::monotone::ProjectionSettings;
use crate::numeric::{ceil, pairwise_sum, sqrt};
use crate::polytropic::{
    reference_internal_energy, transported_internal_energy, EnergyDiscretization, PolytropicStep,
    SolverConfig,
};
use crate::pressureless::PressurelessStep;
use crate::state::{
    kinetic_energy, FluidState, GasLaw, GasMode, MergeTolerance, StepOutcome, StepReport,
    TransportMap,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub tau: f64,
    pub t_end: f64,
    pub law: GasLaw,
    pub merge_tol: MergeTolerance,
    pub projection: ProjectionSettings,
    pub solver: SolverConfig,
    /// Record every k-th endpoint frame (the last one is always recorded).
    pub record_every: usize,
    /// Interpolated frames inserted inside each recorded step.
    pub substeps: usize,
}

impl SimConfig {
    pub fn new(tau: f64, t_end: f64, law: GasLaw) -> Self {
        SimConfig {
            tau,
            t_end,
            law,
            merge_tol: MergeTolerance::default(),
            projection: ProjectionSettings::default(),
            solver: SolverConfig::default(),
            record_every: 1,
            substeps: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.t_end >= self.tau && self.t_end.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "t_end ({}) must be at least tau ({})",
                self.t_end, self.tau
            )));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidInput("record_every must be positive".into()));
        }
        self.law.validate()
    }

    /// ⌈t_end/τ⌉, ignoring rounding noise in the ratio.
    pub fn num_steps(&self) -> usize {
        let r = self.t_end / self.tau;
        let c = ceil(r - 1e-9 * r.max(1.0));
        (c as usize).max(1)
    }
}

/// Stepper holding the current state; yields one [`StepOutcome`] per step.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: SimConfig,
    state: FluidState,
    disc: Option<EnergyDiscretization>,
    step_index: usize,
    num_steps: usize,
}

impl Simulation {
    pub fn new(initial: FluidState, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        initial.validate()?;
        let disc = if cfg.law.mode == GasMode::Polytropic && cfg.law.kappa > 0.0 {
            let disc = EnergyDiscretization::from_state(&initial)?;
            let e = reference_internal_energy(&disc, &cfg.law);
            if !e.is_finite() {
                return Err(Error::InfiniteEnergy("initial internal energy".into()));
            }
            Some(disc)
        } else {
            None
        };
        let num_steps = cfg.num_steps();
        Ok(Simulation {
            cfg,
            state: initial,
            disc,
            step_index: 0,
            num_steps,
        })
    }

    pub fn state(&self) -> &FluidState {
        &self.state
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.cfg.tau
    }

    /// Internal energy of the current state.
    pub fn internal_energy(&self) -> f64 {
        match &self.disc {
            Some(d) => reference_internal_energy(d, &self.cfg.law),
            None => 0.0,
        }
    }

    /// Internal energy of the current mesh moved to `positions`.
    pub fn internal_energy_at(&self, positions: &[f64]) -> f64 {
        match &self.disc {
            Some(d) => transported_internal_energy(d, positions, &self.cfg.law),
            None => 0.0,
        }
    }

    /// Advances one step; `None` once t_end is reached.
    pub fn advance(&mut self) -> Option<Result<StepOutcome>> {
        if self.step_index >= self.num_steps {
            return None;
        }
        let k = self.step_index;
        let mut projection = self.cfg.projection.clone();
        if let Some(seed) = projection.shuffle_seed {
            projection.shuffle_seed = Some(seed.wrapping_add(k as u64));
        }
        let out = match &self.disc {
            Some(disc) => {
                let step = PolytropicStep {
                    tau: self.cfg.tau,
                    law: self.cfg.law,
                    solver: self.cfg.solver.clone(),
                    projection,
                    merge_tol: self.cfg.merge_tol,
                };
                step.step_with(&self.state, disc)
            }
            None => PressurelessStep {
                tau: self.cfg.tau,
                merge_tol: self.cfg.merge_tol,
                projection,
            }
            .step_grouped(&self.state),
        };
        let out = match out {
            Ok(o) => o,
            Err(e) => {
                self.step_index = self.num_steps;
                return Some(Err(Error::Step {
                    step: k,
                    source: alloc::boxed::Box::new(e),
                }));
            }
        };
        if let Some(disc) = &mut self.disc {
            if let Err(e) = disc.advance(&out.map.targets) {
                self.step_index = self.num_steps;
                return Some(Err(Error::Step {
                    step: k,
                    source: alloc::boxed::Box::new(e),
                }));
            }
        }
        self.state = out.state.clone();
        self.step_index += 1;
        Some(Ok(out))
    }
}

impl Iterator for Simulation {
    type Item = Result<StepOutcome>;

    fn next(&mut self) -> Option<Self::Item> {
        self.advance()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    /// Number of completed steps at or before `t`.
    pub step: usize,
    pub state: FluidState,
    pub internal_energy: f64,
    /// Ledger of the step ending at this frame (endpoint frames only).
    pub report: Option<StepReport>,
    /// Ledger entries summed over all steps since the previous recorded
    /// endpoint frame: stress, ½A², dissipation.
    pub since_last: LedgerSums,
    /// For each particle, the indices of particles in the previous frame it
    /// was formed from.
    pub parents: Vec<Vec<usize>>,
    pub interpolated: bool,
}

impl Frame {
    pub fn kinetic_energy(&self) -> f64 {
        kinetic_energy(&self.state)
    }

    pub fn total_energy(&self) -> f64 {
        self.kinetic_energy() + self.internal_energy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LedgerSums {
    pub stress: f64,
    pub half_accel: f64,
    pub dissipation: f64,
}

impl LedgerSums {
    fn add(&mut self, r: &StepReport) {
        self.stress += r.stress_trace;
        self.half_accel += 0.5 * r.acc_cost_sq;
        self.dissipation += r.dissipation;
    }

    pub fn total(&self) -> f64 {
        self.stress + self.half_accel + self.dissipation
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub frames: Vec<Frame>,
}

impl Trajectory {
    /// Initial-frame particles that were merged into `particle` of frame
    /// `frame`.
    pub fn ancestors(&self, frame: usize, particle: usize) -> Vec<usize> {
        let mut current = vec![particle];
        for f in (1..=frame).rev() {
            let mut prev: Vec<usize> = current
                .iter()
                .flat_map(|&p| self.frames[f].parents[p].iter().copied())
                .collect();
            prev.sort_unstable();
            prev.dedup();
            current = prev;
        }
        current
    }

    /// Total energy of the first frame.
    pub fn initial_energy(&self) -> f64 {
        self.frames.first().map_or(0.0, Frame::total_energy)
    }

    pub fn last(&self) -> Option<&Frame> {
        self.frames.last()
    }

    /// Step reports of all recorded endpoint frames.
    pub fn reports(&self) -> impl Iterator<Item = &StepReport> {
        self.frames.iter().filter_map(|f| f.report.as_ref())
    }
}

/// Runs ⌈t_end/τ⌉ steps and records frames.
pub fn simulate(initial: &FluidState, cfg: &SimConfig) -> Result<Trajectory> {
    let mut sim = Simulation::new(initial.clone(), cfg.clone())?;
    let mut frames = vec![Frame {
        t: 0.0,
        step: 0,
        state: initial.clone(),
        internal_energy: sim.internal_energy(),
        report: None,
        since_last: LedgerSums::default(),
        parents: (0..initial.len()).map(|i| vec![i]).collect(),
        interpolated: false,
    }];
    // Lineage of current particles relative to the last recorded frame.
    let mut pending: Vec<Vec<usize>> = (0..initial.len()).map(|i| vec![i]).collect();
    let mut sums = LedgerSums::default();
    let tau = cfg.tau;
    loop {
        let k = sim.step_index();
        let before = sim.state().clone();
        let start_recorded = pending
            .iter()
            .enumerate()
            .all(|(i, p)| p.len() == 1 && p[0] == i)
            && frames
                .last()
                .is_some_and(|f| f.step == k && !f.interpolated);
        let mesh_before = if cfg.substeps > 0 {
            sim.disc.clone()
        } else {
            None
        };
        let Some(out) = sim.advance() else { break };
        let out = out?;
        let step_no = k + 1;
        sums.add(&out.report);
        pending = out
            .groups
            .iter()
            .map(|g| {
                let mut v: Vec<usize> =
                    g.iter().flat_map(|&q| pending[q].iter().copied()).collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        let last = step_no == sim.num_steps();
        if step_no % cfg.record_every != 0 && !last {
            continue;
        }
        if cfg.substeps > 0 && start_recorded {
            for j in 1..=cfg.substeps {
                let tl = tau * j as f64 / (cfg.substeps + 1) as f64;
                let st = interpolate(&before, &out.map, &out.state, tl)?;
                let internal = mesh_before.as_ref().map_or(0.0, |d| {
                    transported_internal_energy(d, &st.positions, &cfg.law)
                });
                frames.push(Frame {
                    t: k as f64 * tau + tl,
                    step: k,
                    state: st,
                    internal_energy: internal,
                    report: None,
                    since_last: LedgerSums::default(),
                    parents: (0..before.len()).map(|i| vec![i]).collect(),
                    interpolated: true,
                });
            }
        }
        frames.push(Frame {
            t: step_no as f64 * tau,
            step: step_no,
            state: out.state.clone(),
            internal_energy: out.report.internal_after,
            report: Some(out.report),
            since_last: sums,
            parents: core::mem::take(&mut pending),
            interpolated: false,
        });
        sums = LedgerSums::default();
        pending = (0..sim.state().len()).map(|i| vec![i]).collect();
    }
    Ok(Trajectory { frames })
}

/// State at time `t_local ∈ [0, τ]` inside a step: positions
/// x + (t/τ)(T − x) moving with the transport velocity V = (T − x)/τ. The
/// endpoints return the stored states.
pub fn interpolate(
    state: &FluidState,
    map: &TransportMap,
    next: &FluidState,
    t_local: f64,
) -> Result<FluidState> {
    let tau = map.tau;
    if !(0.0..=tau).contains(&t_local) {
        return Err(Error::OutOfRange { t: t_local, tau });
    }
    if t_local == 0.0 {
        return Ok(state.clone());
    }
    if t_local == tau {
        return Ok(next.clone());
    }
    let s = t_local / tau;
    let positions = state
        .positions
        .iter()
        .zip(&map.targets)
        .map(|(x, t)| x + s * (t - x))
        .collect();
    Ok(FluidState {
        dim: state.dim,
        masses: state.masses.clone(),
        positions,
        velocities: map.transport_velocity(state),
        entropies: state.entropies.clone(),
    })
}

/// W₂ between two 1D atomic measures via the quantile coupling.
pub fn wasserstein2_1d(a: &FluidState, b: &FluidState) -> Result<f64> {
    if a.dim != 1 || b.dim != 1 {
        return Err(Error::Unsupported("wasserstein2_1d needs d = 1".into()));
    }
    Ok(wasserstein2_sorted(&sorted_atoms(a), &sorted_atoms(b)))
}

fn sorted_atoms(s: &FluidState) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = s
        .positions
        .iter()
        .copied()
        .zip(s.masses.iter().copied())
        .collect();
    v.sort_by(|p, q| p.0.total_cmp(&q.0));
    v
}

fn wasserstein2_sorted(a: &[(f64, f64)], b: &[(f64, f64)]) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut terms = Vec::with_capacity(a.len() + b.len());
    while i < a.len() && j < b.len() {
        let dm = ra.min(rb);
        let dx = a[i].0 - b[j].0;
        terms.push(dm * dx * dx);
        ra -= dm;
        rb -= dm;
        // Advance whichever atom is exhausted; at the end, leftover rounding
        // mass is dropped.
        if ra <= rb {
            i += 1;
            if i < a.len() {
                ra = a[i].1;
            }
        } else {
            j += 1;
            if j < b.len() {
                rb = b[j].1;
            }
        }
    }
    sqrt(pairwise_sum(&terms).max(0.0))
}

/// ∫ |F(x)| dx for the cumulative function F of a signed 1D atomic measure
/// with zero total mass.
pub fn kantorovich_norm_1d(points: &[f64], weights: &[f64]) -> Result<f64> {
    assert_eq!(points.len(), weights.len());
    let total = pairwise_sum(weights);
    if total.abs() > 1e-12 {
        return Err(Error::NonzeroTotal(total));
    }
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
    let mut cum = 0.0;
    let mut terms = Vec::with_capacity(points.len());
    for w in idx.windows(2) {
        cum += weights[w[0]];
        terms.push(cum.abs() * (points[w[1]] - points[w[0]]));
    }
    Ok(pairwise_sum(&terms))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzReport {
    /// max over frame pairs of W₂(ρ_s, ρ_t)/|t − s|.
    pub max_ratio: f64,
    /// √(2Ē) with Ē the initial total energy.
    pub bound: f64,
    /// max over pairs of W₂(ρ_s, ρ_t) − √(2Ē)|t − s|.
    pub max_excess: f64,
    /// max over frames of √M₂(t) − √M₂(0) − t√(2Ē).
    pub second_moment_excess: f64,
    pub violated: bool,
}

/// Checks W₂(ρ_s, ρ_t) ≤ √(2Ē)|t − s| over all frame pairs and the
/// second-moment growth bound, each up to 1e−8.
pub fn lipschitz_report(traj: &Trajectory) -> Result<LipschitzReport> {
    let frames = &traj.frames;
    if frames.is_empty() {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let e0 = traj.initial_energy();
    let bound = sqrt(2.0 * e0);
    let atoms: Vec<Vec<(f64, f64)>> = frames
        .iter()
        .map(|f| {
            if f.state.dim != 1 {
                Err(Error::Unsupported("Lipschitz report needs d = 1".into()))
            } else {
                Ok(sorted_atoms(&f.state))
            }
        })
        .collect::<Result<_>>()?;
    let mut max_ratio: f64 = 0.0;
    let mut max_excess = f64::NEG_INFINITY;
    for a in 0..frames.len() {
        for b in a + 1..frames.len() {
            let dt = (frames[b].t - frames[a].t).abs();
            let w = wasserstein2_sorted(&atoms[a], &atoms[b]);
            if dt > 0.0 {
                max_ratio = max_ratio.max(w / dt);
            }
            max_excess = max_excess.max(w - bound * dt);
        }
    }
    if frames.len() < 2 {
        max_excess = 0.0;
    }
    let m0 = sqrt(frames[0].state.second_moment());
    let second_moment_excess = frames
        .iter()
        .map(|f| sqrt(f.state.second_moment()) - m0 - f.t * bound)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(LipschitzReport {
        max_ratio,
        bound,
        max_excess,
        second_moment_excess,
        violated: max_excess > 1e-8 || second_moment_excess > 1e-8,
    })
}

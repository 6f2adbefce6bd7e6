//! CSV tables derived from a dump, and the τ-refinement study.

use std::path::{Path, PathBuf};

use gasflow_core::{simulate, wasserstein2_1d, FluidState};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::format::{Dump, FrameRecord};

pub const ENERGY_FILE: &str = "energy.csv";
pub const ACCEL_FILE: &str = "accel.csv";
pub const W2_FILE: &str = "w2.csv";
pub const REFINE_FILE: &str = "refine.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyRow {
    pub t: f64,
    pub step: usize,
    pub interpolated: bool,
    pub kinetic: f64,
    pub internal: f64,
    pub total: f64,
    /// Ledger sums since the previous endpoint frame.
    pub stress: f64,
    pub half_accel: f64,
    pub dissipation: f64,
    /// E(0) − E(t) minus the ledger accumulated up to t. Zero for the
    /// pressureless scheme, nonnegative for the polytropic one.
    pub unaccounted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccelRow {
    pub t: f64,
    pub step: usize,
    pub tau: f64,
    /// A_τ, the square root of the acceleration cost.
    pub acc_cost: f64,
    pub stress_trace: f64,
    pub dissipation: f64,
    pub merged: usize,
    pub ledger_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct W2Row {
    pub t0: f64,
    pub t1: f64,
    /// Exact W₂ between consecutive frames (d = 1 only).
    pub w2: Option<f64>,
    /// Cost of the coupling that sends each particle to its child, an upper
    /// bound on W₂ in any dimension.
    pub lineage_bound: f64,
    /// W₂ / (t1 − t0); compare with √(2E₀).
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefineRow {
    pub tau: f64,
    pub steps: usize,
    pub particles_final: usize,
    pub energy_final: f64,
    /// max over the coarse step times of W₂ between this level and the next
    /// finer one (τ/2). Empty on the finest level.
    pub w2_to_finer: Option<f64>,
}

pub fn energy_table(frames: &[FrameRecord]) -> Vec<EnergyRow> {
    let e0 = frames.first().map_or(0.0, |f| f.energies.total);
    let mut spent = 0.0;
    frames
        .iter()
        .map(|f| {
            let l = f.since_last;
            spent += l.total();
            EnergyRow {
                t: f.t,
                step: f.step,
                interpolated: f.interpolated,
                kinetic: f.energies.kinetic,
                internal: f.energies.internal,
                total: f.energies.total,
                stress: l.stress,
                half_accel: l.half_accel,
                dissipation: l.dissipation,
                unaccounted: e0 - f.energies.total - spent,
            }
        })
        .collect()
}

pub fn accel_table(frames: &[FrameRecord]) -> Vec<AccelRow> {
    frames
        .iter()
        .filter_map(|f| {
            f.report.as_ref().map(|r| AccelRow {
                t: f.t,
                step: f.step,
                tau: r.tau,
                acc_cost: r.acc_cost_sq.max(0.0).sqrt(),
                stress_trace: r.stress_trace,
                dissipation: r.dissipation,
                merged: r.merged,
                ledger_defect: r.ledger_defect(),
            })
        })
        .collect()
}

fn lineage_cost(prev: &FrameRecord, next: &FrameRecord) -> f64 {
    let mut cost = 0.0;
    for (child, parents) in next.particles.iter().zip(&next.parents) {
        for &j in parents {
            let p = &prev.particles[j];
            let d2: f64 =
                p.x.iter()
                    .zip(&child.x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
            cost += p.m * d2;
        }
    }
    cost.sqrt()
}

pub fn w2_table(frames: &[FrameRecord]) -> Result<Vec<W2Row>> {
    let states: Vec<FluidState> = frames
        .iter()
        .map(FrameRecord::to_state)
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(frames.len().saturating_sub(1));
    for k in 1..frames.len() {
        let (a, b) = (&frames[k - 1], &frames[k]);
        let w2 = if a.dim == 1 {
            Some(wasserstein2_1d(&states[k - 1], &states[k])?)
        } else {
            None
        };
        let lineage_bound = lineage_cost(a, b);
        let dt = b.t - a.t;
        rows.push(W2Row {
            t0: a.t,
            t1: b.t,
            w2,
            lineage_bound,
            speed: w2.unwrap_or(lineage_bound) / dt,
        });
    }
    Ok(rows)
}

/// Runs the configuration at τ, τ/2, …, τ/2^(levels−1) from the same initial
/// state and measures how far successive levels are apart in W₂ at the
/// coarse step times. Only d = 1.
pub fn refinement_study(
    cfg: &RunConfig,
    initial: &FluidState,
    levels: usize,
) -> Result<Vec<RefineRow>> {
    if initial.dim != 1 {
        return Err(CliError::Invalid("the refinement study needs d = 1".into()));
    }
    let mut runs = Vec::with_capacity(levels);
    for level in 0..levels {
        let mut sim = cfg.sim.clone();
        sim.tau = cfg.sim.tau / (1u64 << level) as f64;
        sim.record_every = 1;
        sim.substeps = 0;
        log::info!("refinement level {level}: tau = {}", sim.tau);
        runs.push((sim.tau, simulate(initial, &sim)?));
    }
    let mut rows = Vec::with_capacity(levels);
    for (level, (tau, traj)) in runs.iter().enumerate() {
        let w2_to_finer = match runs.get(level + 1) {
            Some((_, fine)) => {
                let mut worst = 0.0f64;
                for (k, f) in traj.frames.iter().enumerate() {
                    // the finer run has twice as many steps; the last coarse
                    // frame may sit at t_end rather than on the fine grid
                    let g = fine
                        .frames
                        .get(2 * k)
                        .unwrap_or_else(|| fine.last().expect("nonempty"));
                    worst = worst.max(wasserstein2_1d(&f.state, &g.state)?);
                }
                Some(worst)
            }
            None => None,
        };
        let last = traj.last().expect("nonempty");
        rows.push(RefineRow {
            tau: *tau,
            steps: traj.frames.len() - 1,
            particles_final: last.state.len(),
            energy_final: last.total_energy(),
            w2_to_finer,
        });
    }
    Ok(rows)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Format(format!("{}: {e}", path.display()))
}

/// Writes energy.csv, accel.csv and w2.csv into `out` and returns their paths.
pub fn write_report(dump: &Dump, out: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let energy = out.join(ENERGY_FILE);
    write_csv(&energy, &energy_table(&dump.frames))?;
    let accel = out.join(ACCEL_FILE);
    write_csv(&accel, &accel_table(&dump.frames))?;
    let w2 = out.join(W2_FILE);
    write_csv(&w2, &w2_table(&dump.frames)?)?;
    Ok(vec![energy, accel, w2])
}

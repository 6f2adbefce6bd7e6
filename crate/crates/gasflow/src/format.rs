//! On-disk run dumps: `frames.jsonl` (one [`FrameRecord`] per line) and
//! `manifest.json`. Numbers are written in the shortest decimal form that
//! parses back to the same `f64` (never more than 17 significant digits),
//! so a dump round-trips bit-for-bit. Layout is documented in
//! `docs/format.md`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use gasflow_core::{kinetic_energy, FluidState, Frame, LedgerSums, Optimality, StepReport};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT_NAME: &str = "gasflow-frames";
pub const FORMAT_VERSION: u32 = 1;
pub const FRAMES_FILE: &str = "frames.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleRecord {
    pub m: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    #[serde(rename = "S")]
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energies {
    pub kinetic: f64,
    pub internal: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityRecord {
    pub el_residual: Option<f64>,
    pub cramer_residual: Option<f64>,
    pub gradient_residual: Option<f64>,
    pub objective: Option<f64>,
    pub iterations: usize,
    pub max_pairwise_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub tau: f64,
    pub acc_cost_sq: f64,
    pub stress_trace: f64,
    pub kinetic_before: f64,
    pub kinetic_after: f64,
    pub internal_before: f64,
    pub internal_after: f64,
    pub dissipation: f64,
    pub momentum_after: Vec<f64>,
    pub merged: usize,
    pub optimality: Option<OptimalityRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub stress: f64,
    pub half_accel: f64,
    pub dissipation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub t: f64,
    pub step: usize,
    pub interpolated: bool,
    pub dim: usize,
    pub particles: Vec<ParticleRecord>,
    pub energies: Energies,
    pub report: Option<ReportRecord>,
    pub since_last: LedgerRecord,
    pub parents: Vec<Vec<usize>>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl From<&Optimality> for OptimalityRecord {
    fn from(o: &Optimality) -> Self {
        OptimalityRecord {
            el_residual: finite(o.el_residual),
            cramer_residual: finite(o.cramer_residual),
            gradient_residual: finite(o.gradient_residual),
            objective: finite(o.objective),
            iterations: o.iterations,
            max_pairwise_violation: finite(o.max_pairwise_violation),
        }
    }
}

impl From<&StepReport> for ReportRecord {
    fn from(r: &StepReport) -> Self {
        ReportRecord {
            tau: r.tau,
            acc_cost_sq: r.acc_cost_sq,
            stress_trace: r.stress_trace,
            kinetic_before: r.kinetic_before,
            kinetic_after: r.kinetic_after,
            internal_before: r.internal_before,
            internal_after: r.internal_after,
            dissipation: r.dissipation,
            momentum_after: r.momentum_after.clone(),
            merged: r.merged,
            optimality: r.optimality.as_ref().map(OptimalityRecord::from),
        }
    }
}

impl ReportRecord {
    /// Same quantity as [`StepReport::ledger_defect`].
    pub fn ledger_defect(&self) -> f64 {
        self.kinetic_before + self.internal_before
            - (self.kinetic_after
                + self.internal_after
                + self.stress_trace
                + 0.5 * self.acc_cost_sq
                + self.dissipation)
    }
}

impl From<LedgerSums> for LedgerRecord {
    fn from(s: LedgerSums) -> Self {
        LedgerRecord {
            stress: s.stress,
            half_accel: s.half_accel,
            dissipation: s.dissipation,
        }
    }
}

impl LedgerRecord {
    pub fn total(&self) -> f64 {
        self.stress + self.half_accel + self.dissipation
    }
}

pub fn particles_of(state: &FluidState) -> Vec<ParticleRecord> {
    let d = state.dim;
    (0..state.len())
        .map(|i| ParticleRecord {
            m: state.masses[i],
            x: state.positions[i * d..(i + 1) * d].to_vec(),
            u: state.velocities[i * d..(i + 1) * d].to_vec(),
            s: state.entropies[i],
        })
        .collect()
}

impl FrameRecord {
    pub fn from_frame(f: &Frame) -> Self {
        let kinetic = kinetic_energy(&f.state);
        FrameRecord {
            t: f.t,
            step: f.step,
            interpolated: f.interpolated,
            dim: f.state.dim,
            particles: particles_of(&f.state),
            energies: Energies {
                kinetic,
                internal: f.internal_energy,
                total: kinetic + f.internal_energy,
            },
            report: f.report.as_ref().map(ReportRecord::from),
            since_last: f.since_last.into(),
            parents: f.parents.clone(),
        }
    }

    pub fn to_state(&self) -> Result<FluidState> {
        let d = self.dim;
        let mut masses = Vec::with_capacity(self.particles.len());
        let mut positions = Vec::new();
        let mut velocities = Vec::new();
        let mut entropies = Vec::new();
        for (i, p) in self.particles.iter().enumerate() {
            if p.x.len() != d || p.u.len() != d {
                return Err(CliError::Format(format!(
                    "frame t={}: particle {i} is not {d}-dimensional",
                    self.t
                )));
            }
            masses.push(p.m);
            positions.extend_from_slice(&p.x);
            velocities.extend_from_slice(&p.u);
            entropies.push(p.s);
        }
        Ok(FluidState::new(
            d, masses, positions, velocities, entropies,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub format_version: u32,
    pub generator: String,
    pub seed: u64,
    /// Effective configuration in `key = value` form.
    pub config: BTreeMap<String, String>,
    pub initial: String,
    pub dim: usize,
    pub particles: usize,
    pub steps: usize,
    pub frames: usize,
    pub frames_file: String,
    pub initial_energy: f64,
    pub final_energy: f64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dump {
    pub manifest: Manifest,
    pub frames: Vec<FrameRecord>,
}

pub fn write_frames(path: &Path, frames: &[FrameRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for f in frames {
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n").map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn read_frames(path: &Path) -> Result<Vec<FrameRecord>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut frames = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let f: FrameRecord = serde_json::from_str(&line)
            .map_err(|e| CliError::Format(format!("{}:{}: {e}", path.display(), i + 1)))?;
        frames.push(f);
    }
    Ok(frames)
}

pub fn write_dump(dir: &Path, dump: &Dump) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    write_frames(&dir.join(&dump.manifest.frames_file), &dump.frames)?;
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&dump.manifest)?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

pub fn read_dump(dir: &Path) -> Result<Dump> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    if manifest.format != FORMAT_NAME || manifest.format_version != FORMAT_VERSION {
        return Err(CliError::Format(format!(
            "unsupported format {} v{}",
            manifest.format, manifest.format_version
        )));
    }
    let frames = read_frames(&dir.join(&manifest.frames_file))?;
    if frames.len() != manifest.frames {
        return Err(CliError::Format(format!(
            "manifest lists {} frames, file has {}",
            manifest.frames,
            frames.len()
        )));
    }
    Ok(Dump { manifest, frames })
}

//! Invariant suite run on a dump. Each check has a stable name that the CLI
//! prints when it fails.

use gasflow_core::{lipschitz_report, Frame, LedgerSums, Trajectory};
use rayon::prelude::*;
use serde::Serialize;

use crate::format::{Dump, FrameRecord};
use crate::Result;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// Not applicable to this dump (e.g. W₂ bounds for d ≥ 2).
    pub skipped: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Validation {
    pub checks: Vec<Check>,
}

impl Validation {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect()
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        skipped: false,
        detail,
    }
}

fn skipped(name: &'static str, detail: &str) -> Check {
    Check {
        name,
        passed: true,
        skipped: true,
        detail: detail.to_string(),
    }
}

struct FrameStats {
    mass: f64,
    momentum: Vec<f64>,
    entropy: f64,
    kinetic: f64,
    second_moment: f64,
    /// Largest deviation of the stored energies from the recomputed ones.
    energy_mismatch: f64,
    bad_shape: bool,
}

fn frame_stats(f: &FrameRecord) -> FrameStats {
    let d = f.dim;
    let mut momentum = vec![0.0; d];
    let (mut mass, mut entropy, mut kinetic, mut m2) = (0.0, 0.0, 0.0, 0.0);
    let mut bad_shape = d == 0;
    for p in &f.particles {
        if p.x.len() != d || p.u.len() != d {
            bad_shape = true;
            continue;
        }
        mass += p.m;
        entropy += p.m * p.s;
        for k in 0..d {
            momentum[k] += p.m * p.u[k];
            kinetic += 0.5 * p.m * p.u[k] * p.u[k];
            m2 += p.m * p.x[k] * p.x[k];
        }
    }
    let e = &f.energies;
    let energy_mismatch = (e.kinetic - kinetic)
        .abs()
        .max((e.total - e.kinetic - e.internal).abs());
    FrameStats {
        mass,
        momentum,
        entropy,
        kinetic,
        second_moment: m2,
        energy_mismatch,
        bad_shape,
    }
}

/// Runs every invariant on `dump`.
pub fn validate_dump(dump: &Dump) -> Result<Validation> {
    let frames = &dump.frames;
    if frames.is_empty() {
        return Ok(Validation {
            checks: vec![check("time-ordering", false, "dump has no frames".into())],
        });
    }
    let stats: Vec<FrameStats> = frames.par_iter().map(frame_stats).collect();
    let exact_ledger = dump
        .manifest
        .config
        .get("mode")
        .map_or(true, |m| m == "pressureless")
        || dump
            .manifest
            .config
            .get("kappa")
            .and_then(|k| k.parse::<f64>().ok())
            == Some(0.0);

    let e0 = frames[0].energies.total;
    let etol = 1e-8 * (1.0 + e0.abs());
    let mut checks = Vec::new();

    // time ordering and shapes
    let mut bad = Vec::new();
    if frames[0].t != 0.0 || frames[0].step != 0 {
        bad.push("first frame is not t = 0, step 0".to_string());
    }
    for (k, w) in frames.windows(2).enumerate() {
        if !(w[1].t > w[0].t) || w[1].step < w[0].step {
            bad.push(format!(
                "frame {} (t = {}) does not follow t = {}",
                k + 1,
                w[1].t,
                w[0].t
            ));
        }
        if w[1].dim != w[0].dim {
            bad.push(format!("frame {} changes dimension", k + 1));
        }
    }
    if let Some(k) = stats.iter().position(|s| s.bad_shape) {
        bad.push(format!("frame {k} has particles of the wrong dimension"));
    }
    checks.push(check(
        "time-ordering",
        bad.is_empty(),
        bad.first()
            .cloned()
            .unwrap_or_else(|| format!("{} frames", frames.len())),
    ));

    let worst_mismatch = stats
        .iter()
        .map(|s| s.energy_mismatch / (1.0 + s.kinetic))
        .fold(0.0, f64::max);
    checks.push(check(
        "energy-consistency",
        worst_mismatch <= 1e-12,
        format!("stored vs recomputed energies differ by at most {worst_mismatch:.2e}"),
    ));

    let m0 = stats[0].mass;
    let dm = stats
        .iter()
        .map(|s| (s.mass - m0).abs())
        .fold(0.0, f64::max);
    checks.push(check(
        "mass-conservation",
        dm <= 1e-12 * m0.abs().max(1e-300),
        format!("max |M(t) − M(0)| = {dm:.2e}"),
    ));

    let p0 = &stats[0].momentum;
    let dp = stats
        .iter()
        .map(|s| {
            s.momentum
                .iter()
                .zip(p0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    let ptol = 1e-10 * (1.0 + (2.0 * e0.abs() * m0).sqrt());
    checks.push(check(
        "momentum-conservation",
        dp <= ptol,
        format!("max |P(t) − P(0)| = {dp:.2e} (tolerance {ptol:.1e})"),
    ));

    let s0 = stats[0].entropy;
    let ds = stats
        .iter()
        .map(|s| (s.entropy - s0).abs())
        .fold(0.0, f64::max);
    checks.push(check(
        "entropy",
        ds <= 1e-12 * (1.0 + s0.abs()),
        format!("max |Σ mS(t) − Σ mS(0)| = {ds:.2e}"),
    ));

    let endpoints: Vec<&FrameRecord> = frames.iter().filter(|f| !f.interpolated).collect();
    let mut max_increase = f64::NEG_INFINITY;
    for w in endpoints.windows(2) {
        max_increase = max_increase.max(w[1].energies.total - w[0].energies.total);
    }
    checks.push(if endpoints.len() < 2 {
        skipped("energy-monotonicity", "fewer than two endpoint frames")
    } else {
        check(
            "energy-monotonicity",
            max_increase <= etol,
            format!("max energy increase between endpoint frames = {max_increase:.2e}"),
        )
    });

    let mut bound_bad = None;
    for (k, f) in endpoints.iter().enumerate() {
        let e = &f.energies;
        if e.kinetic < 0.0 || e.internal < -etol || e.total > e0 + etol || !e.total.is_finite() {
            bound_bad = Some(format!("endpoint frame {k} at t = {}: energies {e:?}", f.t));
            break;
        }
    }
    checks.push(check(
        "energy-bound",
        bound_bad.is_none(),
        bound_bad.unwrap_or_else(|| format!("0 ≤ E(t) ≤ E(0) = {e0}")),
    ));

    checks.push(ledger_check(&endpoints, exact_ledger, etol));
    checks.push(lineage_check(frames));
    checks.extend(lipschitz_checks(frames, &stats));
    Ok(Validation { checks })
}

fn ledger_check(endpoints: &[&FrameRecord], exact: bool, etol: f64) -> Check {
    // exact: largest |defect|; inequality: smallest slack
    let (mut worst_step, mut worst_span) = if exact {
        (0.0f64, 0.0f64)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    let mut failure = None;
    for (k, f) in endpoints.iter().enumerate() {
        if let Some(r) = &f.report {
            let defect = r.ledger_defect();
            let scale = 1.0 + r.kinetic_before + r.internal_before;
            let bad = if exact {
                defect.abs() > 1e-10 * scale
            } else {
                defect < -1e-8 * scale
            };
            worst_step = if exact {
                worst_step.max(defect.abs())
            } else {
                worst_step.min(defect)
            };
            let after_mismatch = (r.kinetic_after - f.energies.kinetic).abs();
            if bad || after_mismatch > 1e-12 * scale {
                failure.get_or_insert(format!(
                    "step ending at t = {}: defect {defect:.3e}, stored kinetic differs by {after_mismatch:.1e}",
                    f.t
                ));
            }
        }
        if k == 0 {
            continue;
        }
        let lost = endpoints[k - 1].energies.total - f.energies.total;
        let spent = f.since_last.total();
        let gap = lost - spent;
        worst_span = if exact {
            worst_span.max(gap.abs())
        } else {
            worst_span.min(gap)
        };
        let bad = if exact { gap.abs() > etol } else { gap < -etol };
        if bad {
            failure.get_or_insert(format!(
                "between t = {} and t = {}: energy lost {lost:.6e}, ledger {spent:.6e}",
                endpoints[k - 1].t,
                f.t
            ));
        }
    }
    let summary = if exact {
        format!("equality: max step defect {worst_step:.2e}, max span defect {worst_span:.2e}")
    } else {
        format!("inequality: min step slack {worst_step:.2e}, min span slack {worst_span:.2e}")
    };
    check(
        "energy-ledger",
        failure.is_none(),
        failure.unwrap_or(summary),
    )
}

fn lineage_check(frames: &[FrameRecord]) -> Check {
    let found = frames.par_iter().enumerate().find_map_first(|(k, f)| {
        if f.parents.len() != f.particles.len() {
            return Some(format!(
                "frame {k}: {} parent lists for {} particles",
                f.parents.len(),
                f.particles.len()
            ));
        }
        if k == 0 {
            return f
                .parents
                .iter()
                .enumerate()
                .any(|(i, p)| p.as_slice() != [i])
                .then(|| "frame 0 must be its own parent".to_string());
        }
        let prev = &frames[k - 1];
        let mut used = vec![false; prev.particles.len()];
        for (i, ps) in f.parents.iter().enumerate() {
            let mut m = 0.0;
            for &j in ps {
                if j >= used.len() || used[j] {
                    return Some(format!(
                        "frame {k}: particle {i} has invalid or shared parent {j}"
                    ));
                }
                used[j] = true;
                m += prev.particles[j].m;
            }
            let mi = f.particles[i].m;
            if ps.is_empty() || (m - mi).abs() > 1e-12 * mi {
                return Some(format!("frame {k}: particle {i} mass {mi} vs parents' {m}"));
            }
        }
        used.iter()
            .position(|u| !u)
            .map(|j| format!("frame {k}: particle {j} of the previous frame has no child"))
    });
    check(
        "lineage",
        found.is_none(),
        found.unwrap_or_else(|| "parents partition the previous frame and masses add up".into()),
    )
}

fn lipschitz_checks(frames: &[FrameRecord], stats: &[FrameStats]) -> Vec<Check> {
    if frames[0].dim != 1 {
        return vec![
            skipped("lipschitz", "W₂ is evaluated for d = 1 only"),
            second_moment_check(frames, stats),
        ];
    }
    let traj = Trajectory {
        frames: frames
            .iter()
            .map(|f| {
                f.to_state().map(|state| Frame {
                    t: f.t,
                    step: f.step,
                    state,
                    internal_energy: f.energies.internal,
                    report: None,
                    since_last: LedgerSums::default(),
                    parents: Vec::new(),
                    interpolated: f.interpolated,
                })
            })
            .collect::<Result<_>>()
            .unwrap_or_default(),
    };
    match lipschitz_report(&traj) {
        Ok(r) => vec![
            check(
                "lipschitz",
                r.max_excess <= 1e-8,
                format!(
                    "max W₂/|t − s| = {:.6} against √(2E₀) = {:.6}; max excess {:.2e}",
                    r.max_ratio, r.bound, r.max_excess
                ),
            ),
            check(
                "second-moment",
                r.second_moment_excess <= 1e-8,
                format!(
                    "max √M₂(t) − √M₂(0) − t√(2E₀) = {:.2e}",
                    r.second_moment_excess
                ),
            ),
        ],
        Err(e) => vec![check("lipschitz", false, e.to_string())],
    }
}

/// Second-moment growth bound √M₂(t) ≤ √M₂(0) + t√(2E₀), any dimension.
fn second_moment_check(frames: &[FrameRecord], stats: &[FrameStats]) -> Check {
    let bound = (2.0 * frames[0].energies.total.max(0.0)).sqrt();
    let r0 = stats[0].second_moment.sqrt();
    let excess = frames
        .iter()
        .zip(stats)
        .map(|(f, s)| s.second_moment.sqrt() - r0 - f.t * bound)
        .fold(f64::NEG_INFINITY, f64::max);
    check(
        "second-moment",
        excess <= 1e-8,
        format!("max √M₂(t) − √M₂(0) − t√(2E₀) = {excess:.2e}"),
    )
}

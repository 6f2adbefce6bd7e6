//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Every key may appear once;
//! unknown keys are rejected with their line number. `tau`, `t_end` and
//! `initial` are required, everything else has a default.

use std::collections::BTreeMap;
use std::path::Path;

use gasflow_core::{
    EntropyMode, GasLaw, GasMode, MergeTolerance, ProjectionSettings, SimConfig, SolverConfig,
    SolverKind,
};

use crate::error::{CliError, Result};

pub const KEYS: &[&str] = &[
    "tau",
    "t_end",
    "initial",
    "particles",
    "center_velocity",
    "mode",
    "gamma",
    "kappa",
    "entropy",
    "merge_tol",
    "merge_tol_abs",
    "solver",
    "solver_rel_tol",
    "solver_max_iters",
    "quad_pts",
    "projection_tol_feas",
    "projection_tol_opt",
    "projection_max_sweeps",
    "projection_shuffle",
    "projection_neighbors",
    "projection_polish",
    "seed",
    "frames_every",
    "substeps",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub sim: SimConfig,
    /// Builtin name or path of a CSV/JSON particle file.
    pub initial: String,
    /// Sample count for builtins.
    pub particles: usize,
    /// Shift velocities to zero total momentum.
    pub center_velocity: bool,
    /// Seeds random builtins and, when enabled, the sweep shuffle.
    pub seed: u64,
    pub projection_shuffle: bool,
}

impl RunConfig {
    pub fn minimal(tau: f64, t_end: f64, initial: &str) -> Self {
        RunConfig {
            sim: SimConfig::new(tau, t_end, GasLaw::pressureless()),
            initial: initial.to_string(),
            particles: 1000,
            center_velocity: true,
            seed: 0,
            projection_shuffle: false,
        }
    }

    /// Applies `seed` to the shuffle setting and checks all constraints.
    pub fn finalize(mut self) -> Result<Self> {
        self.sim.projection.shuffle_seed = self.projection_shuffle.then_some(self.seed);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sim;
        if !(s.tau > 0.0 && s.tau.is_finite()) {
            return Err(CliError::Invalid(format!(
                "tau must be positive, got {}",
                s.tau
            )));
        }
        if !(s.t_end >= s.tau && s.t_end.is_finite()) {
            return Err(CliError::Invalid(format!(
                "t_end ({}) must be at least tau ({})",
                s.t_end, s.tau
            )));
        }
        if self.particles == 0 {
            return Err(CliError::Invalid("particles must be at least 1".into()));
        }
        if s.record_every == 0 {
            return Err(CliError::Invalid("frames_every must be at least 1".into()));
        }
        if s.solver.rel_tol <= 0.0 || s.solver.max_iters == 0 || s.solver.quad_pts == 0 {
            return Err(CliError::Invalid(
                "solver tolerances and counts must be positive".into(),
            ));
        }
        s.law.validate()?;
        s.validate()?;
        Ok(())
    }

    pub fn set_mode(&mut self, mode: GasMode) {
        self.sim.law.mode = mode;
    }

    /// Effective configuration as key/value pairs, parseable by
    /// [`parse_config`].
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let s = &self.sim;
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("tau", fmt_f64(s.tau));
        put("t_end", fmt_f64(s.t_end));
        put("initial", self.initial.clone());
        put("particles", self.particles.to_string());
        put("center_velocity", self.center_velocity.to_string());
        put("mode", mode_name(s.law.mode).into());
        put("gamma", fmt_f64(s.law.gamma));
        put("kappa", fmt_f64(s.law.kappa));
        put(
            "entropy",
            match s.law.entropy {
                EntropyMode::Full => "full",
                EntropyMode::Isentropic => "isentropic",
            }
            .into(),
        );
        match s.merge_tol {
            MergeTolerance::Relative(v) => put("merge_tol", fmt_f64(v)),
            MergeTolerance::Absolute(v) => put("merge_tol_abs", fmt_f64(v)),
        }
        put(
            "solver",
            match s.solver.kind {
                SolverKind::Newton => "newton",
                SolverKind::ProximalGradient => "proximal-gradient",
            }
            .into(),
        );
        put("solver_rel_tol", fmt_f64(s.solver.rel_tol));
        put("solver_max_iters", s.solver.max_iters.to_string());
        put("quad_pts", s.solver.quad_pts.to_string());
        if let Some(v) = s.projection.tol_feas {
            put("projection_tol_feas", fmt_f64(v));
        }
        put("projection_tol_opt", fmt_f64(s.projection.tol_opt));
        put("projection_max_sweeps", s.projection.max_sweeps.to_string());
        put("projection_shuffle", self.projection_shuffle.to_string());
        if let Some(k) = s.projection.neighbor_k {
            put("projection_neighbors", k.to_string());
        }
        put("projection_polish", s.projection.polish.to_string());
        put("seed", self.seed.to_string());
        put("frames_every", s.record_every.to_string());
        put("substeps", s.substeps.to_string());
        m
    }

    pub fn render(&self) -> String {
        self.to_pairs()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

pub fn mode_name(mode: GasMode) -> &'static str {
    match mode {
        GasMode::Pressureless => "pressureless",
        GasMode::Polytropic => "polytropic",
    }
}

pub fn parse_mode(s: &str) -> Option<GasMode> {
    match s {
        "pressureless" => Some(GasMode::Pressureless),
        "polytropic" => Some(GasMode::Polytropic),
        _ => None,
    }
}

fn fmt_f64(v: f64) -> String {
    // shortest representation that parses back to the same value
    format!("{v:?}")
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    load_config_with(path, &[])
}

pub fn load_config_with(path: &Path, overrides: &[(&str, &str)]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_config_with(&text, overrides)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_with(text, &[])
}

/// Like [`parse_config`], with `overrides` replacing (or adding) keys. Errors
/// about an overridden key report line 0.
pub fn parse_config_with(text: &str, overrides: &[(&str, &str)]) -> Result<RunConfig> {
    let mut entries: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
    for &(key, value) in overrides {
        if !KEYS.contains(&key) {
            return Err(CliError::UnknownKey {
                line: 0,
                key: key.to_string(),
            });
        }
        entries.insert(key, (0, value));
    }
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(CliError::Parse {
                line,
                message: format!("expected `key = value`, found `{body}`"),
            });
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(CliError::UnknownKey {
                line,
                key: key.to_string(),
            });
        }
        if value.is_empty() {
            return Err(CliError::Parse {
                line,
                message: format!("empty value for `{key}`"),
            });
        }
        if overrides.iter().any(|(k, _)| *k == key) {
            continue;
        }
        if let Some((first, _)) = entries.insert(key, (line, value)) {
            return Err(CliError::Parse {
                line,
                message: format!("duplicate key `{key}` (first set on line {first})"),
            });
        }
    }

    let get = |k: &'static str| entries.get(k).copied();
    let required = |k: &'static str| get(k).ok_or(CliError::MissingKey(k));
    let (tau_line, tau) = required("tau")?;
    let (t_end_line, t_end) = required("t_end")?;
    let (_, initial) = required("initial")?;
    let mut cfg = RunConfig::minimal(
        parse_value(tau_line, "tau", tau)?,
        parse_value(t_end_line, "t_end", t_end)?,
        initial,
    );
    let s = &mut cfg.sim;

    if let Some((line, v)) = get("mode") {
        s.law.mode = parse_mode(v).ok_or_else(|| CliError::Parse {
            line,
            message: format!("mode must be `pressureless` or `polytropic`, found `{v}`"),
        })?;
    }
    if s.law.mode == GasMode::Polytropic {
        s.law.gamma = 1.4;
        s.law.kappa = 1.0;
    }
    if let Some((line, v)) = get("gamma") {
        s.law.gamma = parse_value(line, "gamma", v)?;
    }
    if let Some((line, v)) = get("kappa") {
        s.law.kappa = parse_value(line, "kappa", v)?;
    }
    if let Some((line, v)) = get("entropy") {
        s.law.entropy = match v {
            "full" => EntropyMode::Full,
            "isentropic" => EntropyMode::Isentropic,
            _ => {
                return Err(CliError::Parse {
                    line,
                    message: format!("entropy must be `full` or `isentropic`, found `{v}`"),
                })
            }
        };
    }
    match (get("merge_tol"), get("merge_tol_abs")) {
        (Some(_), Some((line, _))) => {
            return Err(CliError::Parse {
                line,
                message: "set only one of `merge_tol` and `merge_tol_abs`".into(),
            })
        }
        (Some((line, v)), None) => {
            s.merge_tol = MergeTolerance::Relative(parse_nonneg(line, "merge_tol", v)?)
        }
        (None, Some((line, v))) => {
            s.merge_tol = MergeTolerance::Absolute(parse_nonneg(line, "merge_tol_abs", v)?)
        }
        (None, None) => {}
    }

    let mut solver = SolverConfig::default();
    if let Some((line, v)) = get("solver") {
        solver.kind = match v {
            "newton" => SolverKind::Newton,
            "proximal-gradient" => SolverKind::ProximalGradient,
            _ => {
                return Err(CliError::Parse {
                    line,
                    message: format!("solver must be `newton` or `proximal-gradient`, found `{v}`"),
                })
            }
        };
    }
    if let Some((line, v)) = get("solver_rel_tol") {
        solver.rel_tol = parse_value(line, "solver_rel_tol", v)?;
    }
    if let Some((line, v)) = get("solver_max_iters") {
        solver.max_iters = parse_value(line, "solver_max_iters", v)?;
    }
    if let Some((line, v)) = get("quad_pts") {
        solver.quad_pts = parse_value(line, "quad_pts", v)?;
    }
    s.solver = solver;

    let mut proj = ProjectionSettings::default();
    if let Some((line, v)) = get("projection_tol_feas") {
        proj.tol_feas = Some(parse_nonneg(line, "projection_tol_feas", v)?);
    }
    if let Some((line, v)) = get("projection_tol_opt") {
        proj.tol_opt = parse_nonneg(line, "projection_tol_opt", v)?;
    }
    if let Some((line, v)) = get("projection_max_sweeps") {
        proj.max_sweeps = parse_value(line, "projection_max_sweeps", v)?;
    }
    if let Some((line, v)) = get("projection_neighbors") {
        proj.neighbor_k = Some(parse_value(line, "projection_neighbors", v)?);
    }
    if let Some((line, v)) = get("projection_polish") {
        proj.polish = parse_value(line, "projection_polish", v)?;
    }
    s.projection = proj;
    if let Some((line, v)) = get("frames_every") {
        s.record_every = parse_value(line, "frames_every", v)?;
    }
    if let Some((line, v)) = get("substeps") {
        s.substeps = parse_value(line, "substeps", v)?;
    }

    if let Some((line, v)) = get("particles") {
        cfg.particles = parse_value(line, "particles", v)?;
    }
    if let Some((line, v)) = get("center_velocity") {
        cfg.center_velocity = parse_value(line, "center_velocity", v)?;
    }
    if let Some((line, v)) = get("seed") {
        cfg.seed = parse_value(line, "seed", v)?;
    }
    if let Some((line, v)) = get("projection_shuffle") {
        cfg.projection_shuffle = parse_value(line, "projection_shuffle", v)?;
    }
    cfg.finalize()
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| CliError::Parse {
        line,
        message: format!("cannot parse `{v}` for `{key}`"),
    })
}

fn parse_nonneg(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = parse_value(line, key, v)?;
    if x >= 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Parse {
            line,
            message: format!("`{key}` must be a nonnegative number, found `{v}`"),
        })
    }
}

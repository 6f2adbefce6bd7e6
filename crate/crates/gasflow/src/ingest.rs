//! Initial particle data: builtin scenarios and CSV/JSON particle files.

use std::path::Path;

use gasflow_core::FluidState;
use log::warn;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{CliError, Result};

pub const BUILTINS: &[&str] = &[
    "paper-cluster",
    "symmetric-collision",
    "uniform-block",
    "riemann-1d",
    "random-1d",
    "random-2d",
];

/// Mass sums and momenta within this of their targets are left untouched,
/// so that re-ingesting a dumped state is exact.
const NORMALIZATION_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngestOptions {
    pub particles: usize,
    pub seed: u64,
    pub center_velocity: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            particles: 1000,
            seed: 0,
            center_velocity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub state: FluidState,
    pub warnings: Vec<String>,
}

/// Raw particle columns before normalization.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Particles {
    pub dim: usize,
    pub masses: Vec<f64>,
    pub positions: Vec<f64>,
    pub velocities: Vec<f64>,
    pub entropies: Vec<f64>,
}

pub fn ingest_initial(source: &str, opts: &IngestOptions) -> Result<Ingested> {
    let raw = if BUILTINS.contains(&source) {
        builtin(source, opts.particles, opts.seed)?
    } else {
        read_particles(Path::new(source))?
    };
    normalize(raw, opts.center_velocity)
}

pub fn builtin(name: &str, n: usize, seed: u64) -> Result<Particles> {
    let p = match name {
        "paper-cluster" => {
            // half the mass spread over (−1, 1) at rest, half at the origin
            // moving right with unit speed
            let mut masses = vec![0.5 / n as f64; n];
            let mut positions: Vec<f64> = (1..=n)
                .map(|k| -1.0 + 2.0 * k as f64 / (n + 1) as f64)
                .collect();
            let mut velocities = vec![0.0; n];
            masses.push(0.5);
            positions.push(0.0);
            velocities.push(1.0);
            Particles::new_1d(masses, positions, velocities)
        }
        "symmetric-collision" => {
            Particles::new_1d(vec![0.5, 0.5], vec![-1.0, 1.0], vec![1.0, -1.0])
        }
        "uniform-block" => {
            if n < 2 {
                return Err(CliError::Ingest(
                    "uniform-block needs at least 2 particles".into(),
                ));
            }
            let positions = (0..n).map(|k| -0.5 + k as f64 / (n - 1) as f64).collect();
            let mut masses = vec![1.0 / (n - 1) as f64; n];
            masses[0] *= 0.5;
            masses[n - 1] *= 0.5;
            Particles::new_1d(masses, positions, vec![0.0; n])
        }
        "riemann-1d" => {
            // density 1 on (−1, 0) and 1/8 on (0, 1), at rest, equal masses
            if n < 2 {
                return Err(CliError::Ingest(
                    "riemann-1d needs at least 2 particles".into(),
                ));
            }
            let left = ((n as f64 / 1.125).round() as usize).clamp(1, n - 1);
            let right = n - left;
            let mut positions: Vec<f64> = (0..left)
                .map(|k| -1.0 + (k as f64 + 0.5) / left as f64)
                .collect();
            positions.extend((0..right).map(|k| (k as f64 + 0.5) / right as f64));
            Particles::new_1d(vec![1.0 / n as f64; n], positions, vec![0.0; n])
        }
        "random-1d" | "random-2d" => {
            let dim = if name == "random-1d" { 1 } else { 2 };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let masses = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let positions = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let velocities = (0..n * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            let entropies = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            Particles {
                dim,
                masses,
                positions,
                velocities,
                entropies,
            }
        }
        _ => return Err(CliError::Ingest(format!("unknown builtin `{name}`"))),
    };
    Ok(p)
}

impl Particles {
    fn new_1d(masses: Vec<f64>, positions: Vec<f64>, velocities: Vec<f64>) -> Self {
        let n = masses.len();
        Particles {
            dim: 1,
            masses,
            positions,
            velocities,
            entropies: vec![0.0; n],
        }
    }

    fn len(&self) -> usize {
        self.masses.len()
    }
}

/// Checks signs, rescales masses to total 1 and shifts velocities to zero
/// total momentum, warning about each change.
pub fn normalize(mut p: Particles, center_velocity: bool) -> Result<Ingested> {
    let n = p.len();
    if n == 0 {
        return Err(CliError::Ingest("no particles".into()));
    }
    if p.dim == 0
        || p.positions.len() != n * p.dim
        || p.velocities.len() != n * p.dim
        || p.entropies.len() != n
    {
        return Err(CliError::Ingest(format!(
            "dimension mismatch: {n} particles, d = {}, {} position and {} velocity components",
            p.dim,
            p.positions.len(),
            p.velocities.len()
        )));
    }
    if let Some(i) = p.masses.iter().position(|m| !(*m > 0.0 && m.is_finite())) {
        return Err(CliError::Ingest(format!(
            "particle {i}: mass must be positive, got {}",
            p.masses[i]
        )));
    }
    if let Some(i) = p
        .entropies
        .iter()
        .position(|s| !(*s >= 0.0 && s.is_finite()))
    {
        return Err(CliError::Ingest(format!(
            "particle {i}: entropy must be nonnegative, got {}",
            p.entropies[i]
        )));
    }
    let mut warnings = Vec::new();
    let total: f64 = p.masses.iter().sum();
    if (total - 1.0).abs() > NORMALIZATION_SLACK {
        for m in &mut p.masses {
            *m /= total;
        }
        warnings.push(format!("masses summed to {total}; renormalized to 1"));
    }
    if center_velocity {
        let d = p.dim;
        let total: f64 = p.masses.iter().sum();
        let mean: Vec<f64> = (0..d)
            .map(|k| {
                (0..n)
                    .map(|i| p.masses[i] * p.velocities[i * d + k])
                    .sum::<f64>()
                    / total
            })
            .collect();
        if mean.iter().any(|v| v.abs() > NORMALIZATION_SLACK) {
            for i in 0..n {
                for k in 0..d {
                    p.velocities[i * d + k] -= mean[k];
                }
            }
            warnings.push(format!(
                "total momentum {mean:?} shifted to zero (moving frame); set center_velocity = false to keep it"
            ));
        }
    }
    for w in &warnings {
        warn!("{w}");
    }
    let state = FluidState::new(p.dim, p.masses, p.positions, p.velocities, p.entropies)?;
    Ok(Ingested { state, warnings })
}

pub fn read_particles(path: &Path) -> Result<Particles> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if text.trim().is_empty() {
        return Err(CliError::Ingest(format!("{}: empty file", path.display())));
    }
    let is_json =
        path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with(['{', '[']);
    if is_json {
        parse_json(&text)
    } else {
        parse_csv(&text)
    }
}

/// Scalar or vector coordinate.
#[derive(Deserialize)]
#[serde(untagged)]
enum Coord {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Coord {
    fn len(&self) -> usize {
        match self {
            Coord::Scalar(_) => 1,
            Coord::Vector(v) => v.len(),
        }
    }

    fn into_vec(self) -> Vec<f64> {
        match self {
            Coord::Scalar(v) => vec![v],
            Coord::Vector(v) => v,
        }
    }
}

#[derive(Deserialize)]
struct ParticleRow {
    m: f64,
    x: Coord,
    u: Coord,
    #[serde(rename = "S", default)]
    s: f64,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ParticleFile {
    List(Vec<ParticleRow>),
    Wrapped { particles: Vec<ParticleRow> },
}

pub fn parse_json(text: &str) -> Result<Particles> {
    let file: ParticleFile = serde_json::from_str(text)
        .map_err(|e| CliError::Ingest(format!("bad particle JSON: {e}")))?;
    let rows = match file {
        ParticleFile::List(r) | ParticleFile::Wrapped { particles: r } => r,
    };
    let mut p = Particles::default();
    for (i, row) in rows.into_iter().enumerate() {
        let (x, u) = (row.x.into_vec(), row.u.into_vec());
        if i == 0 {
            p.dim = x.len();
        }
        if x.len() != p.dim || u.len() != p.dim {
            return Err(CliError::Ingest(format!(
                "particle {i}: expected {} coordinates, found x with {} and u with {}",
                p.dim,
                x.len(),
                u.len()
            )));
        }
        p.masses.push(row.m);
        p.positions.extend(x);
        p.velocities.extend(u);
        p.entropies.push(row.s);
    }
    if p.masses.is_empty() {
        return Err(CliError::Ingest("no particles".into()));
    }
    Ok(p)
}

/// CSV with a header naming `m`, positions (`x` or `x0`, `x1`, …), velocities
/// (`u` or `u0`, `u1`, …) and optionally `S`.
pub fn parse_csv(text: &str) -> Result<Particles> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Ingest(format!("bad CSV header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let vector_cols = |base: &str| -> Vec<usize> {
        if let Some(c) = col(base) {
            return vec![c];
        }
        (0..).map_while(|k| col(&format!("{base}{k}"))).collect()
    };
    let m_col = col("m").ok_or_else(|| CliError::Ingest("CSV needs an `m` column".into()))?;
    let (x_cols, u_cols) = (vector_cols("x"), vector_cols("u"));
    if x_cols.is_empty() || u_cols.is_empty() {
        return Err(CliError::Ingest(
            "CSV needs position and velocity columns".into(),
        ));
    }
    if x_cols.len() != u_cols.len() {
        return Err(CliError::Ingest(format!(
            "dimension mismatch: {} position columns, {} velocity columns",
            x_cols.len(),
            u_cols.len()
        )));
    }
    let s_col = col("S");
    let known = 1 + x_cols.len() + u_cols.len() + usize::from(s_col.is_some());
    if known != header.len() {
        return Err(CliError::Ingest(format!(
            "unexpected CSV columns in {header:?}"
        )));
    }

    let mut p = Particles {
        dim: x_cols.len(),
        ..Particles::default()
    };
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Ingest(format!("line {line}: {e}")))?;
        let field = |c: usize| -> Result<f64> {
            rec.get(c).unwrap_or("").parse().map_err(|_| {
                CliError::Ingest(format!("line {line}: bad number in column `{}`", header[c]))
            })
        };
        p.masses.push(field(m_col)?);
        for &c in &x_cols {
            p.positions.push(field(c)?);
        }
        for &c in &u_cols {
            p.velocities.push(field(c)?);
        }
        p.entropies.push(match s_col {
            Some(c) => field(c)?,
            None => 0.0,
        });
    }
    if p.masses.is_empty() {
        return Err(CliError::Ingest("no particles".into()));
    }
    Ok(p)
}

/// Input of a bare projection: base points, targets and optional weights
/// (uniform when absent).
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionInput {
    pub dim: usize,
    pub points: Vec<f64>,
    pub targets: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Deserialize)]
struct ProjectionFile {
    points: Vec<Coord>,
    targets: Vec<Coord>,
    weights: Option<Vec<f64>>,
}

/// Reads a JSON object `{"points": [...], "targets": [...], "weights": [...]}`
/// or a CSV with columns `x`/`x0…`, `y`/`y0…` and optionally `w`.
pub fn read_projection_input(path: &Path) -> Result<ProjectionInput> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    if text.trim().is_empty() {
        return Err(CliError::Ingest(format!("{}: empty file", path.display())));
    }
    let input = if text.trim_start().starts_with('{') {
        let f: ProjectionFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Ingest(format!("bad projection JSON: {e}")))?;
        let n = f.points.len();
        let weights = f.weights.unwrap_or_else(|| vec![1.0 / n as f64; n]);
        let dim = f.points.first().map_or(0, |c| c.len());
        let flatten = |v: Vec<Coord>, what: &str| -> Result<Vec<f64>> {
            let mut out = Vec::with_capacity(n * dim);
            for (i, c) in v.into_iter().enumerate() {
                if c.len() != dim {
                    return Err(CliError::Ingest(format!(
                        "{what} {i}: expected {dim} coordinates"
                    )));
                }
                out.extend(c.into_vec());
            }
            Ok(out)
        };
        ProjectionInput {
            dim,
            points: flatten(f.points, "point")?,
            targets: flatten(f.targets, "target")?,
            weights,
        }
    } else {
        parse_projection_csv(&text)?
    };
    let n = input.weights.len();
    if n == 0 || input.dim == 0 {
        return Err(CliError::Ingest("no points".into()));
    }
    if input.points.len() != n * input.dim || input.targets.len() != n * input.dim {
        return Err(CliError::Ingest(format!(
            "dimension mismatch: {n} weights, {} point and {} target components in d = {}",
            input.points.len(),
            input.targets.len(),
            input.dim
        )));
    }
    Ok(input)
}

fn parse_projection_csv(text: &str) -> Result<ProjectionInput> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Ingest(format!("bad CSV header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| header.iter().position(|h| h == name);
    let vector_cols = |base: &str| -> Vec<usize> {
        if let Some(c) = col(base) {
            return vec![c];
        }
        (0..).map_while(|k| col(&format!("{base}{k}"))).collect()
    };
    let (x_cols, y_cols, w_col) = (vector_cols("x"), vector_cols("y"), col("w"));
    if x_cols.is_empty() || x_cols.len() != y_cols.len() {
        return Err(CliError::Ingest(
            "CSV needs matching `x` and `y` columns".into(),
        ));
    }
    let mut input = ProjectionInput {
        dim: x_cols.len(),
        points: Vec::new(),
        targets: Vec::new(),
        weights: Vec::new(),
    };
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| CliError::Ingest(format!("line {line}: {e}")))?;
        let field = |c: usize| -> Result<f64> {
            rec.get(c).unwrap_or("").parse().map_err(|_| {
                CliError::Ingest(format!("line {line}: bad number in column `{}`", header[c]))
            })
        };
        for &c in &x_cols {
            input.points.push(field(c)?);
        }
        for &c in &y_cols {
            input.targets.push(field(c)?);
        }
        input.weights.push(match w_col {
            Some(c) => field(c)?,
            None => 1.0,
        });
    }
    if w_col.is_none() {
        let n = input.weights.len() as f64;
        input.weights.iter_mut().for_each(|w| *w /= n);
    }
    Ok(input)
}

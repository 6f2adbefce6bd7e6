//! Command-line surface: `simulate`, `step`, `project`, `validate`, `report`.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gasflow_core::{is_monotone, project, simulate, ProjectionProblem, Simulation};
use serde_json::json;

use crate::config::{load_config_with, mode_name, RunConfig};
use crate::error::{CliError, Result};
use crate::format::{
    read_dump, write_dump, Dump, FrameRecord, Manifest, ReportRecord, FORMAT_NAME, FORMAT_VERSION,
    FRAMES_FILE,
};
use crate::ingest::{ingest_initial, read_projection_input, IngestOptions, Ingested};
use crate::report::{refinement_study, write_csv, write_report, REFINE_FILE};
use crate::validate::validate_dump;

pub const THREADS_ENV: &str = "GASFLOW_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "gasflow",
    version,
    about = "Lagrangian particle solver for pressureless and polytropic gas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the time loop and write frames.jsonl and manifest.json.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Perform a single step from the initial state and print its ledger.
    Step {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Project targets onto the cone of monotone maps.
    Project {
        /// JSON or CSV file with points, targets and optional weights.
        #[arg(long)]
        input: PathBuf,
        /// Write the result here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Config file supplying projection_* settings.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a dump against the invariant suite.
    Validate {
        /// Dump directory.
        dump: PathBuf,
    },
    /// Write energy.csv, accel.csv and w2.csv for a dump.
    Report {
        /// Dump directory.
        dump: PathBuf,
        /// Output directory (defaults to the dump directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also rerun the dump's configuration at this many halvings of τ
        /// and write refine.csv (d = 1).
        #[arg(long, default_value_t = 0)]
        refine: usize,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Run configuration (key = value).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames_every: Option<usize>,
    /// `pressureless` or `polytropic`.
    #[arg(long)]
    mode_override: Option<String>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let seed = self.seed.map(|s| s.to_string());
        let every = self.frames_every.map(|k| k.to_string());
        let mut overrides: Vec<(&str, &str)> = Vec::new();
        if let Some(s) = &seed {
            overrides.push(("seed", s));
        }
        if let Some(k) = &every {
            overrides.push(("frames_every", k));
        }
        if let Some(m) = &self.mode_override {
            overrides.push(("mode", m));
        }
        load_config_with(&self.config, &overrides)
    }
}

fn ingest(cfg: &RunConfig) -> Result<Ingested> {
    ingest_initial(
        &cfg.initial,
        &IngestOptions {
            particles: cfg.particles,
            seed: cfg.seed,
            center_velocity: cfg.center_velocity,
        },
    )
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code. Failures print `{"error": {"kind", "message"}}` on
/// stderr.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return 0;
        }
        Err(e) => {
            report_error(&CliError::Usage(e.to_string().trim_end().to_string()));
            return 2;
        }
    };
    match configure_threads().and_then(|()| dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            report_error(&e);
            1
        }
    }
}

fn report_error(e: &CliError) {
    let mut body = json!({ "kind": e.kind(), "message": e.to_string() });
    if let CliError::Invariant(names) = e {
        body["invariants"] = json!(names);
    }
    eprintln!("{}", json!({ "error": body }));
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a thread count, got `{v}`")))?;
    // the global pool can only be set once per process
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { run, out } => cmd_simulate(&run, &out),
        Command::Step { run } => cmd_step(&run),
        Command::Project { input, out, config } => {
            cmd_project(&input, out.as_deref(), config.as_deref())
        }
        Command::Validate { dump } => cmd_validate(&dump),
        Command::Report { dump, out, refine } => {
            cmd_report(&dump, out.as_deref().unwrap_or(&dump), refine)
        }
    }
}

fn print_json(v: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

/// Runs a configuration and packages the result as a dump.
pub fn run_simulation(cfg: &RunConfig) -> Result<Dump> {
    let Ingested { state, warnings } = ingest(cfg)?;
    log::info!(
        "simulating {} particles in d = {} for {} steps",
        state.len(),
        state.dim,
        cfg.sim.num_steps()
    );
    let traj = simulate(&state, &cfg.sim)?;
    let frames: Vec<FrameRecord> = traj.frames.iter().map(FrameRecord::from_frame).collect();
    let last = frames.last().expect("simulate records the initial frame");
    let manifest = Manifest {
        format: FORMAT_NAME.into(),
        format_version: FORMAT_VERSION,
        generator: format!("gasflow {}", env!("CARGO_PKG_VERSION")),
        seed: cfg.seed,
        config: cfg.to_pairs(),
        initial: cfg.initial.clone(),
        dim: state.dim,
        particles: state.len(),
        steps: last.step,
        frames: frames.len(),
        frames_file: FRAMES_FILE.into(),
        initial_energy: frames[0].energies.total,
        final_energy: last.energies.total,
        warnings,
    };
    Ok(Dump { manifest, frames })
}

fn cmd_simulate(run: &RunArgs, out: &Path) -> Result<()> {
    let cfg = run.load()?;
    let dump = run_simulation(&cfg)?;
    write_dump(out, &dump)?;
    let m = &dump.manifest;
    print_json(&json!({
        "out": out.display().to_string(),
        "mode": mode_name(cfg.sim.law.mode),
        "particles": m.particles,
        "steps": m.steps,
        "frames": m.frames,
        "initial_energy": m.initial_energy,
        "final_energy": m.final_energy,
        "warnings": m.warnings,
    }))
}

fn cmd_step(run: &RunArgs) -> Result<()> {
    let cfg = run.load()?;
    let Ingested { state, warnings } = ingest(&cfg)?;
    let mut sim = Simulation::new(state.clone(), cfg.sim.clone())?;
    let out = sim
        .advance()
        .ok_or_else(|| CliError::Invalid("configuration has no steps".into()))??;
    print_json(&json!({
        "t": cfg.sim.tau,
        "mode": mode_name(cfg.sim.law.mode),
        "particles_before": state.len(),
        "particles_after": out.state.len(),
        "report": ReportRecord::from(&out.report),
        "ledger_defect": out.report.ledger_defect(),
        "warnings": warnings,
    }))
}

fn reshape(v: &[f64], dim: usize) -> serde_json::Value {
    if dim == 1 {
        json!(v)
    } else {
        json!(v.chunks(dim).collect::<Vec<_>>())
    }
}

fn cmd_project(input: &Path, out: Option<&Path>, config: Option<&Path>) -> Result<()> {
    let inp = read_projection_input(input)?;
    let mut problem = ProjectionProblem::new(
        inp.dim,
        inp.points.clone(),
        inp.weights.clone(),
        inp.targets.clone(),
    );
    if let Some(c) = config {
        problem.settings = load_config_with(c, &[])?.sim.projection;
    }
    let res = project(&problem)?;
    let residual: f64 = res
        .projected
        .chunks(inp.dim)
        .zip(inp.targets.chunks(inp.dim))
        .zip(&inp.weights)
        .map(|((p, y), w)| w * p.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    let input_monotone = is_monotone(&inp.points, &inp.targets, inp.dim, 0.0).monotone;
    let v = json!({
        "dim": inp.dim,
        "projected": reshape(&res.projected, inp.dim),
        "residual": residual,
        "input_monotone": input_monotone,
        "max_violation": res.max_violation,
        "sweeps": res.sweeps_used,
        "polished": res.polished,
        "dual_trace": res.dual_trace,
    });
    match out {
        Some(p) => {
            let text = serde_json::to_string_pretty(&v)? + "\n";
            std::fs::write(p, text).map_err(|e| CliError::io(p, e))
        }
        None => print_json(&v),
    }
}

fn cmd_validate(dir: &Path) -> Result<()> {
    let dump = read_dump(dir)?;
    let v = validate_dump(&dump)?;
    print_json(&serde_json::to_value(&v)?)?;
    if v.passed() {
        Ok(())
    } else {
        Err(CliError::Invariant(
            v.failed().into_iter().map(String::from).collect(),
        ))
    }
}

fn cmd_report(dir: &Path, out: &Path, refine: usize) -> Result<()> {
    let dump = read_dump(dir)?;
    let mut files = write_report(&dump, out)?;
    if refine > 0 {
        let text: String = dump
            .manifest
            .config
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        let cfg = crate::config::parse_config(&text)?;
        let initial = dump.frames[0].to_state()?;
        let rows = refinement_study(&cfg, &initial, refine)?;
        let path = out.join(REFINE_FILE);
        write_csv(&path, &rows)?;
        files.push(path);
    }
    print_json(&json!({
        "files": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
    }))
}

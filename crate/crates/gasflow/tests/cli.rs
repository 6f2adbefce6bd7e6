use std::path::Path;
use std::process::{Command, Output};

use gasflow::format::{read_dump, write_frames, FRAMES_FILE};
use serde_json::Value;

fn gasflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gasflow"))
        .args(args)
        .env_remove("GASFLOW_THREADS")
        .output()
        .expect("binary runs")
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error line on stderr");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn simulate(dir: &Path, body: &str, extra: &[&str]) -> String {
    let cfg = write_config(dir, "run.cfg", body);
    let out = dir.join("dump").display().to_string();
    let mut args = vec!["simulate", "--config", &cfg, "--out", &out];
    args.extend_from_slice(extra);
    let res = gasflow(&args);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    out
}

#[test]
fn simulate_writes_dump_that_validates() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(
        tmp.path(),
        "tau = 0.05\nt_end = 1\ninitial = random-1d\nparticles = 40\n",
        &["--seed", "7", "--frames-every", "2"],
    );
    assert!(Path::new(&out).join("frames.jsonl").exists());
    let dump = read_dump(Path::new(&out)).unwrap();
    assert_eq!(dump.manifest.seed, 7);
    assert_eq!(dump.manifest.steps, 20);
    assert_eq!(dump.frames.len(), 11);
    let v = gasflow(&["validate", &out]);
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stderr));
    let report: Value = serde_json::from_slice(&v.stdout).unwrap();
    let names: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    for n in [
        "energy-monotonicity",
        "energy-ledger",
        "momentum-conservation",
        "lineage",
        "lipschitz",
    ] {
        assert!(names.contains(&n), "{n} missing from {names:?}");
    }
}

#[test]
fn polytropic_override_validates_in_two_dimensions() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(
        tmp.path(),
        "tau = 0.05\nt_end = 0.3\ninitial = random-2d\nparticles = 25\nsubsteps = 2\n",
        &["--mode-override", "polytropic"],
    );
    let dump = read_dump(Path::new(&out)).unwrap();
    assert_eq!(dump.manifest.config["mode"], "polytropic");
    assert!(dump.frames.iter().any(|f| f.interpolated));
    let v = gasflow(&["validate", &out]);
    assert!(v.status.success(), "{}", String::from_utf8_lossy(&v.stderr));
}

#[test]
fn tampered_dump_fails_naming_the_invariant() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(
        tmp.path(),
        "tau = 0.1\nt_end = 1\ninitial = random-1d\nparticles = 30\n",
        &[],
    );
    let dump = read_dump(Path::new(&out)).unwrap();
    let mut frames = dump.frames.clone();
    // heat up the last frame; energies stay self-consistent
    let last = frames.last_mut().unwrap();
    last.energies.internal += 1.0;
    last.energies.total += 1.0;
    write_frames(&Path::new(&out).join(FRAMES_FILE), &frames).unwrap();

    let v = gasflow(&["validate", &out]);
    assert_eq!(v.status.code(), Some(1));
    let err = error_json(&v);
    assert_eq!(err["error"]["kind"], "invariant-violated");
    let names: Vec<&str> = err["error"]["invariants"]
        .as_array()
        .unwrap()
        .iter()
        .map(|n| n.as_str().unwrap())
        .collect();
    assert!(names.contains(&"energy-monotonicity"), "{names:?}");
    assert!(err["error"]["message"]
        .as_str()
        .unwrap()
        .contains("energy-monotonicity"));
}

#[test]
fn project_leaves_monotone_input_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("targets.json");
    std::fs::write(
        &input,
        r#"{"points": [[0, 0], [1, 0], [0, 1], [1, 1]],
            "targets": [[0.1, 0.2], [1.3, 0.2], [0.1, 1.7], [1.3, 1.7]]}"#,
    )
    .unwrap();
    let out = gasflow(&["project", "--input", input.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["residual"].as_f64(), Some(0.0));
    assert_eq!(v["input_monotone"], true);
    let expected: Value =
        serde_json::from_str("[[0.1, 0.2], [1.3, 0.2], [0.1, 1.7], [1.3, 1.7]]").unwrap();
    assert_eq!(v["projected"], expected);
}

#[test]
fn project_pools_a_violating_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("targets.csv");
    std::fs::write(&input, "x,y\n0,1\n1,0\n2,5\n").unwrap();
    let out = gasflow(&["project", "--input", input.to_str().unwrap()]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let p: Vec<f64> = serde_json::from_value(v["projected"].clone()).unwrap();
    assert_eq!(p, vec![0.5, 0.5, 5.0]);
}

#[test]
fn step_prints_a_balanced_ledger() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.cfg",
        "tau = 0.25\nt_end = 0.25\ninitial = paper-cluster\nparticles = 400\n",
    );
    let out = gasflow(&["step", "--config", &cfg]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["ledger_defect"].as_f64().unwrap().abs() < 1e-12);
    assert!(v["report"]["merged"].as_u64().unwrap() > 0);
    assert!(v["particles_after"].as_u64() < v["particles_before"].as_u64());
}

#[test]
fn report_writes_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(
        tmp.path(),
        "tau = 0.1\nt_end = 0.4\ninitial = riemann-1d\nparticles = 18\nmode = polytropic\n",
        &[],
    );
    let rep = tmp.path().join("tables");
    let res = gasflow(&[
        "report",
        &out,
        "--out",
        rep.to_str().unwrap(),
        "--refine",
        "2",
    ]);
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let energy = std::fs::read_to_string(rep.join("energy.csv")).unwrap();
    assert!(energy.starts_with("t,step,interpolated,kinetic,internal,total,"));
    assert_eq!(energy.lines().count(), 6);
    let accel = std::fs::read_to_string(rep.join("accel.csv")).unwrap();
    assert_eq!(accel.lines().count(), 5);
    let w2 = std::fs::read_to_string(rep.join("w2.csv")).unwrap();
    assert_eq!(w2.lines().count(), 5);
    let refine = std::fs::read_to_string(rep.join("refine.csv")).unwrap();
    let rows: Vec<&str> = refine.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0.1,4,"));
    assert!(
        rows[2].ends_with(','),
        "finest level has no successor: {}",
        rows[2]
    );
}

#[test]
fn configuration_errors_are_machine_readable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.cfg", "tau = 0.1\nt_end = 1\nwidth = 3\n");
    let out = gasflow(&[
        "simulate",
        "--config",
        &cfg,
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert_eq!(err["error"]["kind"], "config-unknown-key");
    assert!(err["error"]["message"].as_str().unwrap().contains("line 3"));

    let cfg = write_config(
        tmp.path(),
        "gamma.cfg",
        "tau = 0.1\nt_end = 1\ninitial = uniform-block\nmode = polytropic\ngamma = 1\n",
    );
    let out = gasflow(&["step", "--config", &cfg]);
    assert_eq!(error_json(&out)["error"]["kind"], "invalid-input");

    let out = gasflow(&["validate", tmp.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "io");

    let out = gasflow(&["simulate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"]["kind"], "usage");
}

#[test]
fn empty_and_unnormalized_particle_files() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let cfg = write_config(
        tmp.path(),
        "e.cfg",
        &format!("tau = 0.1\nt_end = 0.1\ninitial = {}\n", empty.display()),
    );
    let out = gasflow(&["step", "--config", &cfg]);
    assert_eq!(error_json(&out)["error"]["kind"], "ingest");

    let heavy = tmp.path().join("heavy.csv");
    std::fs::write(&heavy, "m,x,u\n1,-1,0.5\n1,1,-0.5\n").unwrap();
    let out = simulate(
        tmp.path(),
        &format!("tau = 0.1\nt_end = 0.5\ninitial = {}\n", heavy.display()),
        &[],
    );
    let dump = read_dump(Path::new(&out)).unwrap();
    assert_eq!(dump.manifest.warnings.len(), 1);
    assert!(dump.manifest.warnings[0].contains("renormalized"));
    assert_eq!(dump.frames[0].particles[0].m, 0.5);
}

#[test]
fn bad_thread_count_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_gasflow"))
        .args(["validate", tmp.path().to_str().unwrap()])
        .env("GASFLOW_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_json(&out)["error"]["kind"], "usage");
}

#[test]
fn dumped_state_reingests_bit_for_bit() {
    let tmp = tempfile::tempdir().unwrap();
    let out = simulate(
        tmp.path(),
        "tau = 0.1\nt_end = 0.7\ninitial = random-2d\nparticles = 20\nseed = 3\n",
        &[],
    );
    let dump = read_dump(Path::new(&out)).unwrap();
    let last = dump.frames.last().unwrap();
    let file = tmp.path().join("restart.json");
    std::fs::write(&file, serde_json::to_string(&last.particles).unwrap()).unwrap();
    std::fs::create_dir(tmp.path().join("restart")).unwrap();
    let again = simulate(
        &tmp.path().join("restart"),
        &format!("tau = 0.1\nt_end = 0.1\ninitial = {}\n", file.display()),
        &[],
    );
    let re = read_dump(Path::new(&again)).unwrap();
    assert!(
        re.manifest.warnings.is_empty(),
        "{:?}",
        re.manifest.warnings
    );
    assert_eq!(re.frames[0].particles, last.particles);
}

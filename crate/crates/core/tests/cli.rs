use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use chemotaxis_fkpp::io::{read_sweep_csv, sha256_hex, RunManifest, RunStatus};

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chemotaxis-fkpp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL_SWEEP: &str = r#"
[sweep]
mu = 1.0
epsilons = [0.04, 0.02, 0.01]
horizon = 1.0
dt = 0.01
u0 = { profile = "cosine", base = 0.5, amplitude = 0.4 }
v0 = { profile = "constant", value = 0.5 }
grid = { lengths = [1.0], cells = [32] }
"#;

#[test]
fn sweep_writes_checksummed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_SWEEP);
    let out = dir.path().join("out");
    let o = run(&["sweep", "--config", &cfg], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = RunManifest::read(&out.join("manifest.toml")).unwrap();
    assert_eq!(manifest.status, RunStatus::Complete);
    assert_eq!(manifest.command, "sweep");
    for f in &manifest.outputs {
        let bytes = fs::read(out.join(&f.path)).unwrap();
        assert_eq!(f.bytes, bytes.len() as u64);
        assert_eq!(f.sha256, sha256_hex(&bytes));
    }
    let sweep = read_sweep_csv(&out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.runs.len(), 3);
    let slope = sweep.fit.unwrap().slope;
    assert!((manifest.summary["slope"] - slope).abs() < 1e-12);
    assert!((0.85..=1.15).contains(&slope), "slope {slope}");

    let o = run(&["plot-data"], &out);
    assert!(o.status.success());
    let plot = fs::read_to_string(out.join("plot.dat")).unwrap();
    assert_eq!(plot.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn configuration_errors_exit_1_without_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // epsilon not inside (0, 2mu/n)
    let o = run(&["sweep", "--epsilons", "2.5,0.02,0.01"], &out);
    assert_eq!(o.status.code(), Some(1));
    // increasing epsilons
    let o = run(&["sweep", "--epsilons", "0.01,0.02,0.04"], &out);
    assert_eq!(o.status.code(), Some(1));
    // unknown key
    let cfg = write_config(dir.path(), "[sweep]\nbogus = 1\n");
    let o = run(&["simulate", "--config", &cfg], &out);
    assert_eq!(o.status.code(), Some(1));
    // dt above the advisory step
    let o = run(&["simulate", "--dt", "0.5", "--horizon", "1"], &out);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn missing_sweep_table_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["plot-data"], &dir.path().join("nothing"));
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn simulate_and_refine_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(
        &[
            "simulate",
            "--horizon",
            "0.5",
            "--cells",
            "32",
            "--epsilons",
            "0.1",
        ],
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let traj = chemotaxis_fkpp::io::read_trajectory(&out.join("trajectory.txt")).unwrap();
    assert_eq!(traj.params.epsilon, 0.1);
    assert_eq!(traj.snapshots.len(), 6);

    let o = run(&["refine"], &out);
    assert!(o.status.success());
    let csv = fs::read_to_string(out.join("refine.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("spatial")).count(), 4);
    let manifest = RunManifest::read(&out.join("manifest.toml")).unwrap();
    assert!((1.8..=2.2).contains(&manifest.summary["spatial_order"]));
}

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SMALL_SOLVER: [&str; 4] = ["--set", "solver.n_mc=2000", "--set", "solver.max_iter=15"];

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spikefield")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    fs::read(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}

fn manifest(dir: impl AsRef<Path>) -> serde_json::Value {
    serde_json::from_slice(&read(dir.as_ref().join("manifest.json"))).unwrap()
}

#[test]
fn validate_benchmark_passes() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["validate", "--out", "v"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(!stdout.contains("FAIL"), "{stdout}");
    let m = manifest(tmp.path().join("v"));
    assert_eq!(m["subcommand"], "validate");
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["seed"], 1);
    assert!(m["versions"]["spikefield"].is_string());
    assert!(tmp.path().join("v/validation.json").exists());
}

#[test]
fn validate_flags_density_with_nonzero_fourth_derivative() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["validate", "--out", "v", "--set", "model.kernel.rho=quartic-bump"]);
    assert_eq!(code(&o), 2);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("FAIL synapse density"), "{stdout}");
    assert!(stdout.contains("note:"), "{stdout}");
}

#[test]
fn kernel_csv_has_expected_shape() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["kernel", "--out", "k", "--set", "grid.n_steps=50"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(read(tmp.path().join("k/kernel.csv"))).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,G,dG,G_hat"));
    assert_eq!(lines.count(), 51);
}

#[test]
fn unattainable_tolerance_is_flagged_not_fatal() {
    let tmp = TempDir::new().unwrap();
    let args = ["solve", "--out", "s", "--set", "solver.n_mc=1000", "--set", "solver.tol=1e-12", "--set", "solver.max_iter=2"];
    let o = run(tmp.path(), &args);
    assert_eq!(code(&o), 0);
    let diag = String::from_utf8(read(tmp.path().join("s/diagnostics.txt"))).unwrap();
    assert!(diag.starts_with("status: not converged"), "{diag}");
    assert_eq!(manifest(tmp.path().join("s"))["summary"]["converged"], false);

    let o = run(tmp.path(), &[&args[..], &["--force", "--strict"]].concat());
    assert_eq!(code(&o), 4);
}

#[test]
fn solve_writes_rate_envelope_and_diagnostics() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &[&["solve", "--out", "s"][..], &SMALL_SOLVER].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(tmp.path().join("s"));
    let outputs: Vec<&str> = m["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs, ["rate.csv", "diagnostics.txt", "envelope.csv"]);
    let rate = String::from_utf8(read(tmp.path().join("s/rate.csv"))).unwrap();
    assert!(rate.starts_with("t,h,h_prime\n"));
    assert_eq!(m["summary"]["converged"], true);
}

#[test]
fn study_is_reproducible_across_runs_and_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let study = |out: &str, workers: &str| {
        let mut args = vec!["study", "--out", out, "--workers", workers, "--seed", "9"];
        args.extend(SMALL_SOLVER);
        args.extend(["--set", "diagnostics.n_list=[10, 30]", "--set", "diagnostics.n_reps=4", "--set", "diagnostics.limit_paths=2000"]);
        let o = run(tmp.path(), &args);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    study("a", "1");
    study("b", "1");
    study("c", "3");
    for f in ["convergence.csv", "convergence_long.csv", "chaos.csv", "rate.csv"] {
        let a = read(tmp.path().join("a").join(f));
        assert_eq!(a, read(tmp.path().join("b").join(f)), "{f} differs between runs");
        assert_eq!(a, read(tmp.path().join("c").join(f)), "{f} differs between worker counts");
    }
    assert_eq!(manifest(tmp.path().join("a"))["config_hash"], manifest(tmp.path().join("c"))["config_hash"]);
}

#[test]
fn existing_run_is_not_overwritten_without_force() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&run(tmp.path(), &["kernel", "--out", "k", "--set", "grid.n_steps=20"])), 0);
    let before = read(tmp.path().join("k/manifest.json"));
    let o = run(tmp.path(), &["kernel", "--out", "k", "--set", "grid.n_steps=40"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--force"));
    assert_eq!(read(tmp.path().join("k/manifest.json")), before);

    // a forced run of a different subcommand clears the old outputs
    assert_eq!(code(&run(tmp.path(), &["simulate", "--out", "k", "--force", "--set", "weights.n=5", "--set", "grid.n_steps=20"])), 0);
    let names: Vec<String> = fs::read_dir(tmp.path().join("k")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    assert!(!names.contains(&"kernel.csv".to_string()), "{names:?}");
    assert_eq!(names.iter().filter(|n| n.contains("manifest")).count(), 1);
}

#[test]
fn manifest_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["simulate", "--out", "first", "--seed", "42", "--set", "weights.n=12", "--set", "weights.scheme=inverse-distance", "--set", "simulate.crossing=grid-only"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(tmp.path(), &["simulate", "--config", "first/manifest.json", "--out", "second"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trajectories.csv", "spikes.csv"] {
        assert_eq!(read(tmp.path().join("first").join(f)), read(tmp.path().join("second").join(f)), "{f}");
    }
    let (a, b) = (manifest(tmp.path().join("first")), manifest(tmp.path().join("second")));
    assert_eq!(a["config_hash"], b["config_hash"]);
    assert_eq!(b["seed"], 42);
}

#[test]
fn schema_violation_exits_with_field_path() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("bad.toml"), "[grid]\nhorizon = 2.0\nsteps = 10\n").unwrap();
    let o = run(tmp.path(), &["kernel", "--config", "bad.toml", "--out", "k"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("grid.steps"));
    assert!(!tmp.path().join("k/manifest.json").exists());
}

#[test]
fn numeric_fault_exits_3() {
    let tmp = TempDir::new().unwrap();
    let o = run(tmp.path(), &["simulate", "--out", "s", "--set", "model.drift.offset=1e12", "--set", "weights.n=3"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("blow-up"));
}

#[test]
fn density_writes_curves_and_crosscheck() {
    let tmp = TempDir::new().unwrap();
    let o = run(
        tmp.path(),
        &["density", "--out", "d", "--set", "density.n_mc=2000", "--set", "density.check_paths=4000", "--set", "density.starts=[-0.5, 0.5]", "--set", "density.times=[0.5, 1.0]"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let curves = String::from_utf8(read(tmp.path().join("d/density.csv"))).unwrap();
    assert_eq!(curves.lines().count(), 5);
    let check = String::from_utf8(read(tmp.path().join("d/crosscheck.csv"))).unwrap();
    assert!(check.starts_with("x,t,integrated_density,integrated_se,cdf_mc,cdf_se,z\n"));
    assert_eq!(check.lines().count(), 5);
}

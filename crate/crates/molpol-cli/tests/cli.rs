//! End-to-end checks of the `molpol` binary: artifact determinism, exit
//! codes, and the validate subcommand.
//!
//! The determinism test prints an `ACCEPTANCE C10 ...: PASS/FAIL` line so
//! the binary-level guarantee shows up in the same checklist as the library
//! acceptance run.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_molpol"))
}

/// Minimal fast configuration: one mode, a small basis, a resonant cavity.
const BASE: &str = r#"
tasks = ["rp", "vr", "scatt"]

[molecule]
omega_0 = 0.1

[[molecule.modes]]
omega_nu = 0.01
sqrt_s = 1.0
n_max = 6

[cavity]
omega_c = 0.1
g_sqrt_n = 0.03
n_molecules = 1000
kappa = 0.003
gamma_xi = 0.0015
gamma_mol = 0.0015

[grid]
omega_min = 0.05
omega_max = 0.15
points = 161
"#;

const SWEEP: &str = r#"
[sweep]
parameter = "molecule.modes.0.sqrt_s"
values = [0.8, 0.9, 1.0, 1.1]
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    assert!(
        out.status.success(),
        "command {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(args: &[&str], expect_code: i32) -> String {
    let out = bin().args(args).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(expect_code),
        "command {args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Every regular file under `dir`, keyed by name.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn c10_identical_artifacts_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &format!("{BASE}{SWEEP}"));
    let out1 = dir.path().join("serial");
    let out4 = dir.path().join("parallel");
    run_ok(&[
        "run",
        config.to_str().unwrap(),
        "--output-dir",
        out1.to_str().unwrap(),
        "--threads",
        "1",
    ]);
    run_ok(&[
        "run",
        config.to_str().unwrap(),
        "--output-dir",
        out4.to_str().unwrap(),
        "--threads",
        "4",
    ]);
    let serial = snapshot(&out1);
    let parallel = snapshot(&out4);
    let ok = serial == parallel && serial.contains_key("summary.json");
    println!(
        "ACCEPTANCE C10 deterministic-artifacts: {}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert_eq!(
        serial.keys().collect::<Vec<_>>(),
        parallel.keys().collect::<Vec<_>>()
    );
    assert!(ok, "artifacts differ between --threads 1 and --threads 4");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), BASE);
    let out1 = dir.path().join("first");
    let out2 = dir.path().join("second");
    for out in [&out1, &out2] {
        run_ok(&[
            "run",
            config.to_str().unwrap(),
            "--output-dir",
            out.to_str().unwrap(),
        ]);
    }
    assert_eq!(snapshot(&out1), snapshot(&out2));
}

#[test]
fn full_task_set_writes_one_artifact_per_task() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace(
        "tasks = [\"rp\", \"vr\", \"scatt\"]",
        "tasks = [\"spectra\", \"rp\", \"rec\", \"vr\", \"scatt\", \"oracle\"]",
    );
    let config = write_config(dir.path(), &text);
    let out = dir.path().join("artifacts");
    run_ok(&[
        "run",
        config.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    let files = snapshot(&out);
    for name in [
        "spectra.csv",
        "rp.csv",
        "rec.csv",
        "vr.csv",
        "scatt.csv",
        "oracle.csv",
        "summary.json",
    ] {
        assert!(files.contains_key(name), "missing {name}");
    }
    let spectra = String::from_utf8(files["spectra.csv"].clone()).unwrap();
    assert!(
        spectra.starts_with("omega,sigma_abs,sigma_em,A,T,minus_im_DR,gamma_rp_omega\n"),
        "unexpected spectra header: {}",
        spectra.lines().next().unwrap_or("")
    );
    assert_eq!(spectra.lines().count(), 162); // header + one row per grid point
    assert!(!spectra.contains('\r'));

    let summary: serde_json::Value = serde_json::from_slice(&files["summary.json"]).unwrap();
    assert!(summary["tasks"]["oracle"]["all_pass"].as_bool().unwrap());
    // The relaxed emitter's weight on the vibrational vacuum approaches
    // exp(-s) = 1/e at unit Huang-Rhys factor.
    let fc_leak = summary["molecule"]["fc_leak"].as_f64().unwrap();
    assert!(
        (fc_leak - (-1.0_f64).exp()).abs() < 5e-3,
        "fc_leak = {fc_leak}"
    );
    assert_eq!(summary["cavity"]["n_molecules"].as_u64(), Some(1000));
}

#[test]
fn sweep_csv_has_one_row_per_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &format!("{BASE}{SWEEP}"));
    let out = dir.path().join("artifacts");
    run_ok(&[
        "run",
        config.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    let files = snapshot(&out);
    let rp = String::from_utf8(files["rp.csv"].clone()).unwrap();
    let mut lines = rp.lines();
    assert_eq!(lines.next(), Some("sweep_value,rate"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][0], 0.8);
    assert!(rows.iter().all(|r| r[1] > 0.0));
}

#[test]
fn missing_kappa_exits_2_naming_the_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace("kappa = 0.003\n", "");
    let config = write_config(dir.path(), &text);
    let stderr = run_err(&["run", config.to_str().unwrap()], 2);
    assert!(stderr.contains("kappa"), "stderr: {stderr}");
    let cavity_header_line = text
        .lines()
        .position(|l| l.trim() == "[cavity]")
        .unwrap()
        + 1;
    assert!(
        stderr.contains(&format!("config.toml:{cavity_header_line}:")),
        "stderr: {stderr}"
    );
}

#[test]
fn negative_kappa_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &BASE.replace("kappa = 0.003", "kappa = -1.0"));
    let stderr = run_err(&["run", config.to_str().unwrap()], 2);
    assert!(stderr.contains("cavity.kappa"), "stderr: {stderr}");
}

#[test]
fn both_sqrt_s_and_s_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        &BASE.replace("sqrt_s = 1.0", "sqrt_s = 1.0\ns = 1.0"),
    );
    let stderr = run_err(&["run", config.to_str().unwrap()], 2);
    assert!(stderr.contains("mutually exclusive"), "stderr: {stderr}");
}

#[test]
fn sweeping_spectra_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{}{SWEEP}",
        BASE.replace("tasks = [\"rp\", \"vr\", \"scatt\"]", "tasks = [\"spectra\"]")
    );
    let config = write_config(dir.path(), &text);
    let stderr = run_err(&["run", config.to_str().unwrap()], 2);
    assert!(stderr.contains("spectra"), "stderr: {stderr}");
}

#[test]
fn unknown_sweep_parameter_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{BASE}\n[sweep]\nparameter = \"cavity.quality\"\nvalues = [1.0]\n"
    );
    let config = write_config(dir.path(), &text);
    let stderr = run_err(&["run", config.to_str().unwrap()], 2);
    assert!(stderr.contains("cavity.quality"), "stderr: {stderr}");
}

#[test]
fn missing_config_file_exits_1() {
    let stderr = run_err(&["run", "/nonexistent/config.toml"], 1);
    assert!(stderr.contains("cannot read"), "stderr: {stderr}");
}

#[test]
fn validate_reports_derived_quantities_and_planned_runs() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{BASE}\n[sweep]\nparameter = \"cavity.g_sqrt_n\"\nvalues = [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07]\n"
    );
    let config = write_config(dir.path(), &text);
    let out = run_ok(&["validate", config.to_str().unwrap()]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("configuration OK"), "stdout: {stdout}");
    assert!(stdout.contains("planned runs: 7"), "stdout: {stdout}");
    assert!(stdout.contains("detuning = 0"), "stdout: {stdout}");
    assert!(stdout.contains("basis size estimate 7"), "stdout: {stdout}");
    // validate never writes artifacts
    assert!(!dir.path().join("out").exists());
}

#[test]
fn version_flag_prints_and_exits_0() {
    let out = run_ok(&["--version"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("molpol"), "stdout: {stdout}");
}

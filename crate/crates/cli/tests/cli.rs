//! End-to-end checks of the `sisylab` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sisylab_cli::table::CsvFile;
use sisylab_cli::RunConfig;

const SMALL: &str = "\
lattice.gamma0p = 5
sim.n_atoms = 64
sim.t_total = 10
sim.init_temperature_x = 270
sim.init_temperature_z = 100
probe.temperature_x = 90
probe.temperature_z = 33
";

fn sisylab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sisylab"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn payload(path: &Path) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .collect::<Vec<_>>()
        .join("\n")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn simulate_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.txt", SMALL);
    for out in ["a", "b"] {
        assert_ok(&sisylab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out], tmp.path()));
    }
    let a = fs::read(tmp.path().join("a/summary.csv")).unwrap();
    let b = fs::read_to_string(tmp.path().join("b/summary.csv")).unwrap();
    // identical apart from the output directory line
    assert_eq!(
        String::from_utf8(a).unwrap().replace("output.dir = a", "output.dir = b"),
        b
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.txt", SMALL);
    let cfg = cfg.to_str().unwrap();
    assert_ok(&sisylab(&["simulate", "--config", cfg, "--out", "one", "--threads", "1"], tmp.path()));
    let out = Command::new(env!("CARGO_BIN_EXE_sisylab"))
        .args(["simulate", "--config", cfg, "--out", "many"])
        .current_dir(tmp.path())
        .env("SISYLAB_THREADS", "5")
        .output()
        .unwrap();
    assert_ok(&out);
    assert_eq!(
        payload(&tmp.path().join("one/summary.csv")),
        payload(&tmp.path().join("many/summary.csv"))
    );
}

#[test]
fn embedded_config_reproduces_payload() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.txt", SMALL);
    assert_ok(&sisylab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", "first"], tmp.path()));
    let first = tmp.path().join("first/summary.csv");
    let embedded = CsvFile::read(&first).unwrap();
    assert_eq!(embedded.meta_value("command"), Some("simulate"));
    assert_eq!(embedded.meta_value("version"), Some(env!("CARGO_PKG_VERSION")));
    let resolved = embedded.config().unwrap();
    assert!(resolved.dt.is_some() && resolved.record_stride.is_some());
    let again = write_config(tmp.path(), "again.txt", &embedded.config_text);
    assert_ok(&sisylab(&["simulate", "--config", again.to_str().unwrap(), "--out", "second"], tmp.path()));
    assert_eq!(payload(&first), payload(&tmp.path().join("second/summary.csv")));
}

#[test]
fn zero_duration_reports_initial_state() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.txt", &format!("{SMALL}sim.t_total = 0\n").replace("sim.t_total = 10\n", ""));
    assert_ok(&sisylab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", "o"], tmp.path()));
    let f = CsvFile::read(&tmp.path().join("o/summary.csv")).unwrap();
    assert_eq!(f.rows.len(), 1);
    assert_eq!(f.column("time").unwrap(), vec![0.0]);
    assert_eq!(f.column("msd_x").unwrap(), vec![0.0]);
    let kt = f.column("kt_x").unwrap()[0];
    assert!(kt > 150.0 && kt < 400.0, "initial k_BT_x {kt}");
}

#[test]
fn blowup_fixture_fails_with_indices() {
    // P(|p| > 1000) = exp(−10⁶ / k_BT) = 0.2 % at this temperature.
    let kt = 1.0e6 / 500f64.ln();
    let text = format!(
        "lattice.gamma0p = 5\nsim.n_atoms = 5000\nsim.t_total = 0.5\n\
         sim.init_temperature_x = {kt}\nsim.init_temperature_z = {kt}\n\
         probe.temperature_x = 90\nprobe.temperature_z = 33\n"
    );
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "hot.txt", &text);
    let out = sisylab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", "o"], tmp.path());
    assert!(!out.status.success());
    let record = fs::read_to_string(tmp.path().join("o/error.txt")).unwrap();
    assert!(record.contains("status: error"));
    assert!(record.contains("kind: numerical_blowup"));
    let line = record.lines().find(|l| l.starts_with("failed_indices:")).unwrap();
    let failed: Vec<usize> = line["failed_indices:".len()..]
        .split(',')
        .map(|s| s.trim().parse().unwrap())
        .collect();
    // about 10 expected; more than the 0.1 % budget of 5
    assert!((6..=20).contains(&failed.len()), "{failed:?}");
    assert!(failed.windows(2).all(|w| w[0] < w[1]) && failed.iter().all(|&i| i < 5000));
    assert!(!tmp.path().join("o/summary.csv").exists());
}

#[test]
fn config_errors_are_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "bad.txt", "sim.atoms = 3\n");
    let out = sisylab(&["simulate", "--config", cfg.to_str().unwrap(), "--out", "o"], tmp.path());
    assert!(!out.status.success());
    let record = fs::read_to_string(tmp.path().join("o/error.txt")).unwrap();
    assert!(record.contains("kind: config") && record.contains("sim.atoms"));
}

#[test]
fn stored_trajectories_give_the_same_msd() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.txt", &format!("{SMALL}output.trajectories = true\n"));
    let cfg = cfg.to_str().unwrap();
    assert_ok(&sisylab(&["simulate", "--config", cfg, "--out", "sim"], tmp.path()));
    assert_ok(&sisylab(&["msd", "--input", "sim/trajectories.bin", "--out", "stored"], tmp.path()));
    assert_ok(&sisylab(&["msd", "--config", cfg, "--out", "fresh"], tmp.path()));
    assert_eq!(payload(&tmp.path().join("stored/msd.csv")), payload(&tmp.path().join("fresh/msd.csv")));
    // ten time units are too short for a relaxation fit; the series and the
    // failure status are still written, and the exit code reports the failure
    let out = sisylab(&["temps", "--input", "sim/trajectories.bin", "--out", "stored"], tmp.path());
    let relax = fs::read_to_string(tmp.path().join("stored/relaxation.txt")).unwrap();
    assert!(relax.contains("units: rates in omega_r"));
    assert_eq!(out.status.success(), relax.contains("status: ok"));
    assert!(tmp.path().join("stored/temps.csv").exists());
}

#[test]
fn spectrum_then_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL}spectrum.deltas = -3,-2,-1.5,-1,-0.7,-0.5,-0.3,0,0.3,0.5,0.7,1,1.5,2,3\n\
         probe.settle_time = 2\nprobe.measure_time = 5\nfit.window = 3\n"
    );
    let cfg = write_config(tmp.path(), "c.txt", &text);
    assert_ok(&sisylab(&["spectrum", "--config", cfg.to_str().unwrap(), "--out", "s"], tmp.path()));
    let csv = CsvFile::read(&tmp.path().join("s/spectrum.csv")).unwrap();
    assert_eq!(
        csv.columns,
        ["delta_omega_r", "gain", "gain_err", "n_atoms", "settle", "measure"]
    );
    assert_eq!(csv.rows.len(), 15);
    assert!(csv.rows.iter().all(|r| r[3] == 64.0 && r[2] > 0.0));
    let cfg_back: RunConfig = csv.config().unwrap();
    assert_eq!(cfg_back.fit_window, Some(3.0));

    // the fit may or may not converge on 64 atoms; either way both files appear
    let _ = sisylab(&["fit", "--input", "s/spectrum.csv", "--out", "f"], tmp.path());
    let report = fs::read_to_string(tmp.path().join("f/fit.txt")).unwrap();
    assert!(report.contains("central_status:"));
    let residuals = CsvFile::read(&tmp.path().join("f/residuals.csv")).unwrap();
    assert_eq!(residuals.rows.len(), 15);
}

#[test]
fn oracle_command_passes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_ok(&sisylab(&["oracle", "--out", "o"], tmp.path()));
    let f = CsvFile::read(&tmp.path().join("o/oracle.csv")).unwrap();
    assert_eq!(f.rows.len(), 11);
    assert!(f.column("passed").unwrap().iter().all(|&p| p == 1.0));
}

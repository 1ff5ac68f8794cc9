use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ncs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ncs"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("ncs runs")
}

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples")
        .join(name)
}

fn scalar_config(k: f64, extra: &str) -> String {
    format!(
        r#"{{
  "schema_version": 1,
  "plant": {{"n": 1, "m": 1, "a_hat": [1.0], "A": [[-1.0]], "B": [[0.5]], "C": [[0.45]]}},
  "reset": {{"K": [[{k}]], "sigma_diag": [1.0]}},
  "intervals": {{"kind": "exponential", "rate": 1.0}}{extra}
}}"#
    )
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is json")
}

#[test]
fn analyze_stable_exits_zero() {
    let out = ncs(&[
        "analyze",
        example("scalar_fig2.json").to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["moments"]["mean_x"][0].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-8);
    assert!((v["moments"]["covariance"][0][0].as_f64().unwrap() - 0.268148148148).abs() < 1e-8);
    assert_eq!(v["stability"]["second_moment_stable"], true);
}

#[test]
fn analyze_text_report() {
    let out = ncs(&[
        "analyze",
        example("two_state_bioreactor.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("second moment         stable"));
    assert!(text.contains("mean x"));
}

#[test]
fn analyze_unstable_exits_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "u.json", &scalar_config(4.0, ""));
    let out = ncs(&["analyze", cfg.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert!(v["moments"].is_null());
    assert_eq!(v["stability"]["first_moment_stable"], false);
}

#[test]
fn bad_inputs_exit_one() {
    let dir = TempDir::new().unwrap();
    let unknown = write(&dir, "x.json", &scalar_config(0.5, r#", "bogus": 1"#));
    assert_eq!(
        ncs(&["analyze", unknown.to_str().unwrap()]).status.code(),
        Some(1)
    );
    let missing = dir.path().join("nope.json");
    assert_eq!(
        ncs(&["analyze", missing.to_str().unwrap()]).status.code(),
        Some(1)
    );
    let good = write(&dir, "g.json", &scalar_config(0.5, ""));
    let out = ncs(&["analyze", good.to_str().unwrap(), "--quad-tol", "-1"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(ncs(&["analyze"]).status.code(), Some(1));
    assert_eq!(
        ncs(&["frobnicate", good.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn empty_grid_writes_nothing() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "s.json",
        &scalar_config(
            0.5,
            r#", "sweep": {"parameter": "mean_interval", "values": []}"#,
        ),
    );
    let csv = dir.path().join("out.csv");
    let out = ncs(&["sweep", cfg.to_str().unwrap(), "-o", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!csv.exists());
}

#[test]
fn sweep_csv_layout() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("out.csv");
    let cfg = example("scalar_fig2.json");
    let out = ncs(&["sweep", cfg.to_str().unwrap(), "-o", csv.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "sweep_value,mean_x_1,var_total_11,var_channel_11,var_disturbance_11,\
         spectral_radius_1,spectral_radius_2,mc_var,mc_ci_lo,mc_ci_hi"
    );
    assert_eq!(lines.len(), 31);
    let first: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(first[0], "0.05");
    assert_eq!(first.len(), 10);
    assert_eq!(&first[7..], ["", "", ""]);
    for line in &lines[1..] {
        let cells: Vec<f64> = line
            .split(',')
            .take(7)
            .map(|c| c.parse().unwrap())
            .collect();
        assert!((cells[1] - 4.0 / 3.0).abs() < 1e-8);
        assert!((cells[2] - cells[3] - cells[4]).abs() < 1e-12);
    }
    // Same input, byte-identical output.
    let again = dir.path().join("again.csv");
    ncs(&[
        "sweep",
        cfg.to_str().unwrap(),
        "-o",
        again.to_str().unwrap(),
    ]);
    assert_eq!(text, std::fs::read_to_string(&again).unwrap());
}

#[test]
fn sweep_unstable_points_leave_moments_blank() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "g.json",
        &scalar_config(
            0.5,
            r#", "sweep": {"parameter": "gain", "entry": [0, 0], "values": [0.5, 4.0]}"#,
        ),
    );
    let csv = dir.path().join("g.csv");
    let out = ncs(&["sweep", cfg.to_str().unwrap(), "-o", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let row: Vec<&str> = text.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[0], "4");
    assert!(row[1..5].iter().all(|c| c.is_empty()));
    assert!(row[5].parse::<f64>().unwrap() > 1.0);
}

#[test]
fn sweep_with_monte_carlo_columns() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "mc.json",
        &scalar_config(
            0.5,
            r#", "simulate": {"dt": 0.01, "horizon": 100.0, "trajectories": 16, "seed": 9},
               "sweep": {"parameter": "mean_interval", "values": [1.0], "monte_carlo": true}"#,
        ),
    );
    let csv = dir.path().join("mc.csv");
    let out = ncs(&["sweep", cfg.to_str().unwrap(), "-o", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let row: Vec<f64> = text
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    let (var, lo, hi) = (row[7], row[8], row[9]);
    assert!(lo < var && var < hi);
    assert!((var - 0.268).abs() < 0.1);
}

#[test]
fn design_writes_model() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "d.json",
        &scalar_config(
            0.1,
            r#", "design": {"free": [[0, 0]], "target_mean": [1.3333333333333333],
                            "objective": {"kind": "none"}, "output": "designed.json"}"#,
        ),
    );
    let out = ncs(&["design", cfg.to_str().unwrap(), "--json"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let v = json(&out);
    assert!((v["k"][0][0].as_f64().unwrap() - 0.5).abs() < 1e-8);
    let designed = dir.path().join("designed.json");
    let out = ncs(&["analyze", designed.to_str().unwrap(), "--json"]);
    assert_eq!(out.status.code(), Some(0));
    assert!((json(&out)["moments"]["mean_x"][0].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-8);
}

#[test]
fn design_without_block_fails() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "n.json", &scalar_config(0.5, ""));
    assert_eq!(
        ncs(&["design", cfg.to_str().unwrap()]).status.code(),
        Some(1)
    );
}

#[test]
fn simulate_overlay_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        &dir,
        "s.json",
        &scalar_config(0.5, r#", "simulate": {"dt": 0.01, "horizon": 100.0}"#),
    );
    let args = [
        "simulate",
        cfg.to_str().unwrap(),
        "--json",
        "--trajectories",
        "12",
        "--seed",
        "5",
    ];
    let a = ncs(&args);
    assert_eq!(
        a.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&a.stderr)
    );
    let v = json(&a);
    assert_eq!(v["effective_samples"], 12);
    let rows = v["overlay"].as_array().unwrap();
    assert_eq!(rows[0]["quantity"], "mean_x_1");
    assert!((rows[0]["analytic"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-8);
    assert!(rows[0]["inside"].is_boolean());
    assert_eq!(a.stdout, ncs(&args).stdout);
    let other = ncs(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--json",
        "--trajectories",
        "12",
        "--seed",
        "6",
    ]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn resolved_config_is_logged() {
    let out = Command::new(env!("CARGO_BIN_EXE_ncs"))
        .args([
            "analyze",
            example("scalar_fig2.json").to_str().unwrap(),
            "--quad-tol",
            "1e-9",
        ])
        .env("RUST_LOG", "info")
        .output()
        .unwrap();
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("resolved config"));
    assert!(err.contains("\"relative_tolerance\":1e-9"));
    assert!(err.contains("\"max_subdivisions\":2000"));
}

#[test]
fn model_file_indirection() {
    let out = ncs(&[
        "analyze",
        example("scalar_fig2_cv2.json").to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!((json(&out)["moments"]["mean_x"][0].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-8);
}

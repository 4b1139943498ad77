use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rydberg-anneal"))
}

/// The shipped benchmark preset for an `n`-qubit chain.
fn preset(n: usize) -> PathBuf {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets");
    let suffix = format!("-n{n}.json");
    fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.to_string_lossy().ends_with(&suffix))
        .expect("preset exists")
}

fn run_with(config: &Path, out: &Path, extra: &[&str]) -> Output {
    bin().arg("--config").arg(config).arg("--out").arg(out).args(extra).output().expect("binary runs")
}

fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).expect("stderr carries one JSON error object")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn n2_preset_reports_high_fidelity() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(&preset(2), dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("results.json")).unwrap()).unwrap();
    let closed = r["success_probability_closed"].as_f64().unwrap();
    assert!((closed - 0.997).abs() < 2e-3, "{closed}");
    let noisy = r["success_probability"].as_f64().unwrap();
    assert!(noisy < closed && noisy > 0.97, "{noisy}");
    assert_eq!(r["fidelity"]["target"], "10");
    let m: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert!(m["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn unsuffixed_unit_key_exits_with_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(preset(2)).unwrap().replace("\"b_x_khz\"", "\"b_x\"");
    let cfg = write_config(dir.path(), &text);
    let o = run_with(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["error"], "config");
    assert_eq!(e["pointer"], "/schedule/b_x");
    assert!(!dir.path().join("out/results.json").exists());
}

#[test]
fn degenerate_target_exits_with_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"mode": "anneal",
            "problem": {"n": 2, "linear_khz": [0, 0], "quadratic_khz": [[0, 0], [0, 0]],
                        "convention": "spin_up_is_plus_one"},
            "schedule": {"b_x_khz": 100, "t_total_us": 5}}"#,
    );
    let o = run_with(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stderr_json(&o)["error"], "degenerate_ground");
}

#[test]
fn unknown_mode_override_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(&preset(2), dir.path(), &["--mode", "annealing"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["pointer"], "/mode");
}

#[test]
fn trajectory_results_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(preset(2))
        .unwrap()
        .replace("\"master_equation\"", "\"trajectories\"")
        .replace("\"gamma_max_khz\": 0.1", "\"gamma_max_khz\": 2.0");
    let cfg = write_config(dir.path(), &text);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run_with(&cfg, &a, &["--threads", "1", "--seed", "5"]).status.success());
    assert!(run_with(&cfg, &b, &["--threads", "4", "--seed", "5"]).status.success());
    assert_eq!(fs::read(a.join("results.json")).unwrap(), fs::read(b.join("results.json")).unwrap());
    let ma: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let mb: serde_json::Value = serde_json::from_slice(&fs::read(b.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(ma["config_sha256"], mb["config_sha256"]);
    assert_eq!(mb["threads"], 4);
}

#[test]
fn seed_override_changes_the_hash() {
    let dir = tempfile::tempdir().unwrap();
    let hash = |seed: &str| {
        let out = dir.path().join(seed);
        assert!(run_with(&preset(2), &out, &["--seed", seed]).status.success());
        let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join("manifest.json")).unwrap()).unwrap();
        m["config_sha256"].as_str().unwrap().to_owned()
    };
    assert_ne!(hash("1"), hash("2"));
}

#[test]
fn gap_scan_writes_plot_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run_with(&preset(3), &out, &["--mode", "gap-scan", "--plot-data"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("gaps.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "time_us,gap_khz,s,e0_khz,e1_khz,refined");
    assert!(lines.count() >= 201);
    let r: serde_json::Value = serde_json::from_slice(&fs::read(out.join("results.json")).unwrap()).unwrap();
    assert!(r["min_gap_khz"].as_f64().unwrap() > 0.0);
}

#[test]
fn dressing_sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"mode": "dressing-sweep",
            "sweep": {"omega_mhz": {"start": 1, "stop": 10, "points": 4},
                      "delta_mhz": [8, 16], "gamma_line_khz": 0.53}}"#,
    );
    let out = dir.path().join("out");
    let o = run_with(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("omega_mhz,delta_mhz,vdd_mhz,j_mhz,admixture_single,admixture_pair,gamma_khz,kappa\n"));
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn benchmark_suite_tabulates_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"mode": "benchmark-suite", "grid_points": 41, "method": "closed",
            "benchmark": {"sizes": [2, 3, 4], "coupling_khz": 470, "b_x_khz": 470,
                          "delta_e_total_khz": 118.5, "t_per_qubit_us": 17.5}}"#,
    );
    let out = dir.path().join("out");
    let o = run_with(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&fs::read(out.join("results.json")).unwrap()).unwrap();
    let rows = r["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(r["gap_fit"]["exponent"].is_number());
    assert!(fs::read_to_string(out.join("gaps.csv")).unwrap().starts_with("n,time_us,gap_khz\n"));
}

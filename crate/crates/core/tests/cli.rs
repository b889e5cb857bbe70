use std::path::Path;
use std::process::Command;

use chemotaxis_core::config::ScenarioConfig;
use chemotaxis_core::diagnostics::DiagnosticsRecord;
use chemotaxis_core::scenario::{
    read_snapshot, run_scenario, run_sweep, verify_command, Summary, SweepAxis, OUTPUT_ROOT_ENV,
};

const HOMOGENEOUS: &str = r#"
seed = 3

[grid]
nx = 8
ny = 6
lx = 1.0
ly = 0.75

[model]
tau = 0
r = 0.0
mu = 0.0
p = 0.5

[controls]
dt = 1e-2
dt_mode = "fixed"
cfl_safety = 0.4
t_end = 0.5
pos_tol = 1e-10
clamp_negatives = false

[energy]
c_gn = 1.0

[initial.u]
kind = "constant"
value = 2.0

[initial.w]
kind = "constant"
value = 0.5

[output]
directory = "homogeneous"
cadence = 5
snapshot_times = [0.0, 0.25]
"#;

fn logistic_config() -> String {
    HOMOGENEOUS
        .replace("r = 0.0", "r = 1.0")
        .replace("mu = 0.0", "mu = 1.0")
        .replace("p = 0.5", "p = 0.0")
        .replace("value = 2.0", "value = 0.1")
        .replace("value = 0.5", "value = 0.0")
        .replace("dt = 1e-2", "dt = 1e-3")
        .replace("t_end = 0.5", "t_end = 2.0")
        .replace("cadence = 5", "cadence = 100")
}

fn aggregation_config() -> String {
    HOMOGENEOUS
        .replace("nx = 8", "nx = 64")
        .replace("ny = 6", "ny = 64")
        .replace("ly = 0.75", "ly = 1.0")
        .replace("dt = 1e-2", "dt = 1e-2\nblowup_threshold = 1e4\nflux = \"upwind\"\nsolver = \"spectral\"")
        .replace("dt_mode = \"fixed\"", "dt_mode = \"adaptive\"")
        .replace("t_end = 0.5", "t_end = 5.0")
        .replace(
            "kind = \"constant\"\nvalue = 2.0",
            "kind = \"gaussian_bump\"\ncenter = [0.5, 0.0]\nwidth = 0.1\nmass = 30.0",
        )
        .replace(
            "kind = \"constant\"\nvalue = 0.5",
            "kind = \"gaussian_bump\"\ncenter = [0.5, 0.0]\nwidth = 0.1\nmass = 30.0",
        )
        .replace("cadence = 5", "cadence = 50")
        .replace("snapshot_times = [0.0, 0.25]", "snapshot_times = []")
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_chemotaxis"))
}

fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|v| v.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn summary(dir: &Path) -> Summary {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn homogeneous_run_writes_constant_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::from_toml_str(HOMOGENEOUS).unwrap();
    let out = tmp.path().join("run");
    let outcome = run_scenario(&cfg, &out).unwrap();
    assert_eq!(outcome.exit_code(), 0);
    let (header, rows) = read_rows(&out.join("diagnostics.csv"));
    assert_eq!(header, DiagnosticsRecord::COLUMNS.to_vec());
    // t = 0, every fifth of 50 steps.
    assert_eq!(rows.len(), 11);
    for row in &rows {
        assert_eq!(row.len(), 15);
        for (k, (a, b)) in row.iter().zip(&rows[0]).enumerate() {
            if DiagnosticsRecord::COLUMNS[k] == "t" || DiagnosticsRecord::COLUMNS[k] == "dt_used" {
                continue;
            }
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "column {k}");
        }
    }
    let s = summary(&out);
    assert_eq!(s.reason, "completed");
    assert_eq!(s.exit_code, 0);
    assert_eq!(s.final_t, 0.5);
    assert!(s.energy_params.is_none(), "mu = 0 has no energy constants");
}

#[test]
fn csv_numbers_use_scientific_notation_with_17_digits() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::from_toml_str(HOMOGENEOUS).unwrap();
    run_scenario(&cfg, tmp.path()).unwrap();
    let text = std::fs::read_to_string(tmp.path().join("diagnostics.csv")).unwrap();
    for line in text.lines().skip(1) {
        for cell in line.split(',') {
            let (mantissa, exponent) = cell.split_once('e').expect("scientific notation");
            exponent.parse::<i32>().unwrap();
            let digits = mantissa.trim_start_matches('-').replace('.', "");
            assert_eq!(digits.len(), 17, "{cell}");
        }
    }
}

#[test]
fn snapshots_have_documented_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::from_toml_str(HOMOGENEOUS).unwrap();
    run_scenario(&cfg, tmp.path()).unwrap();
    for k in 0..2 {
        for field in ["u", "v", "w", "z"] {
            let path = tmp.path().join(format!("snapshot_{k:03}_{field}.txt"));
            let text = std::fs::read_to_string(&path).unwrap();
            assert!(text.starts_with("# nx ny lx ly t field\n# 8 6 "), "{text}");
            assert_eq!(text.lines().count(), 2 + 6);
            let (nx, ny, lx, ly, t, name, values) = read_snapshot(&path).unwrap();
            assert_eq!((nx, ny, lx, ly, name.as_str()), (8, 6, 1.0, 0.75, field));
            assert!((t - [0.0, 0.25][k]).abs() < 1e-9, "{t}");
            assert_eq!(values.len(), 48);
        }
    }
}

#[test]
fn logistic_run_matches_closed_form() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::from_toml_str(&logistic_config()).unwrap();
    run_scenario(&cfg, tmp.path()).unwrap();
    let s = summary(tmp.path());
    let exact = 0.1 * 2f64.exp() / (1.0 + 0.1 * (2f64.exp() - 1.0));
    let last = s.final_record.unwrap();
    assert!((last.linf_u - exact).abs() / exact <= 1e-3);
    assert!((s.peak_linf_u - exact).abs() / exact <= 1e-3);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::from_toml_str(&logistic_config()).unwrap();
    run_scenario(&cfg, &tmp.path().join("a")).unwrap();
    run_scenario(&cfg, &tmp.path().join("b")).unwrap();
    for file in ["diagnostics.csv", "summary.json"] {
        let a = std::fs::read(tmp.path().join("a").join(file)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(file)).unwrap();
        assert_eq!(a, b, "{file}");
    }
}

#[test]
fn binary_exit_codes_match_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (HOMOGENEOUS.to_string(), 0, "completed"),
        (aggregation_config(), 10, "blow_up_detected"),
    ];
    for (k, (text, code, reason)) in cases.into_iter().enumerate() {
        let text = text.replace("directory = \"homogeneous\"", &format!("directory = \"case{k}\""));
        let path = tmp.path().join(format!("case{k}.toml"));
        std::fs::write(&path, text).unwrap();
        let status = bin()
            .arg("run")
            .arg(&path)
            .env(OUTPUT_ROOT_ENV, tmp.path())
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(code));
        let s = summary(&tmp.path().join(format!("case{k}")));
        assert_eq!(s.reason, reason);
        assert_eq!(s.exit_code, code);
    }
}

#[test]
fn config_errors_exit_with_code_two_and_name_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (HOMOGENEOUS.replace("mu = 0.0", "mu = 0.0\nmuu = 1.0"), "model.muu"),
        (HOMOGENEOUS.replace("cfl_safety = 0.4\n", ""), "controls.cfl_safety"),
        (HOMOGENEOUS.replace("nx = 8", "nx = 3"), "grid.nx"),
        (HOMOGENEOUS.replace("kind = \"constant\"\nvalue = 2.0", "kind = \"sawtooth\""), "initial.u"),
        (HOMOGENEOUS.replace("value = 2.0", "value = -1.0"), "initial.u"),
    ];
    for (k, (text, key)) in cases.into_iter().enumerate() {
        let path = tmp.path().join(format!("bad{k}.toml"));
        std::fs::write(&path, text).unwrap();
        let out = bin()
            .arg("run")
            .arg(&path)
            .env(OUTPUT_ROOT_ENV, tmp.path())
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(2), "case {k}");
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert!(stderr.contains(key), "case {k}: {stderr}");
    }
}

#[test]
fn degenerate_sweep_matches_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::from_toml_str(&logistic_config()).unwrap();
    run_scenario(&cfg, &tmp.path().join("single")).unwrap();
    let axis1 = SweepAxis::parse("model.r=1.0").unwrap();
    let axis2 = SweepAxis::parse("model.mu=1.0").unwrap();
    let rows = run_sweep(&cfg, &axis1, Some(&axis2), &tmp.path().join("sweep")).unwrap();
    assert_eq!(rows.len(), 1);
    let single = std::fs::read(tmp.path().join("single/diagnostics.csv")).unwrap();
    let cell = std::fs::read(tmp.path().join("sweep/cell_0_0/diagnostics.csv")).unwrap();
    assert_eq!(single, cell);
}

#[test]
fn sweep_rows_are_sorted_and_bad_cells_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ScenarioConfig::from_toml_str(HOMOGENEOUS).unwrap();
    let axis1 = SweepAxis::parse("model.p=0.9,0.0,0.5").unwrap();
    let axis2 = SweepAxis::parse("model.mu=2,1").unwrap();
    let rows = run_sweep(&cfg, &axis1, Some(&axis2), tmp.path()).unwrap();
    let order: Vec<(usize, usize)> = rows.iter().map(|r| (r.i, r.j)).collect();
    assert_eq!(order, vec![(0, 0), (0, 1), (1, 0), (1, 1), (2, 0), (2, 1)]);
    let text = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 7);
    assert!(text.starts_with("i,j,model.p,model.mu,reason,"));

    let bad = SweepAxis::parse("model.mu=1,-1").unwrap();
    let err = run_sweep(&cfg, &axis1, Some(&bad), &tmp.path().join("bad")).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("(0, 1)") && msg.contains("model.mu"), "{msg}");
    assert!(!tmp.path().join("bad/cell_0_0").exists(), "no cell may run");
}

#[test]
fn sweep_binary_rejects_unknown_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("base.toml");
    std::fs::write(&path, HOMOGENEOUS).unwrap();
    let out = bin()
        .args(["sweep", path.to_str().unwrap(), "--axis1", "model.q=1,2"])
        .env(OUTPUT_ROOT_ENV, tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("model.q"));
}

#[test]
fn verify_writes_report() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["verify", "--p", "0", "--delta", "0.1,0.01,1.5", "--umax", "1e6", "--out"])
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("inequalities.json")).unwrap())
            .unwrap();
    assert_eq!(json["all_pass"], true);
    let rows = json["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let c = |k: usize| rows[k]["c_delta"].as_f64().unwrap();
    assert!(c(1) >= c(0));
    assert_eq!(c(2), 0.0);

    let bad = bin()
        .args(["verify", "--p", "1.0", "--delta", "0.1", "--umax", "10"])
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn verify_constants_recertify_at_tenfold_resolution() {
    for p in [0.0, 0.5, 0.9] {
        let rep = verify_command(p, &[0.1, 0.01], 1e8, 2048).unwrap();
        assert!(rep.all_pass, "{rep:?}");
        for row in &rep.rows {
            assert_eq!(row.recheck_samples, 10 * row.samples);
            assert_eq!(row.recheck_violations, 0);
        }
    }
}

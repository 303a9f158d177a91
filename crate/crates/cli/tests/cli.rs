use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SYMMETRIC: &str = r#"{"delta": 5, "potential": {"v12": {"kind": "disk", "radius": 2, "amplitude": -1}}}"#;

const SMALL: &str = r#"{
  "delta": 5,
  "potential": {"v12": {"kind": "disk", "radius": 2, "amplitude": -1}},
  "epsilon_grid": [0, 2.5],
  "basis": {"count": 100, "box": {"min": [-6, -6], "max": [6, 6]}},
  "output": {"formats": ["csv", "json"], "eigenfunctions": {"nx": 11, "ny": 11, "modes": 1}}
}"#;

fn semidirac(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semidirac")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("symmetric.json"), SYMMETRIC).unwrap();
    fs::write(dir.path().join("small.json"), SMALL).unwrap();
    dir
}

#[test]
fn validate_accepts_good_config() {
    let dir = setup();
    let o = semidirac(&["validate", "--config", "symmetric.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("config ok"));
}

#[test]
fn usage_and_validation_errors_exit_one() {
    let dir = setup();
    assert_eq!(semidirac(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(semidirac(&["validate", "--colour"], dir.path()).status.code(), Some(1));
    assert_eq!(semidirac(&["validate"], dir.path()).status.code(), Some(1));
    assert_eq!(semidirac(&["validate", "--config", "missing.json"], dir.path()).status.code(), Some(1));

    fs::write(dir.path().join("bad.json"), r#"{"delta": -1, "potential": {}}"#).unwrap();
    let o = semidirac(&["validate", "--config", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delta must be positive"));

    assert_eq!(semidirac(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = setup();
    fs::write(dir.path().join("blocker"), "").unwrap();
    let o = semidirac(&["bounds", "--config", "symmetric.json", "--out", "blocker/sub"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bounds_reports_threshold_ten() {
    let dir = setup();
    let o = semidirac(&["bounds", "--config", "symmetric.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "epsilon,i_plus,i_minus,g_plus,g_minus,h,threshold_plus,threshold_minus");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 21);
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        let t: f64 = cells[6].parse().unwrap();
        assert!((t - 10.0).abs() < 1e-10, "{t}");
    }

    let o = semidirac(&["bounds", "--config", "symmetric.json", "--epsilon", "2.5", "--format", "json"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let ip = v[0]["i_plus"].as_f64().unwrap();
    assert!((ip + 75.0 * std::f64::consts::PI).abs() < 1e-6, "{ip}");
}

#[test]
fn dispersion_and_qform_print_tables() {
    let dir = setup();
    let o = semidirac(&["dispersion", "--delta", "5", "--points", "3", "--k-max", "1"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 10);
    // Centre of the grid is k = 0 with E = -delta, +delta.
    assert!(text.lines().nth(5).unwrap().ends_with("-5.0000000000000000e0,5.0000000000000000e0"));

    assert_eq!(semidirac(&["dispersion"], dir.path()).status.code(), Some(1));

    let o = semidirac(&["qform", "--config", "symmetric.json", "--format", "json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["verdict"], true);
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn solve_writes_spectrum_and_fields() {
    let dir = setup();
    let o = semidirac(&["solve", "--config", "small.json", "--epsilon", "2.5", "--out", "one"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let spectrum = fs::read_to_string(dir.path().join("one/spectrum.csv")).unwrap();
    assert!(spectrum.starts_with("epsilon,index,E,residual\n"));
    assert!(spectrum.lines().count() > 1);
    let psi = stdout(&o).lines().find(|l| l.contains("psi_")).expect("field file listed").to_string();
    let field = fs::read_to_string(dir.path().join(psi)).unwrap();
    assert!(field.starts_with("x,y,abs_psi\n"));
    assert_eq!(field.lines().count(), 122);
}

#[test]
fn sweep_writes_output_contract() {
    let dir = setup();
    let o = semidirac(&["sweep", "--config", "small.json", "--out", "run1"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let run = dir.path().join("run1");
    for name in ["eigencurves.csv", "bounds.csv", "plot_eigencurves.py", "sweep.json", "manifest.json"] {
        assert!(run.join(name).is_file(), "{name}");
    }
    let curves = fs::read_to_string(run.join("eigencurves.csv")).unwrap();
    assert!(curves.lines().skip(1).all(|l| l.starts_with("2.5")), "no rows at eps = 0");
    assert!(fs::read_to_string(run.join("plot_eigencurves.py")).unwrap().contains("tab:red"));
}

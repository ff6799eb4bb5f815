use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_covpov"))
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).env_remove("COVPOV_TOL_SCALE").output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

const TRIVIAL: &str = r#"{
  "name": "trivial_time",
  "state_grid": {"dim": "time1", "energy": {"min": 0.5, "max": 8.5, "n": 64}},
  "state": {"family": "gaussian_energy", "center": 4.5, "width": 0.4},
  "kernel": {"kind": "trivial"},
  "spacetime": {"dim": "time1", "samples": 128},
  "outputs": {"regions": [{"name": "late", "region": {"boxes": [{"lo": [50.0], "hi": [500.0]}]}}]}
}"#;

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("scenario.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn reference_time_run_writes_density_and_moments() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&["run", "--scenario", scenario("d1_reference.json").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(out.join("density.csv")).unwrap();
    assert!(csv.starts_with("t,rho\n"));
    assert_eq!(csv.lines().count(), 257);
    let moments: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("moments.json")).unwrap()).unwrap();
    assert!((moments["total"].as_f64().unwrap() - 1.0).abs() <= 1e-8);
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("manifest-run.json")).unwrap()).unwrap();
    let names: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    for f in ["kernel.json", "density.csv", "moments.json", "probability.json", "tau.json", "verify.json"] {
        assert!(names.contains(&f), "{f} missing from {names:?}");
    }
}

#[test]
fn same_scenario_twice_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let s = scenario("d1_reference.json");
    for d in ["a", "b"] {
        let out = tmp.path().join(d);
        assert!(run(&["run", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap(), "--threads", "2"])
            .status
            .success());
    }
    let mut names: Vec<_> = std::fs::read_dir(tmp.path().join("a")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6);
    for n in names {
        let a = std::fs::read(tmp.path().join("a").join(&n)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(&n)).unwrap();
        assert_eq!(a, b, "{n:?} differs");
    }
    // A rerun into a populated directory with the same result is accepted.
    let out = tmp.path().join("a");
    assert!(run(&["run", "--scenario", s.to_str().unwrap(), "--out", out.to_str().unwrap()]).status.success());
}

#[test]
fn missing_grid_is_a_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let body = TRIVIAL.replace(r#""spacetime": {"dim": "time1", "samples": 128},"#, "");
    let p = write_scenario(tmp.path(), &body);
    let o = run(&["density", "--scenario", p.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("spacetime"), "{}", text(&o.stderr));
}

#[test]
fn unreadable_scenario_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["density", "--scenario", "/nonexistent/s.json", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn conflicting_output_is_never_overwritten() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_scenario(tmp.path(), TRIVIAL);
    let out = tmp.path().join("o");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("density.csv"), "stale\n").unwrap();
    let o = run(&["density", "--scenario", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(std::fs::read_to_string(out.join("density.csv")).unwrap(), "stale\n");
}

#[test]
fn trivial_kernel_validates_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_scenario(tmp.path(), TRIVIAL);
    let o = run(&["validate-kernel", "--scenario", p.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(text(&o.stdout).trim(), "PASS max|G-I|=0");
}

#[test]
fn probability_outside_the_box_is_clipped_with_a_warning() {
    let tmp = tempfile::tempdir().unwrap();
    let p = write_scenario(tmp.path(), TRIVIAL);
    let out = tmp.path().join("o");
    let o = run(&["probability", "--scenario", p.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(text(&o.stderr).contains("clipped"));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("probability.json")).unwrap()).unwrap();
    assert_eq!(v[0]["clipped"], serde_json::Value::Bool(true));
    assert!(v[0]["probability"].as_f64().unwrap() >= 0.0);
}

#[test]
fn dmatrix_table_matches_the_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    let o = run(&["dmatrix-table", "--q", "1", "--l-max", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(out.join("dmatrix.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("l,zeta,re_d,im_d,oracle_residual"));
    let mut rows = 0;
    for line in lines {
        let res: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(res < 1e-8, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 25 * 5);
}

#[test]
fn tightened_tolerances_fail_the_battery() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("v");
    let o = bin()
        .args(["verify-suite", "--scenario", scenario("d1_reference.json").to_str().unwrap(), "--out", out.to_str().unwrap()])
        .env("COVPOV_TOL_SCALE", "1e-12")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", text(&o.stdout));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], serde_json::Value::Bool(false));
    let fresh = tmp.path().join("w");
    let bad = bin()
        .args(["verify-suite", "--scenario", scenario("d1_reference.json").to_str().unwrap(), "--out", fresh.to_str().unwrap()])
        .env("COVPOV_TOL_SCALE", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

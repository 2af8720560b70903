use std::path::Path;
use std::process::{Command, Output};

use capflow_cli::output::to_json;
use capflow_core::conformal::FlowSpec;
use capflow_core::functionals::{energy, monotonicity_trace, TraceOptions};
use capflow_core::surface::builtin::half_clifford_torus;
use serde_json::Value;

fn capflow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capflow")).args(args).current_dir(dir).output().expect("binary runs")
}

fn capflow_env(args: &[&str], dir: &Path, workers: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capflow"))
        .args(args)
        .current_dir(dir)
        .env("CAPFLOW_WORKERS", workers)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const FLOW: [&str; 11] =
    ["flow", "--surface", "half-clifford", "--a", "0,1,0,0", "--tmax", "1", "--steps", "50", "--out", "trace.csv"];

#[test]
fn flow_trace_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = capflow(&FLOW, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(text.ends_with('\n'));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,R_t,area,wet,boundary,E,monotone_quantity,slope_flag"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 51);
    assert!(rows.iter().all(|r| r.len() == 8 && r[7] == "0"));

    // Values carry 17 significant digits and re-parse to the library's bits.
    let spec = FlowSpec::from_slice(&[0.0, 1.0, 0.0, 0.0]).unwrap();
    let times: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
    let trace = monotonicity_trace(&half_clifford_torus(), &spec, &times, &TraceOptions::default()).unwrap();
    for (row, (t, q)) in rows.iter().zip(times.iter().zip(&trace.quantity)) {
        assert_eq!(row[0].parse::<f64>().unwrap().to_bits(), t.to_bits());
        assert_eq!(row[6].parse::<f64>().unwrap().to_bits(), q.to_bits());
        let mantissa = row[6].split('e').next().unwrap().replace(['-', '.'], "");
        assert_eq!(mantissa.len(), 17, "{}", row[6]);
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "flow",
        "--surface",
        "half-equator",
        "--params",
        "1.5707963267948966,1.0",
        "--a",
        "0.3,0.5,-0.2,0.1",
        "--steps",
        "6",
    ];
    let a = capflow_env(&args, dir.path(), "1");
    let b = capflow_env(&args, dir.path(), "1");
    let c = capflow_env(&args, dir.path(), "3");
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let args = ["dual", "--surface", "half-clifford", "--trials", "3"];
    assert_eq!(capflow(&args, dir.path()).stdout, capflow(&args, dir.path()).stdout);
}

#[test]
fn index_report_of_half_clifford() {
    let dir = tempfile::tempdir().unwrap();
    let o = capflow(&["index", "--surface", "half-clifford", "--flavor", "morse", "--h", "0.05"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["ind"], 4);
    assert_eq!(v["a"].as_u64().unwrap() + v["b"].as_u64().unwrap(), v["ind_robin"].as_u64().unwrap());
    for key in
        ["surface", "flavor", "eigen_summary", "dichotomy_branch", "boundary_integral_qA", "consistent_with_theorems"]
    {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v["consistent_with_theorems"].as_array().unwrap().iter().all(|b| b == true));
}

#[test]
fn spectrum_with_side_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = capflow(
        &[
            "spectrum",
            "--surface",
            "half-equator",
            "--h",
            "0.1",
            "--count",
            "6",
            "--out",
            "s.json",
            "--eigenfunctions",
            "phi.csv",
            "--mesh-out",
            "mesh.txt",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(v["kind"], "robin");
    let ev: Vec<f64> = v["eigenvalues"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(ev.len(), 6);
    assert!((ev[0] + 2.0).abs() < 0.1, "{ev:?}");
    assert_eq!(v["counts"]["negative"], 1);
    assert!(v["zero_tol"].as_f64().unwrap() > 0.0);
    let phi = std::fs::read_to_string(dir.path().join("phi.csv")).unwrap();
    assert!(phi.starts_with("vertex,phi0,phi1"));
    let mesh = std::fs::read_to_string(dir.path().join("mesh.txt")).unwrap();
    assert!(mesh.lines().any(|l| l.starts_with("v ")) && mesh.lines().any(|l| l.starts_with("be ")));
}

#[test]
fn energy_dual_and_limit_reports() {
    let dir = tempfile::tempdir().unwrap();
    let o = capflow(
        &["energy", "--surface", "half-equator", "--params", "1.5707963267948966,1.0471975511965976"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["blowup"]["holds"].as_bool().unwrap());
    let o = capflow(&["dual", "--surface", "half-clifford", "--trials", "5"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["dual"]["epsilon"].as_f64(), Some(-1.0));
    assert!(v["identities"]["morse_residual"].as_f64().unwrap() < 1e-4);
    let o = capflow(&["limit", "--radii", "0.2,0.1,0.05"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["rows"].as_array().unwrap().len(), 3);
    assert!((v["area_order"].as_f64().unwrap() - 2.0).abs() < 0.1);
}

#[test]
fn verify_conformal_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = capflow(&["verify", "--suite", "conformal"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn config_file_and_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"command": "flow", "surface": {"name": "half-clifford"},
            "flow": {"a": [0, 0, 1, 0], "t_max": 0.5, "steps": 10},
            "outputs": {"out": "from_file.csv"}}"#,
    )
    .unwrap();
    let o = capflow(&["run", "--config", "cfg.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("from_file.csv")).unwrap();
    assert_eq!(text.lines().count(), 12);
    assert!(text.lines().last().unwrap().starts_with("5.0000000000000000e-1,"));

    let o = capflow(&["flow", "--config", "cfg.json", "--steps", "4", "--out", "flags.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(dir.path().join("flags.csv")).unwrap();
    assert_eq!(text.lines().count(), 6);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(capflow(&["flow", "--bogus"], d).status.code(), Some(2));
    assert_eq!(capflow(&["flow", "--surface", "nope", "--a", "0,1,0,0"], d).status.code(), Some(2));
    assert_eq!(
        capflow(&["flow", "--surface", "half-clifford", "--a", "0,1,0,0", "--steps", "1"], d).status.code(),
        Some(2)
    );
    assert_eq!(
        capflow(&["flow", "--surface", "half-clifford", "--a", "0,1,0,0", "--out", "missing/x.csv"], d).status.code(),
        Some(2)
    );
    std::fs::write(d.join("bad.json"), "{not json").unwrap();
    assert_eq!(capflow(&["run", "--config", "bad.json"], d).status.code(), Some(2));
    let o = capflow(&["dual", "--surface", "half-equator"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("index_lab"), "{}", stderr(&o));

    // A zero slope tolerance flags rounding-level increases of a conformally invariant energy.
    let strict = [
        "flow",
        "--surface",
        "disc-in-ball",
        "--params",
        "1.0,0.3,0,0",
        "--a",
        "0,0,1,0",
        "--c-h",
        "0",
        "--steps",
        "4",
        "--slope-tol",
        "0",
    ];
    let o = capflow(&strict, d);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("invariant violation"));
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.lines().skip(1).any(|l| l.ends_with(",1")));
    let mut lenient = strict.to_vec();
    lenient.push("--no-fatal");
    assert_eq!(capflow(&lenient, d).status.code(), Some(0));
}

#[test]
fn report_round_trip() {
    let e = energy(&half_clifford_torus()).unwrap();
    let text = to_json(&e);
    let parsed: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, serde_json::to_value(&e).unwrap());
    assert_eq!(parsed["area"].as_f64().unwrap().to_bits(), e.area.to_bits());
}

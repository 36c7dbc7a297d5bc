use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn capband(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capband")).args(args).output().unwrap()
}

fn capband_threads(args: &[&str], threads: usize) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capband"))
        .args(args)
        .env("RAYON_NUM_THREADS", threads.to_string())
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Key skeleton: objects keep their keys, arrays collapse to their first element, leaves become null.
fn skeleton(v: &Value) -> Value {
    match v {
        Value::Object(m) => Value::Object(m.iter().map(|(k, v)| (k.clone(), skeleton(v))).collect()),
        Value::Array(a) => Value::Array(a.first().map(skeleton).into_iter().collect()),
        _ => Value::Null,
    }
}

fn assert_golden(name: &str, v: &Value) {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(format!("{name}.json"));
    let got = skeleton(v);
    if std::env::var_os("CAPBAND_BLESS").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(&got).unwrap() + "\n").unwrap();
    }
    let want: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(got, want, "schema of {name} changed");
}

#[test]
fn solve_hemisphere() {
    let out = capband(&["solve", "--r", "1.5707963", "--tol", "1e-10"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!((v["a"].as_f64().unwrap() - 0.612372).abs() < 1e-6);
    assert_eq!(v["method"], "shooting-refined");
    assert_golden("cap_params", &v);
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["solve", "--r", "0"],
        vec!["solve", "--r", "-1"],
        vec!["solve", "--r", "1.6"],
        vec!["solve"],
        vec!["solve", "--r", "pi"],
        vec!["mesh", "--r", "1.2", "--projection", "ortho"],
        vec!["verify", "--r", "0.7", "--ns", "8"],
        vec!["verify", "--r", "0.7", "--ntheta", "33"],
        vec!["spectrum", "--r", "0.7", "--kmax", "2"],
        vec!["frobnicate"],
        vec![],
        vec!["verify", "--params", "/nonexistent/params.json"],
    ] {
        let out = capband(&args);
        assert_eq!(
            out.status.code(),
            Some(1),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn help_exits_zero() {
    assert_eq!(capband(&["--help"]).status.code(), Some(0));
}

#[test]
fn numerical_failure_exits_two_with_diagnostic() {
    let out = capband(&["index", "--r", "1.5707963267948966", "--ns", "32", "--ntheta", "32"]);
    assert_eq!(out.status.code(), Some(2));
    let diag: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(diag["error"], "Inadmissible");
    assert!(out.stdout.is_empty());
}

#[test]
fn rejected_verify_still_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.json");
    let out = capband(&["solve", "--r", "0.6", "--out", params.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let mut p: Value = serde_json::from_str(&std::fs::read_to_string(&params).unwrap()).unwrap();
    p["s_r"] = (p["s_r"].as_f64().unwrap() * 1.01).into();
    std::fs::write(&params, p.to_string()).unwrap();
    let out = capband(&[
        "verify",
        "--params",
        params.to_str().unwrap(),
        "--ns",
        "32",
        "--ntheta",
        "32",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let report = stdout_json(&out);
    assert_eq!(report["pass"], false);
    let failing: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false && c["informational"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(failing.contains(&"free_boundary_defect"), "{failing:?}");
}

#[test]
fn params_file_must_agree_with_r() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("p.json");
    capband(&["solve", "--r", "0.6", "--out", params.to_str().unwrap()]);
    let out = capband(&["spectrum", "--r", "0.7", "--params", params.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = capband(&["spectrum", "--params", params.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn verify_quarter_turn() {
    let out = capband(&["verify", "--r", "0.7853982", "--ns", "128", "--ntheta", "128"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["pass"], true);
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["config"]["n_s"], 128);
    for c in v["checks"].as_array().unwrap() {
        assert!(
            c["value"].is_number() || c["note"].as_str().unwrap().starts_with("skipped"),
            "{c}"
        );
    }
    assert_golden("verify_report", &v);
    assert_golden("geometry_report", &v["geometry"]);
}

#[test]
fn spectrum_quarter_turn() {
    let out = capband(&["spectrum", "--r", "0.7853982", "--kmax", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let lines = v["lines"].as_array().unwrap();
    assert_eq!(lines.len(), 9);
    let sigma = |k: u64| lines.iter().find(|l| l["k"] == k).unwrap()["sigma"].as_f64().unwrap();
    assert!((sigma(0) + 1.0).abs() < 1e-6);
    assert!((sigma(1) - 1.0).abs() < 1e-6);
    assert!((sigma(2) - 1.0).abs() < 1e-6);
    let sorted: Vec<f64> = lines.iter().map(|l| l["sigma"].as_f64().unwrap()).collect();
    assert!(sorted.windows(2).all(|w| w[0] <= w[1]));
    assert_golden("spectrum_report", &v);
}

#[test]
fn index_report_schema() {
    let out = capband(&["index", "--r", "0.6", "--ns", "64", "--ntheta", "64"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["gram"]["matrix"].as_array().unwrap().len(), 16);
    assert_eq!(v["gram"]["negative_definite"], true);
    assert_golden("stability_report", &v);
}

#[test]
fn mesh_vertex_count() {
    let dir = tempfile::tempdir().unwrap();
    for proj in ["drop0", "stereo"] {
        let path = dir.path().join(format!("band-{proj}.obj"));
        let out = capband(&[
            "mesh",
            "--r",
            "1.2",
            "--projection",
            proj,
            "--ns",
            "40",
            "--ntheta",
            "24",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
        let obj = std::fs::read_to_string(&path).unwrap();
        assert_eq!(obj.lines().filter(|l| l.starts_with("v ")).count(), 40 * 24);
        assert_eq!(obj.lines().filter(|l| l.starts_with("f ")).count(), 2 * 39 * 24);
        assert!(obj.starts_with('#'));
    }
}

#[test]
fn trace_csv_schema() {
    let out = capband(&["trace", "--r", "0.6"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "s,y,dy,z,dz,x,dx,rho,H1,H2");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|t| t.parse().unwrap()).collect())
        .collect();
    assert!(rows.len() > 10);
    assert!(rows.iter().all(|r| r.len() == 10));
    let last = rows.last().unwrap();
    assert!((last[5] - 0.6f64.cos()).abs() < 1e-10);
}

#[test]
fn outputs_are_deterministic_across_threads() {
    let cases: [&[&str]; 4] = [
        &["verify", "--r", "1.2", "--ns", "48", "--ntheta", "32"],
        &["index", "--r", "0.9", "--ns", "48", "--ntheta", "32"],
        &["trace", "--r", "0.9"],
        &[
            "mesh",
            "--r",
            "0.9",
            "--ns",
            "24",
            "--ntheta",
            "16",
            "--projection",
            "stereo",
        ],
    ];
    for args in cases {
        let reference = capband_threads(args, 1).stdout;
        assert!(!reference.is_empty());
        for threads in [1, 2, 7] {
            assert_eq!(
                capband_threads(args, threads).stdout,
                reference,
                "{args:?} with {threads} threads"
            );
        }
    }
}

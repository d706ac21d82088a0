use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn ball_config(h: f64) -> Value {
    json!({
        "params": {"a": 1.0, "k": 1},
        "domain": {"type": "ball", "center": [0.0], "radius": 1.0},
        "grid": {"h": h}
    })
}

fn ellipsoid_config(h: f64) -> Value {
    json!({
        "params": {"a": 1.0, "k": 1},
        "domain": {"type": "ellipsoid", "center": [0.0], "semi_axes": [1.0, 2.0]},
        "grid": {"h": h}
    })
}

fn write_config(dir: &Path, cfg: &Value) -> String {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_weinstein")).args(args).output().unwrap()
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn verify_on_ball_passes() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &ball_config(1.0 / 32.0));
    let out = tmp.path().join("out");
    let o = run(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["u.csv", "report.json", "residuals.csv"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let r = report(&out);
    assert_eq!(r["converged"], json!(true));
    assert_eq!(r["all_pass"], json!(true));
    // the config round-trips through the report
    assert_eq!(r["config"]["params"], ball_config(1.0 / 32.0)["params"]);
    assert_eq!(r["config"]["domain"], ball_config(1.0 / 32.0)["domain"]);
    assert_eq!(r["config"]["grid"]["h"], json!(1.0 / 32.0));
    let again = tmp.path().join("again.json");
    fs::write(&again, serde_json::to_string(&r["config"]).unwrap()).unwrap();
    let out2 = tmp.path().join("out2");
    let o = run(&["verify", "--config", again.to_str().unwrap(), "--out", out2.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    // residual table is byte-identical between runs
    assert_eq!(fs::read(out.join("residuals.csv")).unwrap(), fs::read(out2.join("residuals.csv")).unwrap());
}

#[test]
fn verify_on_ellipsoid_fails_checks() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &ellipsoid_config(1.0 / 16.0));
    let out = tmp.path().join("out");
    let o = run(&["verify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["converged"], json!(true));
    assert_eq!(r["all_pass"], json!(false));
    let csv = fs::read_to_string(out.join("residuals.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("serrin_constancy,") && l.ends_with(",false")), "{csv}");
}

#[test]
fn solve_does_not_fail_on_checks() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &ellipsoid_config(1.0 / 16.0));
    let out = tmp.path().join("out");
    let o = run(&["solve", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("u.csv").is_file());
}

#[test]
fn bad_config_exits_2_without_output() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let mut bad = ball_config(1.0 / 16.0);
    bad["params"]["a"] = json!(-1.0);
    let cases = [
        "{ not json".to_owned(),
        json!({"params": {"a": 1.0, "k": 1}}).to_string(),
        bad.to_string(),
        {
            let mut v = ball_config(1.0 / 16.0);
            v["surprise"] = json!(1);
            v.to_string()
        },
    ];
    for text in cases {
        let path = tmp.path().join("bad.json");
        fs::write(&path, &text).unwrap();
        let o = run(&["verify", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        assert!(!out.exists(), "{text}");
    }
    let o = run(&["verify", "--config", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn solver_failure_exits_3_with_best_iterate() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = ball_config(1.0 / 32.0);
    cfg["solver"] = json!({"tol": 1e-10, "max_iter": 1});
    let path = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let o = run(&["verify", "--config", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let r = report(&out);
    assert_eq!(r["converged"], json!(false));
    assert!(r["error"].as_str().unwrap().contains("converge"));
    let u = fs::read_to_string(out.join("u.csv")).unwrap();
    assert!(u.lines().count() > 100);
}

#[test]
fn empty_check_list() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = ball_config(1.0 / 16.0);
    cfg["checks"] = json!([]);
    let path = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let o = run(&["verify", "--config", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = report(&out);
    assert_eq!(r["report"]["checks"], json!([]));
    assert_eq!(fs::read_to_string(out.join("residuals.csv")).unwrap(), "check,value,tolerance,pass\n");
}

#[test]
fn sweep_over_a_on_the_ball() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &ball_config(1.0 / 32.0));
    let out = tmp.path().join("sweep");
    let o = run(&["sweep", "--config", &path, "--out", out.to_str().unwrap(), "--param", "params.a", "--values", "0.5,1,2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(out.join("sweep_summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(
        lines.next().unwrap(),
        "value,serrin_defect,p_constancy_deviation,p_integral,max_error_vs_explicit,converged,all_pass"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 3);
    for (row, a) in rows.iter().zip(["0.5", "1", "2"]) {
        assert_eq!(row[0].parse::<f64>().unwrap(), a.parse::<f64>().unwrap());
        assert!(row[1].parse::<f64>().unwrap() <= 1e-2);
        assert_eq!(&row[5..], ["true", "true"]);
    }
    for i in 0..3 {
        let run_dir = out.join(format!("run_{i:03}"));
        assert!(run_dir.join("report.json").is_file());
        assert_eq!(
            report(&run_dir)["config"]["params"]["a"].as_f64().unwrap(),
            [0.5, 1.0, 2.0][i]
        );
    }
}

#[test]
fn sweep_rejects_bad_values() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), &ball_config(1.0 / 16.0));
    let out = tmp.path().join("sweep");
    for (param, values) in [("params.a", ""), ("params.a", "x"), ("params.nope", "1"), ("params.a", "-1")] {
        let o = run(&["sweep", "--config", &path, "--out", out.to_str().unwrap(), "--param", param, "--values", values]);
        assert_eq!(o.status.code(), Some(2), "{param}={values}");
    }
}

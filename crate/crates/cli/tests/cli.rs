use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use padic_heat::oracle::{brute_force_z, LatticeSpec};
use padic_heat::{HomogeneousPolynomial, KernelEvaluator, PAdicVector, Prime};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_padic-heat");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .current_dir(dir)
        .args(args)
        .env_remove("PADIC_HEAT_MAX_POINTS")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const S3: &str = r#"{"symbol": {"prime": 3, "dim": 2, "degree": 2,
  "terms": [{"exponents": [2, 0], "coefficient": 1}, {"exponents": [0, 2], "coefficient": 3}]}}"#;

#[test]
fn certify_exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "s3.json", S3);
    let o = run(d.path(), &["certify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["status"], "elliptic");
    assert_eq!(report["c0_log_p"], -1);
    assert_eq!(report["c1_log_p"], 0);
    assert_eq!(report["modulus_exponent"], 1);

    let hyp = write(
        d.path(),
        "hyp.json",
        r#"{"symbol": {"prime": 3, "dim": 2, "degree": 2,
        "terms": [{"exponents": [2, 0], "coefficient": 1}, {"exponents": [0, 2], "coefficient": -1}]}}"#,
    );
    let o = run(d.path(), &["certify", "--config", &hyp]);
    assert_eq!(o.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["status"], "not_elliptic");
    assert!(report["witness"].is_array());

    // ξ₁² − 2ξ₂² is anisotropic over Q_7 only through arbitrarily deep classes.
    let deep = write(
        d.path(),
        "deep.json",
        r#"{"symbol": {"prime": 7, "dim": 2, "degree": 2,
        "terms": [{"exponents": [2, 0], "coefficient": 1}, {"exponents": [0, 2], "coefficient": -2}]},
        "caps": {"depth_cap": 4}}"#,
    );
    let o = run(d.path(), &["certify", "--config", &deep]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn malformed_coefficient_reports_field_and_line() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "bad.json",
        "{\n  \"symbol\": {\n    \"terms\": [{\"exponents\": [1], \"coefficient\": 1.5}]\n  }\n}\n",
    );
    let o = run(d.path(), &["certify", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("symbol.terms[0].coefficient") && e.contains("line 3"), "{e}");
}

#[test]
fn kernel_table_matches_oracle() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "k.json",
        r#"{"symbol": {"prime": 2, "dim": 1, "degree": 2, "terms": [{"exponents": [2], "coefficient": 1}]},
        "beta": 0.5, "times": [0.25, 1, 4], "points": [["0;0"], ["1;0"], ["1 1;-2"], ["1;3"]]}"#,
    );
    let o = run(d.path(), &["kernel", "--config", &cfg, "--tol", "1e-10"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let p = Prime::new(2).unwrap();
    let f = HomogeneousPolynomial::new(p, 1, 2, [(vec![2], 1)]).unwrap();
    let ev = KernelEvaluator::certified(f.clone(), 0.5).unwrap();
    let mut reader = csv::Reader::from_path(d.path().join("out/kernel.csv")).unwrap();
    assert_eq!(
        reader.headers().unwrap().iter().collect::<Vec<_>>(),
        ["x1", "t", "re", "im", "truncation_bound"]
    );
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        let x = PAdicVector::parse_digit_strings(p, &[&rec[0]]).unwrap();
        let t: f64 = rec[1].parse().unwrap();
        let re: f64 = rec[2].parse().unwrap();
        let top = ev.eval_z(&x, t, 1e-10).unwrap().shells_used.1;
        let o = brute_force_z(&f, 0.5, &x, t, LatticeSpec { outer: top, depth: 90 }).unwrap();
        assert!((re - o.value.re).abs() <= 1e-8, "x={x} t={t}: {re} vs {}", o.value.re);
        rows += 1;
    }
    assert_eq!(rows, 12);
    let json: Value = serde_json::from_str(&fs::read_to_string(d.path().join("out/kernel.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 12);
}

#[test]
fn kernel_rejects_empty_grid_and_zero_time() {
    let d = tempfile::tempdir().unwrap();
    let empty = write(d.path(), "e.json", r#"{"points": []}"#);
    let o = run(d.path(), &["kernel", "--config", &empty]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("empty"));
    let zero = write(d.path(), "z.json", r#"{"times": [1, 0]}"#);
    let o = run(d.path(), &["kernel", "--config", &zero]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("t > 0"), "{}", stderr(&o));
}

fn solution_rows(dir: &Path) -> Vec<Value> {
    let v: Value = serde_json::from_str(&fs::read_to_string(dir.join("out/solution.json")).unwrap()).unwrap();
    v["rows"].as_array().unwrap().clone()
}

#[test]
fn solve_ball_indicator_and_initial_rows() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(
        d.path(),
        "s.json",
        r#"{"times": [0, 0.5, 2], "points": [["0;0"], ["1;-1"], ["1;2"]],
        "initial_data": [{"center": ["0;0"], "radius_exponent": 0, "re": 1}]}"#,
    );
    let o = run(d.path(), &["solve", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for r in solution_rows(d.path()) {
        let (re, bound) = (r["re"].as_f64().unwrap(), r["truncation_bound"].as_f64().unwrap());
        assert!(re >= -bound && re <= 1.0 + bound, "{r}");
        assert!(r["max_principle_margin"].as_f64().unwrap() >= -1e-8);
        if r["t"].as_f64().unwrap() == 0.0 {
            let inside = r["x"][0] != "1;-1";
            assert_eq!(re, if inside { 1.0 } else { 0.0 }, "{r}");
        }
    }
    let header = fs::read_to_string(d.path().join("out/solution.csv")).unwrap();
    assert!(header.starts_with("x1,t,re,im,truncation_bound,max_principle_margin\n"));
}

#[test]
fn solve_zero_datum_gives_zero_table() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "z.json", r#"{"times": [0.5, 1]}"#);
    let o = run(d.path(), &["solve", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = solution_rows(d.path());
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["re"] == 0.0 && r["im"] == 0.0));
}

#[test]
fn simulate_is_reproducible() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "m.json", &S3.replace("}}", "}, \"simulate\": {\"steps\": 2, \"paths\": 3000}}"));
    let a = run(d.path(), &["simulate", "--config", &cfg, "--seed", "11", "--out", "a"]);
    let b = run(d.path(), &["simulate", "--config", &cfg, "--seed", "11", "--out", "b", "--jobs", "1"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(b.status.code(), Some(0));
    for f in ["paths.jsonl", "histogram.csv", "chi_square.json", "effective_config.json"] {
        let x = fs::read(d.path().join("a").join(f)).unwrap();
        let y = fs::read(d.path().join("b").join(f)).unwrap();
        if f == "effective_config.json" {
            assert_ne!(x, y, "output dir and jobs differ");
        } else {
            assert_eq!(x, y, "{f}");
        }
    }
    let lines = fs::read_to_string(d.path().join("a/paths.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 6000);
    let first: Value = serde_json::from_str(lines.lines().next().unwrap()).unwrap();
    for k in ["step", "increment_digits", "position_digits", "radius_exponent"] {
        assert!(first.get(k).is_some(), "{k}");
    }
    let chi: Value = serde_json::from_str(&fs::read_to_string(d.path().join("a/chi_square.json")).unwrap()).unwrap();
    assert_eq!(chi["passes"], true, "{chi}");
}

#[test]
fn simulate_rejects_zero_steps() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "m.json", r#"{"simulate": {"steps": 0}}"#);
    let o = run(d.path(), &["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("steps"));
}

#[test]
fn effective_config_reproduces_the_run() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "k.json", r#"{"beta": 2, "times": [0.5], "tol": 1e-11}"#);
    let a = run(d.path(), &["kernel", "--config", &cfg, "--out", "a", "--seed", "5"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let eff = d.path().join("a/effective_config.json");
    let b = run(d.path(), &["kernel", "--config", eff.to_str().unwrap(), "--out", "b"]);
    assert_eq!(b.status.code(), Some(0), "{}", stderr(&b));
    for f in ["kernel.csv", "kernel.json"] {
        assert_eq!(fs::read(d.path().join("a").join(f)).unwrap(), fs::read(d.path().join("b").join(f)).unwrap());
    }
    let mut a_cfg: Value = serde_json::from_slice(&fs::read(&eff).unwrap()).unwrap();
    let b_cfg: Value = serde_json::from_slice(&fs::read(d.path().join("b/effective_config.json")).unwrap()).unwrap();
    a_cfg["output"]["dir"] = Value::from("b");
    assert_eq!(a_cfg, b_cfg);
    let cfg_val: Value = serde_json::from_slice(&fs::read(&eff).unwrap()).unwrap();
    assert_eq!(cfg_val["seed"], 5);
    assert_eq!(cfg_val["ball_grid"]["center"], serde_json::json!(["0;0"]));
}

#[test]
fn max_points_env_caps_enumeration() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write(d.path(), "g.json", r#"{"ball_grid": {"radius_exponent": 0, "depth": 12}}"#);
    let o = Command::new(BIN)
        .current_dir(d.path())
        .args(["kernel", "--config", &cfg])
        .env("PADIC_HEAT_MAX_POINTS", "100")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("100"), "{}", stderr(&o));
}

#[test]
fn verify_checks_and_fault_injection() {
    let d = tempfile::tempdir().unwrap();
    let o = run(d.path(), &["verify", "--check", "nonexistent"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown check"));

    let o = run(d.path(), &["verify", "--check", "certification", "--check", "normalization"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let verdicts: Vec<Value> = String::from_utf8_lossy(&o.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(verdicts.len(), 2);
    assert!(verdicts.iter().all(|v| v["passed"] == true));

    let o = run(d.path(), &["verify", "--check", "normalization", "--corrupt-certificate", "--out", "bad"]);
    assert_eq!(o.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["name"], "normalization");
    assert_eq!(v["passed"], false);
    assert!(d.path().join("bad/verify.json").exists());
}

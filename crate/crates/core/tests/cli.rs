//! End-to-end runs of the command-line tool.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wolfbench"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("spawn wolfbench")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

fn schema_check(report: &Value) {
    let schema_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/eval_report.schema.json");
    let schema = json(&std::fs::read_to_string(schema_path).unwrap());
    let validator = jsonschema::validator_for(&schema).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

fn tiny(dir: &Path) {
    ok(dir, &["scenario", "tiny", "--out", "tiny.json"]);
}

#[test]
fn gen_is_deterministic_and_validates() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    ok(p, &["gen", "--n", "2", "--len", "2", "--noise", "iid:0.1", "--seed", "7", "--out", "a.json"]);
    ok(p, &["gen", "--n", "2", "--len", "2", "--noise", "iid:0.1", "--seed", "7", "--out", "b.json"]);
    assert_eq!(std::fs::read(p.join("a.json")).unwrap(), std::fs::read(p.join("b.json")).unwrap());
    assert_eq!(code(p, &["gen", "--n", "2", "--len", "2", "--noise", "iid:0.9", "--seed", "7"]), 2);
    assert_eq!(code(p, &["gen", "--n", "1", "--len", "2", "--noise", "iid:0.1"]), 2);
    assert_eq!(code(p, &["gen", "--n", "2", "--len", "2", "--noise", "bogus"]), 2);
}

#[test]
fn eval_tiny_world_matches_oracle_and_schema() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    tiny(p);
    let r = json(&ok(p, &["eval", "--pop", "tiny.json", "--policy", "fixed:1"]));
    schema_check(&r);
    let close = |v: &Value, x: f64| (v.as_f64().unwrap() - x).abs() < 1e-12;
    assert!(close(&r["frr"], 0.45));
    assert!(close(&r["far"], 0.0));
    assert!(close(&r["ar"], 0.275));
    assert!(close(&r["wap"]["value"], 0.35));
    assert_eq!(r["wap"]["probe_hex"], "0");
    assert!(r["lemma1_max_residual"].as_f64().unwrap() <= 1e-12);
    assert!(close(&r["per_user"]["1"]["frr_u"], 0.42));

    let g = json(&ok(p, &["eval", "--pop", "tiny.json", "--policy", "general:0.5"]));
    schema_check(&g);
    assert!(g["wap"]["value"].as_f64().unwrap() < 0.5);

    let mc = json(&ok(p, &["eval", "--pop", "tiny.json", "--policy", "fixed:1", "--mode", "mc", "--samples", "20000", "--budget", "2000"]));
    schema_check(&mc);
}

#[test]
fn eval_error_exit_codes() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    tiny(p);
    assert_eq!(code(p, &["eval", "--pop", "missing.json", "--policy", "fixed:1"]), 2);
    assert_eq!(code(p, &["eval", "--pop", "tiny.json", "--policy", "fixed:-1"]), 2);
    assert_eq!(code(p, &["eval", "--pop", "tiny.json", "--policy", "daugman:-0.3"]), 2);
    assert_eq!(code(p, &["calibrate", "--pop", "tiny.json", "--policy", "fixed:1"]), 3);
    ok(p, &["gen", "--n", "2", "--len", "21", "--noise", "iid:0.1", "--out", "big.json"]);
    assert_eq!(code(p, &["eval", "--pop", "big.json", "--policy", "fixed:3"]), 4);
    assert_eq!(code(p, &["calibrate", "--pop", "big.json", "--policy", "general:0.1"]), 4);
    std::fs::write(p.join("broken.json"), "{\"version\": 1, \"space\"").unwrap();
    assert_eq!(code(p, &["eval", "--pop", "broken.json", "--policy", "fixed:1"]), 2);
}

#[test]
fn calibration_file_and_replay() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    tiny(p);
    ok(p, &["calibrate", "--pop", "tiny.json", "--policy", "general:0.5", "--out", "cal.json"]);
    let cal = json(&std::fs::read_to_string(p.join("cal.json")).unwrap());
    assert_eq!(cal["entries"].as_object().unwrap().len(), 4);
    ok(p, &["eval", "--pop", "tiny.json", "--calibration", "cal.json", "--out", "r.json"]);
    assert_eq!(code(p, &["replay", "r.json"]), 0);
    assert_eq!(
        code(p, &["eval", "--pop", "tiny.json", "--calibration", "cal.json", "--policy", "general:0.25"]),
        2
    );
    // a report whose numbers were edited no longer replays
    let text = std::fs::read_to_string(p.join("r.json")).unwrap();
    std::fs::write(p.join("edited.json"), text.replace("\"ar\": 0.", "\"ar\": 0.0")).unwrap();
    assert_eq!(code(p, &["replay", "edited.json"]), 1);
}

#[test]
fn monte_carlo_reports_do_not_depend_on_jobs() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    ok(p, &["gen", "--n", "4", "--len", "24", "--noise", "iid:0.05..0.2", "--seed", "3", "--out", "pop.json"]);
    let args = |jobs: &'static str| {
        vec!["--jobs", jobs, "eval", "--pop", "pop.json", "--policy", "fixed:6", "--mode", "mc",
             "--samples", "30000", "--seed", "9", "--budget", "500", "--restarts", "3"]
    };
    let one = ok(p, &args("1"));
    let three = ok(p, &args("3"));
    assert_eq!(one, three);
    std::fs::write(p.join("mc.json"), &one).unwrap();
    assert_eq!(code(p, &["--jobs", "2", "replay", "mc.json"]), 0);
}

#[test]
fn wolf_command() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    tiny(p);
    let w = json(&ok(p, &["wolf", "--pop", "tiny.json", "--policy", "fixed:1", "--delta", "0.3"]));
    let c = &w["certificate"];
    assert_eq!(c["probe"], "0");
    assert_eq!(
        c["is_wolf"].as_bool().unwrap(),
        c["ar_w"]["value"].as_f64().unwrap() > c["ar_baseline"]["value"].as_f64().unwrap()
    );
    assert_eq!(w["delta_security"]["secure"], false);
    let mc = ["wolf", "--pop", "tiny.json", "--policy", "fixed:1", "--mode", "mc", "--seed", "5", "--budget", "5000"];
    let a = ok(p, &mc);
    assert_eq!(a, ok(p, &mc));
    assert_eq!(json(&a)["certificate"]["probe"], "0");
}

#[test]
fn sweeps() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    tiny(p);
    let csv = ok(p, &["sweep", "--pop", "tiny.json", "--family", "fixed", "--grid", "0,1,2,3"]);
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "parameter,frr,far,ar,wap,stderr_wap");
    let far: Vec<f64> = lines.map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(far.len(), 4);
    assert!(far.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(code(p, &["sweep", "--pop", "tiny.json", "--family", "fixed", "--grid", ""]), 2);

    ok(p, &["gen", "--n", "6", "--noise", "gauss:0.4..0.5:0.02..0.08:4", "--seed", "1", "--out", "g.json"]);
    let csv = ok(p, &["sweep", "--pop", "g.json", "--family", "gaussian", "--grid", "-3,-2,-1"]);
    for (line, delta) in csv.lines().skip(1).zip([0.0013498980316300946, 0.02275013194817921, 0.15865525393145705]) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[1], "", "FRR is undefined in score worlds");
        let wap: f64 = cols[4].parse().unwrap();
        assert!((wap - delta).abs() < 1e-10, "{line}");
    }
}

#[test]
fn eval_writes_per_user_csv() {
    let d = TempDir::new().unwrap();
    let p = d.path();
    tiny(p);
    ok(p, &["eval", "--pop", "tiny.json", "--policy", "fixed:1", "--csv", "users.csv", "--out", "r.json"]);
    let csv = std::fs::read_to_string(p.join("users.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "id,frr_u,far_u,ar_u");
    assert_eq!(csv.lines().count(), 3);
}

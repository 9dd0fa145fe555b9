use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pinn-lab")).args(args).output().unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

const TINY: &str = r#"
name = "tiny"
problem = "reaction"
seeds = [0, 1, 2]
iterations = 6
eval_every = 3
report = "both"

[model]
widths = [2, 6, 1]

[mesh]
interior = 5
initial = 5
boundary = 5
test = 9
"#;

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("exp.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn run_then_report_reproduces_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = lab(&["run", &cfg, "--out", out.to_str().unwrap(), "--threads", "2"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let stdout = text(&o.stdout);
    assert!(stdout.contains("experiment tiny"), "{stdout}");
    assert!(stdout.contains("\"arms\""), "json part missing: {stdout}");

    let out_ref = &out;
    let traces = ["point", "region"]
        .iter()
        .flat_map(|a| (0..3).map(move |s| out_ref.join(a).join(format!("seed-{s}")).join("trace.csv")))
        .filter(|p| p.exists())
        .count();
    assert_eq!(traces, 6);
    assert!(out.join("summary.json").exists() && out.join("summary.txt").exists());

    let r = lab(&["report", out.to_str().unwrap(), "--format", "json"]);
    assert!(r.status.success(), "{}", text(&r.stderr));
    let stored = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert_eq!(text(&r.stdout).trim(), stored.trim());
}

#[test]
fn seed_flag_replaces_the_seed_list() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("out");
    let o = lab(&["run", &cfg, "--out", out.to_str().unwrap(), "--seed", "7"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(out.join("point/seed-7/trace.csv").exists());
    assert!(!out.join("point/seed-0").exists());
}

#[test]
fn paper_preset_widens_every_arm() {
    let dir = tempfile::tempdir().unwrap();
    let body = TINY.replace("iterations = 6", "iterations = 1").replace("eval_every = 3", "eval_every = 1");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = lab(&["run", &cfg, "--out", out.to_str().unwrap(), "--seed", "0", "--preset", "paper"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let rc = std::fs::read_to_string(out.join("region/seed-0/run_config.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&rc).unwrap();
    assert_eq!(v["model"]["layer_widths"], serde_json::json!([2, 512, 512, 512, 1]));
}

#[test]
fn invalid_config_names_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "problem = \"reaction\"\n[trust]\nr0 = -1.0\n");
    let o = lab(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = text(&o.stderr);
    assert!(err.contains("model") && err.contains("r0"), "{err}");
}

#[test]
fn report_on_missing_directory_fails() {
    let o = lab(&["report", "/nonexistent/pinn-run"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_runs_the_oracle_suite() {
    let o = lab(&["check"]);
    let stdout = text(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 10, "{stdout}");
}

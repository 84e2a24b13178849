use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
n = 4
blocks = 2
target_rho = 1.03
sensors = 3
topology = "cycle_with_chords"
chords = 1
delays = [{ mode = "homogeneous", tau_bar = 0 }, { mode = "heterogeneous", tau_bar = 2 }]
horizon = 40
trials = 5
seed = 11
"#;

fn dcest(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcest"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_design_analyze_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();

    let out = dcest(&["generate", "--config", "exp.toml", "--out", "inst.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let inst = json(&dir.path().join("inst.json"));
    assert_eq!(inst["system"]["n"], 4);
    assert_eq!(inst["delays"].as_array().unwrap().len(), 2);

    let out = dcest(&["design", "--instance", "inst.json", "--tau", "0,1", "--out", "design.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let design = json(&dir.path().join("design.json"));
    assert!(design["report"]["rho_closed_loop"].as_f64().unwrap() < 0.99);
    std::fs::write(
        dir.path().join("gain.json"),
        serde_json::to_string(&design["gain"]).unwrap(),
    )
    .unwrap();

    let out = dcest(
        &["analyze", "--instance", "inst.json", "--gain", "gain.json", "--tau", "0,3,8,19"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let bounds: Vec<f64> = ["0", "3", "8", "19"]
        .iter()
        .map(|t| report["rho_aug_bound_by_tau"][t].as_f64().unwrap())
        .collect();
    assert_eq!(bounds.len(), 4);
    assert_eq!(bounds[0], design["report"]["rho_closed_loop"].as_f64().unwrap());
}

#[test]
fn simulate_and_montecarlo_write_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("exp.toml"), CONFIG).unwrap();
    let out = dcest(&["simulate", "--config", "exp.toml", "--tau", "0,1"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("step,label,mse"));
    assert_eq!(text.lines().count(), 1 + 2 * 41);
    assert!(text.contains(",homogeneous-tau1,"));

    let out = dcest(
        &["montecarlo", "--config", "exp.toml", "--trials", "3", "--horizon", "10", "--out", "mc.csv"],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("mc.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 11);
}

#[test]
fn verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcest(&["verify", "--seeds", "8"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}

#[test]
fn failures_exit_nonzero_with_a_json_error_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), format!("{CONFIG}\nunknown_key = 1\n")).unwrap();
    let out = dcest(&["montecarlo", "--config", "bad.toml"], dir.path());
    assert!(!out.status.success());
    let line: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(line["error"], "toml");

    let out = dcest(&["analyze", "--config", "missing.toml", "--tau", "0"], dir.path());
    assert!(!out.status.success());
    let line: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(line["error"], "io");

    let out = dcest(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

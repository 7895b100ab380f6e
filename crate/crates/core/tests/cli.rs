use std::path::Path;
use std::process::{Command, Output};

use exodyn::config::ExperimentConfig;
use exodyn::simulation::SimLog;

fn exodyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exodyn")).args(args).env_remove("EXODYN_WORKERS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn anthro_json_round_trips() {
    let out = exodyn(&["anthro", "--height", "66", "--weight", "180", "--json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["subject"]["height"], 66.0);
}

#[test]
fn anova_hand_case() {
    let out = exodyn(&["anova", "--group", "1,2,3", "--group", "2,3,4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("1.5"), "{text}");
    assert!(text.contains("0.2879"), "{text}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(exodyn(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(exodyn(&["anthro", "--height", "66"]).status.code(), Some(1));
    assert_eq!(exodyn(&["fk", "--height", "66", "--weight", "180", "--theta", "1,2,3"]).status.code(), Some(1));
    assert_eq!(exodyn(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_subject_is_a_usage_error() {
    let out = exodyn(&["dynamics", "--height", "0", "--weight", "180", "--theta", "0,0,0,0,0,0,0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn missing_config_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let text = ExperimentConfig::preset_text("desk").unwrap();
    let broken: String =
        text.lines().filter(|l| !l.trim_start().starts_with("mse_goal")).map(|l| format!("{l}\n")).collect();
    let file = dir.path().join("broken.toml");
    std::fs::write(&file, broken).unwrap();
    let out =
        exodyn(&["trajectory", "--config", path(&file), "--velocity", "40", "--out", path(&dir.path().join("t.csv"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("mse_goal"), "{}", stderr(&out));
}

#[test]
fn missing_input_file_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = exodyn(&["train", "--data", path(&dir.path().join("absent.csv")), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn preset_output_parses() {
    let out = exodyn(&["preset", "full"]);
    assert_eq!(out.status.code(), Some(0));
    let cfg = ExperimentConfig::from_toml(&stdout(&out), Path::new("stdout")).unwrap();
    assert_eq!(
        cfg.grid.velocities.len() * cfg.grid.heights.len() * cfg.grid.weights.len() * cfg.grid.modes.len(),
        1100
    );
}

#[test]
fn simulate_analyze_compare() {
    let dir = tempfile::tempdir().unwrap();
    let ctc = dir.path().join("ctc.csv");
    let pd = dir.path().join("pd.csv");
    for (controller, file) in [("ctc", &ctc), ("pd", &pd)] {
        let out = exodyn(&[
            "simulate",
            "--controller",
            controller,
            "--velocity",
            "60",
            "--duration",
            "0.5",
            "--out",
            path(file),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    }
    let log = SimLog::read(&ctc).unwrap();
    assert_eq!(log.records.len(), 501);
    assert_eq!(log.metadata.controller.as_str(), "computed_torque");
    assert!(log.max_abs_error().max() < 1e-6);
    assert!(ctc.with_extension("json").exists());

    let reports = dir.path().join("reports");
    let out = exodyn(&["analyze", "--log", path(&pd), "--out", path(&reports)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("largest error on joint"));

    let out = exodyn(&["compare", "--reference", path(&ctc), "--candidate", path(&pd)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let out = exodyn(&["simulate", "--controller", "hybrid", "--out", path(&dir.path().join("h.csv"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn trajectory_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("traj.csv");
    let out =
        exodyn(&["trajectory", "--velocity", "80", "--mode", "simultaneous", "--dt", "0.1", "--out", path(&file)]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = std::fs::read_to_string(&file).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with('t'));
    assert!(lines.count() > 2);
}

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn smoke() -> PathBuf {
    configs().join("smoke.toml")
}

fn wingctl(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wingctl"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|x| x.unwrap()[idx].to_string()).collect()
}

#[test]
fn smoke_training_is_fast_and_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke();
    let start = Instant::now();
    let o = wingctl(&["--config", cfg.to_str().unwrap(), "train", "--budget", "1000"], dir.path());
    ok(&o);
    assert!(start.elapsed().as_secs_f64() < 10.0);
    let cks = std::fs::read_dir(dir.path().join("checkpoints")).unwrap().count();
    assert!(cks >= 1);
    assert!(dir.path().join("policy.json").exists());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 0);
    assert_eq!(summary["steps"], 1000);
    assert!(summary["config_hash"].as_str().unwrap().len() == 64);
}

#[test]
fn missing_airframe_exits_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = wingctl(&["--airframe", "/nonexistent/wing.toml", "train", "--budget", "10"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/wing.toml"));
}

#[test]
fn malformed_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[ppo]\nno_such_key = 1\n").unwrap();
    let o = wingctl(&["--config", cfg.to_str().unwrap(), "train"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn same_seed_gives_identical_training_logs() {
    let cfg = smoke();
    let logs: Vec<String> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            ok(&wingctl(&["--config", cfg.to_str().unwrap(), "--seed", "7", "train"], dir.path()));
            std::fs::read_to_string(dir.path().join("training_log.csv")).unwrap()
        })
        .collect();
    assert_eq!(logs[0], logs[1]);
    assert!(logs[0].lines().count() > 1);
}

#[test]
fn pid_evaluation_writes_success_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke();
    let o = wingctl(&["--config", cfg.to_str().unwrap(), "evaluate", "--controller", "pid"], dir.path());
    ok(&o);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("pid") && stdout.contains('%'));
    let rows = read_csv(&dir.path().join("summary.csv"));
    assert_eq!(rows.len(), 1);
    let success = column(&dir.path().join("summary.csv"), "success_pct");
    let v: f64 = success[0].parse().unwrap();
    assert!((0.0..=100.0).contains(&v));
}

#[test]
fn all_settings_emit_four_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke();
    let o = wingctl(
        &["--config", cfg.to_str().unwrap(), "evaluate", "--controller", "pid", "--settings", "all"],
        dir.path(),
    );
    ok(&o);
    let settings = column(&dir.path().join("summary.csv"), "severity");
    assert_eq!(settings.len(), 4);
    let mut unique = settings.clone();
    unique.dedup();
    assert_eq!(unique.len(), 4);
}

#[test]
fn evaluation_tables_are_deterministic() {
    let cfg = smoke();
    let tables: Vec<String> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            ok(&wingctl(
                &["--config", cfg.to_str().unwrap(), "--seed", "3", "evaluate", "--controller", "pid", "--settings", "light"],
                dir.path(),
            ));
            std::fs::read_to_string(dir.path().join("episodes.csv")).unwrap()
        })
        .collect();
    assert_eq!(tables[0], tables[1]);
}

#[test]
fn rl_evaluation_and_comparison_use_a_trained_policy() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke();
    let cfg = cfg.to_str().unwrap();
    ok(&wingctl(&["--config", cfg, "train"], dir.path()));
    let policy = dir.path().join("policy.json");
    let eval_dir = dir.path().join("eval");
    ok(&wingctl(
        &["--config", cfg, "evaluate", "--checkpoint", policy.to_str().unwrap()],
        &eval_dir,
    ));
    let cmp_dir = dir.path().join("cmp");
    ok(&wingctl(
        &["--config", cfg, "compare", "--checkpoint", policy.to_str().unwrap()],
        &cmp_dir,
    ));
    let controllers = column(&cmp_dir.join("summary.csv"), "controller");
    assert_eq!(controllers, ["rl", "pid"]);
    assert!(cmp_dir.join("paired_none.csv").exists());
}

#[test]
fn rl_without_checkpoint_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = wingctl(&["evaluate", "--controller", "rl", "--checkpoint", "/nonexistent/p.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_schedule_holds_trim_for_the_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke();
    ok(&wingctl(&["--config", cfg.to_str().unwrap(), "simulate"], dir.path()));
    let trace = dir.path().join("trace.csv");
    // three seconds at 100 Hz plus the initial row
    assert_eq!(read_csv(&trace).len(), 301);
    let roll: Vec<f64> = column(&trace, "roll_deg").iter().map(|v| v.parse().unwrap()).collect();
    assert!(roll.iter().all(|r| r.abs() < 1.0));
}

#[test]
fn setpoint_change_at_five_seconds_appears_at_row_500() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("schedule.csv");
    std::fs::write(&sched, "time_s,roll_deg,pitch_deg,airspeed_mps\n0,0,2,18\n5,20,2,18\n").unwrap();
    let o = wingctl(&["simulate", "--schedule", sched.to_str().unwrap()], dir.path());
    ok(&o);
    let trace = dir.path().join("trace.csv");
    let target: Vec<f64> = column(&trace, "target_roll_deg").iter().map(|v| v.parse().unwrap()).collect();
    let t: Vec<f64> = column(&trace, "t").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(target.len(), 2001);
    let first = target.iter().position(|&v| (v - 20.0).abs() < 1e-9).unwrap();
    assert_eq!(first, 500);
    assert!((t[500] - 5.0).abs() < 1e-9);
    assert!(target[..500].iter().all(|&v| v.abs() < 1e-9));
}

#[test]
fn out_of_range_schedule_warns_and_proceeds() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("schedule.csv");
    std::fs::write(&sched, "time_s,roll_deg,pitch_deg,airspeed_mps\n0,80,0,18\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_wingctl"))
        .args(["--config", smoke().to_str().unwrap(), "simulate", "--schedule", sched.to_str().unwrap()])
        .arg("--out")
        .arg(dir.path())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    ok(&o);
    assert!(String::from_utf8_lossy(&o.stderr).contains("outside"));
    assert!(dir.path().join("trace.csv").exists());
}

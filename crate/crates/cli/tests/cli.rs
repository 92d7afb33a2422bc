//! End-to-end invocations of the binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use maddpg_m_cli::artifacts::{read_manifest, read_metrics, read_summary};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_maddpg-m"));
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("MADDPGM_")) {
        c.env_remove(k);
    }
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const FAST: &[&str] = &["--batch-size", "32", "--update-every", "25", "--policy-hidden", "8", "--critic-hidden", "8"];

fn train(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--out-dir", out.to_str().unwrap()];
    args.extend_from_slice(FAST);
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn default_logging_interval_gives_two_rows_for_two_hundred_episodes() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&[
        "train", "--scenario", "fixed-broadcast", "--algo", "maddpg-m", "--seed", "1", "--episodes", "200", "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let run_dir = dir.path().join("fixed-broadcast/maddpg-m/seed-1");
    let rows = read_metrics(&run_dir.join("metrics.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| r.episode).collect::<Vec<_>>(), vec![100, 200]);
    assert!(rows.iter().all(|r| r.wallclock_s.is_none() && r.acc_all.is_some()));
    assert!(run_dir.join("checkpoint.json").exists());
    assert_eq!(read_manifest(&run_dir).unwrap().num_episodes, 200);
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(dir.path(), &["--algo", "ddpg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scenario") && stderr(&o).contains("Usage:"), "{}", stderr(&o));
    let o = run(&["train", "--episodes"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_names_list_valid_ones() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(dir.path(), &["--scenario", "moon-base", "--algo", "ddpg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("alt-unicast"), "{}", stderr(&o));
    let o = train(dir.path(), &["--scenario", "fixed-broadcast", "--algo", "dqn"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("maddpg-m") && stderr(&o).contains("ddpg-oc"), "{}", stderr(&o));
}

#[test]
fn invalid_combinations_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(dir.path(), &["--scenario", "fixed-broadcast", "--algo", "ddpg", "--oracle-comm"]);
    assert_eq!(o.status.code(), Some(2));
    let o = train(dir.path(), &["--scenario", "fixed-broadcast", "--algo", "ddpg", "--c-period", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let flags = ["--scenario", "alt-unicast", "--algo", "maddpg-m", "--seed", "3", "--episodes", "12", "--log-every", "3"];
    assert!(train(a.path(), &flags).status.success());
    assert!(train(b.path(), &flags).status.success());
    let rel = "alt-unicast/maddpg-m/seed-3/metrics.csv";
    let (x, y) = (fs::read(a.path().join(rel)).unwrap(), fs::read(b.path().join(rel)).unwrap());
    assert_eq!(x, y);
    assert_eq!(String::from_utf8(x).unwrap().lines().count(), 2 + 4);
}

#[test]
fn precedence_is_flags_then_env_then_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "scenario = dyn-broadcast\nalgorithm = ddpg\nc_period = 3\ntau = 0.5\nlog_every = 2\nnum_episodes = 2\n").unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["train", "--config", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap(), "--c-period", "2"];
    args.extend_from_slice(FAST);
    let o = bin().args(&args).env("MADDPGM_TAU", "0.25").env("MADDPGM_C_PERIOD", "4").output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let m = read_manifest(&out.join("dyn-broadcast/ddpg/seed-0")).unwrap();
    assert_eq!((m.c_period, m.tau, m.log_every), (2, 0.25, 2));
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "scenario = fixed-broadcast\nalgorithm = ddpg\nwidth = 3\n").unwrap();
    let o = run(&["train", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("width"));
}

#[test]
fn manifest_alone_reproduces_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = train(&first, &["--scenario", "fixed-unicast", "--algo", "maddpg", "--episodes", "6", "--log-every", "2", "--seed", "8"]);
    assert!(o.status.success());
    let run_dir = first.join("fixed-unicast/maddpg/seed-8");
    let second = dir.path().join("second");
    let o = run(&["train", "--config", run_dir.join("manifest.txt").to_str().unwrap(), "--out-dir", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rel = "fixed-unicast/maddpg/seed-8/metrics.csv";
    assert_eq!(fs::read(first.join(rel)).unwrap(), fs::read(second.join(rel)).unwrap());
}

#[test]
fn parallel_workers_match_sequential_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let flags = ["--scenario", "fixed-broadcast", "--algo", "ddpg,ddpg-oc", "--seed", "1,2", "--episodes", "4", "--log-every", "2"];
    let go = |out: &Path, extra: &[&str]| {
        bin().args(["train", "--out-dir", out.to_str().unwrap()]).args(FAST).args(flags).args(extra).env("MADDPGM_TAU", "0.5").output().unwrap()
    };
    assert!(go(a.path(), &[]).status.success());
    let o = go(b.path(), &["--jobs", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    for algo in ["ddpg", "ddpg-oc"] {
        for seed in [1, 2] {
            let run = format!("fixed-broadcast/{algo}/seed-{seed}");
            assert_eq!(read_manifest(&b.path().join(&run)).unwrap().tau, 0.5);
            let rel = format!("{run}/metrics.csv");
            assert_eq!(fs::read(a.path().join(&rel)).unwrap(), fs::read(b.path().join(&rel)).unwrap());
        }
    }
}

#[test]
fn eval_writes_summaries_and_trajectories() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(dir.path(), &["--scenario", "dyn-unicast", "--algo", "maddpg-m,ddpg", "--episodes", "4", "--log-every", "2"]);
    assert!(o.status.success());
    let o = run(&["eval", dir.path().to_str().unwrap(), "--episodes", "3", "--trajectories"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = dir.path().join("dyn-unicast/maddpg-m/seed-0");
    let s = read_summary(&m.join("eval_summary.txt")).unwrap();
    assert_eq!((s.episodes, s.seed, s.algorithm.as_str()), (3, 0, "maddpg-m"));
    assert!(s.acc_all.is_some() && s.acc_any.is_some());
    let d = read_summary(&dir.path().join("dyn-unicast/ddpg/seed-0/eval_summary.txt")).unwrap();
    assert!(d.acc_all.is_none());
    let traj = fs::read_to_string(m.join("trajectories.csv")).unwrap();
    let lines: Vec<_> = traj.lines().collect();
    assert_eq!(lines.len(), 2 + 3 * 25);
    assert!(lines[1].starts_with("episode,step,x0,y0"));
    assert_eq!(lines[1].split(',').count(), lines[2].split(',').count());
    let csv = fs::read_to_string(m.join("eval_summary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    let again = run(&["eval", m.to_str().unwrap(), "--episodes", "3"]);
    assert!(again.status.success());
    assert_eq!(read_summary(&m.join("eval_summary.txt")).unwrap(), s);
}

#[test]
fn train_with_eval_flag_writes_a_summary() {
    let dir = tempfile::tempdir().unwrap();
    let o = train(dir.path(), &["--scenario", "alt-broadcast", "--algo", "ddpg-oc", "--episodes", "2", "--eval-episodes", "2", "--eval"]);
    assert!(o.status.success());
    let s = read_summary(&dir.path().join("alt-broadcast/ddpg-oc/seed-0/eval_summary.txt")).unwrap();
    assert_eq!((s.episodes, s.acc_all), (2, Some(1.0)));
}

#[test]
fn runtime_failures_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("r");
    fs::create_dir_all(&run_dir).unwrap();
    fs::write(run_dir.join("checkpoint.json"), "{ not json").unwrap();
    let o = run(&["eval", run_dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["eval", dir.path().join("missing").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn report_aggregates_a_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let runs = dir.path().join("runs");
    let o = train(&runs, &["--scenario", "fixed-broadcast", "--algo", "maddpg-m,ddpg", "--seed", "1,2", "--episodes", "4", "--log-every", "2", "--eval-episodes", "2", "--eval"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("report");
    let o = run(&["report", "--input", runs.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rewards = fs::read_to_string(out.join("rewards.csv")).unwrap();
    assert_eq!(rewards.lines().count(), 1 + 1 + 2);
    let curves = fs::read_to_string(out.join("curves.csv")).unwrap();
    assert_eq!(curves.lines().count(), 1 + 1 + 2 * 2);
    let normalized = fs::read_to_string(out.join("normalized.csv")).unwrap();
    assert!(normalized.lines().skip(2).any(|l| l.ends_with(",1.0")));
    let acc = fs::read_to_string(out.join("table_accuracy.csv")).unwrap();
    assert!(acc.contains("\nany,-\n"));
    assert!(run(&["list"]).status.success());
}

//! End-to-end checks of the binary: exit codes, report formats, trace
//! round-trips, and determinism across reruns and worker counts.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use kledge_cli::report::Report;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn kledge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kledge"))
        .args(args)
        .env_remove("KLEDGE_WORKERS")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn generate_is_idempotent_and_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.trace");
    let second = dir.path().join("b.trace");
    let scenario = scenario("honest-small.toml");
    let out = kledge(&["generate", "--scenario", scenario.to_str().unwrap(), "--out", first.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{out:?}");
    let out = kledge(&["generate", "--scenario", scenario.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());

    // a shifted seed produces a different trace
    let shifted = dir.path().join("c.trace");
    let out = kledge(&[
        "generate",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out",
        shifted.to_str().unwrap(),
        "--seed-offset",
        "1",
    ]);
    assert_eq!(code(&out), 0);
    assert_ne!(std::fs::read(&first).unwrap(), std::fs::read(&shifted).unwrap());
}

#[test]
fn generate_rejects_bad_config_with_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    // the last block lands on the horizon, so the run cannot quiesce
    std::fs::write(
        &bad,
        r#"
[scenario]
name = "bad"
initial_agents = 2
horizon = 3
t = 0
delta = 0
max_message_delay = 0
root_seed = 1
variant = "honest-longest-chain"

[blocks]
first = 1
every = 1
count = 3

[[adversaries]]
id = "sync"
delay = 0
"#,
    )
    .unwrap();
    let out_path = dir.path().join("x.trace");
    let out = kledge(&["generate", "--scenario", bad.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("horizon"), "{err}");
}

#[test]
fn check_run_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.trace");
    let honest = scenario("honest-small.toml");
    assert_eq!(
        code(&kledge(&["generate", "--scenario", honest.to_str().unwrap(), "--out", trace.to_str().unwrap()])),
        0
    );
    let out = kledge(&[
        "check-run", "--trace", trace.to_str().unwrap(),
        "--property", "acceptability", "--t", "1", "--delta", "2",
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));

    let stale_trace = dir.path().join("s.trace");
    let stale = scenario("stale-separation.toml");
    assert_eq!(
        code(&kledge(&["generate", "--scenario", stale.to_str().unwrap(), "--out", stale_trace.to_str().unwrap()])),
        0
    );
    let out = kledge(&[
        "check-run", "--trace", stale_trace.to_str().unwrap(),
        "--property", "weak-growth", "--delta", "1",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("witness"), "{}", stdout(&out));
    // consistency still holds on the same trace
    let out = kledge(&[
        "check-run", "--trace", stale_trace.to_str().unwrap(),
        "--property", "t-consistency", "--t", "2",
    ]);
    assert_eq!(code(&out), 0);

    // unknown property is a usage error
    let out = kledge(&["check-run", "--trace", stale_trace.to_str().unwrap(), "--property", "nope"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_and_validate_exit_codes() {
    let honest = scenario("honest-small.toml");
    let out = kledge(&[
        "eval", "--scenario", honest.to_str().unwrap(),
        "--formula", "honest(a1)", "--run", "sync-r0", "--time", "0",
    ]);
    assert_eq!(code(&out), 2, "run ids are seed-derived; bad id is usage");

    // find a real run id from the trace
    let dir = tempfile::tempdir().unwrap();
    let trace_path = dir.path().join("t.trace");
    kledge(&["generate", "--scenario", honest.to_str().unwrap(), "--out", trace_path.to_str().unwrap()]);
    let trace = std::fs::read_to_string(&trace_path).unwrap();
    let run_id = trace
        .lines()
        .find(|l| l.starts_with("r|"))
        .map(|l| l.split('|').nth(1).unwrap().to_string())
        .unwrap();

    let out = kledge(&[
        "eval", "--scenario", honest.to_str().unwrap(),
        "--formula", "honest(a1)", "--run", &run_id, "--time", "0",
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let out = kledge(&[
        "eval", "--scenario", honest.to_str().unwrap(),
        "--formula", "!honest(a1)", "--run", &run_id, "--time", "0",
    ]);
    assert_eq!(code(&out), 1);
    let out = kledge(&[
        "eval", "--scenario", honest.to_str().unwrap(),
        "--formula", "honest(", "--run", &run_id, "--time", "0",
    ]);
    assert_eq!(code(&out), 2);

    let out = kledge(&[
        "validate", "--scenario", honest.to_str().unwrap(),
        "--formula", "Honest -> Honest",
    ]);
    assert_eq!(code(&out), 0);
    let out = kledge(&[
        "validate", "--scenario", honest.to_str().unwrap(),
        "--formula", "prop(pay1_on_a1)",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("counterexample"));
}

#[test]
fn suite_reports_round_trip_and_agree() {
    let honest = scenario("honest-small.toml");
    let out = kledge(&[
        "suite", "thm4", "--scenario", honest.to_str().unwrap(), "--format", "structured",
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let report = Report::parse(&stdout(&out)).unwrap();
    assert!(report.pass);
    assert_eq!(report.checks.len(), 5);
    assert!(report.checks.iter().all(|c| c.pass));

    // the partitioned scenario still agrees: all four sides false
    let stale = scenario("stale-separation.toml");
    let out = kledge(&[
        "suite", "thm4", "--scenario", stale.to_str().unwrap(), "--format", "structured",
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let report = Report::parse(&stdout(&out)).unwrap();
    for check in &report.checks {
        if check.label == "four-way-agreement" {
            assert!(check.pass);
        } else {
            assert!(!check.pass, "{check:?}");
        }
    }
}

#[test]
fn suite_thm5_needs_eps_and_checks_agreement() {
    let honest = scenario("honest-small.toml");
    let out = kledge(&["suite", "thm5", "--scenario", honest.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let out = kledge(&["suite", "thm5", "--scenario", honest.to_str().unwrap(), "--eps", "1/4"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn suite_prop1_checks_the_implication_grid() {
    let honest = scenario("honest-small.toml");
    let out = kledge(&[
        "suite", "prop1", "--scenario", honest.to_str().unwrap(),
        "--min-runs", "30", "--format", "structured",
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let report = Report::parse(&stdout(&out)).unwrap();
    assert!(report.pass);
    assert!(report.params.iter().any(|(k, v)| k == "runs" && v.parse::<usize>().unwrap() >= 30));
}

#[test]
fn check_prob_reports_exact_masses() {
    let stale = scenario("stale-separation.toml");
    let out = kledge(&[
        "check-prob", "--scenario", stale.to_str().unwrap(),
        "--t", "2", "--delta", "1", "--eps", "0", "--format", "structured",
    ]);
    assert_eq!(code(&out), 1);
    let report = Report::parse(&stdout(&out)).unwrap();
    assert!(report.checks[0].note.as_deref().unwrap().contains("acceptable mass 0"));
    let out = kledge(&[
        "check-prob", "--scenario", stale.to_str().unwrap(),
        "--t", "2", "--delta", "1", "--eps", "1",
    ]);
    assert_eq!(code(&out), 0);
}

#[test]
fn game_suite_verdicts() {
    let game = scenario("contract-game.game.toml");
    let out = kledge(&[
        "suite", "game",
        "--scenario", scenario("contract-game.toml").to_str().unwrap(),
        "--game", game.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));

    let out = kledge(&[
        "suite", "game",
        "--scenario", scenario("contract-game-stale.toml").to_str().unwrap(),
        "--game", scenario("contract-game-stale.game.toml").to_str().unwrap(),
        "--format", "structured",
    ]);
    assert_eq!(code(&out), 1, "{}", stdout(&out));
    let report = Report::parse(&stdout(&out)).unwrap();
    let exposure = report.checks.iter().find(|c| c.label == "no-sentinel-exposure").unwrap();
    assert!(!exposure.pass);
    assert!(exposure.note.as_deref().unwrap().contains("player 1"));
}

#[test]
fn reports_stable_across_worker_counts() {
    let honest = scenario("honest-small.toml");
    let run = |workers: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_kledge"))
            .args([
                "suite", "thm4", "--scenario", honest.to_str().unwrap(), "--format", "structured",
            ])
            .env("KLEDGE_WORKERS", workers)
            .output()
            .unwrap();
        (code(&out), stdout(&out))
    };
    let (c1, o1) = run("1");
    let (c4, o4) = run("4");
    assert_eq!(c1, 0);
    assert_eq!((c1, &o1), (c4, &o4));
}

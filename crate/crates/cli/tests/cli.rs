use std::path::Path;
use std::process::{Command, Output};

const JENNIFER: &str = "Meet Jennifer at the sink, follow her, and take her back";

fn gpsr(out_dir: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gpsr"));
    for var in ["GPSR_WORLD", "GPSR_PROMPT_BANK", "GPSR_TEMPLATES", "GPSR_BACKENDS", "GPSR_OUT_DIR", "RUST_LOG"] {
        cmd.env_remove(var);
    }
    cmd.arg("--out-dir").arg(out_dir).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn plan_with_gold_mock() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpsr(dir.path(), &["plan", "--command", JENNIFER]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert_eq!(
        stdout(&o).trim(),
        "[[move to, sink], [look for person, Jennifer], [follow, Jennifer], [speak, Please follow me!], [move to, initial location]]"
    );
}

#[test]
fn garbage_mock_is_unparseable_after_five_attempts() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpsr(dir.path(), &["plan", "--command", JENNIFER, "--backend", "mock:garbage"]);
    assert_eq!(o.status.code(), Some(3));
    let text = stdout(&o);
    assert!(text.starts_with("UNPARSEABLE after 5 attempts"), "{text}");
    assert_eq!(text.matches("suffix: Please note the format of the answer!").count(), 4);
}

#[test]
fn run_executes_the_escort() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpsr(dir.path(), &["run", "--command", JENNIFER, "--trace-out", "trace.json"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).contains("SUCCESS at initial location"));
    let trace: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace.json")).unwrap()).unwrap();
    assert_eq!(trace["execution"]["verdict"], "success");
}

#[test]
fn run_reports_execution_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpsr(dir.path(), &["run", "--plan-text", "[[move to, bedroom], [grasp, cola]]"]);
    assert_eq!(o.status.code(), Some(4), "{o:?}");
    assert!(stdout(&o).contains("FAILURE at step 1"));
}

#[test]
fn parse_classifies() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpsr(dir.path(), &["parse", "[look for obj(cola)]"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).starts_with("format_deviation"));
    let o = gpsr(dir.path(), &["parse", "[[find, cola]]"]);
    assert!(stdout(&o).starts_with("unknown_action"));
    let o = gpsr(dir.path(), &["parse", "--validate", "[[grasp, cola]]"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("INVALID"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(gpsr(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(gpsr(dir.path(), &["plan", "--command", "x", "--backend", "mock:nope"]).status.code(), Some(2));
    assert_eq!(gpsr(dir.path(), &["plan", "--command", "x", "--backend", "remote"]).status.code(), Some(2));
}

#[test]
fn unreachable_backend_exits_six() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("backends.toml");
    std::fs::write(
        &cfg,
        "[[backend]]\nname = \"down\"\nendpoint = \"http://127.0.0.1:9/v1\"\nmodel = \"m\"\nmax_retries = 0\ntimeout_secs = 2\n",
    )
    .unwrap();
    let o = gpsr(
        dir.path(),
        &["--backends-file", cfg.to_str().unwrap(), "plan", "--command", "Go to the kitchen", "--backend", "down"],
    );
    assert_eq!(o.status.code(), Some(6), "{o:?}");
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = gpsr(dir.path(), &["generate", "--seed", "7"]);
    let b = gpsr(dir.path(), &["generate", "--seed", "7"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 100);
    let c = gpsr(dir.path(), &["generate", "--seed", "8"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn eval_record_then_replay_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpsr(
        dir.path(),
        &[
            "eval", "--seed", "5", "--backends", "mock:gold,mock:format-once", "--record", "rec", "--report", "r0.json",
            "--check",
        ],
    );
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).contains("checks passed"));
    for name in ["r1.json", "r2.json"] {
        let rec = dir.path().join("rec");
        let o = gpsr(dir.path(), &["eval", "--seed", "5", "--replay", rec.to_str().unwrap(), "--report", name]);
        assert_eq!(o.status.code(), Some(0), "{o:?}");
    }
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("r0.json"), read("r1.json"));
    assert_eq!(read("r1.json"), read("r2.json"));
}

#[test]
fn eval_rejects_unknown_mocks_and_tolerates_garbage() {
    let dir = tempfile::tempdir().unwrap();
    let suite = gpsr(dir.path(), &["generate", "--seed", "3", "--count", "2", "--out", "suite.jsonl"]);
    assert_eq!(suite.status.code(), Some(0));
    let o = gpsr(
        dir.path(),
        &["eval", "--suite", dir.path().join("suite.jsonl").to_str().unwrap(), "--backends", "mock:garbage-once"],
    );
    assert_eq!(o.status.code(), Some(2));
    let o = gpsr(
        dir.path(),
        &["eval", "--suite", dir.path().join("suite.jsonl").to_str().unwrap(), "--backends", "mock:garbage", "--check"],
    );
    assert_eq!(o.status.code(), Some(0), "{o:?}");
}

#[test]
fn outputs_stay_inside_the_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpsr(dir.path(), &["generate", "--seed", "1", "--out", "../escape.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gpsr(dir.path(), &["generate", "--seed", "1", "--out", "/tmp/gpsr-escape.jsonl"]);
    assert_eq!(o.status.code(), Some(2));
    let o = gpsr(dir.path(), &["generate", "--seed", "1", "--out", "nested/suite.jsonl"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("nested/suite.jsonl").is_file());
}

#[test]
fn replay_subcommand_replans_a_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let o = gpsr(dir.path(), &["plan", "--command", JENNIFER, "--backend", "mock:unknown-once", "--record", "t.jsonl"]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    let o = gpsr(dir.path(), &["replay", dir.path().join("t.jsonl").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{o:?}");
    assert!(stdout(&o).contains(&format!("command: {JENNIFER}")));
}

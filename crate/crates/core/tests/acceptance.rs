//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Set GPSR_LIVE_BACKEND (and GPSR_BACKENDS for the
//! backends file) to also run the live smoke check.

mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use gpsr_core::eval::{evaluate_suite, gold_table, EvalOptions, EvalOutcome};
use gpsr_core::executor::{execute, FixedAnswer, InteractionScript, RunOptions};
use gpsr_core::grammar::{default_counts, generate_suite, CommandCategory, TemplateBank};
use gpsr_core::llm::{
    BackendHandle, ChatBackend, ChatRequest, ChatResponse, HttpBackend, HttpConfig, LlmError, MockBackend, MockScript,
    ReplayBackend,
};
use gpsr_core::parser::{parse, render, FailureKind, ParseOutcome};
use gpsr_core::planning::{answer_question, plan, AnswerOutcome, PlanningConfig, PlanningOutcome};
use gpsr_core::prompt::{corrective_suffix, PromptBank, ANSWER_INSTRUCTION, FORMAT_SUFFIX, SUBTASK_SUFFIX};
use gpsr_core::WorldModel;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Check = Result<String, String>;
type CheckFn = fn() -> Check;

const JENNIFER: &str = "Meet Jennifer at the sink, follow her, and take her back";
const TASK_THREE: &str = "Could you navigate to the bedroom, locate a person pointing to the left, and answer a question";
const SUITE_SEED: u64 = 2024;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !($cond) {
            return Err(format!($($msg)+));
        }
    };
}

/// Counts calls to the wrapped backend.
struct Counting {
    inner: MockBackend,
    calls: AtomicUsize,
}

impl Counting {
    fn new(script: MockScript) -> Arc<Self> {
        Arc::new(Counting {
            inner: MockBackend::new("counting", script),
            calls: AtomicUsize::new(0),
        })
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatBackend for Counting {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

fn within(started: Instant, limit: Duration) -> Result<(), String> {
    let took = started.elapsed();
    ensure!(took < limit, "took {took:?}, limit {limit:?}");
    Ok(())
}

fn corrective_suffixes() -> Check {
    ensure!(
        FORMAT_SUFFIX.as_bytes() == b"Please note the format of the answer!",
        "format suffix is {FORMAT_SUFFIX:?}"
    );
    ensure!(
        SUBTASK_SUFFIX.as_bytes() == b"Please note that scheduled subtasks need to be used to complete task planning.",
        "subtask suffix is {SUBTASK_SUFFIX:?}"
    );
    ensure!(corrective_suffix(FailureKind::FormatDeviation) == FORMAT_SUFFIX, "format class mapping");
    ensure!(corrective_suffix(FailureKind::UnknownAction) == SUBTASK_SUFFIX, "unknown action mapping");

    // the suffix is sent verbatim as the next user turn
    let backend = Counting::new(MockScript::scripted(["[find(cola)]", "[[find, cola]]", "[[move to, kitchen]]"]));
    let world = WorldModel::benchmark();
    let result = plan("Go to the kitchen", &world, &PlanningConfig::new(backend.clone())).map_err(|e| e.to_string())?;
    ensure!(result.suffixes() == [FORMAT_SUFFIX, SUBTASK_SUFFIX], "sent {:?}", result.suffixes());
    Ok("both suffixes byte-exact and sent as the next user turn".into())
}

fn giveup_rule() -> Check {
    let started = Instant::now();
    let world = WorldModel::benchmark();

    let backend = Counting::new(MockScript::repeating("I cannot do that."));
    let result = plan(JENNIFER, &world, &PlanningConfig::new(backend.clone())).map_err(|e| e.to_string())?;
    ensure!(backend.calls() == 5, "always-failing mock called {} times", backend.calls());
    ensure!(result.outcome == PlanningOutcome::Unparseable, "outcome {:?}", result.outcome);

    let failures = ["[move to(sink)]", "[[find, sink]]"];
    for k in 1..=5 {
        let mut responses: Vec<&str> = (0..k - 1).map(|i| failures[i % 2]).collect();
        responses.push("[[move to, sink]]");
        let backend = Counting::new(MockScript::scripted(responses));
        let result = plan("Go to the sink", &world, &PlanningConfig::new(backend.clone())).map_err(|e| e.to_string())?;
        ensure!(result.plan().is_some(), "k={k}: not planned");
        ensure!(result.attempts == k && backend.calls() == k, "k={k}: attempts {}", result.attempts);
        let expected: Vec<&str> = (0..k - 1)
            .map(|i| if i % 2 == 0 { FORMAT_SUFFIX } else { SUBTASK_SUFFIX })
            .collect();
        ensure!(result.suffixes() == expected, "k={k}: suffixes {:?}", result.suffixes());
    }
    within(started, Duration::from_secs(1))?;
    Ok(format!("5 calls then Unparseable; k=1..5 planned with k-1 suffixes in {:?}", started.elapsed()))
}

fn classification() -> Check {
    let a = parse("[look for obj(cola)]").failure_kind();
    let b = parse("[[find, cola]]").failure_kind();
    ensure!(a == Some(FailureKind::FormatDeviation), "[look for obj(cola)] gave {a:?}");
    ensure!(b == Some(FailureKind::UnknownAction), "[[find, cola]] gave {b:?}");
    Ok("format_deviation and unknown_action".into())
}

fn corpus() -> Check {
    let world = WorldModel::benchmark();
    let bank = PromptBank::default_bank();
    let mut checked = 0;
    for required in [JENNIFER, TASK_THREE] {
        ensure!(
            bank.examples.iter().any(|e| e.command_text == required && e.pinned),
            "{required:?} is not a pinned example"
        );
    }
    for ex in bank.examples.iter().filter(|e| e.pinned) {
        let text = render(&ex.gold_plan);
        ensure!(parse(&text).plan() == Some(&ex.gold_plan), "{text} does not round-trip");
        let script = InteractionScript::shipped(ex.script.as_deref().unwrap_or("default"))
            .ok_or_else(|| format!("no script for {:?}", ex.command_text))?;
        let trace = execute(&ex.gold_plan, &world, &script, &FixedAnswer("Paris.".into()), &RunOptions::default());
        ensure!(trace.succeeded(), "{}:\n{trace}", ex.command_text);
        checked += 1;
    }
    Ok(format!("{checked} pinned plans round-trip and execute"))
}

fn cases(n: u32) -> Config {
    Config {
        failure_persistence: None,
        ..Config::with_cases(n)
    }
}

fn parser_properties() -> Check {
    let started = Instant::now();
    let mut runner = TestRunner::new(cases(10_000));
    runner
        .run(&common::plan(), |p| {
            prop_assert_eq!(parse(&render(&p)).into_result().ok(), Some(p));
            Ok(())
        })
        .map_err(|e| format!("round-trip: {e}"))?;
    let mut runner = TestRunner::new(cases(10_000));
    runner
        .run(&prop::collection::vec(any::<u8>(), 0..200), |bytes| {
            let text = String::from_utf8_lossy(&bytes);
            if let ParseOutcome::Parsed { plan } = parse(&text) {
                prop_assert_eq!(parse(&render(&plan)).into_result().ok(), Some(plan));
            }
            Ok(())
        })
        .map_err(|e| format!("totality: {e}"))?;
    within(started, Duration::from_secs(30))?;
    Ok(format!("10000 round-trips and 10000 random inputs in {:?}", started.elapsed()))
}

fn static_dynamic() -> Check {
    let started = Instant::now();
    let stats = common::static_dynamic_oracle(3)?;
    ensure!(stats.flagged > 0 && stats.succeeded > 0, "vacuous run {stats:?}");
    within(started, Duration::from_secs(60))?;
    Ok(format!(
        "{} plans, {} flagged, all fail at or before the flagged step, in {:?}",
        stats.plans,
        stats.flagged,
        started.elapsed()
    ))
}

fn run_eval(backends: &[BackendHandle]) -> Result<EvalOutcome, String> {
    let world = WorldModel::benchmark();
    let suite = generate_suite(SUITE_SEED, &default_counts(), &world, &TemplateBank::default_bank())
        .map_err(|e| e.to_string())?;
    let config = PlanningConfig::new(backends[0].clone());
    let options = EvalOptions {
        suite_seed: Some(SUITE_SEED),
        ..EvalOptions::default()
    };
    evaluate_suite(&suite, backends, &world, &config, &options).map_err(|e| e.to_string())
}

fn mock_backends() -> Result<Vec<BackendHandle>, String> {
    let world = WorldModel::benchmark();
    let bank = PromptBank::default_bank();
    let suite = generate_suite(SUITE_SEED, &default_counts(), &world, &TemplateBank::default_bank())
        .map_err(|e| e.to_string())?;
    let gold = gold_table(&suite, &bank);
    ["gold", "format-once", "unknown-once"]
        .into_iter()
        .map(|n| {
            MockBackend::named(n, gold.clone())
                .map(|m| Arc::new(m) as BackendHandle)
                .ok_or_else(|| format!("no mock {n}"))
        })
        .collect()
}

fn metrics_pipeline() -> Check {
    let started = Instant::now();
    let outcome = run_eval(&mock_backends()?)?;
    let report = &outcome.report;
    let counts: Vec<usize> = CommandCategory::ALL.iter().map(|c| report.suite.counts[c]).collect();
    ensure!(counts == [34, 33, 33] && report.suite.total == 100, "suite counts {counts:?}");
    let rows: BTreeMap<&str, _> = report.rows.iter().map(|r| (r.backend_id.as_str(), r)).collect();
    let gold = rows.get("mock:gold").ok_or("no gold row")?;
    ensure!(
        gold.decomposition_rate == 1.0 && gold.executability_rate == 1.0,
        "gold {} / {}",
        gold.decomposition_rate,
        gold.executability_rate
    );
    for id in ["mock:format-once", "mock:unknown-once"] {
        let row = rows.get(id).ok_or(format!("no {id} row"))?;
        ensure!(
            row.decomposition_rate == 1.0 && row.mean_attempts == 2.0,
            "{id}: {} decomposition, {} attempts",
            row.decomposition_rate,
            row.mean_attempts
        );
    }
    for row in &report.rows {
        ensure!(row.decomposed >= row.executable, "{} decomposes less than it executes", row.backend_id);
    }
    let table = report.render_table();
    for needle in ["Type A", "Type B", "Type C", "decomposition", "executability", "mock:gold"] {
        ensure!(table.contains(needle), "table lacks {needle:?}");
    }
    ensure!(report.check().is_empty(), "check: {:?}", report.check());
    within(started, Duration::from_secs(120))?;
    Ok(format!("gold 100%/100%, single-fault mocks 100% at 2.00 attempts, in {:?}", started.elapsed()))
}

fn determinism() -> Check {
    let recorded = run_eval(&mock_backends()?)?;
    let replays = || -> Vec<BackendHandle> {
        recorded
            .report
            .rows
            .iter()
            .map(|r| {
                let exchanges = recorded.transcripts[&r.backend_id].clone();
                Arc::new(ReplayBackend::new(r.backend_id.clone(), exchanges)) as BackendHandle
            })
            .collect()
    };
    let first = run_eval(&replays())?.report;
    let second = run_eval(&replays())?.report;
    ensure!(first.to_json() == second.to_json(), "replayed JSON reports differ");
    ensure!(first.render_table() == second.render_table(), "replayed tables differ");
    ensure!(first.to_json() == recorded.report.to_json(), "replay differs from the recorded run");
    Ok(format!("two replays byte-identical ({} bytes)", first.to_json().len()))
}

fn answer_limits() -> Check {
    let words = |n: usize| vec!["word"; n].join(" ");
    let cfg = |script| {
        let backend = Counting::new(script);
        (PlanningConfig::new(backend.clone()), backend)
    };

    let (c, b) = cfg(MockScript::scripted([words(30)]));
    let r = answer_question("What day is it?", &c).map_err(|e| e.to_string())?;
    ensure!(r.outcome == AnswerOutcome::Answered(words(30)) && b.calls() == 1, "30 words rejected: {r:?}");

    let (c, b) = cfg(MockScript::scripted([words(31), "It is Sunday.".into()]));
    let r = answer_question("What day is it?", &c).map_err(|e| e.to_string())?;
    ensure!(
        r.outcome == AnswerOutcome::Answered("It is Sunday.".into()) && r.attempts == 2 && b.calls() == 2,
        "31 words accepted or not retried: {r:?}"
    );

    let (c, b) = cfg(MockScript::repeating(words(40)));
    let r = answer_question("What day is it?", &c).map_err(|e| e.to_string())?;
    ensure!(r.outcome == AnswerOutcome::CannotAnswer && b.calls() == 5, "{:?} after {} calls", r.outcome, b.calls());
    ensure!(ANSWER_INSTRUCTION.contains("30"), "instruction lacks the limit");
    Ok("30 words accepted, 31 retried, CannotAnswer after 5 calls".into())
}

/// None when not configured.
fn live_smoke() -> Option<Check> {
    let name = std::env::var("GPSR_LIVE_BACKEND").ok()?;
    Some((|| {
        let path = std::env::var("GPSR_BACKENDS").map_err(|_| "GPSR_BACKENDS is not set".to_string())?;
        let text = std::fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
        #[derive(serde::Deserialize)]
        struct File {
            backend: Vec<HttpConfig>,
        }
        let file: File = toml::from_str(&text).map_err(|e| e.to_string())?;
        let cfg = file.backend.into_iter().find(|b| b.name == name).ok_or(format!("no backend {name}"))?;
        let backend = Arc::new(HttpBackend::new(cfg).map_err(|e| e.to_string())?);
        let world = WorldModel::benchmark();
        let result = plan(JENNIFER, &world, &PlanningConfig::new(backend)).map_err(|e| e.to_string())?;
        Ok(format!("{name}: {:?} after {} attempts", result.plan().map(render), result.attempts))
    })())
}

fn main() {
    let checks: [(&str, CheckFn); 9] = [
        ("corrective suffixes", corrective_suffixes),
        ("give-up rule", giveup_rule),
        ("failure classification", classification),
        ("reference corpus", corpus),
        ("parser properties", parser_properties),
        ("static vs dynamic oracle", static_dynamic),
        ("metrics pipeline", metrics_pipeline),
        ("determinism", determinism),
        ("answer limits", answer_limits),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    match live_smoke() {
        None => println!("SKIP 10 live smoke: GPSR_LIVE_BACKEND not set"),
        Some(Ok(detail)) => println!("PASS 10 live smoke: {detail}"),
        Some(Err(detail)) => {
            failed += 1;
            println!("FAIL 10 live smoke: {detail}");
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}

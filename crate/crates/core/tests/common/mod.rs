#![allow(dead_code)]

use gpsr_core::executor::{compile, execute, ExecutionVerdict, FailureReason, FixedAnswer, InteractionScript, RunOptions};
use gpsr_core::primitives::{validate_static, ActionStep, Plan, PrimitiveKind, Verdict};
use gpsr_core::WorldModel;
use proptest::prelude::*;

/// Two rooms, two objects, one person.
pub const SMALL_WORLD: &str = r#"
schema = 1
rooms = ["kitchen", "hall"]

[locations]
table = "kitchen"
shelf = "hall"

[objects]
cup = "table"
ball = "shelf"

[persons.Ann]
gender = "female"
gesture = "pointing_left"
location = "table"
"#;

/// Every step over the small world, including arguments that do not ground.
pub fn small_world_steps() -> Vec<ActionStep> {
    use PrimitiveKind::*;
    let pool: &[(PrimitiveKind, &[&str])] = &[
        (MoveTo, &["kitchen", "hall", "table", "shelf", "initial location", "garage"]),
        (LookForObj, &["cup", "ball", "spoon"]),
        (LookForPerson, &["Ann", "female person", "person pointing to the left", "male person", "her", "me"]),
        (Follow, &["Ann", "her", "male person"]),
        (Grasp, &["cup", "ball", "spoon"]),
        (PassTo, &["me", "Ann", "her", "shelf", "Bob"]),
        (Speak, &["hello"]),
        (Answer, &["question"]),
    ];
    pool.iter()
        .flat_map(|(k, args)| args.iter().map(|a| ActionStep::new(*k, *a).unwrap()))
        .collect()
}

/// All plans of length `0..=max_len` over `pool`.
pub fn all_plans(pool: &[ActionStep], max_len: usize) -> Vec<Plan> {
    let mut layer: Vec<Vec<ActionStep>> = vec![Vec::new()];
    let mut all = vec![Plan::default()];
    for _ in 0..max_len {
        layer = layer
            .iter()
            .flat_map(|prefix| {
                pool.iter().map(move |s| {
                    let mut p = prefix.clone();
                    p.push(s.clone());
                    p
                })
            })
            .collect();
        all.extend(layer.iter().cloned().map(Plan::new));
    }
    all
}

#[derive(Debug, Default)]
pub struct OracleStats {
    pub plans: usize,
    pub flagged: usize,
    pub flagged_fail_exactly_there: usize,
    pub succeeded: usize,
}

/// Runs every plan of length <= `max_len` both ways. Errors name the first
/// plan on which a static ordering violation is not matched by a runtime
/// failure at or before the flagged step, or a runtime precondition
/// failure is not flagged statically at that step.
pub fn static_dynamic_oracle(max_len: usize) -> Result<OracleStats, String> {
    let world = WorldModel::from_toml_str(SMALL_WORLD).map_err(|e| e.to_string())?;
    let script = InteractionScript {
        follow: vec!["terminate".parse().unwrap(); max_len],
        questions: vec!["What time is it?".into(); max_len],
    };
    let answerer = FixedAnswer("Noon.".into());
    let options = RunOptions::default();
    let mut stats = OracleStats::default();

    for plan in all_plans(&small_world_steps(), max_len) {
        stats.plans += 1;
        let report = validate_static(&plan, &world);
        let trace = execute(&plan, &world, &script, &answerer, &options);
        if compile(&plan, &world).is_ok() != report.is_valid() {
            return Err(format!("{plan}: compile disagrees with validation"));
        }
        if report.verdict == Verdict::PreconditionOrderViolation {
            stats.flagged += 1;
            let k = report.offending_index.unwrap_or(usize::MAX);
            match trace.failed_step() {
                Some(j) if j <= k => stats.flagged_fail_exactly_there += usize::from(j == k),
                _ => return Err(format!("{plan}: flagged at step {k}, but the run gave\n{trace}")),
            }
        }
        match &trace.verdict {
            ExecutionVerdict::Success => stats.succeeded += 1,
            ExecutionVerdict::Failure {
                step,
                reason: FailureReason::Precondition(_),
            } if report.offending_index != Some(*step)
                || report.verdict != Verdict::PreconditionOrderViolation =>
            {
                return Err(format!("{plan}: runtime precondition failure at {step} not flagged: {report:?}"));
            }
            ExecutionVerdict::Failure { .. } => {}
        }
    }
    Ok(stats)
}

pub fn argument() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 ,'\"\\\\\\[\\]!?._-]{1,24}".prop_filter_map("invalid argument", |s| {
        ActionStep::new(PrimitiveKind::Speak, s.as_str())
            .ok()
            .map(|step| step.argument().to_string())
    })
}

pub fn action_step() -> impl Strategy<Value = ActionStep> {
    (0..PrimitiveKind::ALL.len(), argument())
        .prop_map(|(k, arg)| ActionStep::new(PrimitiveKind::ALL[k], arg).expect("filtered argument"))
}

pub fn plan() -> impl Strategy<Value = Plan> {
    prop::collection::vec(action_step(), 0..8).prop_map(Plan::new)
}

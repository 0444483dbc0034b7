//! Plan compilation into a state machine and simulated execution.

mod machine;
mod script;
mod sim;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use machine::{compile, InvalidPlan, PrimitiveState, StateMachine, SubState, Transition};
pub use script::{FollowSignal, InteractionScript, ScriptError};
pub use sim::{parse_descriptor, run, Descriptor};

use crate::primitives::Plan;
use crate::world::{WorldModel, INITIAL_LOCATION};

pub const DEFAULT_FOLLOW_STEP_LIMIT: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Script signals one `follow` step may consume before it gives up.
    pub follow_step_limit: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            follow_step_limit: DEFAULT_FOLLOW_STEP_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RobotState {
    pub location: String,
    pub holding: Option<String>,
    pub engaged_person: Option<String>,
    pub following: bool,
}

impl RobotState {
    pub fn at(location: impl Into<String>) -> Self {
        RobotState {
            location: location.into(),
            holding: None,
            engaged_person: None,
            following: false,
        }
    }
}

impl Default for RobotState {
    fn default() -> Self {
        RobotState::at(INITIAL_LOCATION)
    }
}

/// Reply of the question-answering collaborator used by `answer` steps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerReply {
    Answer(String),
    CannotAnswer,
    Unavailable(String),
}

pub trait Answerer {
    fn answer(&self, question: &str) -> AnswerReply;
}

impl<F: Fn(&str) -> AnswerReply> Answerer for F {
    fn answer(&self, question: &str) -> AnswerReply {
        self(question)
    }
}

/// Always gives the same answer.
#[derive(Debug, Clone)]
pub struct FixedAnswer(pub String);

impl Answerer for FixedAnswer {
    fn answer(&self, _question: &str) -> AnswerReply {
        AnswerReply::Answer(self.0.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateOutcome {
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub step: usize,
    pub state: String,
    pub outcome: StateOutcome,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observations: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub utterances: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum FailureReason {
    /// Argument does not ground to anything of the required kind.
    Unresolved(String),
    NotFound(String),
    NotCoLocated(String),
    /// A required earlier effect (object seen, object held, person engaged)
    /// is missing.
    Precondition(String),
    HandsFull(String),
    /// The held object was already handed over.
    HandsEmpty(String),
    PersonMismatch(String),
    NoTerminateSignal,
    NoQuestion,
    CannotAnswer,
    AnswererUnavailable(String),
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FailureReason::Unresolved(s) => write!(f, "unresolved: {s}"),
            FailureReason::NotFound(s) => write!(f, "not found: {s}"),
            FailureReason::NotCoLocated(s) => write!(f, "not co-located: {s}"),
            FailureReason::Precondition(s) => write!(f, "precondition: {s}"),
            FailureReason::HandsFull(s) => write!(f, "hands full: {s}"),
            FailureReason::HandsEmpty(s) => write!(f, "hands empty: {s}"),
            FailureReason::PersonMismatch(s) => write!(f, "person mismatch: {s}"),
            FailureReason::NoTerminateSignal => f.write_str("no terminate signal"),
            FailureReason::NoQuestion => f.write_str("no question scripted"),
            FailureReason::CannotAnswer => f.write_str("cannot answer"),
            FailureReason::AnswererUnavailable(s) => write!(f, "answerer unavailable: {s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ExecutionVerdict {
    Success,
    Failure { step: usize, reason: FailureReason },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub entries: Vec<TraceEntry>,
    #[serde(flatten)]
    pub verdict: ExecutionVerdict,
    pub final_state: RobotState,
}

impl ExecutionTrace {
    pub fn succeeded(&self) -> bool {
        self.verdict == ExecutionVerdict::Success
    }

    pub fn failed_step(&self) -> Option<usize> {
        match &self.verdict {
            ExecutionVerdict::Success => None,
            ExecutionVerdict::Failure { step, .. } => Some(*step),
        }
    }

    pub fn utterances(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().flat_map(|e| e.utterances.iter().map(String::as_str))
    }
}

impl fmt::Display for ExecutionTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            let outcome = match e.outcome {
                StateOutcome::Succeeded => "succeeded",
                StateOutcome::Failed => "failed",
            };
            write!(f, "[{}] {} {outcome}", e.step, e.state)?;
            for o in &e.observations {
                write!(f, "; {o}")?;
            }
            for u in &e.utterances {
                write!(f, "; says {u:?}")?;
            }
            writeln!(f)?;
        }
        match &self.verdict {
            ExecutionVerdict::Success => write!(f, "SUCCESS at {}", self.final_state.location),
            ExecutionVerdict::Failure { step, reason } => write!(f, "FAILURE at step {step}: {reason}"),
        }
    }
}

/// Runs a plan from the initial location without static validation, so
/// ordering mistakes surface as runtime failures.
pub fn execute(
    plan: &Plan,
    world: &WorldModel,
    script: &InteractionScript,
    answerer: &dyn Answerer,
    options: &RunOptions,
) -> ExecutionTrace {
    run(
        &StateMachine::from_plan(plan),
        world,
        RobotState::default(),
        script,
        answerer,
        options,
    )
}

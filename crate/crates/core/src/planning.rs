//! Command-to-plan loop with exception handling.
//!
//! Each attempt sends the conversation so far, parses the reply and
//! (optionally) validates it statically. A failed attempt appends the
//! reply and the corrective suffix for its failure class as two new turns,
//! then asks again. After `max_consecutive_exceptions` failed attempts the
//! command is declared unparseable. The counter is per command.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::debug;

use crate::executor::{self, AnswerReply, Answerer, ExecutionTrace, InteractionScript, RunOptions};
use crate::llm::{BackendHandle, ChatMessage, ChatRequest, Exchange, LlmError, Recorder};
use crate::parser::{parse, FailureKind, ParseFailure, ParseOutcome};
use crate::primitives::{validate_static, Plan, ValidationReport, Verdict};
use crate::prompt::{
    build_answer_prompt, build_prompt, PromptBank, PromptBundle, PromptConfig, PromptError,
    ANSWER_INSTRUCTION,
};
use crate::world::WorldModel;

pub const DEFAULT_MAX_CONSECUTIVE_EXCEPTIONS: usize = 5;
pub const MAX_ANSWER_WORDS: usize = 30;

#[derive(Debug, Error)]
pub enum PlanningError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(#[from] LlmError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("invalid planning configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationMode {
    ParseOnly,
    #[default]
    ParseAndStatic,
}

#[derive(Clone)]
pub struct PlanningConfig {
    pub max_consecutive_exceptions: usize,
    pub backend: BackendHandle,
    pub prompt: PromptConfig,
    pub bank: Arc<PromptBank>,
    pub validation: ValidationMode,
    pub temperature: f64,
    pub max_output_tokens: u32,
}

impl PlanningConfig {
    /// Defaults: five attempts, static validation on, temperature 0, the
    /// shipped prompt bank.
    pub fn new(backend: BackendHandle) -> Self {
        PlanningConfig {
            max_consecutive_exceptions: DEFAULT_MAX_CONSECUTIVE_EXCEPTIONS,
            backend,
            prompt: PromptConfig::default(),
            bank: Arc::new(PromptBank::default_bank()),
            validation: ValidationMode::default(),
            temperature: 0.0,
            max_output_tokens: crate::llm::DEFAULT_MAX_OUTPUT_TOKENS,
        }
    }

    pub fn with_backend(&self, backend: BackendHandle) -> Self {
        PlanningConfig {
            backend,
            ..self.clone()
        }
    }

    fn check(&self) -> Result<(), PlanningError> {
        if self.max_consecutive_exceptions == 0 {
            return Err(PlanningError::InvalidConfig(
                "max_consecutive_exceptions must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn request(&self, messages: &[ChatMessage]) -> ChatRequest {
        ChatRequest {
            messages: messages.to_vec(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }
}

impl std::fmt::Debug for PlanningConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PlanningConfig")
            .field("max_consecutive_exceptions", &self.max_consecutive_exceptions)
            .field("backend", &self.backend.id())
            .field("prompt", &self.prompt)
            .field("validation", &self.validation)
            .finish()
    }
}

/// How one attempt was judged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum AttemptVerdict {
    Accepted,
    ParseFailed(ParseFailure),
    Invalid(ValidationReport),
}

impl AttemptVerdict {
    /// Failure class that selects the corrective suffix. Static validation
    /// failures of any kind are treated as vocabulary failures.
    pub fn failure_kind(&self) -> Option<FailureKind> {
        match self {
            AttemptVerdict::Accepted => None,
            AttemptVerdict::ParseFailed(f) => Some(f.kind),
            AttemptVerdict::Invalid(_) => Some(FailureKind::UnknownAction),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub request_digest: String,
    pub raw_response: String,
    #[serde(flatten)]
    pub verdict: AttemptVerdict,
    /// Corrective suffix sent after this attempt, if another one followed.
    pub suffix: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "plan", rename_all = "snake_case")]
pub enum PlanningOutcome {
    Planned(Plan),
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanningResult {
    pub outcome: PlanningOutcome,
    pub attempts: usize,
    pub attempt_log: Vec<AttemptRecord>,
    pub prompt: PromptBundle,
}

impl PlanningResult {
    pub fn plan(&self) -> Option<&Plan> {
        match &self.outcome {
            PlanningOutcome::Planned(p) => Some(p),
            PlanningOutcome::Unparseable => None,
        }
    }

    pub fn suffixes(&self) -> Vec<&str> {
        self.attempt_log.iter().filter_map(|a| a.suffix.as_deref()).collect()
    }
}

fn judge(raw: &str, world: &WorldModel, mode: ValidationMode) -> (AttemptVerdict, Option<Plan>) {
    match parse(raw) {
        ParseOutcome::Failed(f) => (AttemptVerdict::ParseFailed(f), None),
        ParseOutcome::Parsed { plan } => {
            if mode == ValidationMode::ParseAndStatic {
                let report = validate_static(&plan, world);
                if report.verdict != Verdict::Valid {
                    return (AttemptVerdict::Invalid(report), None);
                }
            }
            (AttemptVerdict::Accepted, Some(plan))
        }
    }
}

/// Maps a natural-language command to a plan.
pub fn plan(
    command_text: &str,
    world: &WorldModel,
    config: &PlanningConfig,
) -> Result<PlanningResult, PlanningError> {
    config.check()?;
    let mut bundle = build_prompt(command_text, world, &config.bank, &config.prompt)?;
    let mut messages = vec![ChatMessage::user(bundle.render())];
    let mut log = Vec::new();

    for attempt in 1..=config.max_consecutive_exceptions {
        let request = config.request(&messages);
        let response = config.backend.complete(&request)?;
        let (verdict, plan) = judge(&response.content, world, config.validation);
        debug!(attempt, command = command_text, ?verdict, "planning attempt");

        if let Some(plan) = plan {
            log.push(AttemptRecord {
                request_digest: request.digest(),
                raw_response: response.content,
                verdict,
                suffix: None,
            });
            return Ok(PlanningResult {
                outcome: PlanningOutcome::Planned(plan),
                attempts: attempt,
                attempt_log: log,
                prompt: bundle,
            });
        }

        let suffix = (attempt < config.max_consecutive_exceptions).then(|| {
            let kind = verdict.failure_kind().expect("failed attempt has a class");
            bundle.push_suffix(kind).to_string()
        });
        if let Some(suffix) = &suffix {
            messages.push(ChatMessage::assistant(response.content.clone()));
            messages.push(ChatMessage::user(suffix.clone()));
        }
        log.push(AttemptRecord {
            request_digest: request.digest(),
            raw_response: response.content,
            verdict,
            suffix,
        });
    }

    Ok(PlanningResult {
        outcome: PlanningOutcome::Unparseable,
        attempts: config.max_consecutive_exceptions,
        attempt_log: log,
        prompt: bundle,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "text", rename_all = "snake_case")]
pub enum AnswerOutcome {
    Answered(String),
    CannotAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerAttempt {
    pub raw_response: String,
    pub rejected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerResult {
    pub outcome: AnswerOutcome,
    pub attempts: usize,
    pub attempt_log: Vec<AnswerAttempt>,
}

fn reject_answer(raw: &str) -> Option<String> {
    let words = crate::prompt::word_count(raw);
    if words == 0 {
        Some("empty answer".to_string())
    } else if words > MAX_ANSWER_WORDS {
        Some(format!("answer has {words} words, limit is {MAX_ANSWER_WORDS}"))
    } else {
        None
    }
}

/// Question answering round. An attempt fails when the reply is empty or
/// longer than 30 words; the instruction is repeated as the next turn.
pub fn answer_question(question: &str, config: &PlanningConfig) -> Result<AnswerResult, PlanningError> {
    config.check()?;
    let bundle = build_answer_prompt(question, &config.prompt)?;
    let mut messages = vec![ChatMessage::user(bundle.render())];
    let mut log = Vec::new();
    for attempt in 1..=config.max_consecutive_exceptions {
        let response = config.backend.complete(&config.request(&messages))?;
        let raw = response.content;
        match reject_answer(&raw) {
            None => {
                log.push(AnswerAttempt {
                    raw_response: raw.clone(),
                    rejected: None,
                });
                return Ok(AnswerResult {
                    outcome: AnswerOutcome::Answered(raw.trim().to_string()),
                    attempts: attempt,
                    attempt_log: log,
                });
            }
            Some(reason) => {
                messages.push(ChatMessage::assistant(raw.clone()));
                messages.push(ChatMessage::user(ANSWER_INSTRUCTION));
                log.push(AnswerAttempt {
                    raw_response: raw,
                    rejected: Some(reason),
                });
            }
        }
    }
    Ok(AnswerResult {
        outcome: AnswerOutcome::CannotAnswer,
        attempts: config.max_consecutive_exceptions,
        attempt_log: log,
    })
}

impl Answerer for PlanningConfig {
    fn answer(&self, question: &str) -> AnswerReply {
        match answer_question(question, self) {
            Ok(AnswerResult {
                outcome: AnswerOutcome::Answered(text),
                ..
            }) => AnswerReply::Answer(text),
            Ok(_) => AnswerReply::CannotAnswer,
            Err(e) => AnswerReply::Unavailable(e.to_string()),
        }
    }
}

/// Full record of one planning and execution episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub command: String,
    pub backend_id: String,
    pub exchanges: Vec<Exchange>,
    pub planning: Option<PlanningResult>,
    pub execution: Option<ExecutionTrace>,
    /// Set when the backend failed; the episode stopped there.
    pub error: Option<String>,
}

/// Plans `command` and, when a plan comes back, executes it with `script`.
/// Every backend exchange (planning and question answering) is recorded.
pub fn run_episode(
    command: &str,
    world: &WorldModel,
    config: &PlanningConfig,
    script: &InteractionScript,
    options: &RunOptions,
) -> EpisodeTrace {
    let recorder = Arc::new(Recorder::new(config.backend.clone()));
    let config = config.with_backend(recorder.clone());
    let mut trace = EpisodeTrace {
        command: command.to_string(),
        backend_id: config.backend.id().to_string(),
        exchanges: Vec::new(),
        planning: None,
        execution: None,
        error: None,
    };
    match plan(command, world, &config) {
        Ok(result) => {
            if let Some(p) = result.plan() {
                trace.execution = Some(executor::execute(p, world, script, &config, options));
            }
            trace.planning = Some(result);
        }
        Err(e) => trace.error = Some(e.to_string()),
    }
    trace.exchanges = recorder.take();
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{ChatBackend, MockBackend, MockScript};
    use crate::prompt::{FORMAT_SUFFIX, SUBTASK_SUFFIX};

    fn config(script: MockScript) -> PlanningConfig {
        PlanningConfig::new(Arc::new(MockBackend::new("mock", script)))
    }

    #[test]
    fn happy_path() {
        let cfg = config(MockScript::scripted(["[[move to, kitchen]]"]));
        let result = plan("Go to the kitchen", &WorldModel::benchmark(), &cfg).unwrap();
        assert!(matches!(result.outcome, PlanningOutcome::Planned(_)));
        assert_eq!(result.attempts, 1);
        assert!(result.suffixes().is_empty());
    }

    #[test]
    fn unknown_action_then_valid() {
        let cfg = config(MockScript::scripted([
            "[[find, cola]]",
            "[[move to, tea table], [look for obj, cola]]",
        ]));
        let result = plan("Give me a cola", &WorldModel::benchmark(), &cfg).unwrap();
        assert_eq!(result.attempts, 2);
        assert_eq!(result.suffixes(), vec![SUBTASK_SUFFIX]);
        assert_eq!(result.prompt.corrective_suffixes, vec![SUBTASK_SUFFIX]);
    }

    #[test]
    fn garbage_five_times() {
        let cfg = config(MockScript::repeating("no idea"));
        let result = plan("Give me a cola", &WorldModel::benchmark(), &cfg).unwrap();
        assert_eq!(result.outcome, PlanningOutcome::Unparseable);
        assert_eq!(result.attempts, 5);
        assert_eq!(result.attempt_log.len(), 5);
        assert!(result.suffixes().iter().all(|s| *s == FORMAT_SUFFIX));
        assert_eq!(result.suffixes().len(), 4);
    }

    #[test]
    fn static_violation_uses_subtask_suffix() {
        let cfg = config(MockScript::scripted(["[[grasp, cola]]", "[[look for obj, cola], [grasp, cola]]"]));
        let world = WorldModel::benchmark();
        let result = plan("Give me a cola", &world, &cfg).unwrap();
        assert_eq!(result.attempts, 2);
        assert_eq!(result.suffixes(), vec![SUBTASK_SUFFIX]);
        assert!(matches!(result.attempt_log[0].verdict, AttemptVerdict::Invalid(_)));

        let mut parse_only = config(MockScript::scripted(["[[grasp, cola]]"]));
        parse_only.validation = ValidationMode::ParseOnly;
        let result = plan("Give me a cola", &world, &parse_only).unwrap();
        assert_eq!(result.attempts, 1);
    }

    #[test]
    fn zero_attempt_budget_is_rejected() {
        let mut cfg = config(MockScript::repeating("x"));
        cfg.max_consecutive_exceptions = 0;
        assert!(matches!(
            plan("Go", &WorldModel::benchmark(), &cfg),
            Err(PlanningError::InvalidConfig(_))
        ));
    }

    #[test]
    fn exhausted_script_is_backend_unavailable() {
        let cfg = config(MockScript::scripted(["nope"]));
        assert!(matches!(
            plan("Go to the kitchen", &WorldModel::benchmark(), &cfg),
            Err(PlanningError::BackendUnavailable(LlmError::ScriptExhausted(1)))
        ));
    }

    #[test]
    fn answers() {
        let six = "It is Monday the fifth today";
        let r = answer_question("What day is it?", &config(MockScript::scripted([six]))).unwrap();
        assert_eq!(r.outcome, AnswerOutcome::Answered(six.to_string()));
        assert_eq!(r.attempts, 1);

        let forty = vec!["word"; 40].join(" ");
        let r = answer_question("What day is it?", &config(MockScript::repeating(forty))).unwrap();
        assert_eq!(r.outcome, AnswerOutcome::CannotAnswer);
        assert_eq!(r.attempts, 5);

        let r = answer_question("What day is it?", &config(MockScript::scripted(["", six]))).unwrap();
        assert_eq!(r.attempts, 2);
        assert!(matches!(r.outcome, AnswerOutcome::Answered(_)));

        let thirty = vec!["w"; 30].join(" ");
        let r = answer_question("Q?", &config(MockScript::scripted([thirty]))).unwrap();
        assert_eq!(r.attempts, 1);
    }

    #[test]
    fn messages_grow_by_two_turns() {
        let mock = Arc::new(MockBackend::new("mock", MockScript::repeating("junk")));
        let recorder = Arc::new(Recorder::new(mock));
        let cfg = PlanningConfig::new(recorder.clone() as Arc<dyn ChatBackend>);
        plan("Give me a cola", &WorldModel::benchmark(), &cfg).unwrap();
        let ex = recorder.exchanges();
        assert_eq!(ex.len(), 5);
        for pair in ex.windows(2) {
            let (a, b) = (&pair[0].request.messages, &pair[1].request.messages);
            assert_eq!(b.len(), a.len() + 2);
            assert_eq!(&b[..a.len()], &a[..]);
        }
    }
}

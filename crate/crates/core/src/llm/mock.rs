use std::collections::HashMap;

use serde::{Deserialize, Deserializer, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};
use crate::parser::{parse, ParseOutcome};
use crate::primitives::Plan;
use crate::prompt::ANSWER_INSTRUCTION;
use crate::world::normalize;

/// Transformation applied to the response of one turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// `[[look for obj, cola]]` becomes `[look for obj(cola)]`.
    CorruptFormat,
    /// The first action is replaced by `find`.
    InjectUnknownAction,
    /// Only the first half of the response survives.
    Truncate,
    Empty,
}

impl Fault {
    pub fn apply(&self, content: &str) -> String {
        match self {
            Fault::CorruptFormat => match parse(content) {
                ParseOutcome::Parsed { plan } => {
                    let calls: Vec<String> = plan
                        .steps
                        .iter()
                        .map(|s| format!("{}({})", s.kind().surface_name(), s.argument()))
                        .collect();
                    format!("[{}]", calls.join(", "))
                }
                ParseOutcome::Failed(_) => content.replace('[', "("),
            },
            Fault::InjectUnknownAction => match parse(content) {
                ParseOutcome::Parsed { plan } if !plan.is_empty() => {
                    let rendered = plan.to_string();
                    let first = plan.steps[0].kind().surface_name();
                    rendered.replacen(&format!("[[{first},"), "[[find,", 1)
                }
                _ => "[[find, it]]".to_string(),
            },
            Fault::Truncate => {
                let keep = content.chars().count() / 2;
                content.chars().take(keep).collect()
            }
            Fault::Empty => String::new(),
        }
    }
}

/// Reference plans keyed by command text, plus a canned reply for
/// question-answering prompts.
#[derive(Debug, Clone, Default)]
pub struct GoldTable {
    plans: HashMap<String, Plan>,
    answer: String,
}

pub const DEFAULT_ANSWER: &str = "Today is Sunday.";

impl GoldTable {
    pub fn new() -> Self {
        GoldTable {
            plans: HashMap::new(),
            answer: DEFAULT_ANSWER.to_string(),
        }
    }

    pub fn insert(&mut self, command: &str, plan: Plan) {
        self.plans.insert(normalize(command), plan);
    }

    pub fn with_answer(mut self, answer: impl Into<String>) -> Self {
        self.answer = answer.into();
        self
    }

    pub fn get(&self, command: &str) -> Option<&Plan> {
        self.plans.get(&normalize(command))
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    fn respond(&self, request: &ChatRequest) -> String {
        let prompt = request.prompt();
        if prompt.starts_with(ANSWER_INSTRUCTION) {
            return self.answer.clone();
        }
        let command = prompt
            .lines()
            .rev()
            .find_map(|l| l.strip_prefix("Command:"))
            .map(str::trim)
            .unwrap_or_default();
        match self.get(command) {
            Some(plan) => plan.to_string(),
            None => format!("I do not know how to plan the command \"{command}\"."),
        }
    }
}

/// Where the undisturbed response for a turn comes from.
#[derive(Debug, Clone)]
pub enum Responder {
    /// Turn `k` answers `responses[k]`; past the end, the last entry
    /// repeats when `repeat_last` is set.
    Scripted {
        responses: Vec<String>,
        repeat_last: bool,
    },
    /// Answers the reference plan of the command in the prompt.
    Gold(GoldTable),
}

/// Scripted behaviour of a mock backend: a responder and per-turn faults.
#[derive(Debug, Clone)]
pub struct MockScript {
    pub responder: Responder,
    pub faults: Vec<Option<Fault>>,
}

impl MockScript {
    pub fn scripted<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        MockScript {
            responder: Responder::Scripted {
                responses: responses.into_iter().map(Into::into).collect(),
                repeat_last: false,
            },
            faults: Vec::new(),
        }
    }

    pub fn repeating(response: impl Into<String>) -> Self {
        MockScript {
            responder: Responder::Scripted {
                responses: vec![response.into()],
                repeat_last: true,
            },
            faults: Vec::new(),
        }
    }

    pub fn gold(table: GoldTable) -> Self {
        MockScript {
            responder: Responder::Gold(table),
            faults: Vec::new(),
        }
    }

    pub fn with_faults(mut self, faults: Vec<Option<Fault>>) -> Self {
        self.faults = faults;
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self, LlmError> {
        let file: ScriptFile =
            toml::from_str(text).map_err(|e| LlmError::Config(e.message().to_string()))?;
        if file.responses.is_empty() {
            return Err(LlmError::Config("mock script has no responses".into()));
        }
        Ok(MockScript {
            responder: Responder::Scripted {
                responses: file.responses,
                repeat_last: file.repeat_last,
            },
            faults: file.faults.into_iter().map(|f| f.0).collect(),
        })
    }

    fn response_for(&self, request: &ChatRequest) -> Result<String, LlmError> {
        let turn = request.turn();
        let base = match &self.responder {
            Responder::Scripted {
                responses,
                repeat_last,
            } => match responses.get(turn) {
                Some(r) => r.clone(),
                None if *repeat_last && !responses.is_empty() => responses[responses.len() - 1].clone(),
                None => return Err(LlmError::ScriptExhausted(turn)),
            },
            Responder::Gold(table) => table.respond(request),
        };
        Ok(match self.faults.get(turn).copied().flatten() {
            Some(fault) => fault.apply(&base),
            None => base,
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    responses: Vec<String>,
    #[serde(default)]
    repeat_last: bool,
    #[serde(default)]
    faults: Vec<FaultSlot>,
}

/// `"none"` or a fault name.
struct FaultSlot(Option<Fault>);

impl<'de> Deserialize<'de> for FaultSlot {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        if name == "none" {
            return Ok(FaultSlot(None));
        }
        Fault::deserialize(serde::de::value::StrDeserializer::<D::Error>::new(&name)).map(|f| FaultSlot(Some(f)))
    }
}

/// Deterministic in-process backend. The response depends only on the
/// request (its turn index and prompt) and the script, so one backend can
/// serve concurrent episodes without sharing state between them.
#[derive(Debug, Clone)]
pub struct MockBackend {
    id: String,
    script: MockScript,
}

/// Names accepted by [`MockBackend::named`].
pub const MOCK_NAMES: &[&str] = &[
    "gold",
    "garbage",
    "unknown-once",
    "format-once",
    "truncate-once",
    "empty-once",
];

pub const GARBAGE_RESPONSE: &str = "Sure, I will find the cola for you.";

impl MockBackend {
    pub fn new(id: impl Into<String>, script: MockScript) -> Self {
        MockBackend {
            id: id.into(),
            script,
        }
    }

    /// Built-in mocks addressable as `mock:<name>`.
    pub fn named(name: &str, gold: GoldTable) -> Option<Self> {
        let once = |fault| MockScript::gold(gold.clone()).with_faults(vec![Some(fault)]);
        let script = match name {
            "gold" => MockScript::gold(gold.clone()),
            "garbage" => MockScript::repeating(GARBAGE_RESPONSE),
            "unknown-once" => once(Fault::InjectUnknownAction),
            "format-once" => once(Fault::CorruptFormat),
            "truncate-once" => once(Fault::Truncate),
            "empty-once" => once(Fault::Empty),
            _ => return None,
        };
        Some(MockBackend::new(format!("mock:{name}"), script))
    }
}

impl ChatBackend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let content = self.script.response_for(request)?;
        Ok(ChatResponse::new(self.id.clone(), content))
    }

    fn concurrency_limit(&self) -> usize {
        8
    }
}

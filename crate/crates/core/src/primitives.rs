//! The closed set of eight primitive actions, plan types and the static
//! plan validator.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::world::WorldModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimitiveKind {
    MoveTo,
    LookForObj,
    LookForPerson,
    Follow,
    Grasp,
    PassTo,
    Speak,
    Answer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArgRole {
    Location,
    Object,
    PersonDescriptor,
    PersonOrObject,
    Utterance,
    Topic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrimitiveSignature {
    pub kind: PrimitiveKind,
    pub surface_name: &'static str,
    pub arg_role: ArgRole,
    pub arity: usize,
}

const REGISTRY: [PrimitiveSignature; 8] = [
    sig(PrimitiveKind::MoveTo, "move to", ArgRole::Location),
    sig(PrimitiveKind::LookForObj, "look for obj", ArgRole::Object),
    sig(PrimitiveKind::LookForPerson, "look for person", ArgRole::PersonDescriptor),
    sig(PrimitiveKind::Follow, "follow", ArgRole::PersonDescriptor),
    sig(PrimitiveKind::Grasp, "grasp", ArgRole::Object),
    sig(PrimitiveKind::PassTo, "pass to", ArgRole::PersonOrObject),
    sig(PrimitiveKind::Speak, "speak", ArgRole::Utterance),
    sig(PrimitiveKind::Answer, "answer", ArgRole::Topic),
];

const fn sig(kind: PrimitiveKind, surface_name: &'static str, arg_role: ArgRole) -> PrimitiveSignature {
    PrimitiveSignature {
        kind,
        surface_name,
        arg_role,
        arity: 1,
    }
}

/// All eight primitive signatures in declaration order.
pub fn registry() -> &'static [PrimitiveSignature] {
    &REGISTRY
}

/// Looks up a primitive by surface name. Case-insensitive; underscores
/// count as spaces and runs of whitespace collapse.
pub fn lookup(name: &str) -> Option<&'static PrimitiveSignature> {
    let key = normalize_action_name(name);
    REGISTRY.iter().find(|s| s.surface_name == key)
}

pub(crate) fn normalize_action_name(name: &str) -> String {
    name.replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl PrimitiveKind {
    pub const ALL: [PrimitiveKind; 8] = [
        PrimitiveKind::MoveTo,
        PrimitiveKind::LookForObj,
        PrimitiveKind::LookForPerson,
        PrimitiveKind::Follow,
        PrimitiveKind::Grasp,
        PrimitiveKind::PassTo,
        PrimitiveKind::Speak,
        PrimitiveKind::Answer,
    ];

    pub fn signature(&self) -> &'static PrimitiveSignature {
        REGISTRY
            .iter()
            .find(|s| s.kind == *self)
            .expect("every kind is registered")
    }

    pub fn surface_name(&self) -> &'static str {
        self.signature().surface_name
    }

    /// Upper-case state label, e.g. `LOOK_FOR_OBJ`.
    pub fn state_label(&self) -> String {
        self.surface_name().replace(' ', "_").to_uppercase()
    }
}

impl fmt::Display for PrimitiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.surface_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("step argument is empty")]
    EmptyArgument,
    #[error("step argument {0:?} has unbalanced brackets")]
    UnbalancedBrackets(String),
}

/// One `[action, argument]` element of a plan.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ActionStep {
    kind: PrimitiveKind,
    argument: String,
}

impl ActionStep {
    /// The argument is trimmed; it must be non-empty with balanced brackets.
    pub fn new(kind: PrimitiveKind, argument: impl Into<String>) -> Result<Self, StepError> {
        let argument = argument.into().trim().to_string();
        if argument.is_empty() {
            return Err(StepError::EmptyArgument);
        }
        if !brackets_balanced(&argument) {
            return Err(StepError::UnbalancedBrackets(argument));
        }
        Ok(ActionStep { kind, argument })
    }

    pub fn kind(&self) -> PrimitiveKind {
        self.kind
    }

    pub fn argument(&self) -> &str {
        &self.argument
    }
}

pub(crate) fn brackets_balanced(text: &str) -> bool {
    let mut depth = 0i64;
    for c in text.chars() {
        match c {
            '[' => depth += 1,
            ']' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

/// Builds a step from trusted literals. Panics on an invalid argument.
pub fn step(kind: PrimitiveKind, argument: &str) -> ActionStep {
    ActionStep::new(kind, argument).expect("valid step literal")
}

/// Ordered sequence of steps. An empty plan is an explicit no-op.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Plan {
    pub steps: Vec<ActionStep>,
}

impl Plan {
    pub fn new(steps: Vec<ActionStep>) -> Self {
        Plan { steps }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn kinds(&self) -> impl Iterator<Item = PrimitiveKind> + '_ {
        self.steps.iter().map(|s| s.kind)
    }

    pub fn contains(&self, kind: PrimitiveKind) -> bool {
        self.kinds().any(|k| k == kind)
    }
}

impl fmt::Display for Plan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&crate::parser::render(self))
    }
}

impl std::str::FromStr for Plan {
    type Err = crate::parser::ParseFailure;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        crate::parser::parse(s).into_result()
    }
}

impl Serialize for Plan {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&crate::parser::render(self))
    }
}

impl<'de> Deserialize<'de> for Plan {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Valid,
    UnknownAction,
    ArityError,
    PreconditionOrderViolation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub verdict: Verdict,
    pub offending_index: Option<usize>,
    pub detail: String,
}

impl ValidationReport {
    pub fn valid() -> Self {
        ValidationReport {
            verdict: Verdict::Valid,
            offending_index: None,
            detail: "plan is valid".to_string(),
        }
    }

    fn violation(verdict: Verdict, index: usize, detail: String) -> Self {
        ValidationReport {
            verdict,
            offending_index: Some(index),
            detail,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.verdict == Verdict::Valid
    }
}

/// Checks a parsed plan against the vocabulary, arity and ordering rules.
///
/// Ordering rules:
/// - `grasp X` needs an earlier `look for obj` of the same referent;
/// - `pass to` needs an earlier `grasp`;
/// - `follow` and `answer` need an earlier `look for person`.
///
/// The first violation found wins.
pub fn validate_static(plan: &Plan, world: &WorldModel) -> ValidationReport {
    for (i, step) in plan.steps.iter().enumerate() {
        if lookup(step.kind.surface_name()).map(|s| s.kind) != Some(step.kind) {
            return ValidationReport::violation(
                Verdict::UnknownAction,
                i,
                format!("step {i}: action {:?} is not a primitive", step.kind.surface_name()),
            );
        }
        if step.argument.trim().is_empty() {
            return ValidationReport::violation(
                Verdict::ArityError,
                i,
                format!("step {i}: {} takes exactly one argument", step.kind),
            );
        }
    }

    for (i, step) in plan.steps.iter().enumerate() {
        let before = &plan.steps[..i];
        let missing = match step.kind {
            PrimitiveKind::Grasp => {
                let seen = before.iter().any(|s| {
                    s.kind == PrimitiveKind::LookForObj && world.same_referent(&s.argument, &step.argument)
                });
                (!seen).then(|| format!("grasp {:?} without an earlier look for obj of it", step.argument))
            }
            PrimitiveKind::PassTo => (!before.iter().any(|s| s.kind == PrimitiveKind::Grasp))
                .then(|| "pass to without an earlier grasp".to_string()),
            PrimitiveKind::Follow | PrimitiveKind::Answer => {
                (!before.iter().any(|s| s.kind == PrimitiveKind::LookForPerson))
                    .then(|| format!("{} without an earlier look for person", step.kind))
            }
            PrimitiveKind::MoveTo
            | PrimitiveKind::LookForObj
            | PrimitiveKind::LookForPerson
            | PrimitiveKind::Speak => None,
        };
        if let Some(detail) = missing {
            return ValidationReport::violation(
                Verdict::PreconditionOrderViolation,
                i,
                format!("step {i}: {detail}"),
            );
        }
    }
    ValidationReport::valid()
}

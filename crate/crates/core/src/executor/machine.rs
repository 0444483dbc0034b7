use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::primitives::{validate_static, ActionStep, Plan, PrimitiveKind, ValidationReport};
use crate::world::WorldModel;

#[derive(Debug, Error)]
#[error("plan is not executable: {}", .0.detail)]
pub struct InvalidPlan(pub ValidationReport);

/// States inside the person-search sub-machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SubState {
    ExploreRoom,
    FaceToPerson,
    MoveToPerson,
}

impl SubState {
    pub const PERSON_SEARCH: [SubState; 3] = [SubState::ExploreRoom, SubState::FaceToPerson, SubState::MoveToPerson];

    pub fn label(&self) -> &'static str {
        match self {
            SubState::ExploreRoom => "EXPLORE_ROOM",
            SubState::FaceToPerson => "FACE_TO_PERSON",
            SubState::MoveToPerson => "MOVE_TO_PERSON",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    State(usize),
    TerminalSuccess,
    TerminalFailure,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PrimitiveState {
    pub label: String,
    pub step: ActionStep,
    pub sub_states: Vec<SubState>,
    pub on_succeeded: Transition,
    pub on_failed: Transition,
}

/// Linear backbone of primitive states. State `i` runs plan step `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateMachine {
    states: Vec<PrimitiveState>,
}

/// Builds the machine for a plan that passes static validation.
pub fn compile(plan: &Plan, world: &WorldModel) -> Result<StateMachine, InvalidPlan> {
    let report = validate_static(plan, world);
    if !report.is_valid() {
        return Err(InvalidPlan(report));
    }
    Ok(StateMachine::from_plan(plan))
}

impl StateMachine {
    /// Builds the machine without validating; runtime checks still apply.
    pub fn from_plan(plan: &Plan) -> Self {
        let n = plan.len();
        let states = plan
            .steps
            .iter()
            .enumerate()
            .map(|(i, step)| PrimitiveState {
                label: step.kind().state_label(),
                step: step.clone(),
                sub_states: if step.kind() == PrimitiveKind::LookForPerson {
                    SubState::PERSON_SEARCH.to_vec()
                } else {
                    Vec::new()
                },
                on_succeeded: if i + 1 < n {
                    Transition::State(i + 1)
                } else {
                    Transition::TerminalSuccess
                },
                on_failed: Transition::TerminalFailure,
            })
            .collect();
        StateMachine { states }
    }

    pub fn states(&self) -> &[PrimitiveState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Where execution begins.
    pub fn entry(&self) -> Transition {
        if self.states.is_empty() {
            Transition::TerminalSuccess
        } else {
            Transition::State(0)
        }
    }

    /// State labels with sub-machines in parentheses, e.g.
    /// `MOVE_TO, LOOK_FOR_PERSON(EXPLORE_ROOM, FACE_TO_PERSON, MOVE_TO_PERSON)`.
    pub fn outline(&self) -> String {
        self.states
            .iter()
            .map(|s| {
                if s.sub_states.is_empty() {
                    s.label.clone()
                } else {
                    let subs: Vec<_> = s.sub_states.iter().map(SubState::label).collect();
                    format!("{}({})", s.label, subs.join(", "))
                }
            })
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl fmt::Display for StateMachine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, s) in self.states.iter().enumerate() {
            let next = match s.on_succeeded {
                Transition::State(j) => j.to_string(),
                Transition::TerminalSuccess => "SUCCESS".to_string(),
                Transition::TerminalFailure => "FAILURE".to_string(),
            };
            write!(f, "{i}: {} [{}] succeeded -> {next}, failed -> FAILURE", s.label, s.step.argument())?;
            for sub in &s.sub_states {
                write!(f, "\n     {}", sub.label())?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

//! Task planning for service-robot commands with a chat-completion model.
//!
//! A command goes through a constrained prompt ([`prompt`]), a backend
//! ([`llm`]) and the plan parser ([`parser`]); failures are retried with a
//! corrective suffix ([`planning`]). Plans compile to a state machine and
//! run against a simulated household ([`executor`]). [`grammar`] generates
//! seeded command suites and [`eval`] scores backends on them.

pub mod data;
pub mod eval;
pub mod executor;
pub mod grammar;
pub mod llm;
pub mod parser;
pub mod planning;
pub mod primitives;
pub mod prompt;
pub mod world;

pub use parser::{parse, render, FailureKind, ParseFailure, ParseOutcome};
pub use planning::{answer_question, plan, PlanningConfig, PlanningOutcome, PlanningResult};
pub use primitives::{validate_static, ActionStep, Plan, PrimitiveKind, ValidationReport, Verdict};
pub use world::WorldModel;

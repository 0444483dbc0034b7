//! Constrained prompt assembly.
//!
//! A planning prompt is five blocks in fixed order: primitive declarations
//! written as an import statement, the entities available in the world,
//! few-shot examples, parsing requirements, and the current command. The
//! declaration text, requirements and examples are data (see
//! `data/prompt_bank.toml`), never hard-coded here.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::FailureKind;
use crate::primitives::{registry, Plan};
use crate::world::WorldModel;

/// Corrective suffix after a response that does not follow the answer format.
pub const FORMAT_SUFFIX: &str = "Please note the format of the answer!";
/// Corrective suffix after a response that uses actions outside the primitives.
pub const SUBTASK_SUFFIX: &str =
    "Please note that scheduled subtasks need to be used to complete task planning.";
/// Requirement line for question answering.
pub const ANSWER_INSTRUCTION: &str =
    "Please answer the following questions in English in no more than 30 words.";

pub const DEFAULT_WORD_BUDGET: usize = 2000;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt needs {needed} words before examples but the budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid prompt bank: {0}")]
    Bank(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub fn corrective_suffix(kind: FailureKind) -> &'static str {
    match kind {
        FailureKind::FormatDeviation => FORMAT_SUFFIX,
        FailureKind::UnknownAction => SUBTASK_SUFFIX,
    }
}

/// Whitespace-delimited word count, the budget's unit.
pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub word_budget: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            word_budget: DEFAULT_WORD_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    #[serde(rename = "command")]
    pub command_text: String,
    #[serde(rename = "plan")]
    pub gold_plan: Plan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    /// Reference episode that must plan and execute exactly as written.
    #[serde(default)]
    pub pinned: bool,
    /// Interaction script used when the example is executed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Declaration {
    pub action: String,
    pub parameter: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptBank {
    pub schema: u32,
    pub declarations_header: String,
    pub declarations_footer: String,
    pub declarations: Vec<Declaration>,
    pub requirements: String,
    #[serde(rename = "example")]
    pub examples: Vec<FewShotExample>,
}

impl PromptBank {
    pub fn from_toml_str(text: &str) -> Result<Self, PromptError> {
        let bank: PromptBank =
            toml::from_str(text).map_err(|e| PromptError::Bank(e.message().to_string()))?;
        bank.check()?;
        Ok(bank)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, PromptError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The shipped bank: 23 examples.
    pub fn default_bank() -> Self {
        Self::from_toml_str(crate::data::PROMPT_BANK).expect("default prompt bank is valid")
    }

    fn check(&self) -> Result<(), PromptError> {
        if self.schema != 1 {
            return Err(PromptError::Bank(format!("unsupported schema {}", self.schema)));
        }
        if self.examples.is_empty() {
            return Err(PromptError::Bank("example bank is empty".into()));
        }
        let block = self.declarations_block();
        for sig in registry() {
            let n = block.matches(sig.surface_name).count();
            if n != 1 {
                return Err(PromptError::Bank(format!(
                    "declarations mention {:?} {n} times, expected exactly once",
                    sig.surface_name
                )));
            }
        }
        if self.declarations.len() != registry().len() {
            return Err(PromptError::Bank(format!(
                "expected {} declarations, found {}",
                registry().len(),
                self.declarations.len()
            )));
        }
        Ok(())
    }

    pub fn declarations_block(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.declarations_header);
        out.push('\n');
        for d in &self.declarations {
            out.push_str(&format!("    {}({}),\n", d.action, d.parameter));
        }
        out.push_str(&self.declarations_footer);
        out
    }
}

/// An assembled prompt. Blocks render in field order; empty blocks are
/// skipped. Corrective suffixes are later conversation turns and never
/// change the rendered blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub declarations_block: String,
    pub entities_block: String,
    pub examples_block: String,
    pub requirements_block: String,
    pub task_block: String,
    pub corrective_suffixes: Vec<String>,
    pub examples_included: usize,
}

impl PromptBundle {
    pub fn render(&self) -> String {
        [
            &self.declarations_block,
            &self.entities_block,
            &self.examples_block,
            &self.requirements_block,
            &self.task_block,
        ]
        .into_iter()
        .filter(|b| !b.is_empty())
        .map(String::as_str)
        .collect::<Vec<_>>()
        .join("\n\n")
    }

    pub fn word_count(&self) -> usize {
        word_count(&self.render())
    }

    pub fn push_suffix(&mut self, kind: FailureKind) -> &'static str {
        let suffix = corrective_suffix(kind);
        self.corrective_suffixes.push(suffix.to_string());
        suffix
    }
}

pub fn entities_block(world: &WorldModel) -> String {
    let rooms: Vec<&str> = world.rooms().iter().map(String::as_str).collect();
    let locations: Vec<&str> = world
        .locations()
        .keys()
        .filter(|l| !world.is_room(l))
        .map(String::as_str)
        .collect();
    let objects: Vec<&str> = world.objects().keys().map(String::as_str).collect();
    let persons: Vec<&str> = world.persons().keys().map(String::as_str).collect();
    format!(
        "Available rooms: {}\nAvailable locations: {}\nAvailable objects: {}\nKnown persons: {}",
        rooms.join(", "),
        locations.join(", "),
        objects.join(", "),
        persons.join(", ")
    )
}

fn render_example(example: &FewShotExample) -> String {
    let mut out = format!("Command: {}\n", example.command_text);
    if let Some(note) = &example.note {
        out.push_str(&format!("Note: {note}\n"));
    }
    out.push_str(&format!("Answer: {}", example.gold_plan));
    out
}

fn examples_block(examples: &[FewShotExample]) -> String {
    if examples.is_empty() {
        return String::new();
    }
    let rendered: Vec<String> = examples.iter().map(render_example).collect();
    format!("Examples:\n\n{}", rendered.join("\n\n"))
}

/// Task block for a command. The last `Command:` line of a planning prompt
/// is always the current command.
pub fn task_block(command: &str) -> String {
    format!("Command: {command}\nAnswer:")
}

/// Assembles the planning prompt for `command`. Examples are taken in bank
/// order and dropped from the end until the prompt fits the word budget.
pub fn build_prompt(
    command: &str,
    world: &WorldModel,
    bank: &PromptBank,
    config: &PromptConfig,
) -> Result<PromptBundle, PromptError> {
    if command.trim().is_empty() {
        return Err(PromptError::InvalidInput("command is empty".into()));
    }
    let mut bundle = PromptBundle {
        declarations_block: bank.declarations_block(),
        entities_block: entities_block(world),
        examples_block: String::new(),
        requirements_block: bank.requirements.trim().to_string(),
        task_block: task_block(command.trim()),
        corrective_suffixes: Vec::new(),
        examples_included: 0,
    };
    let fixed = bundle.word_count();
    if fixed > config.word_budget {
        return Err(PromptError::BudgetExceeded {
            needed: fixed,
            budget: config.word_budget,
        });
    }

    let mut included = 0;
    for n in 1..=bank.examples.len() {
        let block = examples_block(&bank.examples[..n]);
        // blocks are joined by blank lines, which add no words
        if fixed + word_count(&block) > config.word_budget {
            break;
        }
        included = n;
    }
    bundle.examples_block = examples_block(&bank.examples[..included]);
    bundle.examples_included = included;
    Ok(bundle)
}

/// Prompt for the question-answering round: the fixed instruction and the
/// question, nothing else.
pub fn build_answer_prompt(question: &str, config: &PromptConfig) -> Result<PromptBundle, PromptError> {
    if question.trim().is_empty() {
        return Err(PromptError::InvalidInput("question is empty".into()));
    }
    let bundle = PromptBundle {
        declarations_block: String::new(),
        entities_block: String::new(),
        examples_block: String::new(),
        requirements_block: ANSWER_INSTRUCTION.to_string(),
        task_block: question.to_string(),
        corrective_suffixes: Vec::new(),
        examples_included: 0,
    };
    let needed = bundle.word_count();
    if needed > config.word_budget {
        return Err(PromptError::BudgetExceeded {
            needed,
            budget: config.word_budget,
        });
    }
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(word_budget: usize) -> PromptConfig {
        PromptConfig { word_budget }
    }

    #[test]
    fn corrective_strings_are_exact() {
        assert_eq!(
            corrective_suffix(FailureKind::FormatDeviation),
            "Please note the format of the answer!"
        );
        assert_eq!(
            corrective_suffix(FailureKind::UnknownAction),
            "Please note that scheduled subtasks need to be used to complete task planning."
        );
        assert_eq!(
            corrective_suffix(FailureKind::UnknownAction).as_ptr(),
            corrective_suffix(FailureKind::UnknownAction).as_ptr()
        );
    }

    #[test]
    fn default_bank_has_23_examples() {
        assert_eq!(PromptBank::default_bank().examples.len(), 23);
    }

    #[test]
    fn cola_prompt_contains_entities_and_jennifer() {
        let world = WorldModel::benchmark();
        let bank = PromptBank::default_bank();
        let bundle = build_prompt("Give me a cola", &world, &bank, &PromptConfig::default()).unwrap();
        assert!(bundle.entities_block.contains("cola"));
        assert!(bundle
            .examples_block
            .contains("Meet Jennifer at the sink, follow her, and take her back"));
        assert_eq!(bundle.examples_included, 23);
        let text = bundle.render();
        let order: Vec<usize> = [
            &bundle.declarations_block,
            &bundle.entities_block,
            &bundle.examples_block,
            &bundle.requirements_block,
            &bundle.task_block,
        ]
        .iter()
        .scan(0, |from, b| {
            let at = *from + text[*from..].find(b.as_str()).unwrap();
            *from = at + b.len();
            Some(at)
        })
        .collect();
        assert!(order.windows(2).all(|w| w[0] < w[1]), "{order:?}");
        assert!(text.ends_with("Command: Give me a cola\nAnswer:"));
    }

    #[test]
    fn declarations_mention_each_primitive_once() {
        let block = PromptBank::default_bank().declarations_block();
        for sig in registry() {
            assert_eq!(block.matches(sig.surface_name).count(), 1, "{}", sig.surface_name);
        }
        assert!(block.starts_with("from robot_actions import ("));
    }

    #[test]
    fn budget_truncates_from_the_end() {
        let world = WorldModel::benchmark();
        let bank = PromptBank::default_bank();
        let full = build_prompt("Go to the kitchen", &world, &bank, &cfg(100_000)).unwrap();
        assert_eq!(full.examples_included, 23);
        let fixed = build_prompt("Go to the kitchen", &world, &bank, &cfg(0))
            .map(|_| ())
            .unwrap_err();
        assert!(matches!(fixed, PromptError::BudgetExceeded { .. }));

        let budget = full.word_count() - 1;
        let cut = build_prompt("Go to the kitchen", &world, &bank, &cfg(budget)).unwrap();
        assert_eq!(cut.examples_included, 22);
        assert!(cut.word_count() <= budget);
        assert!(full.examples_block.starts_with(&cut.examples_block));

        let mut previous = 0;
        for budget in (0..full.word_count() + 10).step_by(37) {
            if let Ok(b) = build_prompt("Go to the kitchen", &world, &bank, &cfg(budget)) {
                assert!(b.word_count() <= budget);
                assert!(b.examples_included >= previous);
                previous = b.examples_included;
            }
        }
    }

    #[test]
    fn suffixes_do_not_touch_blocks() {
        let world = WorldModel::benchmark();
        let bank = PromptBank::default_bank();
        let mut bundle = build_prompt("Give me a cola", &world, &bank, &PromptConfig::default()).unwrap();
        let before = bundle.render();
        bundle.push_suffix(FailureKind::UnknownAction);
        bundle.push_suffix(FailureKind::FormatDeviation);
        assert_eq!(bundle.render(), before);
        assert_eq!(bundle.corrective_suffixes, vec![SUBTASK_SUFFIX, FORMAT_SUFFIX]);
    }

    #[test]
    fn answer_prompt() {
        let bundle = build_answer_prompt("What day is it?", &PromptConfig::default()).unwrap();
        assert_eq!(bundle.requirements_block, ANSWER_INSTRUCTION);
        assert!(bundle.declarations_block.is_empty() && bundle.examples_block.is_empty());
        assert_eq!(bundle.render().matches("What day is it?").count(), 1);
        assert!(matches!(
            build_answer_prompt("  ", &PromptConfig::default()),
            Err(PromptError::InvalidInput(_))
        ));
    }

    #[test]
    fn bank_rejects_missing_declaration() {
        let text = crate::data::PROMPT_BANK.replace("{ action = \"answer\", parameter = \"question\" },\n", "");
        assert!(matches!(PromptBank::from_toml_str(&text), Err(PromptError::Bank(_))));
    }

    #[test]
    fn rendering_is_deterministic() {
        let world = WorldModel::benchmark();
        let bank = PromptBank::default_bank();
        let a = build_prompt("Give me a cola", &world, &bank, &PromptConfig::default()).unwrap();
        let b = build_prompt("Give me a cola", &world, &bank, &PromptConfig::default()).unwrap();
        assert_eq!(a.render(), b.render());
    }
}

//! Seeded command generator with authored gold plans.
//!
//! Templates live in a TOML bank (`data/templates.toml`). A template's
//! surface and plan reference slots such as `{person}` or
//! `{object_location}`; each slot root (person, gesture, gender, object,
//! room, location, utterance) is bound once per command by drawing from
//! the world with a ChaCha8 generator.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::InteractionScript;
use crate::primitives::{lookup, validate_static, ActionStep, Plan, PrimitiveKind};
use crate::world::{WorldModel, INITIAL_LOCATION};

const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("no applicable template for category {0}")]
    EmptyBank(CommandCategory),
    #[error("template bank: {0}")]
    Bank(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CommandCategory {
    A,
    B,
    C,
}

impl CommandCategory {
    pub const ALL: [CommandCategory; 3] = [CommandCategory::A, CommandCategory::B, CommandCategory::C];
}

impl fmt::Display for CommandCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CommandCategory::A => "A",
            CommandCategory::B => "B",
            CommandCategory::C => "C",
        };
        f.write_str(s)
    }
}

impl FromStr for CommandCategory {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().trim_start_matches("TYPE") {
            "A" => Ok(CommandCategory::A),
            "B" => Ok(CommandCategory::B),
            "C" => Ok(CommandCategory::C),
            _ => Err(format!("unknown command category {s:?}; expected A, B or C")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command {
    pub text: String,
    pub category: CommandCategory,
    pub gold_plan: Plan,
    pub seed: u64,
    pub template: String,
    /// Human-side script that makes the gold plan executable.
    pub interaction: InteractionScript,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Template {
    pub id: String,
    pub category: CommandCategory,
    pub surface: String,
    pub plan: Vec<(String, String)>,
    #[serde(default)]
    pub script: Option<InteractionScript>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateBank {
    pub schema: u32,
    pub utterances: Vec<String>,
    pub default_script: InteractionScript,
    #[serde(default, rename = "template")]
    pub templates: Vec<Template>,
}

const ROOTS: [&str; 7] = ["person", "gesture", "gender", "object", "room", "location", "utterance"];

/// Slot references in order of appearance, e.g. `person_location`.
fn slot_refs(text: &str) -> Vec<&str> {
    let mut refs = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) => {
                refs.push(&after[..end]);
                rest = &after[end + 1..];
            }
            None => break,
        }
    }
    refs
}

fn slot_root(slot: &str) -> &str {
    slot.split('_').next().unwrap_or(slot)
}

impl TemplateBank {
    pub fn from_toml_str(text: &str) -> Result<Self, GrammarError> {
        let bank: TemplateBank = toml::from_str(text).map_err(|e| GrammarError::Bank(e.message().to_string()))?;
        bank.check()?;
        Ok(bank)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, GrammarError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| GrammarError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// The shipped bank.
    pub fn default_bank() -> Self {
        Self::from_toml_str(crate::data::TEMPLATE_BANK).expect("shipped template bank is valid")
    }

    fn check(&self) -> Result<(), GrammarError> {
        let bad = |id: &str, msg: String| Err(GrammarError::Bank(format!("template {id}: {msg}")));
        if self.schema != SCHEMA_VERSION {
            return Err(GrammarError::Bank(format!("unsupported schema {}", self.schema)));
        }
        let mut ids = std::collections::BTreeSet::new();
        for t in &self.templates {
            if !ids.insert(t.id.as_str()) {
                return bad(&t.id, "duplicate id".into());
            }
            let surface_roots: Vec<&str> = slot_refs(&t.surface).into_iter().map(slot_root).collect();
            let mut kinds = Vec::new();
            for (action, arg) in &t.plan {
                let Some(sig) = lookup(action) else {
                    return bad(&t.id, format!("unknown action {action:?}"));
                };
                kinds.push(sig.kind);
                for slot in slot_refs(arg) {
                    if !surface_roots.contains(&slot_root(slot)) {
                        return bad(&t.id, format!("plan slot {{{slot}}} is not bound by the surface"));
                    }
                }
            }
            for slot in slot_refs(&t.surface).into_iter().chain(t.plan.iter().flat_map(|(_, a)| slot_refs(a))) {
                if !ROOTS.contains(&slot_root(slot)) {
                    return bad(&t.id, format!("unknown slot {{{slot}}}"));
                }
            }
            use PrimitiveKind::*;
            let pure = match t.category {
                CommandCategory::A => !kinds.iter().any(|k| matches!(k, Grasp | PassTo | Answer)),
                CommandCategory::B => kinds.contains(&LookForObj),
                CommandCategory::C => kinds.iter().any(|k| matches!(k, Speak | Answer)),
            };
            if !pure {
                return bad(&t.id, format!("plan does not fit category {}", t.category));
            }
        }
        Ok(())
    }

    pub fn templates_for(&self, category: CommandCategory) -> impl Iterator<Item = &Template> {
        self.templates.iter().filter(move |t| t.category == category)
    }
}

/// Values a slot root can take, each with its derived attributes.
fn pool(root: &str, world: &WorldModel, bank: &TemplateBank) -> Vec<BTreeMap<String, String>> {
    let one = |pairs: Vec<(&str, String)>| pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect();
    let room_of = |loc: &str| world.room_of(loc).unwrap_or_default().to_string();
    match root {
        "person" => world
            .persons()
            .values()
            .map(|p| {
                one(vec![
                    ("person", p.name.clone()),
                    ("person_location", p.location.clone()),
                    ("person_room", room_of(&p.location)),
                    ("person_pronoun", p.gender.pronoun().to_string()),
                    ("person_possessive", p.gender.possessive().to_string()),
                ])
            })
            .collect(),
        "gesture" => world
            .persons()
            .values()
            .filter_map(|p| {
                let g = p.gesture?;
                Some(one(vec![
                    ("gesture", g.surface_phrase().to_string()),
                    ("gesture_arg", g.plan_argument().to_string()),
                    ("gesture_location", p.location.clone()),
                    ("gesture_room", room_of(&p.location)),
                    ("gesture_pronoun", p.gender.pronoun().to_string()),
                    ("gesture_possessive", p.gender.possessive().to_string()),
                ]))
            })
            .collect(),
        "gender" => world
            .persons()
            .values()
            .filter(|p| !p.gender.is_unspecified())
            .map(|p| {
                one(vec![
                    ("gender", p.gender.as_str().to_string()),
                    ("gender_location", p.location.clone()),
                    ("gender_room", room_of(&p.location)),
                    ("gender_pronoun", p.gender.pronoun().to_string()),
                    ("gender_possessive", p.gender.possessive().to_string()),
                ])
            })
            .collect(),
        "object" => world
            .objects()
            .iter()
            .map(|(o, loc)| {
                one(vec![
                    ("object", o.clone()),
                    ("object_location", loc.clone()),
                    ("object_room", room_of(loc)),
                ])
            })
            .collect(),
        "room" => world.rooms().iter().map(|r| one(vec![("room", r.clone())])).collect(),
        "location" => world
            .locations()
            .keys()
            .filter(|l| !world.is_room(l) && l.as_str() != INITIAL_LOCATION)
            .map(|l| one(vec![("location", l.clone())]))
            .collect(),
        "utterance" => bank
            .utterances
            .iter()
            .map(|u| one(vec![("utterance", u.clone())]))
            .collect(),
        _ => Vec::new(),
    }
}

fn fill(text: &str, bindings: &BTreeMap<String, String>) -> String {
    let mut out = text.to_string();
    for slot in slot_refs(text) {
        if let Some(v) = bindings.get(slot) {
            out = out.replacen(&format!("{{{slot}}}"), v, 1);
        }
    }
    out
}

fn applicable<'b>(bank: &'b TemplateBank, category: CommandCategory, world: &WorldModel) -> Vec<&'b Template> {
    bank.templates_for(category)
        .filter(|t| {
            slot_refs(&t.surface)
                .into_iter()
                .all(|s| !pool(slot_root(s), world, bank).is_empty())
        })
        .collect()
}

/// One command of `category`. Deterministic in all four inputs.
pub fn generate(
    seed: u64,
    category: CommandCategory,
    world: &WorldModel,
    bank: &TemplateBank,
) -> Result<Command, GrammarError> {
    let templates = applicable(bank, category, world);
    if templates.is_empty() {
        return Err(GrammarError::EmptyBank(category));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let template = templates[rng.random_range(0..templates.len())];

    let mut bindings = BTreeMap::new();
    for slot in slot_refs(&template.surface) {
        let root = slot_root(slot);
        if bindings.contains_key(root) {
            continue;
        }
        let values = pool(root, world, bank);
        bindings.extend(values[rng.random_range(0..values.len())].clone());
    }

    let steps = template
        .plan
        .iter()
        .map(|(action, arg)| {
            let kind = lookup(action).expect("checked at load").kind;
            ActionStep::new(kind, fill(arg, &bindings))
                .map_err(|e| GrammarError::Bank(format!("template {}: {e}", template.id)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let gold_plan = Plan::new(steps);
    let report = validate_static(&gold_plan, world);
    if !report.is_valid() {
        return Err(GrammarError::Bank(format!(
            "template {} yields an invalid gold plan: {}",
            template.id, report.detail
        )));
    }
    Ok(Command {
        text: fill(&template.surface, &bindings),
        category,
        gold_plan,
        seed,
        template: template.id.clone(),
        interaction: template.script.clone().unwrap_or_else(|| bank.default_script.clone()),
    })
}

/// Command counts per category; the 100-command suite is 34/33/33.
pub fn default_counts() -> BTreeMap<CommandCategory, usize> {
    BTreeMap::from([(CommandCategory::A, 34), (CommandCategory::B, 33), (CommandCategory::C, 33)])
}

/// Commands grouped by category in A, B, C order. Each command gets its own
/// seed drawn from a generator seeded with `seed`, so `generate(c.seed,
/// c.category, ..)` reproduces it.
pub fn generate_suite(
    seed: u64,
    counts: &BTreeMap<CommandCategory, usize>,
    world: &WorldModel,
    bank: &TemplateBank,
) -> Result<Vec<Command>, GrammarError> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut suite = Vec::with_capacity(counts.values().sum());
    for category in CommandCategory::ALL {
        for _ in 0..counts.get(&category).copied().unwrap_or(0) {
            let command_seed: u64 = master.random();
            suite.push(generate(command_seed, category, world, bank)?);
        }
    }
    Ok(suite)
}

pub fn write_suite(path: &Path, suite: &[Command]) -> std::io::Result<()> {
    let mut text = String::new();
    for c in suite {
        text.push_str(&serde_json::to_string(c).map_err(std::io::Error::other)?);
        text.push('\n');
    }
    std::fs::write(path, text)
}

pub fn read_suite(path: &Path) -> std::io::Result<Vec<Command>> {
    std::fs::read_to_string(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}:{}: {e}", path.display(), n + 1),
                )
            })
        })
        .collect()
}

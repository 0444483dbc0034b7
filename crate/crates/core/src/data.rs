//! Default data files compiled into the library.

pub const BENCHMARK_WORLD: &str = include_str!("../data/benchmark_world.toml");
pub const PROMPT_BANK: &str = include_str!("../data/prompt_bank.toml");
pub const TEMPLATE_BANK: &str = include_str!("../data/templates.toml");

/// Shipped interaction scripts, by name.
pub const SCRIPTS: &[(&str, &str)] = &[
    ("default", include_str!("../data/scripts/default.toml")),
    ("escort", include_str!("../data/scripts/escort.toml")),
    ("question", include_str!("../data/scripts/question.toml")),
];

pub fn script_source(name: &str) -> Option<&'static str> {
    SCRIPTS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

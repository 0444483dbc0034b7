//! Resolves `--backend` names to chat backends.
//!
//! `mock:<name>` selects a built-in mock (`mock:gold`, `mock:garbage`, ...)
//! or, when `<name>` ends in `.toml`, a scripted mock read from that file.
//! Any other name must appear in the backends file as
//!
//! ```toml
//! [[backend]]
//! name = "local"
//! endpoint = "http://localhost:8000/v1/chat/completions"
//! model = "some-model"
//! auth_env = "LOCAL_API_KEY"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use gpsr_core::llm::{BackendHandle, GoldTable, HttpBackend, HttpConfig, MockBackend, MockScript, ReplayBackend, MOCK_NAMES};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendsFile {
    #[serde(default)]
    pub backend: Vec<HttpConfig>,
}

impl BackendsFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read backends file {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Input(format!("backends file {}: {}", path.display(), e.message())))
    }
}

pub fn resolve(name: &str, config: &BackendsFile, gold: &GoldTable) -> Result<BackendHandle, CliError> {
    if let Some(mock) = name.strip_prefix("mock:") {
        if mock.ends_with(".toml") {
            let text = std::fs::read_to_string(mock)
                .map_err(|e| CliError::Input(format!("cannot read mock script {mock}: {e}")))?;
            let script = MockScript::from_toml_str(&text).map_err(|e| CliError::Input(e.to_string()))?;
            return Ok(Arc::new(MockBackend::new(name, script)));
        }
        return MockBackend::named(mock, gold.clone())
            .map(|m| Arc::new(m) as BackendHandle)
            .ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown mock {mock:?}; built-in mocks are {}",
                    MOCK_NAMES.join(", ")
                ))
            });
    }
    let Some(http) = config.backend.iter().find(|b| b.name == name) else {
        return Err(CliError::Usage(format!(
            "unknown backend {name:?}; use mock:<name> or a name from the backends file"
        )));
    };
    let backend = HttpBackend::new(http.clone()).map_err(|e| CliError::Input(e.to_string()))?;
    Ok(Arc::new(backend))
}

/// File name used for a backend's transcript inside a record/replay
/// directory.
pub fn transcript_file(backend_id: &str) -> String {
    let safe: String = backend_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' { c } else { '_' })
        .collect();
    format!("{safe}.jsonl")
}

/// Lists backend ids in evaluation order next to their transcripts.
pub const MANIFEST: &str = "backends.txt";

/// Replay backends for `names`, else for the ids in the directory's
/// manifest, else for every transcript in file-name order.
pub fn replay_dir(dir: &Path, names: Option<&[String]>) -> Result<Vec<BackendHandle>, CliError> {
    let manifest: Option<Vec<String>> = std::fs::read_to_string(dir.join(MANIFEST))
        .ok()
        .map(|t| t.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect());
    let files: Vec<(String, PathBuf)> = match names.or(manifest.as_deref()) {
        Some(names) => names
            .iter()
            .map(|n| (n.clone(), dir.join(transcript_file(n))))
            .collect(),
        None => {
            let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| CliError::Input(format!("cannot read replay directory {}: {e}", dir.display())))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            found.sort();
            found
                .into_iter()
                .map(|p| (p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), p))
                .collect()
        }
    };
    if files.is_empty() {
        return Err(CliError::Input(format!("no transcripts in {}", dir.display())));
    }
    files
        .into_iter()
        .map(|(name, path)| {
            ReplayBackend::from_path(name, &path)
                .map(|r| Arc::new(r) as BackendHandle)
                .map_err(|e| CliError::Input(format!("cannot read transcript {}: {e}", path.display())))
        })
        .collect()
}

//! Transcript files and the replay backend.
//!
//! A transcript is JSON Lines, one [`Exchange`] per line in call order.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, LlmError};
use crate::planning::EpisodeTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub digest: String,
    pub request: ChatRequest,
    pub response: ChatResponse,
}

pub fn write_transcript(path: &Path, exchanges: &[Exchange]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    for exchange in exchanges {
        serde_json::to_writer(&mut out, exchange)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_transcript(path: &Path) -> std::io::Result<Vec<Exchange>> {
    let reader = BufReader::new(File::open(path)?);
    let mut exchanges = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let exchange = serde_json::from_str(&line).map_err(|e| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("{}:{}: {e}", path.display(), n + 1),
            )
        })?;
        exchanges.push(exchange);
    }
    Ok(exchanges)
}

/// Writes every request/response pair of a finished episode.
pub fn record_transcript(session: &EpisodeTrace, path: &Path) -> std::io::Result<()> {
    write_transcript(path, &session.exchanges)
}

/// Serves recorded responses keyed by request digest.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    id: String,
    responses: HashMap<String, ChatResponse>,
}

impl ReplayBackend {
    /// The backend reports the id the responses were recorded under, or
    /// `fallback_id` for an empty transcript. For duplicate digests the
    /// first recording wins.
    pub fn new(fallback_id: impl Into<String>, exchanges: impl IntoIterator<Item = Exchange>) -> Self {
        let mut responses = HashMap::new();
        let mut id = None;
        for exchange in exchanges {
            id.get_or_insert_with(|| exchange.response.backend_id.clone());
            responses.entry(exchange.digest).or_insert(exchange.response);
        }
        ReplayBackend {
            id: id.unwrap_or_else(|| fallback_id.into()),
            responses,
        }
    }

    pub fn from_path(fallback_id: impl Into<String>, path: &Path) -> std::io::Result<Self> {
        Ok(Self::new(fallback_id, read_transcript(path)?))
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }
}

impl ChatBackend for ReplayBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let digest = request.digest();
        self.responses
            .get(&digest)
            .cloned()
            .ok_or(LlmError::ReplayMiss(digest))
    }

    fn concurrency_limit(&self) -> usize {
        8
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::llm::{MockBackend, MockScript, Recorder};

    #[test]
    fn record_then_replay_is_identity() {
        let mock: Arc<dyn ChatBackend> =
            Arc::new(MockBackend::new("mock:x", MockScript::repeating("[[speak, hi]]")));
        let recorder = Recorder::new(mock);
        let requests = [ChatRequest::new("one"), ChatRequest::new("two")];
        let originals: Vec<_> = requests.iter().map(|r| recorder.complete(r).unwrap()).collect();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        write_transcript(&path, &recorder.exchanges()).unwrap();
        let replay = ReplayBackend::from_path("replay", &path).unwrap();
        assert_eq!(replay.id(), "mock:x");
        for (req, orig) in requests.iter().zip(&originals) {
            assert_eq!(&replay.complete(req).unwrap(), orig);
        }
        assert!(matches!(
            replay.complete(&ChatRequest::new("three")),
            Err(LlmError::ReplayMiss(_))
        ));
    }
}

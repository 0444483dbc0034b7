use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("bad follow signal {0:?}; expected follow, follow <location>, pause or terminate")]
    BadSignal(String),
    #[error("interaction script: {0}")]
    Format(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Gesture command given by the person being followed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum FollowSignal {
    /// Keep following; the person walks to the location if one is given.
    Follow(Option<String>),
    Pause,
    Terminate,
}

impl FromStr for FollowSignal {
    type Err = ScriptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (head, rest) = s.split_once(char::is_whitespace).unwrap_or((s, ""));
        let rest = rest.trim();
        match (head.to_lowercase().as_str(), rest.is_empty()) {
            ("follow", true) => Ok(FollowSignal::Follow(None)),
            ("follow", false) => Ok(FollowSignal::Follow(Some(rest.to_string()))),
            ("pause", true) => Ok(FollowSignal::Pause),
            ("terminate", true) => Ok(FollowSignal::Terminate),
            _ => Err(ScriptError::BadSignal(s.to_string())),
        }
    }
}

impl fmt::Display for FollowSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FollowSignal::Follow(None) => f.write_str("follow"),
            FollowSignal::Follow(Some(loc)) => write!(f, "follow {loc}"),
            FollowSignal::Pause => f.write_str("pause"),
            FollowSignal::Terminate => f.write_str("terminate"),
        }
    }
}

impl Serialize for FollowSignal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FollowSignal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Scripted human side of an episode: gesture commands consumed by
/// `follow` steps and questions consumed by `answer` steps, each in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionScript {
    #[serde(default)]
    pub follow: Vec<FollowSignal>,
    #[serde(default)]
    pub questions: Vec<String>,
}

impl InteractionScript {
    pub fn from_toml_str(text: &str) -> Result<Self, ScriptError> {
        toml::from_str(text).map_err(|e| ScriptError::Format(e.message().to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ScriptError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScriptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// One of the scripts shipped in `data/scripts`.
    pub fn shipped(name: &str) -> Option<Self> {
        crate::data::script_source(name).map(|s| Self::from_toml_str(s).expect("shipped script is valid"))
    }
}

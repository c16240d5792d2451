//! Bundled data files and the errors raised while loading them.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STORYLINE: &str = include_str!("../data/storyline.txt");
pub const RULES: &str = include_str!("../data/rules.txt");
pub const PERSONAS: &str = include_str!("../data/personas.toml");
pub const PROMPTS: &str = include_str!("../data/prompts.toml");
pub const KNOWLEDGE: &str = include_str!("../data/knowledge.txt");
pub const BFI44_PLACEHOLDER: &str = include_str!("../data/bfi44_placeholder.toml");

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read data file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("data file {name} is malformed: {reason}")]
    Invalid { name: String, reason: String },
}

impl DataError {
    pub fn invalid(name: impl Into<String>, reason: impl std::fmt::Display) -> Self {
        DataError::Invalid {
            name: name.into(),
            reason: reason.to_string(),
        }
    }
}

pub fn read_text(path: &Path) -> Result<String, DataError> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Player-facing storyline and the rules text given to players and agents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameTexts {
    pub storyline: String,
    pub rules: String,
}

impl Default for GameTexts {
    fn default() -> Self {
        Self {
            storyline: STORYLINE.trim_end().to_string(),
            rules: RULES.trim_end().to_string(),
        }
    }
}

impl GameTexts {
    pub fn load(storyline: &Path, rules: &Path) -> Result<Self, DataError> {
        let storyline = read_text(storyline)?.trim_end().to_string();
        let rules = read_text(rules)?.trim_end().to_string();
        if storyline.trim().is_empty() || rules.trim().is_empty() {
            return Err(DataError::invalid("game texts", "storyline and rules must be non-empty"));
        }
        Ok(Self { storyline, rules })
    }
}

/// Big Five background text inserted into the assessment prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BigFiveKnowledge(pub String);

impl Default for BigFiveKnowledge {
    fn default() -> Self {
        Self(KNOWLEDGE.trim_end().to_string())
    }
}

impl BigFiveKnowledge {
    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = read_text(path)?;
        if text.trim().is_empty() {
            return Err(DataError::invalid(path.display().to_string(), "knowledge text is empty"));
        }
        Ok(Self(text.trim_end().to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

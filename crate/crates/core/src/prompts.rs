//! Versioned prompt catalog.

use std::path::Path;

use serde::Deserialize;

use crate::data::{self, DataError};
use crate::template::Template;

#[derive(Debug, Deserialize)]
struct RawCatalog {
    version: String,
    role: RawRole,
    chat: RawChat,
    memory: RawSingle,
    reflection: RawSingle,
    decide: RawSingle,
    emotion: RawWithSystem,
    traits: RawWithSystem,
    direct_assess: RawWithSystem,
    que_assess: RawWithSystem,
    simulated_player: RawSimulated,
}

#[derive(Debug, Deserialize)]
struct RawRole {
    instruction: String,
    objective: String,
    tips: String,
}

#[derive(Debug, Deserialize)]
struct RawChat {
    task: String,
}

#[derive(Debug, Deserialize)]
struct RawSingle {
    template: String,
}

#[derive(Debug, Deserialize)]
struct RawWithSystem {
    system: String,
    template: String,
}

#[derive(Debug, Deserialize)]
struct RawSimulated {
    system: String,
    chat: String,
    decide: String,
}

#[derive(Debug, Clone)]
pub struct RoleTemplates {
    pub instruction: Template,
    pub objective: Template,
    pub tips: Template,
}

#[derive(Debug, Clone)]
pub struct SystemAndBody {
    pub system: String,
    pub body: Template,
}

#[derive(Debug, Clone)]
pub struct SimulatedPlayerTemplates {
    pub system: Template,
    pub chat: Template,
    pub decide: Template,
}

/// Every prompt the engine sends, parsed and checked at load time.
#[derive(Debug, Clone)]
pub struct PromptCatalog {
    pub version: String,
    pub role: RoleTemplates,
    pub chat_task: Template,
    pub memory: Template,
    pub reflection: Template,
    pub decide: Template,
    pub emotion: SystemAndBody,
    pub traits: SystemAndBody,
    pub direct_assess: SystemAndBody,
    pub que_assess: SystemAndBody,
    pub simulated_player: SimulatedPlayerTemplates,
}

const ASSESS_SLOTS: &[&str] = &[
    "game_rules",
    "chat_memory",
    "game_memory",
    "dialogue",
    "fine_grained_traits",
    "knowledge",
];

impl PromptCatalog {
    pub fn bundled() -> Self {
        Self::from_toml_str(data::PROMPTS, "bundled prompts").expect("bundled prompt catalog is valid")
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = data::read_text(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn from_toml_str(text: &str, name: &str) -> Result<Self, DataError> {
        let raw: RawCatalog = toml::from_str(text).map_err(|e| DataError::invalid(name, e))?;
        let t = |label: &str, src: &str, allowed: &[&str]| {
            Template::parse_with(src, allowed).map_err(|e| DataError::invalid(name, format!("{label}: {e}")))
        };
        let mut que_slots = ASSESS_SLOTS.to_vec();
        que_slots.push("statement");
        if raw.version.trim().is_empty() {
            return Err(DataError::invalid(name, "missing version"));
        }
        Ok(Self {
            version: raw.version,
            role: RoleTemplates {
                instruction: t("role.instruction", &raw.role.instruction, &["rules"])?,
                objective: t("role.objective", &raw.role.objective, &[])?,
                tips: t("role.tips", &raw.role.tips, &["trait"])?,
            },
            chat_task: t("chat.task", &raw.chat.task, &[])?,
            memory: t("memory", &raw.memory.template, &["dialogue", "game_status"])?,
            reflection: t("reflection", &raw.reflection.template, &["history"])?,
            decide: t("decide", &raw.decide.template, &["context"])?,
            emotion: SystemAndBody {
                system: raw.emotion.system,
                body: t(
                    "emotion",
                    &raw.emotion.template,
                    &["game_rules", "game_abstract", "dialogue", "sentence"],
                )?,
            },
            traits: SystemAndBody {
                system: raw.traits.system,
                body: t("traits", &raw.traits.template, &["game_rules", "game_abstract", "dialogue"])?,
            },
            direct_assess: SystemAndBody {
                system: raw.direct_assess.system,
                body: t("direct_assess", &raw.direct_assess.template, ASSESS_SLOTS)?,
            },
            que_assess: SystemAndBody {
                system: raw.que_assess.system,
                body: t("que_assess", &raw.que_assess.template, &que_slots)?,
            },
            simulated_player: SimulatedPlayerTemplates {
                system: t("simulated_player.system", &raw.simulated_player.system, &["persona", "rules"])?,
                chat: t("simulated_player.chat", &raw.simulated_player.chat, &["dialogue"])?,
                decide: t(
                    "simulated_player.decide",
                    &raw.simulated_player.decide,
                    &["dialogue", "history"],
                )?,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_catalog_loads() {
        let c = PromptCatalog::bundled();
        assert_eq!(c.version, "1.0.0");
        assert!(c.que_assess.body.placeholders().contains("statement"));
        assert!(c.memory.placeholders().contains("game_status"));
    }

    #[test]
    fn unknown_placeholder_in_file_is_rejected() {
        let broken = data::PROMPTS.replace("{game_status}", "{game_state}");
        let err = PromptCatalog::from_toml_str(&broken, "broken").unwrap_err();
        assert!(err.to_string().contains("game_state"), "{err}");
    }
}

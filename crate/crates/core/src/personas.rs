//! Single-trait agent personas and role-playing prompt assembly.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{self, DataError};
use crate::prompts::RoleTemplates;
use crate::template::{vars, TemplateError};

/// A Big Five dimension, serialized by its one-letter code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TraitId {
    #[serde(rename = "O")]
    Openness,
    #[serde(rename = "C")]
    Conscientiousness,
    #[serde(rename = "E")]
    Extraversion,
    #[serde(rename = "A")]
    Agreeableness,
    #[serde(rename = "N")]
    Neuroticism,
}

impl TraitId {
    /// Report order: O, C, E, A, N.
    pub const ALL: [TraitId; 5] = [
        TraitId::Openness,
        TraitId::Conscientiousness,
        TraitId::Extraversion,
        TraitId::Agreeableness,
        TraitId::Neuroticism,
    ];

    pub fn code(self) -> &'static str {
        match self {
            TraitId::Openness => "O",
            TraitId::Conscientiousness => "C",
            TraitId::Extraversion => "E",
            TraitId::Agreeableness => "A",
            TraitId::Neuroticism => "N",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TraitId::Openness => "Openness",
            TraitId::Conscientiousness => "Conscientiousness",
            TraitId::Extraversion => "Extraversion",
            TraitId::Agreeableness => "Agreeableness",
            TraitId::Neuroticism => "Neuroticism",
        }
    }

    pub fn from_code(code: &str) -> Option<TraitId> {
        TraitId::ALL
            .into_iter()
            .find(|t| t.code().eq_ignore_ascii_case(code.trim()))
    }
}

impl fmt::Display for TraitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TraitId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TraitId::from_code(s)
            .or_else(|| TraitId::ALL.into_iter().find(|t| t.name().eq_ignore_ascii_case(s.trim())))
            .ok_or_else(|| format!("unknown trait {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonaSpec {
    #[serde(skip)]
    pub trait_id: Option<TraitId>,
    pub label: String,
    pub text: String,
}

impl PersonaSpec {
    pub fn trait_id(&self) -> TraitId {
        self.trait_id.expect("persona loaded through PersonaBank")
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct RawBank {
    version: String,
    personas: BTreeMap<String, PersonaSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PersonaBank {
    pub version: String,
    personas: BTreeMap<TraitId, PersonaSpec>,
}

impl PersonaBank {
    pub fn from_toml_str(text: &str, name: &str) -> Result<Self, DataError> {
        let raw: RawBank = toml::from_str(text).map_err(|e| DataError::invalid(name, e))?;
        let mut personas = BTreeMap::new();
        for (code, mut spec) in raw.personas {
            let t = TraitId::from_code(&code)
                .ok_or_else(|| DataError::invalid(name, format!("unknown trait code {code:?}")))?;
            if spec.text.trim().is_empty() {
                return Err(DataError::invalid(name, format!("persona {code} has empty text")));
            }
            spec.trait_id = Some(t);
            personas.insert(t, spec);
        }
        if personas.len() != 5 {
            return Err(DataError::invalid(
                name,
                format!("expected 5 personas (O,C,E,A,N), found {}", personas.len()),
            ));
        }
        Ok(Self {
            version: raw.version,
            personas,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        Self::from_toml_str(&data::read_text(path)?, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        let raw = RawBank {
            version: self.version.clone(),
            personas: self
                .personas
                .iter()
                .map(|(t, p)| (t.code().to_string(), p.clone()))
                .collect(),
        };
        toml::to_string(&raw).expect("persona bank serializes")
    }

    pub fn get(&self, t: TraitId) -> &PersonaSpec {
        &self.personas[&t]
    }

    pub fn len(&self) -> usize {
        self.personas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.personas.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (TraitId, &PersonaSpec)> {
        self.personas.iter().map(|(t, p)| (*t, p))
    }
}

/// The five bundled personas.
pub fn default_persona_bank() -> Result<PersonaBank, DataError> {
    PersonaBank::from_toml_str(data::PERSONAS, "bundled personas")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RoleSection {
    Instruction,
    Personality,
    Objective,
    Tips,
}

impl RoleSection {
    pub const ORDER: [RoleSection; 4] = [
        RoleSection::Instruction,
        RoleSection::Personality,
        RoleSection::Objective,
        RoleSection::Tips,
    ];

    pub fn heading(self) -> &'static str {
        match self {
            RoleSection::Instruction => "### Instruction",
            RoleSection::Personality => "### Personality",
            RoleSection::Objective => "### Objective",
            RoleSection::Tips => "### Tips",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolePrompt {
    pub sections: Vec<(RoleSection, String)>,
}

impl RolePrompt {
    pub fn render(&self) -> String {
        self.sections
            .iter()
            .map(|(s, text)| format!("{}\n{}", s.heading(), text))
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

pub fn build_role_prompt(
    persona: &PersonaSpec,
    rules_text: &str,
    templates: &RoleTemplates,
) -> Result<RolePrompt, TemplateError> {
    if persona.text.trim().is_empty() {
        return Err(TemplateError::EmptyValue("personality".into()));
    }
    if rules_text.trim().is_empty() {
        return Err(TemplateError::EmptyValue("rules".into()));
    }
    let trait_name = persona
        .trait_id
        .map(|t| t.name().to_string())
        .unwrap_or_else(|| persona.label.clone());
    let instruction = templates.instruction.render(&vars([("rules", rules_text)]))?;
    let objective = templates.objective.render(&vars([]))?;
    let tips = templates.tips.render(&vars([("trait", trait_name.as_str())]))?;
    Ok(RolePrompt {
        sections: vec![
            (RoleSection::Instruction, instruction),
            (RoleSection::Personality, persona.text.clone()),
            (RoleSection::Objective, objective),
            (RoleSection::Tips, tips),
        ],
    })
}

//! Derived text channels: per-utterance emotion labels, per-round trait
//! observations, and the sectioned document handed to the assessors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cognition::{render_dialogue, MemoryEntry};
use crate::game::{Encounter, Phase, Round, Speaker};
use crate::llm::{ChatRequest, GatewayError, LlmClient, PurposeTag};
use crate::parsing::{ask, clean_token, extract_slots, AskError};
use crate::personas::TraitId;
use crate::prompts::PromptCatalog;
use crate::template::{vars, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EmotionLabel {
    Happy,
    Sad,
    Neutral,
    Angry,
    Excited,
    Frustrated,
}

impl EmotionLabel {
    pub const ALL: [EmotionLabel; 6] = [
        EmotionLabel::Happy,
        EmotionLabel::Sad,
        EmotionLabel::Neutral,
        EmotionLabel::Angry,
        EmotionLabel::Excited,
        EmotionLabel::Frustrated,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionLabel::Happy => "Happy",
            EmotionLabel::Sad => "Sad",
            EmotionLabel::Neutral => "Neutral",
            EmotionLabel::Angry => "Angry",
            EmotionLabel::Excited => "Excited",
            EmotionLabel::Frustrated => "Frustrated",
        }
    }
}

impl fmt::Display for EmotionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmotionLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let token = clean_token(s);
        Self::ALL
            .into_iter()
            .find(|l| l.as_str().eq_ignore_ascii_case(&token))
            .ok_or(token)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionAnnotation {
    pub round_index: u32,
    /// Sequence number of the annotated player utterance.
    pub utterance_seq: u64,
    pub label: EmotionLabel,
    pub analysis_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitObservation {
    pub round_index: u32,
    pub observed_behavior: String,
    pub inferred_traits: Vec<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelBundle {
    pub include_text: bool,
    pub include_behavior: bool,
    pub include_traits: bool,
    pub include_emotion: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BundleError {
    #[error("unsupported channel bundle {0}: text and behavior are always required")]
    Unsupported(String),
    #[error("unknown channel bundle {0:?}")]
    Unknown(String),
    #[error("no encounters to assemble")]
    NoEncounters,
    #[error("encounter with agent {0} is not complete")]
    Incomplete(TraitId),
}

impl ChannelBundle {
    pub const TB: ChannelBundle = ChannelBundle::new(true, true, false, false);
    pub const TBP: ChannelBundle = ChannelBundle::new(true, true, true, false);
    pub const TBPE: ChannelBundle = ChannelBundle::new(true, true, true, true);
    pub const STANDARD: [ChannelBundle; 3] = [Self::TB, Self::TBP, Self::TBPE];

    pub const fn new(text: bool, behavior: bool, traits: bool, emotion: bool) -> Self {
        Self {
            include_text: text,
            include_behavior: behavior,
            include_traits: traits,
            include_emotion: emotion,
        }
    }

    pub fn validate(self) -> Result<Self, BundleError> {
        if self.include_text && self.include_behavior {
            Ok(self)
        } else {
            Err(BundleError::Unsupported(self.to_string()))
        }
    }
}

impl fmt::Display for ChannelBundle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [
            (self.include_text, "T"),
            (self.include_behavior, "B"),
            (self.include_traits, "P"),
            (self.include_emotion, "E"),
        ]
        .into_iter()
        .filter_map(|(on, c)| on.then_some(c))
        .collect();
        if parts.is_empty() {
            f.write_str("none")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

impl FromStr for ChannelBundle {
    type Err = BundleError;

    /// Accepts `T+B+P`, `tbp` and similar spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut b = ChannelBundle::new(false, false, false, false);
        for c in s.chars().filter(|c| !matches!(c, '+' | ' ' | ',')) {
            let slot = match c.to_ascii_uppercase() {
                'T' => &mut b.include_text,
                'B' => &mut b.include_behavior,
                'P' => &mut b.include_traits,
                'E' => &mut b.include_emotion,
                _ => return Err(BundleError::Unknown(s.to_string())),
            };
            if *slot {
                return Err(BundleError::Unknown(s.to_string()));
            }
            *slot = true;
        }
        b.validate()
    }
}

impl Serialize for ChannelBundle {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChannelBundle {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Everything recorded about one encounter that perception and assessment read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncounterRecord {
    pub encounter: Encounter,
    #[serde(default)]
    pub memories: Vec<MemoryEntry>,
    #[serde(default)]
    pub traits: Vec<TraitObservation>,
    #[serde(default)]
    pub emotions: Vec<EmotionAnnotation>,
}

impl EncounterRecord {
    pub fn new(encounter: Encounter) -> Self {
        Self {
            encounter,
            memories: Vec::new(),
            traits: Vec::new(),
            emotions: Vec::new(),
        }
    }

    pub fn agent(&self) -> TraitId {
        self.encounter.agent
    }
}

pub const SECTION_MEMORY: &str = "## Memory Summaries";
pub const SECTION_BEHAVIOR: &str = "## Behavior Log";
pub const SECTION_DIALOGUE: &str = "## Dialogue";
pub const SECTION_TRAITS: &str = "## Inferred Personality Traits";
pub const SECTION_EMOTIONS: &str = "## Emotion Labels";

/// Assessment context built from the enabled channels. Sections are kept
/// separately for the prompt slots and rendered in a fixed order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentInput {
    pub bundle: ChannelBundle,
    pub agents: Vec<TraitId>,
    pub partial: bool,
    pub memory: String,
    pub behavior: String,
    pub dialogue: String,
    pub traits: Option<String>,
    pub emotions: Option<String>,
}

const NOT_INCLUDED: &str = "(not included)";

impl AssessmentInput {
    pub fn render(&self) -> String {
        let mut out = format!(
            "{SECTION_MEMORY}\n{}\n\n{SECTION_BEHAVIOR}\n{}\n\n{SECTION_DIALOGUE}\n{}\n",
            self.memory, self.behavior, self.dialogue
        );
        if let Some(t) = &self.traits {
            out.push_str(&format!("\n{SECTION_TRAITS}\n{t}\n"));
        }
        if let Some(e) = &self.emotions {
            out.push_str(&format!("\n{SECTION_EMOTIONS}\n{e}\n"));
        }
        out
    }

    /// Content for the fine-grained traits slot of the assessment prompts.
    pub fn fine_grained(&self) -> String {
        match (&self.traits, &self.emotions) {
            (None, None) => NOT_INCLUDED.to_string(),
            (Some(t), None) => t.clone(),
            (None, Some(e)) => format!("{SECTION_EMOTIONS}\n{e}"),
            (Some(t), Some(e)) => format!("{t}\n\n{SECTION_EMOTIONS}\n{e}"),
        }
    }
}

fn encounter_heading(t: TraitId) -> String {
    format!("### Encounter with agent {} ({})", t.code(), t.name())
}

fn per_encounter(records: &[&EncounterRecord], body: impl Fn(&EncounterRecord) -> String) -> String {
    records
        .iter()
        .map(|r| format!("{}\n{}", encounter_heading(r.agent()), body(r)))
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn or_none(lines: Vec<String>) -> String {
    if lines.is_empty() {
        "(none)".to_string()
    } else {
        lines.join("\n")
    }
}

pub fn behavior_log(encounter: &Encounter) -> String {
    or_none(
        encounter
            .resolved_rounds()
            .filter_map(|r| {
                let (p, a, o) = (r.player_decision?, r.agent_decision?, r.outcome?);
                Some(format!(
                    "Round {}: player {}, agent {}; player +{}, agent +{}.",
                    r.index,
                    p.as_str().to_ascii_lowercase(),
                    a.as_str().to_ascii_lowercase(),
                    o.player_points,
                    o.agent_points
                ))
            })
            .collect(),
    )
}

fn transcript(encounter: &Encounter) -> String {
    or_none(
        encounter
            .rounds
            .iter()
            .filter(|r| !r.dialogue.is_empty())
            .map(|r| format!("Round {}:\n{}", r.index, render_dialogue(&r.dialogue, false)))
            .collect(),
    )
}

/// Assembles the channels `bundle` enables for the given encounters, in the
/// order given. Incomplete encounters are rejected unless `allow_partial`.
pub fn assemble_channels(
    records: &[&EncounterRecord],
    bundle: ChannelBundle,
    allow_partial: bool,
) -> Result<AssessmentInput, BundleError> {
    bundle.validate()?;
    if records.is_empty() {
        return Err(BundleError::NoEncounters);
    }
    let mut partial = false;
    for r in records {
        if !r.encounter.is_complete() {
            if !allow_partial {
                return Err(BundleError::Incomplete(r.agent()));
            }
            partial = true;
        }
    }
    let memory = per_encounter(records, |r| {
        or_none(
            r.memories
                .iter()
                .map(|m| format!("Round {}: {}", m.round_index, m.summary_text))
                .collect(),
        )
    });
    let behavior = per_encounter(records, |r| behavior_log(&r.encounter));
    let dialogue = per_encounter(records, |r| transcript(&r.encounter));
    let traits = bundle.include_traits.then(|| {
        per_encounter(records, |r| {
            or_none(
                r.traits
                    .iter()
                    .map(|t| {
                        format!(
                            "Round {}: observed behavior: {}; inferred traits: {}; reason: {}",
                            t.round_index,
                            t.observed_behavior,
                            t.inferred_traits.join(", "),
                            t.reason
                        )
                    })
                    .collect(),
            )
        })
    });
    let emotions = bundle.include_emotion.then(|| {
        per_encounter(records, |r| {
            or_none(
                r.emotions
                    .iter()
                    .map(|e| {
                        let text = r
                            .encounter
                            .rounds
                            .iter()
                            .flat_map(|round| round.dialogue.iter())
                            .find(|u| u.seq == e.utterance_seq)
                            .map(|u| u.text.as_str())
                            .unwrap_or("");
                        format!("Round {}: \"{}\" [{}]", e.round_index, text, e.label)
                    })
                    .collect(),
            )
        })
    });
    Ok(AssessmentInput {
        bundle,
        agents: records.iter().map(|r| r.agent()).collect(),
        partial,
        memory,
        behavior,
        dialogue,
        traits,
        emotions,
    })
}

// ---- response templates -------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResponseError {
    #[error("missing or empty slot {0:?}")]
    MissingSlot(&'static str),
    #[error("emotion label {0:?} is not one of Happy, Sad, Neutral, Angry, Excited, Frustrated")]
    BadLabel(String),
    #[error("inferred traits must be descriptive words, got {0:?}")]
    NumericTrait(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmotionResponse {
    pub analysis: String,
    pub sentence: String,
    pub label: EmotionLabel,
}

const E_PROCESS: &str = "Emotion Analysis Process";
const E_SENTENCE: &str = "Sentence";
const E_LABEL: &str = "Emotion Label";

pub fn parse_emotion_response(text: &str) -> Result<EmotionResponse, ResponseError> {
    let slots = extract_slots(text, &[E_PROCESS, E_SENTENCE, E_LABEL]);
    let label_raw = slots[2]
        .clone()
        .filter(|s| !s.is_empty())
        .ok_or(ResponseError::MissingSlot(E_LABEL))?;
    let first = label_raw.lines().next().unwrap_or("");
    let label = first.parse().map_err(ResponseError::BadLabel)?;
    Ok(EmotionResponse {
        analysis: slots[0].clone().unwrap_or_default(),
        sentence: slots[1].clone().unwrap_or_default(),
        label,
    })
}

pub fn render_emotion_response(r: &EmotionResponse) -> String {
    format!(
        "- {E_PROCESS}: {}\n- {E_SENTENCE}: {}\n- {E_LABEL}: {}",
        r.analysis, r.sentence, r.label
    )
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraitResponse {
    pub observed_behavior: String,
    pub inferred_traits: Vec<String>,
    pub reason: String,
}

const T_BEHAVIOR: &str = "Observed Behavior";
const T_TRAITS: &str = "Inferred Personality Traits";
const T_REASON: &str = "Reason";

pub fn parse_trait_response(text: &str) -> Result<TraitResponse, ResponseError> {
    let slots = extract_slots(text, &[T_BEHAVIOR, T_TRAITS, T_REASON]);
    let get = |i: usize, name: &'static str| {
        slots[i]
            .clone()
            .filter(|s| !s.is_empty())
            .ok_or(ResponseError::MissingSlot(name))
    };
    let observed_behavior = get(0, T_BEHAVIOR)?;
    let traits_raw = get(1, T_TRAITS)?;
    let reason = get(2, T_REASON)?;
    let inferred_traits: Vec<String> = traits_raw
        .split([',', ';', '\n'])
        .map(clean_token)
        .filter(|t| !t.is_empty())
        .collect();
    if inferred_traits.is_empty() {
        return Err(ResponseError::MissingSlot(T_TRAITS));
    }
    if let Some(t) = inferred_traits.iter().find(|t| t.chars().any(|c| c.is_ascii_digit())) {
        return Err(ResponseError::NumericTrait(t.clone()));
    }
    Ok(TraitResponse {
        observed_behavior,
        inferred_traits,
        reason,
    })
}

pub fn render_trait_response(r: &TraitResponse) -> String {
    format!(
        "- {T_BEHAVIOR}: {}\n- {T_TRAITS}: {}\n- {T_REASON}: {}",
        r.observed_behavior,
        r.inferred_traits.join(", "),
        r.reason
    )
}

// ---- operations -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerceptionConfig {
    pub model: String,
    pub temperature: f64,
    pub parse_retries: u32,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o-0806".into(),
            temperature: 0.0,
            parse_retries: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("emotion label {0:?} is outside the six-label set")]
    LabelParse(String),
    #[error("{what} response did not match its template after {attempts} attempt(s): {detail}")]
    TemplateParse {
        what: &'static str,
        detail: String,
        attempts: u32,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

fn map_ask(what: &'static str, e: AskError<ResponseError>) -> PerceptionError {
    match e {
        AskError::Gateway(g) => PerceptionError::Gateway(g),
        AskError::Parse {
            error: ResponseError::BadLabel(l),
            ..
        } => PerceptionError::LabelParse(l),
        AskError::Parse { error, attempts } => PerceptionError::TemplateParse {
            what,
            detail: error.to_string(),
            attempts,
        },
    }
}

/// Short, player-side summary of the encounter before `round_index`.
pub fn game_abstract(encounter: &Encounter, round_index: u32) -> String {
    let mut out = format!(
        "The player is playing against the agent with the {} personality trait. This is round {} of {}.",
        encounter.agent.name(),
        round_index,
        encounter.rounds_per_encounter
    );
    let earlier: Vec<String> = encounter
        .resolved_rounds()
        .filter(|r| r.index < round_index)
        .filter_map(|r| {
            Some(format!(
                "Round {}: player {}, agent {}.",
                r.index,
                r.player_decision?.as_str(),
                r.agent_decision?.as_str()
            ))
        })
        .collect();
    if !earlier.is_empty() {
        out.push_str(" Earlier rounds: ");
        out.push_str(&earlier.join(" "));
    }
    out
}

fn request(cfg: &PerceptionConfig, purpose: PurposeTag, system: &str, body: String) -> ChatRequest {
    ChatRequest::new(cfg.model.clone(), purpose, cfg.temperature)
        .system(system)
        .user(body)
}

/// Labels the player utterance at `utterance_idx` of `round`.
pub fn label_emotion(
    client: &LlmClient,
    cfg: &PerceptionConfig,
    catalog: &PromptCatalog,
    rules: &str,
    encounter: &Encounter,
    round: &Round,
    utterance_idx: usize,
) -> Result<EmotionAnnotation, PerceptionError> {
    let utterance = round
        .dialogue
        .get(utterance_idx)
        .filter(|u| u.speaker == Speaker::Player)
        .ok_or_else(|| PerceptionError::Precondition("only player utterances are labeled".into()))?;
    let abstract_text = game_abstract(encounter, round.index);
    let dialogue = render_dialogue(&round.dialogue, false);
    let body = catalog.emotion.body.render(&vars([
        ("game_rules", rules),
        ("game_abstract", abstract_text.as_str()),
        ("dialogue", dialogue.as_str()),
        ("sentence", utterance.text.as_str()),
    ]))?;
    let req = request(cfg, PurposeTag::Emotion, &catalog.emotion.system, body);
    let (resp, _) =
        ask(client, &req, cfg.parse_retries, parse_emotion_response).map_err(|e| map_ask("emotion", e))?;
    Ok(EmotionAnnotation {
        round_index: round.index,
        utterance_seq: utterance.seq,
        label: resp.label,
        analysis_text: resp.analysis,
    })
}

pub fn extract_traits(
    client: &LlmClient,
    cfg: &PerceptionConfig,
    catalog: &PromptCatalog,
    rules: &str,
    encounter: &Encounter,
    round: &Round,
) -> Result<TraitObservation, PerceptionError> {
    let (Phase::Resolved, Some(decision)) = (round.phase, round.player_decision) else {
        return Err(PerceptionError::Precondition("trait extraction requires a resolved round".into()));
    };
    let abstract_text = game_abstract(encounter, round.index);
    let dialogue = format!(
        "{}\nPlayer decision: {}",
        render_dialogue(&round.dialogue, false),
        decision.as_str()
    );
    let body = catalog.traits.body.render(&vars([
        ("game_rules", rules),
        ("game_abstract", abstract_text.as_str()),
        ("dialogue", dialogue.as_str()),
    ]))?;
    let req = request(cfg, PurposeTag::Traits, &catalog.traits.system, body);
    let (resp, _) =
        ask(client, &req, cfg.parse_retries, parse_trait_response).map_err(|e| map_ask("traits", e))?;
    Ok(TraitObservation {
        round_index: round.index,
        observed_behavior: resp.observed_behavior,
        inferred_traits: resp.inferred_traits,
        reason: resp.reason,
    })
}

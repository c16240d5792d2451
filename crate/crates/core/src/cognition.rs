//! Agent cognition: memory, reflection, reasoning and planning.
//!
//! After each resolved round the agent summarizes the round into memory and
//! writes a reflection. When the player ends the dialogue the agent reasons
//! over its memories, its latest reflection and the current round's dialogue
//! and commits a decision plus a long-term plan. Chat replies use the same
//! context. Every call goes through the [`LlmClient`].

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{Decision, Encounter, Phase, Round, Speaker, Utterance};
use crate::llm::{ChatRequest, GatewayError, LlmClient, PurposeTag};
use crate::parsing::{ask, clean_token, extract_slots, AskError};
use crate::personas::TraitId;
use crate::prompts::PromptCatalog;
use crate::template::{vars, TemplateError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryEntry {
    pub round_index: u32,
    pub summary_text: String,
    pub game_status_snapshot: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionParts {
    pub insight: String,
    pub thoughts: String,
    pub action: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reflection {
    pub round_index: u32,
    pub text: String,
    pub parts: ReflectionParts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTurnOutput {
    pub decision: Decision,
    pub decision_process_text: String,
    pub long_term_plan: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub round_index: u32,
    pub output: AgentTurnOutput,
}

/// Cognition state of one agent within one encounter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub trait_id: TraitId,
    pub memories: Vec<MemoryEntry>,
    pub reflections: Vec<Reflection>,
    pub plans: Vec<PlanEntry>,
}

impl AgentState {
    pub fn new(trait_id: TraitId) -> Self {
        Self {
            trait_id,
            memories: Vec::new(),
            reflections: Vec::new(),
            plans: Vec::new(),
        }
    }

    pub fn latest_reflection(&self) -> Option<&Reflection> {
        self.reflections.last()
    }

    pub fn latest_plan(&self) -> Option<&PlanEntry> {
        self.plans.last()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorePolicy {
    /// Rewrite numbers in sentences about scores, points or rounds.
    Redact,
    /// Reject such replies and re-ask; fail with a moderation error.
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CognitionConfig {
    pub agent_model: String,
    pub chat_temperature: f64,
    /// Temperature for memory, reflection and decision calls.
    pub reasoning_temperature: f64,
    pub parse_retries: u32,
    /// Estimated tokens (chars / 4) above which chat context is compacted.
    pub context_token_budget: usize,
    /// Show the player's emotion labels to the agent during play.
    pub use_emotions: bool,
    pub score_policy: ScorePolicy,
}

impl Default for CognitionConfig {
    fn default() -> Self {
        Self {
            agent_model: "gpt-4o-0806".into(),
            chat_temperature: 0.7,
            reasoning_temperature: 0.7,
            parse_retries: 3,
            context_token_budget: 6000,
            use_emotions: false,
            score_policy: ScorePolicy::Redact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CognitionError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{what} response did not match its template after {attempts} attempt(s): {detail}")]
    TemplateParse {
        what: &'static str,
        detail: String,
        attempts: u32,
    },
    #[error("final decision {0:?} is neither cooperate nor defect")]
    DecisionParse(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("agent reply rejected by content policy: {0}")]
    Moderation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResponseError {
    #[error("missing or empty slot {0:?}")]
    MissingSlot(&'static str),
    #[error("final decision {0:?} is neither cooperate nor defect")]
    BadDecision(String),
    #[error("response does not follow the reflection template")]
    NotReflection,
    #[error("reply is empty")]
    Empty,
    #[error("{0}")]
    Policy(String),
}

fn map_ask(what: &'static str, e: AskError<ResponseError>) -> CognitionError {
    match e {
        AskError::Gateway(g) => CognitionError::Gateway(g),
        AskError::Parse {
            error: ResponseError::BadDecision(s),
            ..
        } => CognitionError::DecisionParse(s),
        AskError::Parse {
            error: ResponseError::Policy(s),
            ..
        } => CognitionError::Moderation(s),
        AskError::Parse { error, attempts } => CognitionError::TemplateParse {
            what,
            detail: error.to_string(),
            attempts,
        },
    }
}

// ---- response templates -------------------------------------------------

pub fn parse_memory_summary(text: &str) -> Result<String, ResponseError> {
    let t = text.trim();
    if t.is_empty() {
        Err(ResponseError::Empty)
    } else {
        Ok(t.to_string())
    }
}

pub fn render_memory_summary(summary: &str) -> String {
    summary.to_string()
}

const OBSERVE: &str = "I observe that ";
const BELIEVE: &str = ". I believe that ";
const BASED_ON: &str = ". Based on what I have observed and reflected upon, I ";

fn reflection_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?s)I observe that\s+(.+?)\.\s+I believe that\s+(.+?)\.\s+Based on what I have observed and reflected upon,\s+I\s+(.+?)\.?\s*$",
        )
        .unwrap()
    })
}

pub fn parse_reflection(text: &str) -> Result<ReflectionParts, ResponseError> {
    let caps = reflection_re().captures(text.trim()).ok_or(ResponseError::NotReflection)?;
    let part = |i: usize| caps[i].trim().to_string();
    let parts = ReflectionParts {
        insight: part(1),
        thoughts: part(2),
        action: part(3),
    };
    if parts.insight.is_empty() || parts.thoughts.is_empty() || parts.action.is_empty() {
        return Err(ResponseError::NotReflection);
    }
    Ok(parts)
}

pub fn render_reflection(p: &ReflectionParts) -> String {
    format!("As an agent, {OBSERVE}{}{BELIEVE}{}{BASED_ON}{}.", p.insight, p.thoughts, p.action)
}

const PROCESS: &str = "Decision Making Process";
const FINAL: &str = "Final Decision";
const PLAN: &str = "Long-Term Plan";

/// Strict decision word: `cooperate` or `defect`, ignoring case, quotes,
/// braces and trailing punctuation.
pub fn parse_decision_word(slot: &str) -> Result<Decision, ResponseError> {
    let first_line = slot.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    match clean_token(first_line).to_ascii_lowercase().as_str() {
        "cooperate" => Ok(Decision::Cooperate),
        "defect" => Ok(Decision::Defect),
        _ => Err(ResponseError::BadDecision(first_line.trim().to_string())),
    }
}

pub fn parse_turn_output(text: &str) -> Result<AgentTurnOutput, ResponseError> {
    let slots = extract_slots(text, &[PROCESS, FINAL, PLAN]);
    let get = |i: usize, name: &'static str| {
        slots[i]
            .clone()
            .filter(|s| !s.is_empty())
            .ok_or(ResponseError::MissingSlot(name))
    };
    let process = get(0, PROCESS)?;
    let decision = parse_decision_word(&get(1, FINAL)?)?;
    let plan = get(2, PLAN)?;
    Ok(AgentTurnOutput {
        decision,
        decision_process_text: process,
        long_term_plan: plan,
    })
}

pub fn render_turn_output(o: &AgentTurnOutput) -> String {
    format!(
        "#### {PROCESS}:\n{}\n#### {FINAL}:\n{}\n#### {PLAN}:\n{}",
        o.decision_process_text,
        o.decision.as_str().to_ascii_lowercase(),
        o.long_term_plan
    )
}

// ---- context assembly ---------------------------------------------------

pub fn render_dialogue(dialogue: &[Utterance], with_emotions: bool) -> String {
    if dialogue.is_empty() {
        return "(no messages yet)".into();
    }
    dialogue
        .iter()
        .map(|u| {
            let who = match u.speaker {
                Speaker::Player => "Player",
                Speaker::Agent => "Agent",
            };
            match (with_emotions, u.emotion) {
                (true, Some(e)) => format!("{who} [{e}]: {}", u.text),
                _ => format!("{who}: {}", u.text),
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Game status from the agent's side, up to and including `round_index`.
pub fn game_status(encounter: &Encounter, round_index: u32) -> String {
    let mut lines = Vec::new();
    let (mut player, mut agent) = (0, 0);
    for r in encounter.resolved_rounds().filter(|r| r.index <= round_index) {
        let (Some(pd), Some(ad), Some(o)) = (r.player_decision, r.agent_decision, r.outcome) else {
            continue;
        };
        player += o.player_points;
        agent += o.agent_points;
        lines.push(format!(
            "Round {}: the player chose {pd} and you chose {ad}. Points this round: player {}, you {}.",
            r.index, o.player_points, o.agent_points
        ));
    }
    lines.push(format!("Current score: player {player}, you {agent}."));
    lines.join("\n")
}

fn memory_block(state: &AgentState) -> String {
    if state.memories.is_empty() {
        return "(no previous rounds)".into();
    }
    state
        .memories
        .iter()
        .map(|m| {
            format!(
                "Round {} summary: {}\nGame status: {}",
                m.round_index, m.summary_text, m.game_status_snapshot
            )
        })
        .collect::<Vec<_>>()
        .join("\n\n")
}

fn estimate_tokens(parts: &[&str]) -> usize {
    parts.iter().map(|p| p.len()).sum::<usize>() / 4
}

/// Chat context: memories, latest reflection, latest plan and the current
/// round. Over budget, the reflection and plan are dropped.
pub fn chat_context(
    cfg: &CognitionConfig,
    role_prompt: &str,
    state: &AgentState,
    dialogue: &[Utterance],
) -> (String, bool) {
    let memories = memory_block(state);
    let current = render_dialogue(dialogue, cfg.use_emotions);
    let mut full = format!("### Memory:\n{memories}\n\n");
    if let Some(r) = state.latest_reflection() {
        full.push_str(&format!("### Latest Reflection:\n{}\n\n", r.text));
    }
    if let Some(p) = state.latest_plan() {
        full.push_str(&format!("### Long-Term Plan:\n{}\n\n", p.output.long_term_plan));
    }
    full.push_str(&format!("### Dialogue of this round:\n{current}"));
    if estimate_tokens(&[role_prompt, &full]) <= cfg.context_token_budget {
        return (full, false);
    }
    (
        format!("### Memory:\n{memories}\n\n### Dialogue of this round:\n{current}"),
        true,
    )
}

fn score_sentence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(score|scores|point|points|pts|round|rounds|total|lead|ahead|behind)\b").unwrap())
}

fn digits_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+").unwrap())
}

/// Applies the score-hiding policy to a chat reply.
pub fn apply_score_policy(policy: ScorePolicy, reply: &str) -> Result<String, ResponseError> {
    let mut out = String::with_capacity(reply.len());
    let mut violated = false;
    for sentence in reply.split_inclusive(['.', '!', '?', '\n']) {
        if score_sentence_re().is_match(sentence) && digits_re().is_match(sentence) {
            violated = true;
            out.push_str(&digits_re().replace_all(sentence, "some"));
        } else {
            out.push_str(sentence);
        }
    }
    match (policy, violated) {
        (ScorePolicy::Reject, true) => Err(ResponseError::Policy(
            "the reply states scores, points or round numbers; the player must not see them".into(),
        )),
        _ => Ok(out),
    }
}

fn base_request(cfg: &CognitionConfig, purpose: PurposeTag, temperature: f64, role_prompt: &str) -> ChatRequest {
    ChatRequest::new(cfg.agent_model.clone(), purpose, temperature).system(role_prompt)
}

// ---- operations -----------------------------------------------------------

pub fn agent_chat_reply(
    client: &LlmClient,
    cfg: &CognitionConfig,
    catalog: &PromptCatalog,
    role_prompt: &str,
    state: &AgentState,
    round: &Round,
) -> Result<String, CognitionError> {
    if round.phase != Phase::Dialogue {
        return Err(CognitionError::Precondition("agent chat requires the dialogue phase".into()));
    }
    let (context, _) = chat_context(cfg, role_prompt, state, &round.dialogue);
    let task = catalog.chat_task.render(&vars([]))?;
    let req = base_request(cfg, PurposeTag::AgentChat, cfg.chat_temperature, role_prompt)
        .user(format!("{context}\n\n{task}"));
    let policy = cfg.score_policy;
    let (reply, _) = ask(client, &req, cfg.parse_retries, |raw| {
        let text = raw.trim().trim_start_matches("Agent:").trim();
        if text.is_empty() {
            return Err(ResponseError::Empty);
        }
        apply_score_policy(policy, text)
    })
    .map_err(|e| map_ask("chat", e))?;
    Ok(reply)
}

pub fn summarize_round(
    client: &LlmClient,
    cfg: &CognitionConfig,
    catalog: &PromptCatalog,
    role_prompt: &str,
    encounter: &Encounter,
    round: &Round,
) -> Result<MemoryEntry, CognitionError> {
    if round.phase != Phase::Resolved {
        return Err(CognitionError::Precondition("memory summary requires a resolved round".into()));
    }
    let dialogue = render_dialogue(&round.dialogue, false);
    let status = game_status(encounter, round.index);
    let prompt = catalog
        .memory
        .render(&vars([("dialogue", dialogue.as_str()), ("game_status", status.as_str())]))?;
    let req = base_request(cfg, PurposeTag::Memory, cfg.reasoning_temperature, role_prompt).user(prompt);
    let (summary, _) =
        ask(client, &req, cfg.parse_retries, parse_memory_summary).map_err(|e| map_ask("memory", e))?;
    Ok(MemoryEntry {
        round_index: round.index,
        summary_text: summary,
        game_status_snapshot: status,
    })
}

pub fn reflect(
    client: &LlmClient,
    cfg: &CognitionConfig,
    catalog: &PromptCatalog,
    role_prompt: &str,
    state: &AgentState,
    round: &Round,
) -> Result<Reflection, CognitionError> {
    if round.phase != Phase::Resolved || state.memories.is_empty() {
        return Err(CognitionError::Precondition("reflection requires at least one resolved round".into()));
    }
    let mut history = memory_block(state);
    for r in &state.reflections {
        history.push_str(&format!("\n\nReflection after round {}: {}", r.round_index, r.text));
    }
    history.push_str(&format!(
        "\n\nDialogue of round {}:\n{}",
        round.index,
        render_dialogue(&round.dialogue, cfg.use_emotions)
    ));
    let prompt = catalog.reflection.render(&vars([("history", history.as_str())]))?;
    let req = base_request(cfg, PurposeTag::Reflection, cfg.reasoning_temperature, role_prompt).user(prompt);
    let (parts, raw) =
        ask(client, &req, cfg.parse_retries, parse_reflection).map_err(|e| map_ask("reflection", e))?;
    Ok(Reflection {
        round_index: round.index,
        text: raw.trim().to_string(),
        parts,
    })
}

pub fn decide_and_plan(
    client: &LlmClient,
    cfg: &CognitionConfig,
    catalog: &PromptCatalog,
    role_prompt: &str,
    state: &AgentState,
    round: &Round,
) -> Result<AgentTurnOutput, CognitionError> {
    if round.phase != Phase::DecisionPending {
        return Err(CognitionError::Precondition("decision requires the decision phase".into()));
    }
    if round.player_decision.is_some() {
        return Err(CognitionError::Precondition(
            "agent must commit before the player's decision is known".into(),
        ));
    }
    let mut context = memory_block(state);
    if let Some(r) = state.latest_reflection() {
        context.push_str(&format!("\n\nLatest reflection: {}", r.text));
    }
    if let Some(p) = state.latest_plan() {
        context.push_str(&format!("\n\nPrevious long-term plan: {}", p.output.long_term_plan));
    }
    context.push_str(&format!(
        "\n\nDialogue of the current round:\n{}",
        render_dialogue(&round.dialogue, cfg.use_emotions)
    ));
    let prompt = catalog.decide.render(&vars([("context", context.as_str())]))?;
    let req = base_request(cfg, PurposeTag::Decide, cfg.reasoning_temperature, role_prompt).user(prompt);
    let (out, _) = ask(client, &req, cfg.parse_retries, parse_turn_output).map_err(|e| map_ask("decision", e))?;
    Ok(out)
}

//! Self-play: an LLM-driven stand-in player with a known target profile.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::Clock;
use crate::cognition::parse_decision_word;
use crate::engine::{Assets, EngineConfig, EngineError, SessionRuntime};
use crate::game::{Decision, Encounter, GameSession, Round, Speaker, Utterance};
use crate::llm::{ChatRequest, GatewayError, LlmClient, PurposeTag};
use crate::parsing::{ask, extract_slots, AskError};
use crate::personas::TraitId;
use crate::template::{vars, TemplateError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedPlayerSpec {
    pub persona_text: String,
    pub seed: u64,
    /// The trait the persona is built to score high on, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TraitId>,
}

impl SimulatedPlayerSpec {
    /// A player extremely high in `target`, using the agents' persona text.
    pub fn high_in(assets: &Assets, target: TraitId, seed: u64) -> Self {
        Self {
            persona_text: assets.personas.get(target).text.clone(),
            seed,
            target: Some(target),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub model: String,
    pub temperature: f64,
    /// Player messages per round are drawn uniformly from this range.
    pub min_messages: u32,
    pub max_messages: u32,
    pub parse_retries: u32,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o-0806".into(),
            temperature: 0.7,
            min_messages: 1,
            max_messages: 3,
            parse_retries: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("simulated player reply unusable after {attempts} attempt(s): {detail}")]
    Reply { detail: String, attempts: u32 },
    #[error("invalid simulation config: {0}")]
    Config(String),
}

fn map_ask(e: AskError<String>) -> SimError {
    match e {
        AskError::Gateway(g) => SimError::Gateway(g),
        AskError::Parse { error, attempts } => SimError::Reply {
            detail: error,
            attempts,
        },
    }
}

/// Dialogue from the stand-in's point of view.
fn own_view(dialogue: &[Utterance]) -> String {
    if dialogue.is_empty() {
        return "(no messages yet)".into();
    }
    dialogue
        .iter()
        .map(|u| match u.speaker {
            Speaker::Player => format!("You: {}", u.text),
            Speaker::Agent => format!("Opponent: {}", u.text),
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// The player only ever learns its own past choices.
fn own_history(encounter: &Encounter) -> String {
    let lines: Vec<String> = encounter
        .resolved_rounds()
        .filter_map(|r| r.player_decision.map(|d| format!("Round {}: you chose to {}.", r.index, d.as_str().to_lowercase())))
        .collect();
    if lines.is_empty() {
        "(none yet)".into()
    } else {
        lines.join("\n")
    }
}

pub fn parse_player_decision(text: &str) -> Result<Decision, String> {
    let slot = extract_slots(text, &["Final Decision"])
        .pop()
        .flatten()
        .unwrap_or_else(|| text.to_string());
    parse_decision_word(&slot).map_err(|e| e.to_string())
}

pub struct SimulatedPlayer {
    pub spec: SimulatedPlayerSpec,
    cfg: SimulationConfig,
    system: String,
    rng: ChaCha8Rng,
}

impl SimulatedPlayer {
    pub fn new(spec: SimulatedPlayerSpec, cfg: SimulationConfig, assets: &Assets) -> Result<Self, SimError> {
        if cfg.min_messages == 0 || cfg.min_messages > cfg.max_messages {
            return Err(SimError::Config(format!(
                "message range {}..={} is empty or starts at zero",
                cfg.min_messages, cfg.max_messages
            )));
        }
        let system = assets.catalog.simulated_player.system.render(&vars([
            ("persona", spec.persona_text.as_str()),
            ("rules", assets.texts.rules.as_str()),
        ]))?;
        let rng = ChaCha8Rng::seed_from_u64(spec.seed);
        Ok(Self { spec, cfg, system, rng })
    }

    fn request(&self) -> ChatRequest {
        ChatRequest::new(self.cfg.model.clone(), PurposeTag::SimulatedPlayer, self.cfg.temperature).system(&self.system)
    }

    pub fn message_count(&mut self) -> u32 {
        self.rng.gen_range(self.cfg.min_messages..=self.cfg.max_messages)
    }

    pub fn next_line(&self, client: &LlmClient, assets: &Assets, round: &Round) -> Result<String, SimError> {
        let dialogue = own_view(&round.dialogue);
        let body = assets
            .catalog
            .simulated_player
            .chat
            .render(&vars([("dialogue", dialogue.as_str())]))?;
        let req = self.request().user(body);
        let (line, _) = ask(client, &req, self.cfg.parse_retries, |raw| {
            let line = raw.trim().trim_start_matches("You:").trim();
            if line.is_empty() {
                Err("empty line".to_string())
            } else {
                Ok(line.to_string())
            }
        })
        .map_err(map_ask)?;
        Ok(line)
    }

    pub fn decide(
        &self,
        client: &LlmClient,
        assets: &Assets,
        encounter: &Encounter,
        round: &Round,
    ) -> Result<Decision, SimError> {
        let dialogue = own_view(&round.dialogue);
        let history = own_history(encounter);
        let body = assets
            .catalog
            .simulated_player
            .decide
            .render(&vars([("dialogue", dialogue.as_str()), ("history", history.as_str())]))?;
        let req = self.request().user(body);
        let (d, _) = ask(client, &req, self.cfg.parse_retries, parse_player_decision).map_err(map_ask)?;
        Ok(d)
    }

    /// Plays the session to completion through the runtime.
    pub fn play(&mut self, rt: &mut SessionRuntime) -> Result<(), SimError> {
        let client = rt.client().clone();
        let assets = rt.assets().clone();
        while let Some(enc) = rt.game.active_encounter() {
            let n = self.message_count();
            for _ in 0..n {
                let round = rt.game.encounters[enc].rounds.last().expect("open round");
                let line = self.next_line(&client, &assets, round)?;
                rt.player_message(&line)?;
            }
            rt.end_dialogue()?;
            let encounter = &rt.game.encounters[enc];
            let decision = self.decide(&client, &assets, encounter, encounter.rounds.last().unwrap())?;
            rt.submit_decision(decision)?;
        }
        rt.run_pending_perception();
        Ok(())
    }
}

pub fn simulated_session_id(seed: u64, index: usize) -> String {
    format!("sim-{seed}-{index}")
}

/// Runs one complete self-play session. The agent order is drawn from
/// `seed` and `index`, so runs are reproducible.
#[allow(clippy::too_many_arguments)]
pub fn run_simulated_session(
    seed: u64,
    index: usize,
    spec: SimulatedPlayerSpec,
    sim_cfg: SimulationConfig,
    engine_cfg: EngineConfig,
    assets: Arc<Assets>,
    client: LlmClient,
    clock: Arc<dyn Clock>,
) -> Result<SessionRuntime, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let game = GameSession::create(
        &mut rng,
        simulated_session_id(seed, index),
        format!("sim-player-{index}"),
        engine_cfg.game.clone(),
        clock.now_ms(),
    )
    .map_err(EngineError::from)?;
    let mut player = SimulatedPlayer::new(spec, sim_cfg, &assets)?;
    let mut rt = SessionRuntime::start(game, engine_cfg, assets, client, clock)?;
    rt.set_consent(true);
    player.play(&mut rt)?;
    Ok(rt)
}

/// One assessed score for a player's target trait.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalCase {
    pub player_id: String,
    pub method: String,
    pub target: TraitId,
    pub score: f64,
}

impl DirectionalCase {
    /// High-target personas must land above the scale midpoint.
    pub fn hit(&self) -> bool {
        self.score > 3.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalSummary {
    pub hits: usize,
    pub total: usize,
    pub rate: f64,
}

pub fn directional_summary(cases: &[DirectionalCase]) -> DirectionalSummary {
    let hits = cases.iter().filter(|c| c.hit()).count();
    let total = cases.len();
    DirectionalSummary {
        hits,
        total,
        rate: if total == 0 { 0.0 } else { hits as f64 / total as f64 },
    }
}

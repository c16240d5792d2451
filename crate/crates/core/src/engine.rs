//! Session runtime: drives one game session through the agents' cognition
//! loop and the perception pipeline, and journals every step.
//!
//! The runtime is synchronous and single-writer. Callers that want
//! perception off the gameplay path take the pending jobs, run them with
//! [`run_perception_job`] on a forked client, and hand the outputs back.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assessment::ItemBank;
use crate::clock::Clock;
use crate::cognition::{
    agent_chat_reply, decide_and_plan, reflect, summarize_round, AgentState, CognitionConfig, CognitionError,
    MemoryEntry, PlanEntry, Reflection,
};
use crate::data::{BigFiveKnowledge, DataError, GameTexts};
use crate::game::{
    Decision, Encounter, GameConfig, GameError, GameSession, Phase, PlayerView, ReportView, SessionStatus, Speaker,
    ViewPhase,
};
use crate::llm::LlmClient;
use crate::perception::{
    extract_traits, label_emotion, EmotionAnnotation, EncounterRecord, PerceptionConfig, PerceptionError,
    TraitObservation,
};
use crate::personas::{build_role_prompt, default_persona_bank, PersonaBank, TraitId};
use crate::prompts::PromptCatalog;

/// Immutable data every session reads.
#[derive(Debug, Clone)]
pub struct Assets {
    pub texts: GameTexts,
    pub personas: PersonaBank,
    pub catalog: PromptCatalog,
    pub knowledge: BigFiveKnowledge,
    pub bank: ItemBank,
}

impl Assets {
    pub fn bundled() -> Result<Self, DataError> {
        Ok(Self {
            texts: GameTexts::default(),
            personas: default_persona_bank()?,
            catalog: PromptCatalog::bundled(),
            knowledge: BigFiveKnowledge::default(),
            bank: ItemBank::placeholder(),
        })
    }

    pub fn role_prompt(&self, t: TraitId) -> Result<String, crate::template::TemplateError> {
        Ok(build_role_prompt(self.personas.get(t), &self.texts.rules, &self.catalog.role)?.render())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub game: GameConfig,
    pub cognition: CognitionConfig,
    pub perception: PerceptionConfig,
    /// The agent speaks first at the start of every round.
    pub agent_opens_round: bool,
    /// Run perception as soon as a round resolves. Off by default: the
    /// caller drains the queued jobs off the gameplay path.
    pub inline_perception: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            game: GameConfig::default(),
            cognition: CognitionConfig::default(),
            perception: PerceptionConfig::default(),
            agent_opens_round: true,
            inline_perception: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    SessionCreated {
        session_id: String,
        player_id: String,
        agent_order: Vec<TraitId>,
        prompt_version: String,
        persona_version: String,
        config: EngineConfig,
    },
    EncounterStarted {
        encounter: usize,
        agent: TraitId,
    },
    Utterance {
        encounter: usize,
        round: u32,
        speaker: Speaker,
        utterance_seq: u64,
        text: String,
    },
    DialogueEnded {
        encounter: usize,
        round: u32,
    },
    AgentDecided {
        encounter: usize,
        round: u32,
        plan: PlanEntry,
    },
    PlayerDecided {
        encounter: usize,
        round: u32,
        decision: Decision,
    },
    RoundResolved {
        encounter: usize,
        round: u32,
        player_points: u32,
        agent_points: u32,
    },
    MemoryAdded {
        encounter: usize,
        entry: MemoryEntry,
    },
    ReflectionAdded {
        encounter: usize,
        reflection: Reflection,
    },
    EmotionLabeled {
        encounter: usize,
        annotation: EmotionAnnotation,
    },
    TraitsObserved {
        encounter: usize,
        observation: TraitObservation,
    },
    EncounterCompleted {
        encounter: usize,
    },
    ConsentSet {
        consent: bool,
    },
    SessionClosed {
        status: SessionStatus,
    },
    AgentFailed {
        encounter: usize,
        message: String,
    },
    PerceptionFailed {
        encounter: usize,
        round: u32,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// What a player may learn from the event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PublicEventKind {
    NewOpponent,
    Message { speaker: Speaker, text: String },
    Phase { phase: ViewPhase },
    Consent { consent: bool },
    Finished,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub kind: PublicEventKind,
}

impl Event {
    pub fn public(&self) -> Option<PublicEvent> {
        let kind = match &self.kind {
            EventKind::EncounterStarted { .. } => PublicEventKind::NewOpponent,
            EventKind::Utterance { speaker, text, .. } => PublicEventKind::Message {
                speaker: *speaker,
                text: text.clone(),
            },
            EventKind::DialogueEnded { .. } => PublicEventKind::Phase {
                phase: ViewPhase::Decision,
            },
            EventKind::ConsentSet { consent } => PublicEventKind::Consent { consent: *consent },
            EventKind::SessionClosed {
                status: SessionStatus::Completed,
            } => PublicEventKind::Finished,
            EventKind::SessionClosed { .. } => PublicEventKind::Abandoned,
            _ => return None,
        };
        Some(PublicEvent { seq: self.seq, kind })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerceptionTask {
    Emotion { utterance_idx: usize },
    Traits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceptionJob {
    pub encounter: usize,
    pub round: u32,
    pub task: PerceptionTask,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PerceptionOutput {
    Emotion(EmotionAnnotation),
    Traits(TraitObservation),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("agent for encounter {encounter} failed: {source}")]
    Agent {
        encounter: usize,
        #[source]
        source: CognitionError,
    },
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error("cannot assemble role prompt: {0}")]
    Setup(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EncounterPerception {
    pub traits: Vec<TraitObservation>,
    pub emotions: Vec<EmotionAnnotation>,
}

pub struct SessionRuntime {
    pub game: GameSession,
    pub agents: Vec<AgentState>,
    pub perception: Vec<EncounterPerception>,
    pub events: Vec<Event>,
    role_prompts: Vec<String>,
    pending: Vec<PerceptionJob>,
    in_flight: usize,
    cfg: EngineConfig,
    assets: Arc<Assets>,
    client: LlmClient,
    clock: Arc<dyn Clock>,
    next_event: u64,
}

impl SessionRuntime {
    /// Creates the session and, when configured, lets the first agent open.
    pub fn start(
        game: GameSession,
        cfg: EngineConfig,
        assets: Arc<Assets>,
        client: LlmClient,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, EngineError> {
        let role_prompts = game
            .agent_order
            .iter()
            .map(|t| assets.role_prompt(*t))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| EngineError::Setup(e.to_string()))?;
        let mut rt = Self {
            agents: game.agent_order.iter().map(|t| AgentState::new(*t)).collect(),
            perception: vec![EncounterPerception::default(); game.encounters.len()],
            events: Vec::new(),
            role_prompts,
            pending: Vec::new(),
            in_flight: 0,
            cfg,
            assets,
            client,
            clock,
            next_event: 1,
            game,
        };
        rt.emit(EventKind::SessionCreated {
            session_id: rt.game.session_id.clone(),
            player_id: rt.game.player_id.clone(),
            agent_order: rt.game.agent_order.clone(),
            prompt_version: rt.assets.catalog.version.clone(),
            persona_version: rt.assets.personas.version.clone(),
            config: rt.cfg.clone(),
        });
        rt.emit(EventKind::EncounterStarted {
            encounter: 0,
            agent: rt.game.agent_order[0],
        });
        rt.agent_opening(0);
        Ok(rt)
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn assets(&self) -> &Arc<Assets> {
        &self.assets
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    pub fn role_prompt(&self, encounter: usize) -> &str {
        &self.role_prompts[encounter]
    }

    fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    fn emit(&mut self, kind: EventKind) {
        let at_ms = self.now();
        self.events.push(Event {
            seq: self.next_event,
            at_ms,
            kind,
        });
        self.next_event += 1;
    }

    pub fn last_event_seq(&self) -> u64 {
        self.next_event - 1
    }

    pub fn public_events_after(&self, after: u64) -> Vec<PublicEvent> {
        self.events
            .iter()
            .filter(|e| e.seq > after)
            .filter_map(Event::public)
            .collect()
    }

    pub fn view(&self, report: Option<ReportView>) -> PlayerView {
        self.game
            .player_view(&self.assets.texts.storyline, &self.assets.texts.rules, report)
    }

    fn active(&self) -> Result<usize, EngineError> {
        if self.game.is_closed() {
            return Err(GameError::SessionClosed.into());
        }
        Ok(self.game.active_encounter().expect("open session has an active encounter"))
    }

    fn current_round_index(&self, enc: usize) -> u32 {
        self.game.encounters[enc].rounds.last().map(|r| r.index).unwrap_or(0)
    }

    fn agent_opening(&mut self, enc: usize) {
        if !self.cfg.agent_opens_round {
            return;
        }
        let _ = self.agent_reply(enc);
    }

    fn agent_reply(&mut self, enc: usize) -> Result<(), EngineError> {
        let round = self.game.encounters[enc].rounds.last().expect("open round");
        let reply = agent_chat_reply(
            &self.client,
            &self.cfg.cognition,
            &self.assets.catalog,
            &self.role_prompts[enc],
            &self.agents[enc],
            round,
        );
        match reply {
            Ok(text) => {
                let now = self.now();
                let round = self.game.append_utterance(enc, Speaker::Agent, &text, now)?;
                let (index, seq) = (round.index, round.dialogue.last().unwrap().seq);
                self.emit(EventKind::Utterance {
                    encounter: enc,
                    round: index,
                    speaker: Speaker::Agent,
                    utterance_seq: seq,
                    text,
                });
                Ok(())
            }
            Err(source) => {
                self.emit(EventKind::AgentFailed {
                    encounter: enc,
                    message: source.to_string(),
                });
                Err(EngineError::Agent { encounter: enc, source })
            }
        }
    }

    /// Appends the player's line and the agent's reply. If the agent fails
    /// the player's line stays recorded and the error is returned.
    pub fn player_message(&mut self, text: &str) -> Result<(), EngineError> {
        let enc = self.active()?;
        let now = self.now();
        let round = self.game.append_utterance(enc, Speaker::Player, text, now)?;
        let (index, utterance) = (round.index, round.dialogue.last().unwrap().clone());
        self.emit(EventKind::Utterance {
            encounter: enc,
            round: index,
            speaker: Speaker::Player,
            utterance_seq: utterance.seq,
            text: utterance.text,
        });
        self.agent_reply(enc)
    }

    /// Moves to the decision phase and has the agent commit its decision.
    pub fn end_dialogue(&mut self) -> Result<(), EngineError> {
        let enc = self.active()?;
        let now = self.now();
        let index = self.game.end_dialogue(enc, now)?.index;
        self.emit(EventKind::DialogueEnded { encounter: enc, round: index });
        self.ensure_agent_decision(enc)
    }

    fn ensure_agent_decision(&mut self, enc: usize) -> Result<(), EngineError> {
        let round = self.game.encounters[enc].rounds.last().expect("open round");
        if round.agent_decision.is_some() {
            return Ok(());
        }
        let out = decide_and_plan(
            &self.client,
            &self.cfg.cognition,
            &self.assets.catalog,
            &self.role_prompts[enc],
            &self.agents[enc],
            round,
        );
        let index = round.index;
        match out {
            Ok(output) => {
                let now = self.now();
                self.game.commit_agent_decision(enc, output.decision, now)?;
                let plan = PlanEntry {
                    round_index: index,
                    output,
                };
                self.agents[enc].plans.push(plan.clone());
                self.emit(EventKind::AgentDecided {
                    encounter: enc,
                    round: index,
                    plan,
                });
                Ok(())
            }
            Err(source) => {
                self.emit(EventKind::AgentFailed {
                    encounter: enc,
                    message: source.to_string(),
                });
                Err(EngineError::Agent { encounter: enc, source })
            }
        }
    }

    /// Records the player's decision. The agent's decision is always
    /// committed first; a resolved round then runs memory, reflection and
    /// perception, and the next round opens.
    pub fn submit_decision(&mut self, decision: Decision) -> Result<(), EngineError> {
        let enc = self.active()?;
        let phase = self.game.current_phase();
        if phase != Some(Phase::DecisionPending) {
            return Err(GameError::Phase {
                expected: Phase::DecisionPending,
                actual: phase.unwrap_or(Phase::Resolved),
            }
            .into());
        }
        if self.game.encounters[enc].rounds.last().unwrap().player_decision.is_some() {
            return Err(GameError::DoubleDecision(Speaker::Player).into());
        }
        self.ensure_agent_decision(enc)?;
        let now = self.now();
        let progress = self.game.submit_player_decision(enc, decision, now)?;
        self.emit(EventKind::PlayerDecided {
            encounter: enc,
            round: progress.round,
            decision,
        });
        let Some(outcome) = progress.outcome else {
            return Ok(());
        };
        self.emit(EventKind::RoundResolved {
            encounter: enc,
            round: progress.round,
            player_points: outcome.player_points,
            agent_points: outcome.agent_points,
        });
        let cognition = self.after_round(enc, progress.round);
        self.pending.push(PerceptionJob {
            encounter: enc,
            round: progress.round,
            task: PerceptionTask::Traits,
        });
        let round = &self.game.encounters[enc].rounds[progress.round as usize - 1];
        let emotion_jobs: Vec<PerceptionJob> = round
            .player_utterances()
            .map(|(i, _)| PerceptionJob {
                encounter: enc,
                round: progress.round,
                task: PerceptionTask::Emotion { utterance_idx: i },
            })
            .collect();
        self.pending.splice(self.pending.len() - 1..self.pending.len() - 1, emotion_jobs);
        if self.cfg.inline_perception {
            self.run_pending_perception();
        }
        if progress.encounter_completed {
            self.emit(EventKind::EncounterCompleted { encounter: enc });
        }
        if progress.session_completed {
            self.emit(EventKind::SessionClosed {
                status: SessionStatus::Completed,
            });
        } else if progress.encounter_completed {
            self.emit(EventKind::EncounterStarted {
                encounter: enc + 1,
                agent: self.game.agent_order[enc + 1],
            });
            self.agent_opening(enc + 1);
        } else {
            self.agent_opening(enc);
        }
        cognition
    }

    fn after_round(&mut self, enc: usize, round_index: u32) -> Result<(), EngineError> {
        let encounter = &self.game.encounters[enc];
        let round = &encounter.rounds[round_index as usize - 1];
        let step = summarize_round(
            &self.client,
            &self.cfg.cognition,
            &self.assets.catalog,
            &self.role_prompts[enc],
            encounter,
            round,
        )
        .and_then(|entry| {
            self.agents[enc].memories.push(entry.clone());
            let r = reflect(
                &self.client,
                &self.cfg.cognition,
                &self.assets.catalog,
                &self.role_prompts[enc],
                &self.agents[enc],
                round,
            );
            Ok((entry, r?))
        });
        match step {
            Ok((entry, reflection)) => {
                self.agents[enc].reflections.push(reflection.clone());
                self.emit(EventKind::MemoryAdded { encounter: enc, entry });
                self.emit(EventKind::ReflectionAdded {
                    encounter: enc,
                    reflection,
                });
                Ok(())
            }
            Err(source) => {
                self.emit(EventKind::AgentFailed {
                    encounter: enc,
                    message: source.to_string(),
                });
                Err(EngineError::Agent { encounter: enc, source })
            }
        }
    }

    pub fn set_consent(&mut self, consent: bool) {
        self.game.set_consent(consent);
        self.emit(EventKind::ConsentSet { consent });
    }

    /// Closes the session as incomplete when idle past the TTL.
    pub fn expire_if_idle(&mut self) -> bool {
        let now = self.now();
        if self.game.expire_if_idle(now) {
            self.emit(EventKind::SessionClosed {
                status: SessionStatus::Incomplete,
            });
            true
        } else {
            false
        }
    }

    pub fn abandon(&mut self) {
        if !self.game.is_closed() {
            let now = self.now();
            self.game.close_incomplete(now);
            self.emit(EventKind::SessionClosed {
                status: SessionStatus::Incomplete,
            });
        }
    }

    pub fn perception_done(&self) -> bool {
        self.pending.is_empty() && self.in_flight == 0
    }

    /// Hands out queued perception work with a snapshot of its encounter.
    pub fn take_perception_jobs(&mut self) -> Vec<(PerceptionJob, Encounter)> {
        let jobs: Vec<_> = self
            .pending
            .drain(..)
            .map(|j| (j, self.game.encounters[j.encounter].clone()))
            .collect();
        self.in_flight += jobs.len();
        jobs
    }

    pub fn apply_perception(&mut self, job: PerceptionJob, output: Result<PerceptionOutput, PerceptionError>) {
        self.in_flight = self.in_flight.saturating_sub(1);
        let enc = job.encounter;
        match output {
            Ok(PerceptionOutput::Emotion(a)) => {
                let idx = self.game.encounters[enc].rounds[a.round_index as usize - 1]
                    .dialogue
                    .iter()
                    .position(|u| u.seq == a.utterance_seq);
                if let Some(i) = idx {
                    self.game.set_emotion(enc, a.round_index, i, a.label);
                }
                let list = &mut self.perception[enc].emotions;
                let at = list.partition_point(|x| x.utterance_seq < a.utterance_seq);
                list.insert(at, a.clone());
                self.emit(EventKind::EmotionLabeled {
                    encounter: enc,
                    annotation: a,
                });
            }
            Ok(PerceptionOutput::Traits(t)) => {
                let list = &mut self.perception[enc].traits;
                let at = list.partition_point(|x| x.round_index < t.round_index);
                list.insert(at, t.clone());
                self.emit(EventKind::TraitsObserved {
                    encounter: enc,
                    observation: t,
                });
            }
            Err(e) => self.emit(EventKind::PerceptionFailed {
                encounter: enc,
                round: job.round,
                message: e.to_string(),
            }),
        }
    }

    pub fn run_pending_perception(&mut self) {
        for (job, encounter) in self.take_perception_jobs() {
            let out = run_perception_job(&self.client, &self.cfg.perception, &self.assets, &encounter, job);
            self.apply_perception(job, out);
        }
    }

    /// Frozen per-encounter data for assessment, in play order.
    pub fn encounter_records(&self) -> Vec<EncounterRecord> {
        self.game
            .encounters
            .iter()
            .enumerate()
            .map(|(i, e)| EncounterRecord {
                encounter: e.clone(),
                memories: self.agents[i].memories.clone(),
                traits: self.perception[i].traits.clone(),
                emotions: self.perception[i].emotions.clone(),
            })
            .collect()
    }

    pub fn current_round_number(&self) -> Option<u32> {
        self.game
            .active_encounter()
            .map(|e| self.current_round_index(e))
    }
}

pub fn run_perception_job(
    client: &LlmClient,
    cfg: &PerceptionConfig,
    assets: &Assets,
    encounter: &Encounter,
    job: PerceptionJob,
) -> Result<PerceptionOutput, PerceptionError> {
    let round = encounter
        .rounds
        .get(job.round as usize - 1)
        .ok_or_else(|| PerceptionError::Precondition(format!("round {} does not exist", job.round)))?;
    let rules = &assets.texts.rules;
    match job.task {
        PerceptionTask::Emotion { utterance_idx } => {
            label_emotion(client, cfg, &assets.catalog, rules, encounter, round, utterance_idx)
                .map(PerceptionOutput::Emotion)
        }
        PerceptionTask::Traits => {
            extract_traits(client, cfg, &assets.catalog, rules, encounter, round).map(PerceptionOutput::Traits)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::llm::synthetic::synthetic_backend;

    fn runtime(cfg: EngineConfig) -> SessionRuntime {
        let game = GameSession::new("s1", "p1", TraitId::ALL.to_vec(), cfg.game.clone(), 0).unwrap();
        SessionRuntime::start(
            game,
            cfg,
            Arc::new(Assets::bundled().unwrap()),
            LlmClient::from_backend(synthetic_backend(3)),
            Arc::new(ManualClock::new(0, 10)),
        )
        .unwrap()
    }

    #[test]
    fn full_round_runs_cognition_and_perception() {
        let mut rt = runtime(EngineConfig {
            inline_perception: true,
            ..Default::default()
        });
        assert_eq!(rt.game.encounters[0].rounds[0].dialogue.len(), 1);
        rt.player_message("Hi, shall we cooperate?").unwrap();
        rt.player_message("I mean it.").unwrap();
        rt.end_dialogue().unwrap();
        assert!(rt.game.encounters[0].rounds[0].agent_decision.is_some());
        rt.submit_decision(Decision::Cooperate).unwrap();
        assert_eq!(rt.agents[0].memories.len(), 1);
        assert_eq!(rt.agents[0].reflections.len(), 1);
        assert_eq!(rt.perception[0].emotions.len(), 2);
        assert_eq!(rt.perception[0].traits.len(), 1);
        assert!(rt.perception_done());
        let round = &rt.game.encounters[0].rounds[0];
        assert!(round.player_utterances().all(|(_, u)| u.emotion.is_some()));
        assert!(round.dialogue.iter().filter(|u| u.speaker == Speaker::Agent).all(|u| u.emotion.is_none()));
        assert_eq!(rt.game.encounters[0].rounds.len(), 2);
        assert_eq!(rt.game.encounters[0].rounds[1].dialogue.len(), 1);
    }

    #[test]
    fn public_events_hide_decisions_and_points() {
        let mut rt = runtime(EngineConfig::default());
        rt.end_dialogue().unwrap();
        rt.submit_decision(Decision::Defect).unwrap();
        let mut events = rt.public_events_after(0);
        for e in &mut events {
            if let PublicEventKind::Message { text, .. } = &mut e.kind {
                text.clear();
            }
        }
        let json = serde_json::to_string(&events).unwrap();
        for banned in ["points", "score", "round", "cooperate", "defect", "Cooperate", "Defect"] {
            assert!(!json.contains(banned), "{banned} leaked in {json}");
        }
        let seqs: Vec<u64> = rt.events.iter().map(|e| e.seq).collect();
        assert!(seqs.windows(2).all(|w| w[1] == w[0] + 1));
    }

    #[test]
    fn deferred_perception_is_applied_in_order() {
        let mut rt = runtime(EngineConfig::default());
        rt.player_message("one").unwrap();
        rt.player_message("two").unwrap();
        rt.end_dialogue().unwrap();
        rt.submit_decision(Decision::Cooperate).unwrap();
        assert!(!rt.perception_done());
        let jobs = rt.take_perception_jobs();
        assert_eq!(jobs.len(), 3);
        let client = rt.client().fork();
        let outputs: Vec<_> = jobs
            .iter()
            .map(|(j, e)| (*j, run_perception_job(&client, &rt.config().perception, rt.assets(), e, *j)))
            .collect();
        for (job, out) in outputs.into_iter().rev() {
            rt.apply_perception(job, out);
        }
        rt.client().absorb(&client);
        assert!(rt.perception_done());
        let seqs: Vec<u64> = rt.perception[0].emotions.iter().map(|e| e.utterance_seq).collect();
        assert!(seqs.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn player_decision_in_dialogue_is_a_phase_error() {
        let mut rt = runtime(EngineConfig::default());
        let before = rt.client().record_count();
        let err = rt.submit_decision(Decision::Cooperate).unwrap_err();
        assert!(matches!(err, EngineError::Game(GameError::Phase { .. })));
        assert_eq!(rt.client().record_count(), before);
    }
}

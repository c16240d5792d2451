//! Trust-game state machine.
//!
//! A session holds five encounters, one per single-trait agent, played in a
//! randomized order. Each encounter is a fixed number of rounds and each
//! round moves `Dialogue -> DecisionPending -> Resolved`. Every mutation
//! checks its preconditions before touching state, so a rejected action
//! leaves the session exactly as it was.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perception::EmotionLabel;
use crate::personas::TraitId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub cc_each: u32,
    pub coop_when_betrayed: u32,
    pub defect_when_betraying: u32,
    pub dd_each: u32,
}

impl Default for PayoffMatrix {
    fn default() -> Self {
        Self {
            cc_each: 2,
            coop_when_betrayed: 0,
            defect_when_betraying: 3,
            dd_each: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Cooperate,
    Defect,
}

impl Decision {
    pub const ALL: [Decision; 2] = [Decision::Cooperate, Decision::Defect];

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Cooperate => "Cooperate",
            Decision::Defect => "Defect",
        }
    }
}

impl std::fmt::Display for Decision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Points for `(player, agent)` given both decisions.
pub fn resolve_round(player: Decision, agent: Decision, m: &PayoffMatrix) -> (u32, u32) {
    use Decision::*;
    match (player, agent) {
        (Cooperate, Cooperate) => (m.cc_each, m.cc_each),
        (Cooperate, Defect) => (m.coop_when_betrayed, m.defect_when_betraying),
        (Defect, Cooperate) => (m.defect_when_betraying, m.coop_when_betrayed),
        (Defect, Defect) => (m.dd_each, m.dd_each),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Player,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
    /// Session-local monotonic sequence number.
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emotion: Option<EmotionLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Dialogue,
    DecisionPending,
    Resolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub player_points: u32,
    pub agent_points: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    /// 1-based.
    pub index: u32,
    pub dialogue: Vec<Utterance>,
    pub player_decision: Option<Decision>,
    pub agent_decision: Option<Decision>,
    pub outcome: Option<Outcome>,
    pub phase: Phase,
}

impl Round {
    fn open(index: u32) -> Self {
        Self {
            index,
            dialogue: Vec::new(),
            player_decision: None,
            agent_decision: None,
            outcome: None,
            phase: Phase::Dialogue,
        }
    }

    pub fn player_utterances(&self) -> impl Iterator<Item = (usize, &Utterance)> {
        self.dialogue
            .iter()
            .enumerate()
            .filter(|(_, u)| u.speaker == Speaker::Player)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encounter {
    pub agent: TraitId,
    pub rounds: Vec<Round>,
    pub rounds_per_encounter: u32,
    pub player_total: u32,
    pub agent_total: u32,
}

impl Encounter {
    fn new(agent: TraitId, rounds_per_encounter: u32) -> Self {
        Self {
            agent,
            rounds: Vec::new(),
            rounds_per_encounter,
            player_total: 0,
            agent_total: 0,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.rounds.len() == self.rounds_per_encounter as usize
            && self.rounds.iter().all(|r| r.phase == Phase::Resolved)
    }

    pub fn resolved_rounds(&self) -> impl Iterator<Item = &Round> {
        self.rounds.iter().filter(|r| r.phase == Phase::Resolved)
    }

    pub fn current_round(&self) -> Option<&Round> {
        self.rounds.last().filter(|r| r.phase != Phase::Resolved)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    Active,
    Completed,
    /// Closed before every encounter finished, e.g. after going idle.
    Incomplete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GameConfig {
    pub rounds_per_encounter: u32,
    /// Cap on player utterances per round; `None` leaves it to the player.
    pub max_exchanges: Option<u32>,
    /// Idle time after which an active session is closed as incomplete.
    pub idle_ttl_ms: Option<u64>,
    pub payoff: PayoffMatrix,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            rounds_per_encounter: 6,
            max_exchanges: None,
            idle_ttl_ms: None,
            payoff: PayoffMatrix::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("action not allowed in phase {actual:?} (expected {expected:?})")]
    Phase { expected: Phase, actual: Phase },
    #[error("encounter {requested} is not the active encounter")]
    NotActiveEncounter { requested: usize },
    #[error("invalid input: {0}")]
    Input(String),
    #[error("session is closed")]
    SessionClosed,
    #[error("{0:?} decision already recorded for this round")]
    DoubleDecision(Speaker),
    #[error("round already holds the maximum of {0} player messages")]
    ExchangeLimit(u32),
    #[error("invalid session setup: {0}")]
    Setup(String),
}

/// What happened when a decision was submitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub encounter: usize,
    pub round: u32,
    pub outcome: Option<Outcome>,
    pub encounter_completed: bool,
    pub session_completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameSession {
    pub session_id: String,
    pub player_id: String,
    pub encounters: Vec<Encounter>,
    pub agent_order: Vec<TraitId>,
    pub consent: bool,
    pub status: SessionStatus,
    pub created_at_ms: u64,
    pub closed_at_ms: Option<u64>,
    pub last_activity_ms: u64,
    pub config: GameConfig,
    next_seq: u64,
}

impl GameSession {
    pub fn new(
        session_id: impl Into<String>,
        player_id: impl Into<String>,
        agent_order: Vec<TraitId>,
        config: GameConfig,
        now_ms: u64,
    ) -> Result<Self, GameError> {
        let mut sorted = agent_order.clone();
        sorted.sort();
        sorted.dedup();
        if agent_order.len() != 5 || sorted.len() != 5 {
            return Err(GameError::Setup(format!(
                "agent order must be a permutation of O,C,E,A,N, got {agent_order:?}"
            )));
        }
        if config.rounds_per_encounter == 0 {
            return Err(GameError::Setup("rounds_per_encounter must be at least 1".into()));
        }
        let mut encounters: Vec<Encounter> = agent_order
            .iter()
            .map(|&t| Encounter::new(t, config.rounds_per_encounter))
            .collect();
        encounters[0].rounds.push(Round::open(1));
        Ok(Self {
            session_id: session_id.into(),
            player_id: player_id.into(),
            encounters,
            agent_order,
            consent: false,
            status: SessionStatus::Active,
            created_at_ms: now_ms,
            closed_at_ms: None,
            last_activity_ms: now_ms,
            config,
            next_seq: 0,
        })
    }

    /// New session with a uniformly random agent order.
    pub fn create<R: Rng + ?Sized>(
        rng: &mut R,
        session_id: impl Into<String>,
        player_id: impl Into<String>,
        config: GameConfig,
        now_ms: u64,
    ) -> Result<Self, GameError> {
        let mut order = TraitId::ALL.to_vec();
        order.shuffle(rng);
        Self::new(session_id, player_id, order, config, now_ms)
    }

    pub fn is_closed(&self) -> bool {
        self.status != SessionStatus::Active
    }

    /// Index of the encounter currently being played.
    pub fn active_encounter(&self) -> Option<usize> {
        if self.is_closed() {
            return None;
        }
        self.encounters.iter().position(|e| !e.is_complete())
    }

    pub fn current_round(&self) -> Option<&Round> {
        self.active_encounter()
            .and_then(|i| self.encounters[i].current_round())
    }

    pub fn current_phase(&self) -> Option<Phase> {
        self.current_round().map(|r| r.phase)
    }

    pub fn set_consent(&mut self, consent: bool) {
        self.consent = consent;
    }

    fn open_round_mut(&mut self, encounter_idx: usize) -> Result<&mut Round, GameError> {
        if self.is_closed() {
            return Err(GameError::SessionClosed);
        }
        if self.active_encounter() != Some(encounter_idx) {
            return Err(GameError::NotActiveEncounter {
                requested: encounter_idx,
            });
        }
        Ok(self.encounters[encounter_idx]
            .rounds
            .last_mut()
            .expect("active encounter always has an open round"))
    }

    fn touch(&mut self, now_ms: u64) {
        self.last_activity_ms = self.last_activity_ms.max(now_ms);
    }

    pub fn append_utterance(
        &mut self,
        encounter_idx: usize,
        speaker: Speaker,
        text: &str,
        now_ms: u64,
    ) -> Result<&Round, GameError> {
        let text = text.trim();
        let max = self.config.max_exchanges;
        let seq = self.next_seq;
        let round = self.open_round_mut(encounter_idx)?;
        if round.phase != Phase::Dialogue {
            return Err(GameError::Phase {
                expected: Phase::Dialogue,
                actual: round.phase,
            });
        }
        if text.is_empty() {
            return Err(GameError::Input("utterance text is empty".into()));
        }
        if let (Speaker::Player, Some(max)) = (speaker, max) {
            if round.player_utterances().count() as u32 >= max {
                return Err(GameError::ExchangeLimit(max));
            }
        }
        round.dialogue.push(Utterance {
            speaker,
            text: text.to_string(),
            seq,
            emotion: None,
        });
        self.next_seq += 1;
        self.touch(now_ms);
        Ok(self.encounters[encounter_idx].rounds.last().unwrap())
    }

    pub fn end_dialogue(&mut self, encounter_idx: usize, now_ms: u64) -> Result<&Round, GameError> {
        let round = self.open_round_mut(encounter_idx)?;
        if round.phase != Phase::Dialogue {
            return Err(GameError::Phase {
                expected: Phase::Dialogue,
                actual: round.phase,
            });
        }
        round.phase = Phase::DecisionPending;
        self.touch(now_ms);
        Ok(self.encounters[encounter_idx].rounds.last().unwrap())
    }

    /// Records the agent's decision. The engine calls this before the
    /// player's decision for the round is accepted.
    pub fn commit_agent_decision(
        &mut self,
        encounter_idx: usize,
        decision: Decision,
        now_ms: u64,
    ) -> Result<Progress, GameError> {
        self.record_decision(encounter_idx, Speaker::Agent, decision, now_ms)
    }

    pub fn submit_player_decision(
        &mut self,
        encounter_idx: usize,
        decision: Decision,
        now_ms: u64,
    ) -> Result<Progress, GameError> {
        self.record_decision(encounter_idx, Speaker::Player, decision, now_ms)
    }

    fn record_decision(
        &mut self,
        encounter_idx: usize,
        who: Speaker,
        decision: Decision,
        now_ms: u64,
    ) -> Result<Progress, GameError> {
        let payoff = self.config.payoff;
        let round = self.open_round_mut(encounter_idx)?;
        if round.phase != Phase::DecisionPending {
            return Err(GameError::Phase {
                expected: Phase::DecisionPending,
                actual: round.phase,
            });
        }
        let slot = match who {
            Speaker::Player => &mut round.player_decision,
            Speaker::Agent => &mut round.agent_decision,
        };
        if slot.is_some() {
            return Err(GameError::DoubleDecision(who));
        }
        *slot = Some(decision);
        let round_index = round.index;

        let mut progress = Progress {
            encounter: encounter_idx,
            round: round_index,
            outcome: None,
            encounter_completed: false,
            session_completed: false,
        };
        if let (Some(p), Some(a)) = (round.player_decision, round.agent_decision) {
            let (pp, ap) = resolve_round(p, a, &payoff);
            let outcome = Outcome {
                player_points: pp,
                agent_points: ap,
            };
            round.outcome = Some(outcome);
            round.phase = Phase::Resolved;
            progress.outcome = Some(outcome);

            let enc = &mut self.encounters[encounter_idx];
            enc.player_total += pp;
            enc.agent_total += ap;
            if (enc.rounds.len() as u32) < enc.rounds_per_encounter {
                enc.rounds.push(Round::open(round_index + 1));
            } else {
                progress.encounter_completed = true;
                if let Some(next) = self.encounters.get_mut(encounter_idx + 1) {
                    next.rounds.push(Round::open(1));
                } else {
                    progress.session_completed = true;
                    self.status = SessionStatus::Completed;
                    self.closed_at_ms = Some(now_ms);
                }
            }
        }
        self.touch(now_ms);
        Ok(progress)
    }

    /// Closes the session as incomplete if it has been idle past the TTL.
    pub fn expire_if_idle(&mut self, now_ms: u64) -> bool {
        match self.config.idle_ttl_ms {
            Some(ttl) if !self.is_closed() && now_ms.saturating_sub(self.last_activity_ms) > ttl => {
                self.close_incomplete(now_ms);
                true
            }
            _ => false,
        }
    }

    pub fn close_incomplete(&mut self, now_ms: u64) {
        if !self.is_closed() {
            self.status = SessionStatus::Incomplete;
            self.closed_at_ms = Some(now_ms);
        }
    }

    pub fn set_emotion(
        &mut self,
        encounter_idx: usize,
        round_index: u32,
        utterance_idx: usize,
        label: EmotionLabel,
    ) -> bool {
        let Some(u) = self
            .encounters
            .get_mut(encounter_idx)
            .and_then(|e| e.rounds.get_mut((round_index as usize).checked_sub(1)?))
            .and_then(|r| r.dialogue.get_mut(utterance_idx))
        else {
            return false;
        };
        if u.speaker != Speaker::Player {
            return false;
        }
        u.emotion = Some(label);
        true
    }

    pub fn player_view(&self, storyline: &str, rules: &str, report: Option<ReportView>) -> PlayerView {
        let round = self.current_round();
        let phase = round.map(|r| match r.phase {
            Phase::Dialogue => ViewPhase::Dialogue,
            _ => ViewPhase::Decision,
        });
        let mut actions = Vec::new();
        match round {
            Some(r) if r.phase == Phase::Dialogue => {
                let can_send = self
                    .config
                    .max_exchanges
                    .map_or(true, |m| (r.player_utterances().count() as u32) < m);
                if can_send {
                    actions.push(PlayerAction::Send);
                }
                actions.push(PlayerAction::End);
            }
            Some(r) if r.phase == Phase::DecisionPending && r.player_decision.is_none() => {
                actions.push(PlayerAction::Cooperate);
                actions.push(PlayerAction::Defect);
            }
            _ => {}
        }
        let dialogue = round
            .map(|r| {
                r.dialogue
                    .iter()
                    .map(|u| ViewLine {
                        speaker: u.speaker,
                        text: u.text.clone(),
                    })
                    .collect()
            })
            .unwrap_or_default();
        let status = match self.status {
            SessionStatus::Active => ViewStatus::Playing,
            SessionStatus::Completed => ViewStatus::Finished,
            SessionStatus::Incomplete => ViewStatus::Abandoned,
        };
        PlayerView {
            session_id: self.session_id.clone(),
            storyline: storyline.to_string(),
            rules: rules.to_string(),
            status,
            phase,
            dialogue,
            actions,
            consent: self.consent,
            report: if self.is_closed() && self.consent { report } else { None },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewStatus {
    Playing,
    Finished,
    Abandoned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewPhase {
    Dialogue,
    Decision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerAction {
    Send,
    End,
    Cooperate,
    Defect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewLine {
    pub speaker: Speaker,
    pub text: String,
}

/// Post-game personality report shown to a consenting player.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportView {
    pub method: String,
    pub traits: Vec<ReportTrait>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTrait {
    pub code: String,
    pub name: String,
    pub rating: f64,
    pub reason: String,
}

/// The only projection of a session a player ever sees. It carries no
/// points, round numbers or round counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerView {
    pub session_id: String,
    pub storyline: String,
    pub rules: String,
    pub status: ViewStatus,
    pub phase: Option<ViewPhase>,
    pub dialogue: Vec<ViewLine>,
    pub actions: Vec<PlayerAction>,
    pub consent: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportView>,
}

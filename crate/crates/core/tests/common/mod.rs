#![allow(dead_code)]

use std::sync::Arc;

use proptest::prelude::*;

use gpa_core::assessment::{
    assess_matrix, AssessConfig, AssessContext, AssessmentMethod, CellOutcome, Condition, DirectRating, DirectResponse,
    LikertOption, QuestionResponse, Subject,
};
use gpa_core::clock::{Clock, ManualClock};
use gpa_core::cognition::{AgentTurnOutput, ReflectionParts};
use gpa_core::engine::{Assets, EngineConfig, SessionRuntime};
use gpa_core::game::Decision;
use gpa_core::llm::synthetic::synthetic_backend;
use gpa_core::llm::{BackendKind, ChatBackend, Gateway, LlmClient, ReplayBackend};
use gpa_core::perception::{ChannelBundle, EmotionLabel, EmotionResponse, EncounterRecord, TraitResponse};
use gpa_core::personas::TraitId;
use gpa_core::simulation::{run_simulated_session, SimulatedPlayerSpec, SimulationConfig};

pub const EPOCH_MS: u64 = 1_700_000_000_000;

pub fn assets() -> Arc<Assets> {
    Arc::new(Assets::bundled().expect("bundled assets load"))
}

pub fn client_for(backend: Arc<dyn ChatBackend>, clock: Arc<dyn Clock>) -> LlmClient {
    LlmClient::new(Arc::new(Gateway::new(backend).with_clock(clock)))
}

/// A finished self-play session plus the full assessment matrix over it.
pub struct FixtureRun {
    pub rt: SessionRuntime,
    pub records: Vec<EncounterRecord>,
    pub outcomes: Vec<CellOutcome>,
    pub client: LlmClient,
}

pub fn play(seed: u64, target: TraitId, assets: &Arc<Assets>, backend: Arc<dyn ChatBackend>) -> FixtureRun {
    let clock: Arc<dyn Clock> = Arc::new(ManualClock::new(EPOCH_MS, 1));
    let client = client_for(backend, clock.clone());
    let spec = SimulatedPlayerSpec::high_in(assets, target, seed);
    let rt = run_simulated_session(
        seed,
        0,
        spec,
        SimulationConfig::default(),
        EngineConfig::default(),
        assets.clone(),
        client.clone(),
        clock,
    )
    .expect("simulated session completes");
    let records = rt.encounter_records();
    FixtureRun {
        rt,
        records,
        outcomes: Vec::new(),
        client,
    }
}

pub fn assess_all(run: &mut FixtureRun, assets: &Assets) {
    let ctx = AssessContext {
        catalog: &assets.catalog,
        rules: &assets.texts.rules,
        knowledge: assets.knowledge.as_str(),
        bank: &assets.bank,
    };
    let subject = Subject {
        player_id: &run.rt.game.player_id,
        session_id: &run.rt.game.session_id,
        consent: run.rt.game.consent,
        records: &run.records,
        allow_partial: false,
    };
    run.outcomes = assess_matrix(
        &run.client,
        &AssessConfig::default(),
        &ctx,
        &subject,
        &AssessmentMethod::BOTH,
        &Condition::EVERY,
        &ChannelBundle::STANDARD,
    );
}

/// Plays and assesses with the synthetic responder.
pub fn recorded_fixture(seed: u64, target: TraitId, assets: &Arc<Assets>) -> FixtureRun {
    let mut run = play(seed, target, assets, Arc::new(synthetic_backend(seed)));
    assess_all(&mut run, assets);
    run
}

/// Replays a recorded fixture from its chat log alone.
pub fn replayed(fixture: &FixtureRun, seed: u64, target: TraitId, assets: &Arc<Assets>) -> FixtureRun {
    let backend = Arc::new(ReplayBackend::from_records(&fixture.client.records()));
    let mut run = play(seed, target, assets, backend);
    assess_all(&mut run, assets);
    run
}

/// Everything a replay must reproduce, serialized. Chat records carry the
/// backend that served them, so `as_backend` relabels them before a
/// recorded run is compared with its replay.
pub fn transcript(run: &FixtureRun, as_backend: Option<BackendKind>) -> String {
    let results: Vec<_> = run.outcomes.iter().map(|o| (&o.cell, o.result.as_ref().ok())).collect();
    let mut chats = run.client.records();
    if let Some(kind) = as_backend {
        chats.iter_mut().for_each(|c| c.backend = kind);
    }
    serde_json::to_string(&serde_json::json!({
        "game": run.rt.game,
        "events": run.rt.events,
        "agents": run.rt.agents,
        "perception": run.rt.perception,
        "chats": chats,
        "results": results,
    }))
    .expect("serializes")
}

// ---- generators for response templates ------------------------------------

pub fn word() -> impl Strategy<Value = String> {
    "[A-Za-z][A-Za-z0-9']{0,9}"
}

/// One line of words joined by spaces or commas. Never contains a colon or
/// period, so it cannot open a slot or end a reflection clause.
pub fn line() -> impl Strategy<Value = String> {
    prop::collection::vec((word(), prop::bool::ANY), 1..10).prop_map(|ws| {
        let mut out = String::new();
        for (i, (w, comma)) in ws.iter().enumerate() {
            if i > 0 {
                out.push_str(if *comma { ", " } else { " " });
            }
            out.push_str(w);
        }
        out
    })
}

pub fn paragraph() -> impl Strategy<Value = String> {
    prop::collection::vec(line(), 1..4).prop_map(|ls| ls.join("\n"))
}

pub fn decision() -> impl Strategy<Value = Decision> {
    prop_oneof![Just(Decision::Cooperate), Just(Decision::Defect)]
}

pub fn memory_summary() -> impl Strategy<Value = String> {
    paragraph()
}

pub fn reflection() -> impl Strategy<Value = ReflectionParts> {
    (line(), line(), line()).prop_map(|(insight, thoughts, action)| ReflectionParts {
        insight,
        thoughts,
        action,
    })
}

pub fn turn_output() -> impl Strategy<Value = AgentTurnOutput> {
    (paragraph(), decision(), paragraph()).prop_map(|(p, d, plan)| AgentTurnOutput {
        decision: d,
        decision_process_text: p,
        long_term_plan: plan,
    })
}

pub fn emotion_label() -> impl Strategy<Value = EmotionLabel> {
    prop::sample::select(EmotionLabel::ALL.to_vec())
}

pub fn emotion_response() -> impl Strategy<Value = EmotionResponse> {
    (line(), line(), emotion_label()).prop_map(|(analysis, sentence, label)| EmotionResponse {
        analysis,
        sentence,
        label,
    })
}

pub fn trait_response() -> impl Strategy<Value = TraitResponse> {
    (line(), prop::collection::vec("[a-z][a-z-]{0,11}[a-z]", 1..6), line()).prop_map(|(b, traits, r)| TraitResponse {
        observed_behavior: b,
        inferred_traits: traits,
        reason: r,
    })
}

pub fn direct_response() -> impl Strategy<Value = DirectResponse> {
    (paragraph(), prop::array::uniform5((1i64..=5, line()))).prop_map(|(thought, ratings)| DirectResponse {
        thought_process: thought,
        ratings: ratings.map(|(score, reason)| DirectRating { score, reason }),
    })
}

pub fn likert() -> impl Strategy<Value = LikertOption> {
    prop::sample::select(LikertOption::ALL.to_vec())
}

pub fn question_response() -> impl Strategy<Value = QuestionResponse> {
    (line(), line(), likert()).prop_map(|(p, r, a)| QuestionResponse {
        rating_process: p,
        reason: r,
        answer: a,
    })
}

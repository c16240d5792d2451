//! Acceptance suite for the server and batch tools. Prints one PASS/FAIL
//! line per criterion and exits non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use axum::http::StatusCode;
use axum::Router;
use parking_lot::Mutex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

use gpa_core::assessment::{AssessmentMethod, Condition};
use gpa_core::engine::Assets;
use gpa_core::game::{resolve_round, GameSession, PayoffMatrix, Phase};
use gpa_core::perception::ChannelBundle;
use gpa_platform::archive::SessionArchive;
use gpa_platform::config::{BackendChoice, BackendFactory, PlatformConfig};
use gpa_platform::server::{router, AppState};

const SEQUENCES: usize = 10_000;
const SEQUENCES_PER_SERVER: usize = 250;
const PARALLEL: usize = 32;

const KNOWN_CODES: [&str; 9] = [
    "phase_error",
    "double_decision",
    "session_closed",
    "exchange_limit",
    "invalid_input",
    "not_found",
    "not_complete",
    "consent_required",
    "assessment_failed",
];

#[derive(Default)]
struct FuzzStats {
    sequences: usize,
    requests: usize,
    rejected: usize,
    completed: usize,
    views: usize,
    faults: Vec<String>,
    leaks: Vec<String>,
}

/// Game state with the asynchronously applied emotion labels removed, so a
/// rejected request can be compared against the state before it.
fn shape(g: &GameSession) -> Value {
    let mut v = serde_json::to_value(g).unwrap();
    fn strip(v: &mut Value) {
        match v {
            Value::Object(o) => {
                o.remove("emotion");
                o.values_mut().for_each(strip);
            }
            Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    strip(&mut v);
    v
}

fn invariants(g: &GameSession) -> Option<String> {
    for e in &g.encounters {
        let sum_p: u32 = e.rounds.iter().filter_map(|r| r.outcome).map(|o| o.player_points).sum();
        let sum_a: u32 = e.rounds.iter().filter_map(|r| r.outcome).map(|o| o.agent_points).sum();
        if sum_p != e.player_total || sum_a != e.agent_total {
            return Some("round points do not add up to the encounter total".into());
        }
        if e.rounds.len() > e.rounds_per_encounter as usize {
            return Some("too many rounds".into());
        }
        for r in &e.rounds {
            let both = r.player_decision.is_some() && r.agent_decision.is_some();
            if both != r.outcome.is_some() || both != (r.phase == Phase::Resolved) {
                return Some(format!("round {} resolved inconsistently", r.index));
            }
            if let (Some(p), Some(a), Some(o)) = (r.player_decision, r.agent_decision, r.outcome) {
                if resolve_round(p, a, &PayoffMatrix::default()) != (o.player_points, o.agent_points) {
                    return Some("outcome disagrees with the payoff matrix".into());
                }
            }
        }
    }
    None
}

fn position(g: &GameSession) -> (Option<usize>, Option<u32>, Option<Phase>) {
    (g.active_encounter(), g.current_round().map(|r| r.index), g.current_phase())
}

enum Req {
    Message(String),
    End,
    Decide(&'static str),
    Consent(bool),
    View,
    Events(u64),
    Assessment,
    Raw(&'static str, &'static str),
    Unknown,
}

fn pick(view: &Value, rng: &mut ChaCha8Rng) -> (Req, bool) {
    let acts = common::actions(view);
    if rng.gen_bool(0.7) {
        let legal = if acts.iter().any(|a| a == "send") && rng.gen_bool(0.35) {
            Some(Req::Message(format!("message {}", rng.gen::<u16>())))
        } else if acts.iter().any(|a| a == "end") {
            Some(Req::End)
        } else if acts.iter().any(|a| a == "cooperate") {
            Some(Req::Decide(if rng.gen_bool(0.5) { "cooperate" } else { "defect" }))
        } else {
            None
        };
        if let Some(r) = legal {
            return (r, true);
        }
    }
    let r = match rng.gen_range(0..12) {
        0 => Req::Message("out of turn".into()),
        1 => Req::Message("   ".into()),
        2 => Req::End,
        3 => Req::Decide("cooperate"),
        4 => Req::Decide("defect"),
        5 => Req::Consent(rng.gen_bool(0.5)),
        6 => Req::View,
        7 => Req::Events(rng.gen_range(0..40)),
        8 => Req::Assessment,
        9 => Req::Raw("decision", r#"{"decision":"maybe"}"#),
        10 => Req::Raw("messages", "{not json"),
        _ => Req::Unknown,
    };
    (r, false)
}

async fn fuzz_sequence(app: &Router, state: &AppState, seed: u64, stats: &Mutex<FuzzStats>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut faults = Vec::new();
    let mut leaks = Vec::new();
    let (status, created) = common::post(app, "/api/sessions", "").await;
    if status != StatusCode::CREATED {
        stats.lock().faults.push(format!("seed {seed}: create returned {status}"));
        return;
    }
    let id = created["session_id"].as_str().unwrap().to_string();
    let mut view = created["view"].clone();
    let mut requests = 1;
    let mut rejected = 0;
    let mut views = 0;
    let len = rng.gen_range(1..=60);
    for step in 0..len {
        let before = state.game_snapshot(&id).unwrap();
        let (req, legal) = pick(&view, &mut rng);
        let mutating = matches!(req, Req::Message(_) | Req::End | Req::Decide(_) | Req::Raw(..));
        let base = format!("/api/sessions/{id}");
        let (status, body) = match &req {
            Req::Message(t) => common::post(app, &format!("{base}/messages"), &serde_json::json!({ "text": t }).to_string()).await,
            Req::End => common::post(app, &format!("{base}/end-dialogue"), "").await,
            Req::Decide(d) => common::post(app, &format!("{base}/decision"), &format!(r#"{{"decision":"{d}"}}"#)).await,
            Req::Consent(c) => common::post(app, &format!("{base}/consent"), &format!(r#"{{"consent":{c}}}"#)).await,
            Req::View => common::get(app, &format!("{base}/view")).await,
            Req::Events(after) => common::get(app, &format!("{base}/events?after={after}")).await,
            Req::Assessment => common::get(app, &format!("{base}/assessment")).await,
            Req::Raw(path, body) => common::post(app, &format!("{base}/{path}"), body).await,
            Req::Unknown => common::get(app, "/api/sessions/s-missing/view").await,
        };
        requests += 1;
        let after = state.game_snapshot(&id).unwrap();
        let mut fault = |m: String| faults.push(format!("seed {seed} step {step}: {m}"));
        if status.is_server_error() {
            fault(format!("server fault {status}: {body}"));
        }
        if status.is_client_error() {
            rejected += 1;
            let code = body["error"]["code"].as_str().unwrap_or("");
            if !KNOWN_CODES.contains(&code) || body["error"]["message"].as_str().is_none_or(str::is_empty) {
                fault(format!("untyped error body {body}"));
            }
            if legal {
                fault(format!("legal action rejected: {body}"));
            }
            if mutating && shape(&before) != shape(&after) {
                fault(format!("rejected request changed the game ({code})"));
            }
        }
        let (pb, pa) = (position(&before), position(&after));
        if pb.0 == pa.0 && pb.1 == pa.1 && matches!((pb.2, pa.2), (Some(b), Some(a)) if a < b) {
            fault("phase moved backwards".into());
        }
        if let Some(m) = invariants(&after) {
            fault(m);
        }
        let is_view = matches!(req, Req::Message(_) | Req::End | Req::Decide(_) | Req::Consent(_) | Req::View | Req::Unknown)
            && status == StatusCode::OK;
        if is_view {
            view = body.clone();
        }
        let doc = match &req {
            Req::Events(_) if status == StatusCode::OK => {
                let mut events = body["events"].clone();
                events.as_array_mut().unwrap().iter_mut().for_each(|e| {
                    e.as_object_mut().unwrap().remove("seq");
                });
                Some(events)
            }
            _ if is_view && body["status"] == "playing" => Some(body.clone()),
            _ if status.is_client_error() => Some(body.clone()),
            _ => None,
        };
        if let Some(doc) = doc {
            views += 1;
            if let Some(leak) = common::view_leak(&doc) {
                leaks.push(format!("seed {seed} step {step}: {leak}"));
            }
        }
    }
    let completed = state.game_snapshot(&id).unwrap().status == gpa_core::game::SessionStatus::Completed;
    let mut s = stats.lock();
    s.sequences += 1;
    s.requests += requests;
    s.rejected += rejected;
    s.views += views;
    s.completed += completed as usize;
    s.faults.extend(faults);
    s.leaks.extend(leaks);
}

fn server(assets: &Assets, index: usize) -> (Arc<AppState>, Router) {
    let mut cfg = PlatformConfig::default();
    cfg.engine.game.rounds_per_encounter = [1, 2, 6][index % 3];
    cfg.engine.game.max_exchanges = (index % 4 == 0).then_some(2);
    let factory = BackendFactory::new(BackendChoice::Mock, &cfg.live, &[], &[], index as u64).unwrap();
    let state = Arc::new(AppState::new(cfg, assets.clone(), factory, index as u64));
    (state.clone(), router(state))
}

fn run_api_fuzz(assets: &Assets) -> (FuzzStats, f64) {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let stats = Arc::new(Mutex::new(FuzzStats::default()));
    let started = Instant::now();
    rt.block_on(async {
        for batch in 0..SEQUENCES / SEQUENCES_PER_SERVER {
            let (state, app) = server(assets, batch);
            let mut set = tokio::task::JoinSet::new();
            for i in 0..SEQUENCES_PER_SERVER {
                let (state, app, stats) = (state.clone(), app.clone(), stats.clone());
                let seed = (batch * SEQUENCES_PER_SERVER + i) as u64;
                set.spawn(async move { fuzz_sequence(&app, &state, seed, &stats).await });
                if set.len() >= PARALLEL {
                    set.join_next().await.unwrap().unwrap();
                }
            }
            while let Some(r) = set.join_next().await {
                r.unwrap();
            }
        }
    });
    let secs = started.elapsed().as_secs_f64();
    drop(rt);
    let stats = Arc::try_unwrap(stats).ok().unwrap().into_inner();
    (stats, secs)
}

// ---- archive replay -------------------------------------------------------

fn gpa(args: &[&str]) -> Result<(), String> {
    let argv = std::iter::once("gpa").chain(args.iter().copied());
    match gpa_platform::cli::run_from(argv) {
        0 => Ok(()),
        c => Err(format!("gpa {} exited {c}", args.join(" "))),
    }
}

fn replay_determinism() -> Result<String, String> {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |name: &str| tmp.path().join(name).to_string_lossy().into_owned();
    let matrix = ["--methods", "da,qa", "--conditions", "o,c,e,a,n,all", "--bundles", "tb,tbp,tbpe"];
    let (play_fix, assess_fix) = (path("play.jsonl"), path("assess.jsonl"));

    let rec_dir = path("rec");
    gpa(&["simulate", "--players", "1", "--seed", "77", "--backend", "mock", "--no-assess", "--out", &rec_dir, "--record", &play_fix])?;
    let rec = common::jsonl_files(Path::new(&rec_dir)).remove(0);
    let rec_s = rec.to_string_lossy().into_owned();
    let mut args = vec!["assess", "--archive", &rec_s, "--backend", "mock", "--record", &assess_fix];
    args.extend(matrix);
    gpa(&args)?;

    let mut replays = Vec::new();
    for out in ["a", "b"] {
        let out_dir = path(out);
        gpa(&["simulate", "--players", "1", "--seed", "77", "--backend", "replay", "--fixtures", &play_fix, "--no-assess", "--out", &out_dir])?;
        let file = common::jsonl_files(Path::new(&out_dir)).remove(0);
        let file_s = file.to_string_lossy().into_owned();
        let mut args = vec!["assess", "--archive", &file_s, "--backend", "replay", "--fixtures", &assess_fix];
        args.extend(matrix);
        gpa(&args)?;
        replays.push(file);
    }
    let bytes: Vec<Vec<u8>> = replays.iter().map(|p| std::fs::read(p).unwrap()).collect();
    let identical = bytes[0] == bytes[1];
    let recorded = SessionArchive::read(&rec).map_err(|e| e.to_string())?;
    let replayed = SessionArchive::read(&replays[0]).map_err(|e| e.to_string())?;
    let cells = replayed.assessments.len();
    let expected = AssessmentMethod::BOTH.len() * Condition::EVERY.len() * ChannelBundle::STANDARD.len();
    let same_results = recorded.assessments == replayed.assessments;
    let detail = format!(
        "2 replays of one recorded session: archives byte-identical {identical} ({} bytes), {cells}/{expected} cells (2 methods x 6 conditions x 3 bundles), results equal to recording {same_results}",
        bytes[0].len()
    );
    if identical && cells == expected && same_results {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() {
    let assets = Assets::bundled().expect("bundled assets");
    let (fuzz, secs) = run_api_fuzz(&assets);
    let mut lines = Vec::new();
    lines.push((
        "state-machine fuzz",
        fuzz.sequences == SEQUENCES && fuzz.faults.is_empty() && secs < 60.0,
        format!(
            "{} API sequences, {} requests, {} rejected with typed 4xx errors, {} completed, 0 server faults expected, {} found, {:.1}s (limit 60s){}",
            fuzz.sequences,
            fuzz.requests,
            fuzz.rejected,
            fuzz.completed,
            fuzz.faults.len(),
            secs,
            fuzz.faults.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    ));
    lines.push((
        "score-hiding contract",
        fuzz.views > 0 && fuzz.leaks.is_empty(),
        format!(
            "{} in-progress views, event pages and error bodies checked for score, round and numeric fields{}",
            fuzz.views,
            fuzz.leaks.first().map(|f| format!("; first leak: {f}")).unwrap_or_default()
        ),
    ));
    let replay = replay_determinism();
    lines.push(("replay determinism", replay.is_ok(), replay.unwrap_or_else(|e| e)));
    let mut failed = 0;
    for (name, ok, detail) in &lines {
        if *ok {
            println!("PASS {name}: {detail}");
        } else {
            failed += 1;
            println!("FAIL {name}: {detail}");
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

//! JSON HTTP API consumed by the player client.
//!
//! Every route works on one session behind its own mutex, so requests for
//! the same session are applied one at a time while different sessions run
//! in parallel. Engine calls block on model I/O and run on the blocking
//! pool. Perception is drained in the background after each round.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use parking_lot::{Mutex, RwLock};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use gpa_core::assessment::{assess_cell, AssessContext, AssessError, AssessmentResult, Condition, MatrixCell, Subject};
use gpa_core::clock::Clock;
use gpa_core::engine::{run_perception_job, Assets, EngineError, PublicEvent, SessionRuntime};
use gpa_core::game::{Decision, GameError, GameSession, PlayerView, ReportTrait, ReportView, SessionStatus};
use gpa_core::llm::LlmClient;
use gpa_core::personas::TraitId;

use crate::archive::SessionArchive;
use crate::config::{BackendFactory, PlatformConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("no session {id}"))
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "invalid_input", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let msg = e.to_string();
        match e {
            EngineError::Game(g) => match g {
                GameError::Phase { .. } | GameError::NotActiveEncounter { .. } => {
                    Self::new(StatusCode::CONFLICT, "phase_error", msg)
                }
                GameError::DoubleDecision(_) => Self::new(StatusCode::CONFLICT, "double_decision", msg),
                GameError::SessionClosed => Self::new(StatusCode::CONFLICT, "session_closed", msg),
                GameError::ExchangeLimit(_) => Self::new(StatusCode::CONFLICT, "exchange_limit", msg),
                GameError::Input(_) => Self::bad_request(msg),
                GameError::Setup(_) => Self::internal(msg),
            },
            EngineError::Agent { .. } | EngineError::Perception(_) => {
                Self::new(StatusCode::BAD_GATEWAY, "agent_unavailable", msg)
            }
            EngineError::Setup(_) => Self::internal(msg),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Entry {
    rt: SessionRuntime,
    report: Option<AssessmentResult>,
    archive_path: Option<PathBuf>,
    archive: Option<SessionArchive>,
}

impl Entry {
    fn view(&self) -> PlayerView {
        self.rt.view(self.report.as_ref().map(report_view))
    }
}

pub struct AppState {
    cfg: PlatformConfig,
    assets: Arc<Assets>,
    factory: BackendFactory,
    clock: Arc<dyn Clock>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    rng: Mutex<ChaCha8Rng>,
}

impl AppState {
    pub fn new(cfg: PlatformConfig, assets: Assets, factory: BackendFactory, seed: u64) -> Self {
        let clock = factory.clock(0);
        Self {
            cfg,
            assets: Arc::new(assets),
            factory,
            clock,
            sessions: RwLock::new(HashMap::new()),
            rng: Mutex::new(ChaCha8Rng::seed_from_u64(seed)),
        }
    }

    fn entry(&self, id: &str) -> ApiResult<Arc<Mutex<Entry>>> {
        self.sessions.read().get(id).cloned().ok_or_else(|| ApiError::not_found(id))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().len()
    }

    /// A copy of a session's full game state, including what players never see.
    pub fn game_snapshot(&self, id: &str) -> Option<GameSession> {
        let entry = self.sessions.read().get(id).cloned()?;
        let e = entry.lock();
        Some(e.rt.game.clone())
    }

    /// True once queued perception for the session has been applied.
    pub fn perception_settled(&self, id: &str) -> Option<bool> {
        let entry = self.sessions.read().get(id).cloned()?;
        let e = entry.lock();
        Some(e.rt.perception_done())
    }

    pub fn archive_path(&self, id: &str) -> Option<PathBuf> {
        let entry = self.sessions.read().get(id).cloned()?;
        let e = entry.lock();
        e.archive_path.clone()
    }

    /// Closes idle sessions and archives them. Returns how many expired.
    pub fn sweep_idle(&self) -> usize {
        let entries: Vec<_> = self.sessions.read().values().cloned().collect();
        let mut n = 0;
        for e in entries {
            let mut e = e.lock();
            if e.rt.expire_if_idle() {
                n += 1;
                self.archive_if_ready(&mut e);
            }
        }
        n
    }

    fn archive_if_ready(&self, e: &mut Entry) {
        let Some(dir) = &self.cfg.server.archive_dir else {
            return;
        };
        if !e.rt.game.is_closed() || !e.rt.perception_done() || e.archive.is_some() {
            return;
        }
        let archive = SessionArchive::from_runtime(&e.rt, None);
        let path = dir.join(SessionArchive::file_name(&e.rt.game.session_id));
        match archive.write(&path) {
            Ok(()) => {
                e.archive = Some(archive);
                e.archive_path = Some(path);
            }
            Err(err) => tracing::error!(error = %err, "cannot write archive"),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
struct CreateSession {
    #[serde(default)]
    player_id: Option<String>,
}

#[derive(Debug, Deserialize)]
struct MessageBody {
    text: String,
}

#[derive(Debug, Deserialize)]
struct DecisionBody {
    decision: Decision,
}

#[derive(Debug, Deserialize)]
struct ConsentBody {
    consent: bool,
}

#[derive(Debug, Deserialize)]
struct EventsQuery {
    #[serde(default)]
    after: u64,
}

#[derive(Debug, Serialize)]
struct SessionCreated {
    session_id: String,
    view: PlayerView,
}

#[derive(Debug, Serialize)]
struct EventsPage {
    events: Vec<PublicEvent>,
    /// Pass back as `after` to continue polling.
    last_seq: u64,
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))
}

pub fn report_view(r: &AssessmentResult) -> ReportView {
    ReportView {
        method: r.method.code().to_string(),
        traits: TraitId::ALL
            .iter()
            .map(|t| ReportTrait {
                code: t.code().to_string(),
                name: t.name().to_string(),
                rating: r.scores.get(*t),
                reason: r.scores.reasons.get(t).cloned().unwrap_or_default(),
            })
            .collect(),
    }
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let req: CreateSession = if body.iter().all(u8::is_ascii_whitespace) {
        CreateSession::default()
    } else {
        parse_body(&body)?
    };
    let app2 = app.clone();
    let entry = blocking(move || -> ApiResult<Entry> {
        let (session_id, game) = {
            let mut rng = app2.rng.lock();
            let id = format!("s{:016x}", rng.gen::<u64>());
            let player = req.player_id.clone().unwrap_or_else(|| format!("player-{}", &id[1..9]));
            let game = GameSession::create(&mut *rng, id.clone(), player, app2.cfg.engine.game.clone(), app2.clock.now_ms())
                .map_err(EngineError::from)?;
            (id, game)
        };
        let client = LlmClient::new(app2.factory.gateway(app2.clock.clone()));
        let rt = SessionRuntime::start(game, app2.cfg.engine.clone(), app2.assets.clone(), client, app2.clock.clone())?;
        tracing::info!(%session_id, "session created");
        Ok(Entry {
            rt,
            report: None,
            archive_path: None,
            archive: None,
        })
    })
    .await??;
    let out = SessionCreated {
        session_id: entry.rt.game.session_id.clone(),
        view: entry.view(),
    };
    app.sessions
        .write()
        .insert(out.session_id.clone(), Arc::new(Mutex::new(entry)));
    Ok((StatusCode::CREATED, Json(out)))
}

async fn get_view(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<PlayerView>> {
    let entry = app.entry(&id)?;
    let mut e = entry.lock();
    if e.rt.expire_if_idle() {
        app.archive_if_ready(&mut e);
    }
    Ok(Json(e.view()))
}

async fn get_events(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<EventsQuery>,
) -> ApiResult<Json<EventsPage>> {
    let entry = app.entry(&id)?;
    let e = entry.lock();
    Ok(Json(EventsPage {
        events: e.rt.public_events_after(q.after),
        last_seq: e.rt.last_event_seq(),
    }))
}

/// Runs one mutating engine action on the blocking pool and returns the
/// updated view. Queued perception is drained afterwards in the background.
async fn act(
    app: Arc<AppState>,
    id: String,
    f: impl FnOnce(&mut SessionRuntime) -> Result<(), EngineError> + Send + 'static,
) -> ApiResult<Json<PlayerView>> {
    let entry = app.entry(&id)?;
    let entry2 = entry.clone();
    let app2 = app.clone();
    let result = blocking(move || {
        let mut e = entry2.lock();
        if e.rt.expire_if_idle() {
            app2.archive_if_ready(&mut e);
        }
        let r = f(&mut e.rt);
        let view = e.view();
        (r, view)
    })
    .await?;
    spawn_perception(app, entry);
    match result {
        (Ok(()), view) => Ok(Json(view)),
        (Err(err), _) => Err(err.into()),
    }
}

fn spawn_perception(app: Arc<AppState>, entry: Arc<Mutex<Entry>>) {
    let (jobs, client, cfg, assets) = {
        let mut e = entry.lock();
        let jobs = e.rt.take_perception_jobs();
        if jobs.is_empty() {
            app.archive_if_ready(&mut e);
            return;
        }
        (jobs, e.rt.client().fork(), e.rt.config().perception.clone(), e.rt.assets().clone())
    };
    tokio::task::spawn_blocking(move || {
        let outputs: Vec<_> = jobs
            .iter()
            .map(|(job, enc)| (*job, run_perception_job(&client, &cfg, &assets, enc, *job)))
            .collect();
        let mut e = entry.lock();
        for (job, out) in outputs {
            e.rt.apply_perception(job, out);
        }
        e.rt.client().absorb(&client);
        app.archive_if_ready(&mut e);
    });
}

async fn post_message(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<PlayerView>> {
    let msg: MessageBody = parse_body(&body)?;
    act(app, id, move |rt| rt.player_message(&msg.text)).await
}

async fn post_end_dialogue(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<PlayerView>> {
    act(app, id, |rt| rt.end_dialogue()).await
}

async fn post_decision(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<PlayerView>> {
    let d: DecisionBody = parse_body(&body)?;
    act(app, id, move |rt| rt.submit_decision(d.decision)).await
}

async fn post_consent(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<PlayerView>> {
    let c: ConsentBody = parse_body(&body)?;
    act(app, id, move |rt| {
        rt.set_consent(c.consent);
        Ok(())
    })
    .await
}

#[derive(Debug, Serialize)]
struct AssessmentBody {
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<ReportView>,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<AssessmentResult>,
}

async fn get_assessment(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let entry = app.entry(&id)?;
    {
        let e = entry.lock();
        if e.rt.game.status != SessionStatus::Completed {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "not_complete",
                "assessment is available once the game is complete",
            ));
        }
        if !e.rt.game.consent {
            return Err(ApiError::new(
                StatusCode::FORBIDDEN,
                "consent_required",
                "the player has not consented to assessment",
            ));
        }
        if !e.rt.perception_done() {
            let body = AssessmentBody {
                status: "pending",
                report: None,
                result: None,
            };
            return Ok((StatusCode::ACCEPTED, Json(body)).into_response());
        }
    }
    let app2 = app.clone();
    let result = blocking(move || -> Result<AssessmentResult, AssessError> {
        let mut e = entry.lock();
        if let Some(r) = &e.report {
            return Ok(r.clone());
        }
        let records = e.rt.encounter_records();
        let assets = e.rt.assets().clone();
        let ctx = AssessContext {
            catalog: &assets.catalog,
            rules: &assets.texts.rules,
            knowledge: assets.knowledge.as_str(),
            bank: &assets.bank,
        };
        let subject = Subject {
            player_id: &e.rt.game.player_id,
            session_id: &e.rt.game.session_id,
            consent: e.rt.game.consent,
            records: &records,
            allow_partial: false,
        };
        let cell = MatrixCell {
            method: app2.cfg.server.report_method,
            condition: Condition::All,
            bundle: app2.cfg.server.report_bundle,
        };
        let client = e.rt.client().fork();
        let r = assess_cell(&client, &app2.cfg.assess, &ctx, &subject, &cell)?;
        app2.archive_if_ready(&mut e);
        let path = e.archive_path.clone();
        if let (Some(path), Some(archive)) = (path, e.archive.as_mut()) {
            if let Err(err) = archive.append_assessments(&path, client.take_records(), vec![r.clone()]) {
                tracing::error!(error = %err, "cannot append assessment to archive");
            }
        } else {
            e.rt.client().absorb(&client);
        }
        e.report = Some(r.clone());
        Ok(r)
    })
    .await?;
    match result {
        Ok(r) => {
            let body = AssessmentBody {
                status: "ready",
                report: Some(report_view(&r)),
                result: Some(r),
            };
            Ok((StatusCode::OK, Json(body)).into_response())
        }
        Err(AssessError::NoConsent) => Err(ApiError::new(StatusCode::FORBIDDEN, "consent_required", "no consent")),
        Err(AssessError::Gateway(g)) => Err(ApiError::new(StatusCode::BAD_GATEWAY, "assessor_unavailable", g.to_string())),
        Err(e) => Err(ApiError::new(StatusCode::BAD_GATEWAY, "assessment_failed", e.to_string())),
    }
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}/view", get(get_view))
        .route("/api/sessions/{id}/events", get(get_events))
        .route("/api/sessions/{id}/messages", post(post_message))
        .route("/api/sessions/{id}/end-dialogue", post(post_end_dialogue))
        .route("/api/sessions/{id}/decision", post(post_decision))
        .route("/api/sessions/{id}/consent", post(post_consent))
        .route("/api/sessions/{id}/assessment", get(get_assessment))
        .fallback(fallback)
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    let sweeper = state.clone();
    let every = std::time::Duration::from_secs(state.cfg.server.sweep_interval_s.max(1));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(every);
        loop {
            tick.tick().await;
            let s = sweeper.clone();
            let _ = tokio::task::spawn_blocking(move || s.sweep_idle()).await;
        }
    });
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use gpa_platform::config::{BackendChoice, BackendFactory, PlatformConfig};
use gpa_platform::server::{router, AppState};

pub fn app_with(cfg: PlatformConfig, seed: u64) -> (Arc<AppState>, Router) {
    let assets = cfg.assets().expect("bundled assets");
    let factory = BackendFactory::new(BackendChoice::Mock, &cfg.live, &[], &[], seed).expect("mock backend");
    let state = Arc::new(AppState::new(cfg, assets, factory, seed));
    (state.clone(), router(state))
}

pub fn app(seed: u64) -> (Arc<AppState>, Router) {
    app_with(PlatformConfig::default(), seed)
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map(|b| Body::from(b.to_string())).unwrap_or_else(Body::empty))
        .unwrap();
    let resp = app.clone().oneshot(req).await.expect("router never fails");
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

pub async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &Router, uri: &str, body: &str) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body)).await
}

pub async fn create(app: &Router) -> String {
    let (status, body) = post(app, "/api/sessions", "{}").await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["session_id"].as_str().unwrap().to_string()
}

pub fn actions(view: &Value) -> Vec<String> {
    view["actions"]
        .as_array()
        .map(|a| a.iter().filter_map(|x| x.as_str().map(String::from)).collect())
        .unwrap_or_default()
}

/// Plays a whole session legally: one message per round, then cooperate.
pub async fn play_through(app: &Router, id: &str) -> Value {
    let mut view = get(app, &format!("/api/sessions/{id}/view")).await.1;
    for _ in 0..1000 {
        let acts = actions(&view);
        let (status, next) = if acts.contains(&"send".to_string()) && view["dialogue"].as_array().is_some_and(|d| d.len() < 2) {
            post(app, &format!("/api/sessions/{id}/messages"), r#"{"text":"shall we both cooperate?"}"#).await
        } else if acts.contains(&"end".to_string()) {
            post(app, &format!("/api/sessions/{id}/end-dialogue"), "").await
        } else if acts.contains(&"cooperate".to_string()) {
            post(app, &format!("/api/sessions/{id}/decision"), r#"{"decision":"cooperate"}"#).await
        } else {
            return view;
        };
        assert_eq!(status, StatusCode::OK, "{next}");
        view = next;
    }
    panic!("session did not finish");
}

/// Polls until the assessment leaves the pending state.
pub async fn assessment(app: &Router, id: &str) -> (StatusCode, Value) {
    for _ in 0..2000 {
        let (status, body) = get(app, &format!("/api/sessions/{id}/assessment")).await;
        if status != StatusCode::ACCEPTED {
            return (status, body);
        }
        tokio::time::sleep(std::time::Duration::from_millis(5)).await;
    }
    panic!("assessment stayed pending");
}

/// Keys and values a player-facing document must not carry.
pub fn view_leak(v: &Value) -> Option<String> {
    match v {
        Value::Number(n) => Some(format!("numeric value {n}")),
        Value::Array(a) => a.iter().find_map(view_leak),
        Value::Object(o) => o.iter().find_map(|(k, v)| {
            let key = k.to_ascii_lowercase();
            ["score", "point", "round", "total", "outcome", "payoff"]
                .iter()
                .find(|b| key.contains(*b))
                .map(|b| format!("key {k} contains {b}"))
                .or_else(|| view_leak(v))
        }),
        _ => None,
    }
}

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_gpa"))
}

pub struct Run {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn gpa(args: &[&str], cwd: &Path) -> Run {
    let out = std::process::Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .env_remove("OPENAI_API_KEY")
        .output()
        .expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into(),
        stderr: String::from_utf8_lossy(&out.stderr).into(),
    }
}

pub fn jsonl_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl") && p.file_name().is_some_and(|n| n != "index.jsonl"))
        .collect();
    v.sort();
    v
}

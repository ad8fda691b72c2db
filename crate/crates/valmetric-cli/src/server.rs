//! HTTP facade over sessions, evaluation and the cheat sheet.
//!
//! Sessions live in memory. Each one sits behind its own mutex, so requests on
//! different sessions proceed concurrently while one session stays serialized.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Deserialize;
use serde_json::{json, Value};
use valmetric::catalog;
use valmetric::model::{Answer, Fingerprint};
use valmetric::recommend::{DecisionGraph, Session};
use valmetric::Error;

use crate::EvalInputs;

type Shared = Arc<Mutex<Session>>;

#[derive(Clone, Default)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, Shared>>>,
}

pub fn router() -> Router {
    Router::new()
        .route("/graph", get(graph))
        .route("/session", post(create_session))
        .route("/session/{id}/question", get(question))
        .route("/session/{id}/answer", post(answer))
        .route("/session/{id}/guide", post(guide))
        .route("/session/{id}/pool", get(pool))
        .route("/evaluate", post(evaluate))
        .route("/metrics/{id}/cheatsheet", get(cheatsheet))
        .with_state(AppState::default())
}

pub async fn serve(port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", port)).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router()).await
}

pub struct ApiError(StatusCode, String, String);

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::OutOfFrontier(_) => (StatusCode::CONFLICT, "out-of-frontier"),
            Error::MissingItems(_) => (StatusCode::BAD_REQUEST, "missing-items"),
            Error::Schema(_) => (StatusCode::BAD_REQUEST, "schema"),
            Error::Invalid(_) => (StatusCode::BAD_REQUEST, "invalid"),
            Error::Incompatible(_) => (StatusCode::BAD_REQUEST, "incompatible"),
            Error::Undefined(_) => (StatusCode::UNPROCESSABLE_ENTITY, "undefined"),
            Error::Computation(_) => (StatusCode::INTERNAL_SERVER_ERROR, "computation"),
        };
        ApiError(code, kind.into(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, axum::Json(json!({"error": self.1, "message": self.2}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn not_found(what: String) -> ApiError {
    ApiError(StatusCode::NOT_FOUND, "not-found".into(), what)
}

/// Pre-serialized JSON body, so bytes match the library output exactly.
fn raw_json(code: StatusCode, body: String) -> Response {
    (code, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn body_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| Error::Schema(format!("request body: {e}")).into())
}

fn session(state: &AppState, id: &str) -> ApiResult<Shared> {
    state.sessions.lock().unwrap().get(id).cloned().ok_or_else(|| not_found(format!("unknown session {id}")))
}

fn question_json(s: &Session) -> ApiResult<Value> {
    let g = DecisionGraph::standard();
    let q = s.next_question(g)?;
    let pending = if q.is_none() { s.pending_guides(g)? } else { vec![] };
    Ok(json!({
        "question": q,
        "pending-guides": pending,
        "complete": q.is_none() && pending.is_empty(),
        "transcript": s.transcript(),
    }))
}

async fn graph() -> Response {
    raw_json(StatusCode::OK, DecisionGraph::standard().to_json())
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct NewSession {
    #[serde(default)]
    fingerprint: Option<Value>,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: NewSession = if body.iter().all(u8::is_ascii_whitespace) { NewSession::default() } else { body_json(&body)? };
    let s = match req.fingerprint {
        Some(v) => Session::with_fingerprint(Fingerprint::from_json(v)?),
        None => Session::new(),
    };
    let mut out = question_json(&s)?;
    let id = uuid::Uuid::new_v4().to_string();
    out["id"] = json!(id);
    state.sessions.lock().unwrap().insert(id, Arc::new(Mutex::new(s)));
    Ok((StatusCode::CREATED, axum::Json(out)).into_response())
}

async fn question(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<axum::Json<Value>> {
    let s = session(&state, &id)?;
    let s = s.lock().unwrap();
    Ok(axum::Json(question_json(&s)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerReq {
    item: String,
    value: Answer,
}

async fn answer(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<axum::Json<Value>> {
    let s = session(&state, &id)?;
    let req: AnswerReq = body_json(&body)?;
    let mut s = s.lock().unwrap();
    s.answer(DecisionGraph::standard(), &req.item, req.value)?;
    Ok(axum::Json(question_json(&s)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GuideReq {
    guide: String,
    option: String,
}

async fn guide(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<axum::Json<Value>> {
    let s = session(&state, &id)?;
    let req: GuideReq = body_json(&body)?;
    let mut s = s.lock().unwrap();
    s.guide(DecisionGraph::standard(), &req.guide, &req.option)?;
    Ok(axum::Json(question_json(&s)?))
}

async fn pool(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let s = session(&state, &id)?;
    let s = s.lock().unwrap();
    let rec = s.pool(DecisionGraph::standard())?;
    Ok(raw_json(StatusCode::OK, rec.pool.to_json()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateReq {
    dataset: Value,
    pool: Value,
    #[serde(default)]
    aggregation: Option<Value>,
}

async fn evaluate(body: Bytes) -> ApiResult<Response> {
    let req: EvaluateReq = body_json(&body)?;
    let agg = req.aggregation.map(|a| a.to_string());
    let inputs = EvalInputs::from_texts(&req.dataset.to_string(), &req.pool.to_string(), agg.as_deref())?;
    let report = tokio::task::spawn_blocking(move || inputs.run())
        .await
        .map_err(|e| Error::Computation(format!("evaluation task: {e}")))??;
    Ok(raw_json(StatusCode::OK, report.to_json()))
}

async fn cheatsheet(Path(id): Path<String>) -> ApiResult<axum::Json<Value>> {
    catalog::cheatsheet(&id).map(axum::Json).ok_or_else(|| not_found(format!("no cheat sheet for {id}")))
}

//! HTTP front end for priced-survey sessions.
//!
//! Every accepted transition is appended to an event log before it becomes
//! visible; on startup the log is replayed through the same session logic, so
//! the server never holds state the log cannot reproduce.
//!
//! Routes:
//!
//! - `POST /sessions`: create a session (optional config overrides).
//! - `GET /sessions`: ids, status and creation time.
//! - `GET /sessions/{id}/round`: the round awaiting an answer.
//! - `POST /sessions/{id}/answer`: `{"round": n, "answer": [..]}`.
//! - `GET /sessions/{id}/export`: the dataset document of a complete session.

pub mod store;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use psm_core::dataset::save_dataset;
use psm_core::rational::{self, Rational};
use psm_core::session::{SessionConfig, SessionState, Status};
use psm_core::space::AnswerSpace;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use store::{now_millis, Event, EventKind, EventLog, StoreError};

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("replaying event {index} for session {session}: {source}")]
    Replay { index: usize, session: String, source: psm_core::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Entry {
    created_at: u64,
    labels: Vec<String>,
    state: SessionState,
}

pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    log: EventLog,
}

impl AppState {
    /// Opens the event log at `path` and rebuilds every session from it.
    pub fn open(path: impl AsRef<Path>) -> Result<Arc<Self>, ServiceError> {
        let (log, events) = EventLog::open(path)?;
        let mut sessions: HashMap<String, Entry> = HashMap::new();
        for (index, event) in events.into_iter().enumerate() {
            let replay = |source| ServiceError::Replay {
                index,
                session: event.session.clone(),
                source,
            };
            match event.kind {
                EventKind::Created { config, labels } => {
                    let state = SessionState::new(config).map_err(replay)?;
                    sessions.insert(
                        event.session.clone(),
                        Entry { created_at: event.ts, labels, state },
                    );
                }
                EventKind::Answered { round, answer } => {
                    let entry = sessions.get_mut(&event.session).ok_or_else(|| {
                        replay(psm_core::Error::Schema("answer for unknown session".into()))
                    })?;
                    entry.state.submit(round, answer).map_err(replay)?;
                }
            }
        }
        let sessions = sessions.into_iter().map(|(k, v)| (k, Arc::new(Mutex::new(v)))).collect();
        Ok(Arc::new(Self { sessions: RwLock::new(sessions), log }))
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_session", "no such session"))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}/round", get(current_round))
        .route("/sessions/{id}/answer", post(submit_answer))
        .route("/sessions/{id}/export", get(export_dataset))
        .with_state(state)
}

/// Binds `addr` and serves until the task is cancelled.
pub async fn serve(addr: SocketAddr, store: impl AsRef<Path>) -> Result<(), ServiceError> {
    let state = AppState::open(store)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    serve_on(listener, state).await
}

/// Serves `state` on an already bound listener.
pub async fn serve_on(listener: tokio::net::TcpListener, state: Arc<AppState>) -> Result<(), ServiceError> {
    axum::serve(listener, router(state)).await?;
    Ok(())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    details: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self { status, code, message: message.into(), details: Value::Null }
    }

    fn with(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    fn session(e: psm_core::Error, id: &str) -> Self {
        use psm_core::Error as E;
        let message = e.to_string();
        let unprocessable = StatusCode::UNPROCESSABLE_ENTITY;
        match e {
            E::OverBudget { round, shortfall } => {
                Self::new(unprocessable, "over_budget", message).with(json!({
                    "round": round,
                    "shortfall": pair(&shortfall),
                }))
            }
            E::OutOfRange { question, value, max } => Self::new(unprocessable, "out_of_range", message)
                .with(json!({"question": question, "value": value, "max": max})),
            E::DimensionMismatch { expected, found } => {
                Self::new(unprocessable, "dimension_mismatch", message)
                    .with(json!({"expected": expected, "found": found}))
            }
            E::WrongRound { expected, found } => Self::new(StatusCode::CONFLICT, "wrong_round", message)
                .with(json!({"expected": expected, "found": found})),
            E::SessionComplete => Self::new(StatusCode::CONFLICT, "session_complete", message)
                .with(json!({"export": format!("/sessions/{id}/export")})),
            E::SessionIncomplete => Self::new(StatusCode::CONFLICT, "session_incomplete", message),
            E::InvalidConfig(_) | E::InvalidSpace(_) | E::InvalidParams(_) => {
                Self::new(StatusCode::BAD_REQUEST, "invalid_config", message)
            }
            _ => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "malformed_request", r.body_text())
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"code": self.code, "message": self.message, "details": self.details});
        (self.status, Json(body)).into_response()
    }
}

fn pair(r: &Rational) -> Value {
    match rational::to_pair(r) {
        Ok([n, d]) => json!([n, d]),
        Err(_) => json!(r.to_string()),
    }
}

/// Optional overrides of the default session design.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub scales: Option<Vec<u32>>,
    pub rounds_per_corner: Option<usize>,
    pub price_vectors: Option<Vec<Vec<[i64; 2]>>>,
    pub budget_slack: Option<[i64; 2]>,
    pub shuffle_seed: Option<u64>,
    pub labels: Option<Vec<String>>,
}

impl CreateRequest {
    fn into_config(self) -> Result<(SessionConfig, Vec<String>), ApiError> {
        let bad = |e: psm_core::Error| ApiError::new(StatusCode::BAD_REQUEST, "invalid_config", e.to_string());
        let mut config = SessionConfig::default();
        if let Some(scales) = self.scales {
            config.space = AnswerSpace::new(scales).map_err(bad)?;
        }
        if let Some(n) = self.rounds_per_corner {
            config.rounds_per_corner = n;
        }
        if let Some(vectors) = self.price_vectors {
            config.price_vectors = vectors
                .into_iter()
                .map(|v| v.into_iter().map(rational::from_pair).collect())
                .collect::<psm_core::Result<_>>()
                .map_err(bad)?;
        }
        if let Some(slack) = self.budget_slack {
            config.budget_slack = rational::from_pair(slack).map_err(bad)?;
        }
        config.shuffle_seed = self.shuffle_seed.unwrap_or_else(rand::random);
        let questions = config.space.questions();
        let labels = match self.labels {
            Some(l) if l.len() != questions => {
                return Err(ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "invalid_config",
                    format!("{} labels for {questions} questions", l.len()),
                ))
            }
            Some(l) => l,
            None => (1..=questions).map(|s| format!("Question {s}")).collect(),
        };
        config.validate().map_err(bad)?;
        Ok((config, labels))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionView {
    pub label: String,
    pub scale: u32,
    /// Free answer of the round (its corner); absent in round 0.
    pub default: Option<u32>,
    /// Tokens per step away from the default.
    pub step_price: Option<[i64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundDescriptor {
    pub session_id: String,
    pub status: Status,
    /// Round id to submit with; 0 is the unconstrained round.
    pub index: usize,
    /// 1-based position among the rounds this respondent answers (0 for round 0).
    pub position: usize,
    /// Constrained rounds this respondent answers (known after round 0).
    pub rounds_total: usize,
    pub unconstrained: bool,
    pub excluded: bool,
    pub corner: Option<Vec<u32>>,
    pub budget: Option<[i64; 2]>,
    /// Tokens left when answering the default.
    pub remaining: Option<[i64; 2]>,
    pub questions: Vec<QuestionView>,
}

fn to_wire(r: &Rational) -> [i64; 2] {
    rational::to_pair(r).unwrap_or([0, 1])
}

fn describe(id: &str, entry: &Entry) -> Result<RoundDescriptor, ApiError> {
    let state = &entry.state;
    let index = state.current_round().ok_or_else(|| ApiError::session(psm_core::Error::SessionComplete, id))?;
    let space = state.space();
    let included = state.rounds().iter().filter(|r| !r.excluded).count();
    let rounds_total = if state.round0().is_some() { included } else { state.config().total_rounds() };
    let questions = |default: Option<&[u32]>, prices: Option<&[Rational]>| {
        (0..space.questions())
            .map(|s| QuestionView {
                label: entry.labels[s].clone(),
                scale: space.scale(s),
                default: default.map(|d| d[s]),
                step_price: prices.map(|p| to_wire(&p[s])),
            })
            .collect()
    };
    if index == 0 {
        return Ok(RoundDescriptor {
            session_id: id.into(),
            status: state.status(),
            index,
            position: 0,
            rounds_total,
            unconstrained: true,
            excluded: false,
            corner: None,
            budget: None,
            remaining: None,
            questions: questions(None, None),
        });
    }
    let round = state.round(index).expect("current round exists");
    let position = state.rounds()[..index].iter().filter(|r| !r.excluded).count();
    Ok(RoundDescriptor {
        session_id: id.into(),
        status: state.status(),
        index,
        position,
        rounds_total,
        unconstrained: false,
        excluded: round.excluded,
        corner: Some(round.set.corner.coords().to_vec()),
        budget: Some(to_wire(&round.set.budget)),
        remaining: Some(to_wire(&round.set.budget)),
        questions: questions(Some(round.set.corner.coords()), Some(&round.set.prices)),
    })
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Bytes,
) -> Result<(StatusCode, Json<RoundDescriptor>), ApiError> {
    let request: CreateRequest = if body.iter().all(u8::is_ascii_whitespace) {
        CreateRequest::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "malformed_request", e.to_string()))?
    };
    let (config, labels) = request.into_config()?;
    let state = SessionState::new(config.clone()).map_err(|e| ApiError::session(e, ""))?;
    let id = format!("{:032x}", rand::random::<u128>());
    let ts = now_millis();
    app.log.append(
        &Event { ts, session: id.clone(), kind: EventKind::Created { config, labels: labels.clone() } },
        false,
    )?;
    let entry = Entry { created_at: ts, labels, state };
    let descriptor = describe(&id, &entry)?;
    app.sessions
        .write()
        .unwrap_or_else(|e| e.into_inner())
        .insert(id, Arc::new(Mutex::new(entry)));
    Ok((StatusCode::CREATED, Json(descriptor)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub session_id: String,
    pub status: Status,
    pub created_at: u64,
}

async fn list_sessions(State(app): State<Arc<AppState>>) -> Json<Vec<SessionSummary>> {
    let sessions = app.sessions.read().unwrap_or_else(|e| e.into_inner());
    let mut out: Vec<SessionSummary> = sessions
        .iter()
        .map(|(id, entry)| {
            let entry = entry.lock().unwrap_or_else(|e| e.into_inner());
            SessionSummary {
                session_id: id.clone(),
                status: entry.state.status(),
                created_at: entry.created_at,
            }
        })
        .collect();
    out.sort_by(|a, b| (a.created_at, &a.session_id).cmp(&(b.created_at, &b.session_id)));
    Json(out)
}

async fn current_round(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<RoundDescriptor>, ApiError> {
    let entry = app.entry(&id)?;
    let entry = entry.lock().unwrap_or_else(|e| e.into_inner());
    Ok(Json(describe(&id, &entry)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerRequest {
    pub round: usize,
    pub answer: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResponse {
    pub accepted: bool,
    pub status: Status,
    pub next_round: Option<usize>,
}

async fn submit_answer(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<AnswerRequest>, JsonRejection>,
) -> Result<Json<AnswerResponse>, ApiError> {
    let Json(request) = body?;
    let entry = app.entry(&id)?;
    let mut entry = entry.lock().unwrap_or_else(|e| e.into_inner());
    let mut next = entry.state.clone();
    next.submit(request.round, request.answer.clone()).map_err(|e| ApiError::session(e, &id))?;
    let complete = next.status() == Status::Complete;
    app.log.append(
        &Event {
            ts: now_millis(),
            session: id.clone(),
            kind: EventKind::Answered { round: request.round, answer: request.answer },
        },
        complete,
    )?;
    entry.state = next;
    Ok(Json(AnswerResponse {
        accepted: true,
        status: entry.state.status(),
        next_round: entry.state.current_round(),
    }))
}

async fn export_dataset(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let entry = app.entry(&id)?;
    let entry = entry.lock().unwrap_or_else(|e| e.into_inner());
    let dataset = entry.state.to_dataset().map_err(|e| {
        let current = entry.state.current_round();
        ApiError::session(e, &id).with(json!({"current_round": current}))
    })?;
    let bytes = save_dataset(&dataset).map_err(|e| ApiError::session(e, &id))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

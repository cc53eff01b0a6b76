//! HTTP routes and the shared state behind them.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use egomedia_core::context::{ContextError, Frame};
use egomedia_core::engine::{Engine, EngineError};
use egomedia_core::learner::{FeedbackEvent, LearnerConfig, LearnerError, ParamStore};
use egomedia_core::logic::LogicError;
use egomedia_core::parser::ParseError;
use egomedia_core::world::{DayStamp, MediaKind, UserContext, WorldError, WorldSnapshot, WorldStore};
use log::{error, info};
use serde::{Deserialize, Serialize};
use tower_http::cors::CorsLayer;

use crate::persist::DataDir;

/// JSON error body `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: Option<String>,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody { code: code.into(), message: message.into(), detail: None },
        }
    }

    fn detail(mut self, d: impl Into<String>) -> Self {
        self.body.detail = Some(d.into());
        self
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        error!("{e}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

impl From<WorldError> for ApiError {
    fn from(e: WorldError) -> Self {
        match e {
            WorldError::UnknownUser(u) => Self::new(StatusCode::NOT_FOUND, "unknown_user", format!("no context for user {u:?}"))
                .detail("POST /context first"),
            WorldError::InvalidCoordinate(_) | WorldError::InvalidHeading(_) | WorldError::InvalidTimestamp(_) => {
                Self::new(StatusCode::BAD_REQUEST, "invalid_context", e.to_string())
            }
            other => Self::internal(other),
        }
    }
}

fn engine_error(e: EngineError, text: &str) -> ApiError {
    match e {
        EngineError::Parse(ParseError::NoCandidates(resolved)) => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_candidates", "the query could not be interpreted").detail(resolved)
        }
        EngineError::Parse(ParseError::EmptyQuery) | EngineError::Context(ContextError::EmptyQuery) => {
            ApiError::new(StatusCode::BAD_REQUEST, "empty_query", "query text is empty")
        }
        EngineError::Logic(LogicError::UnknownEntity(name)) => {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unknown_entity", format!("no place named {name:?}")).detail(text)
        }
        EngineError::Context(c) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "unresolvable_context", c.to_string()).detail(text),
        other => ApiError::internal(other),
    }
}

/// A shown retrieval kept for joining later feedback.
#[derive(Debug, Clone)]
struct LoggedQuery {
    text: String,
    context: UserContext,
    frame: Frame,
    shown: Vec<String>,
}

/// The most recent queries of one user, oldest evicted first.
#[derive(Debug, Default)]
struct QueryLog {
    entries: VecDeque<(String, LoggedQuery)>,
}

impl QueryLog {
    fn push(&mut self, id: String, q: LoggedQuery, cap: usize) {
        while self.entries.len() >= cap.max(1) {
            self.entries.pop_front();
        }
        self.entries.push_back((id, q));
    }

    fn get(&self, id: &str) -> Option<&LoggedQuery> {
        self.entries.iter().rev().find(|(k, _)| k == id).map(|(_, q)| q)
    }
}

#[derive(Debug)]
pub struct AppState {
    world: RwLock<WorldStore>,
    params: RwLock<ParamStore>,
    queries: Mutex<HashMap<String, QueryLog>>,
    engine: Engine,
    learner: LearnerConfig,
    data: Option<DataDir>,
    media_root: PathBuf,
    query_log_capacity: usize,
    next_query: AtomicU64,
}

impl AppState {
    pub fn new(world: WorldStore, params: ParamStore, engine: Engine, learner: LearnerConfig, media_root: PathBuf) -> Self {
        Self {
            world: RwLock::new(world),
            params: RwLock::new(params),
            queries: Mutex::new(HashMap::new()),
            engine,
            learner,
            data: None,
            media_root,
            query_log_capacity: 10_000,
            next_query: AtomicU64::new(1),
        }
    }

    /// Persist parameter updates into `data`.
    pub fn with_data_dir(mut self, data: DataDir) -> Self {
        self.data = Some(data);
        self
    }

    pub fn with_query_log_capacity(mut self, cap: usize) -> Self {
        self.query_log_capacity = cap;
        self
    }

    fn snapshot(&self, user: &str) -> Result<WorldSnapshot, ApiError> {
        Ok(self.world.read().unwrap_or_else(|e| e.into_inner()).snapshot(user)?)
    }

    fn resolve_media_path(&self, uri: &str) -> PathBuf {
        let p = Path::new(uri.strip_prefix("file://").unwrap_or(uri));
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.media_root.join(p)
        }
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/context", post(set_context))
        .route("/query", post(query))
        .route("/feedback", post(feedback))
        .route("/media/{id}", get(media))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub world_version: u64,
    pub facts: usize,
    pub media: usize,
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Health> {
    let w = s.world.read().unwrap_or_else(|e| e.into_inner());
    Json(Health {
        status: "ok".into(),
        world_version: w.version(),
        facts: w.facts().len(),
        media: w.media().len(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextRequest {
    pub user_id: String,
    pub lat: f64,
    pub lon: f64,
    pub heading_deg: f64,
    pub query_time: Option<u32>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ContextResponse {
    pub version: u64,
    pub heading_deg: f64,
    pub query_time: DayStamp,
}

fn today() -> DayStamp {
    DayStamp::from_date(chrono::Local::now().date_naive()).expect("the clock is within four-digit years")
}

async fn set_context(
    State(s): State<Arc<AppState>>,
    body: Result<Json<ContextRequest>, JsonRejection>,
) -> Result<Json<ContextResponse>, ApiError> {
    let Json(req) = body?;
    if req.user_id.is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "invalid_context", "user_id is empty"));
    }
    let when = match req.query_time {
        Some(t) => DayStamp::new(t)?,
        None => today(),
    };
    let ctx = UserContext::new(req.user_id, req.lat, req.lon, req.heading_deg, when)?;
    let heading = ctx.heading_deg;
    let version = s.world.write().unwrap_or_else(|e| e.into_inner()).set_user_context(ctx)?;
    Ok(Json(ContextResponse { version, heading_deg: heading, query_time: when }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRequest {
    pub user_id: String,
    pub text: String,
    #[serde(default)]
    pub frame: Frame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub media_id: String,
    pub kind: MediaKind,
    pub uri: String,
    pub lat: f64,
    pub lon: f64,
    pub timestamp: DayStamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    pub query_id: String,
    pub retrievals: Vec<Retrieval>,
    pub logical_form: String,
    pub frame: Frame,
    pub params_version: u64,
}

async fn query(
    State(s): State<Arc<AppState>>,
    body: Result<Json<QueryRequest>, JsonRejection>,
) -> Result<Json<QueryResponse>, ApiError> {
    let Json(req) = body?;
    let world = s.snapshot(&req.user_id)?;
    let theta = s.params.read().unwrap_or_else(|e| e.into_inner()).params_for(&req.user_id);
    let answer = s.engine.answer(&req.text, &world, req.frame, &theta, 1).map_err(|e| engine_error(e, &req.text))?;
    let retrievals: Vec<Retrieval> = answer
        .denotation
        .media_ids
        .iter()
        .filter_map(|id| world.media.get(id))
        .map(|m| Retrieval {
            media_id: m.id.clone(),
            kind: m.kind,
            uri: m.uri.clone(),
            lat: m.lat,
            lon: m.lon,
            timestamp: m.timestamp,
        })
        .collect();
    let query_id = format!("q{:x}", s.next_query.fetch_add(1, Ordering::Relaxed));
    s.queries.lock().unwrap_or_else(|e| e.into_inner()).entry(req.user_id.clone()).or_default().push(
        query_id.clone(),
        LoggedQuery {
            text: req.text.clone(),
            context: world.context.clone(),
            frame: req.frame,
            shown: answer.denotation.media_ids.clone(),
        },
        s.query_log_capacity,
    );
    info!("{} {:?} -> {} ({} items)", req.user_id, req.text, answer.logical_form(), retrievals.len());
    Ok(Json(QueryResponse {
        query_id,
        logical_form: answer.logical_form().to_string(),
        retrievals,
        frame: req.frame,
        params_version: theta.version,
    }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mark {
    pub media_id: String,
    pub relevant: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub user_id: String,
    pub query_id: String,
    #[serde(default)]
    pub marks: Vec<Mark>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FeedbackResponse {
    pub params_version: u64,
}

async fn feedback(
    State(s): State<Arc<AppState>>,
    body: Result<Json<FeedbackRequest>, JsonRejection>,
) -> Result<Json<FeedbackResponse>, ApiError> {
    let Json(req) = body?;
    let logged = s
        .queries
        .lock()
        .unwrap_or_else(|e| e.into_inner())
        .get(&req.user_id)
        .and_then(|log| log.get(&req.query_id).cloned())
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_query", format!("no query {:?} for this user", req.query_id)))?;
    let shown: BTreeSet<&str> = logged.shown.iter().map(String::as_str).collect();
    if let Some(m) = req.marks.iter().find(|m| !shown.contains(m.media_id.as_str())) {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "mark_not_shown", format!("{:?} was not shown for this query", m.media_id)));
    }
    let event = FeedbackEvent {
        user_id: req.user_id.clone(),
        query_text: logged.text,
        context: logged.context.clone(),
        frame: logged.frame,
        shown: logged.shown,
        marked_relevant: req.marks.iter().filter(|m| m.relevant).map(|m| m.media_id.clone()).collect(),
        timestamp: chrono::Utc::now().timestamp().max(0) as u64,
    };
    let world = s.snapshot(&req.user_id)?.with_context(logged.context);
    let mut params = s.params.write().unwrap_or_else(|e| e.into_inner());
    if params.fork(&req.user_id).is_none() {
        params.fork_params(&req.user_id).map_err(ApiError::internal)?;
    }
    let version = params.feedback(&event, &s.engine, &world, &s.learner).map_err(|e| match e {
        LearnerError::InvalidEvent(m) => ApiError::new(StatusCode::BAD_REQUEST, "invalid_feedback", m),
        LearnerError::Engine(e) => engine_error(e, &event.query_text),
        other => ApiError::internal(other),
    })?;
    if let Some(d) = &s.data {
        let theta = params.params_for(&req.user_id);
        d.save_params(&theta).map_err(ApiError::internal)?;
    }
    Ok(Json(FeedbackResponse { params_version: version }))
}

async fn media(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> Result<Response, ApiError> {
    let uri = {
        let w = s.world.read().unwrap_or_else(|e| e.into_inner());
        w.media()
            .get(&id)
            .map(|m| m.uri.clone())
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "unknown_media", format!("no media {id:?}")))?
    };
    let path = s.resolve_media_path(&uri);
    match tokio::fs::read(&path).await {
        Ok(bytes) => {
            let mime = mime_guess::from_path(&path).first_or_octet_stream();
            Ok(([(header::CONTENT_TYPE, mime.to_string())], bytes).into_response())
        }
        Err(e) if e.kind() == ErrorKind::NotFound => {
            Err(ApiError::new(StatusCode::GONE, "media_gone", format!("file for {id:?} is no longer available")).detail(uri))
        }
        Err(e) => Err(ApiError::internal(e)),
    }
}

//! HTTP API over a shared [`Engine`].
//!
//! Sessions live in memory behind a bounded store: at most
//! [`ServiceConfig::max_sessions`] entries (least recently used evicted
//! first) and none idle longer than [`ServiceConfig::idle_timeout`]. Each
//! session has its own lock; a turn request that finds it held is rejected
//! with 409 instead of queueing.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lexguide_core::engine::{DialogueTurn, EngineError};
use lexguide_core::navigator::{NavigationState, Operation, Signal, TerminationStatus};
use lexguide_core::providers::ProviderError;
use lexguide_core::{Engine, Mode, Session, SessionConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub const PORT_ENV: &str = "LEXGUIDE_PORT";
pub const CORS_ORIGIN_ENV: &str = "LEXGUIDE_CORS_ORIGIN";

/// Every response body is described by a definition in this document.
pub const API_SCHEMA: &str = include_str!("../schemas/api.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// Allowed browser origin; `"*"` allows any.
    pub cors_origin: Option<String>,
    pub max_sessions: usize,
    #[serde(with = "secs")]
    pub idle_timeout: Duration,
}

mod secs {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        u64::deserialize(d).map(Duration::from_secs)
    }
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            cors_origin: None,
            max_sessions: 256,
            idle_timeout: Duration::from_secs(600),
        }
    }
}

impl ServiceConfig {
    /// Apply `LEXGUIDE_PORT` and `LEXGUIDE_CORS_ORIGIN` when set.
    pub fn with_env_overrides(mut self) -> Result<Self, String> {
        if let Ok(p) = std::env::var(PORT_ENV) {
            self.port = p.trim().parse().map_err(|_| format!("{PORT_ENV}={p:?} is not a port number"))?;
        }
        if let Ok(o) = std::env::var(CORS_ORIGIN_ENV) {
            self.cors_origin = Some(o);
        }
        Ok(self)
    }
}

/// Wire error: one stable code per failure class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
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

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad-request", message)
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", format!("no session {id}"))
    }

    fn busy(id: &str) -> Self {
        Self::new(StatusCode::CONFLICT, "session-busy", format!("session {id} is processing another turn"))
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let msg = e.to_string();
        match e {
            EngineError::EmptyQuery => Self::bad_request(msg),
            EngineError::InvalidConfig(_) => Self::new(StatusCode::BAD_REQUEST, "invalid-config", msg),
            EngineError::Navigation(_) => Self::new(StatusCode::BAD_REQUEST, "navigation", msg),
            EngineError::NoTree(_) => Self::new(StatusCode::NOT_FOUND, "no-tree", msg),
            EngineError::SessionTerminated => Self::new(StatusCode::GONE, "terminated", msg),
            EngineError::Provider(p) => match p {
                ProviderError::InvalidRequest(_) => Self::bad_request(msg),
                _ => Self::new(StatusCode::BAD_GATEWAY, "provider-unavailable", msg),
            },
            EngineError::Retrieval(_)
            | EngineError::Topic(_)
            | EngineError::Corpus(_)
            | EngineError::Snapshot(_)
            | EngineError::Io { .. } => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", msg),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Entry {
    session: Arc<tokio::sync::Mutex<Session>>,
    last_used: Instant,
}

/// Bounded in-memory session map.
struct SessionStore {
    entries: HashMap<String, Entry>,
    max: usize,
    idle: Duration,
}

impl SessionStore {
    fn evict_idle(&mut self, now: Instant) {
        let idle = self.idle;
        self.entries.retain(|_, e| now.duration_since(e.last_used) <= idle);
    }

    fn insert(&mut self, id: String, session: Session) {
        let now = Instant::now();
        self.evict_idle(now);
        while self.entries.len() >= self.max.max(1) {
            let oldest = self
                .entries
                .iter()
                .min_by_key(|(_, e)| e.last_used)
                .map(|(k, _)| k.clone())
                .expect("store is non-empty");
            self.entries.remove(&oldest);
        }
        self.entries.insert(
            id,
            Entry {
                session: Arc::new(tokio::sync::Mutex::new(session)),
                last_used: now,
            },
        );
    }

    fn get(&mut self, id: &str) -> Option<Arc<tokio::sync::Mutex<Session>>> {
        let now = Instant::now();
        self.evict_idle(now);
        let e = self.entries.get_mut(id)?;
        e.last_used = now;
        Some(e.session.clone())
    }
}

/// Shared handler state.
#[derive(Clone)]
pub struct AppState {
    engine: Arc<Engine>,
    defaults: SessionConfig,
    store: Arc<Mutex<SessionStore>>,
}

impl AppState {
    /// `defaults` fills every session setting a request leaves out.
    pub fn new(engine: Arc<Engine>, defaults: SessionConfig, cfg: &ServiceConfig) -> Self {
        Self {
            engine,
            defaults,
            store: Arc::new(Mutex::new(SessionStore {
                entries: HashMap::new(),
                max: cfg.max_sessions,
                idle: cfg.idle_timeout,
            })),
        }
    }

    fn session(&self, id: &str) -> ApiResult<Arc<tokio::sync::Mutex<Session>>> {
        self.store.lock().expect("store lock").get(id).ok_or_else(|| ApiError::not_found(id))
    }

    fn session_count(&self) -> usize {
        self.store.lock().expect("store lock").entries.len()
    }
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

/// Run blocking engine work off the async runtime.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    query: String,
    #[serde(default)]
    mode: Option<Mode>,
    /// Partial session settings; missing keys take the service defaults.
    #[serde(default)]
    config: Option<serde_json::Map<String, Value>>,
    #[serde(default)]
    dialogue_id: Option<String>,
}

#[derive(Debug, Serialize)]
struct SessionCreated {
    session_id: String,
    mode: Mode,
    first_turn: DialogueTurn,
    status: TerminationStatus,
    state: Option<NavigationState>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TurnRequest {
    Utterance {
        utterance: String,
    },
    Operation(Operation),
}

#[derive(Debug, Serialize)]
struct TurnResponse {
    session_id: String,
    turn: DialogueTurn,
    status: TerminationStatus,
    state: Option<NavigationState>,
}

#[derive(Debug, Serialize)]
struct TranscriptView {
    session_id: String,
    mode: Mode,
    status: TerminationStatus,
    turns: Vec<DialogueTurn>,
}

#[derive(Debug, Serialize)]
struct SessionClosed {
    session_id: String,
    status: TerminationStatus,
}

fn merged_config(defaults: &SessionConfig, req: &CreateSession) -> ApiResult<SessionConfig> {
    let mut base = serde_json::to_value(defaults).expect("config serializes");
    if let (Some(over), Value::Object(map)) = (&req.config, &mut base) {
        for (k, v) in over {
            map.insert(k.clone(), v.clone());
        }
    }
    let mut cfg: SessionConfig = serde_json::from_value(base)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid-config", e.to_string()))?;
    if let Some(m) = req.mode {
        cfg.mode = m;
    }
    Ok(cfg)
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> ApiResult<(StatusCode, Json<SessionCreated>)> {
    let req: CreateSession = parse_body(&body)?;
    let cfg = merged_config(&app.defaults, &req)?;
    let engine = app.engine.clone();
    let query = req.query.clone();
    let mut session = blocking(move || engine.start_session(&query, cfg).map_err(ApiError::from)).await?;
    session.dialogue_id = req.dialogue_id;
    let out = SessionCreated {
        session_id: session.id.clone(),
        mode: session.config.mode,
        first_turn: session.transcript[0].clone(),
        status: session.status,
        state: session.state.clone(),
    };
    app.store.lock().expect("store lock").insert(session.id.clone(), session);
    Ok((StatusCode::CREATED, Json(out)))
}

async fn post_turn(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    match parse_body::<TurnRequest>(&body)? {
        TurnRequest::Utterance { utterance } => Ok(take_turn(app, id, utterance).await?.into_response()),
        TurnRequest::Operation(op) => Ok(navigate_with(app, id, op).await?.into_response()),
    }
}

async fn take_turn(app: AppState, id: String, utterance: String) -> ApiResult<Json<TurnResponse>> {
    let cell = app.session(&id)?;
    let mut guard = cell.try_lock_owned().map_err(|_| ApiError::busy(&id))?;
    let engine = app.engine.clone();
    blocking(move || {
        let turn = engine.take_turn(&mut guard, &utterance)?;
        Ok(Json(TurnResponse {
            session_id: guard.id.clone(),
            turn,
            status: guard.status,
            state: guard.state.clone(),
        }))
    })
    .await
}

async fn navigate_with(app: AppState, id: String, op: Operation) -> ApiResult<Json<NavigationState>> {
    let cell = app.session(&id)?;
    let mut guard = cell.try_lock_owned().map_err(|_| ApiError::busy(&id))?;
    let state = app.engine.apply_navigation(&mut guard, &op)?;
    Ok(Json(state.clone()))
}

async fn navigate(State(app): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<NavigationState>> {
    let op: Operation = parse_body(&body)?;
    navigate_with(app, id, op).await
}

async fn snapshot(State(app): State<AppState>, Path((id, which)): Path<(String, String)>) -> ApiResult<Response> {
    let cell = app.session(&id)?;
    let s = cell.lock().await;
    let no_tree = || ApiError::from(EngineError::NoTree(s.config.mode));
    match which.as_str() {
        "tree" => Ok(Json(s.tree.as_ref().ok_or_else(no_tree)?.snapshot()).into_response()),
        "state" => Ok(Json(s.state.as_ref().ok_or_else(no_tree)?).into_response()),
        "transcript" => Ok(Json(TranscriptView {
            session_id: s.id.clone(),
            mode: s.config.mode,
            status: s.status,
            turns: s.transcript.clone(),
        })
        .into_response()),
        other => Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "not-found",
            format!("unknown snapshot {other:?} (expected tree, state or transcript)"),
        )),
    }
}

/// Ends the session as user-satisfied; snapshots stay readable.
async fn close_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionClosed>> {
    let cell = app.session(&id)?;
    let mut guard = cell.try_lock_owned().map_err(|_| ApiError::busy(&id))?;
    if !guard.is_active() {
        return Err(EngineError::SessionTerminated.into());
    }
    app.engine.end_session(&mut guard, Signal::UserSatisfied);
    Ok(Json(SessionClosed {
        session_id: id,
        status: guard.status,
    }))
}

async fn health(State(app): State<AppState>) -> Json<Value> {
    Json(serde_json::json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "index_size": app.engine.knowledge_base().len(),
        "sessions": app.session_count(),
    }))
}

fn schema_document() -> Value {
    serde_json::from_str(API_SCHEMA).expect("bundled schema is valid JSON")
}

/// The schema document rooted at one definition, e.g. `TurnResponse`.
pub fn schema_for(name: &str) -> Option<Value> {
    let mut doc = schema_document();
    doc.get("$defs")?.get(name)?;
    doc["$ref"] = Value::String(format!("#/$defs/{name}"));
    Some(doc)
}

async fn schemas() -> Json<Value> {
    Json(schema_document())
}

async fn schema(Path(name): Path<String>) -> ApiResult<Json<Value>> {
    let name = name.trim_end_matches(".json");
    schema_for(name)
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not-found", format!("no schema {name}")))
}

fn cors(origin: Option<&str>) -> Result<Option<CorsLayer>, String> {
    let Some(origin) = origin else { return Ok(None) };
    let allow = if origin.trim() == "*" {
        AllowOrigin::any()
    } else {
        let v = HeaderValue::from_str(origin.trim()).map_err(|_| format!("invalid CORS origin {origin:?}"))?;
        AllowOrigin::exact(v)
    };
    Ok(Some(
        CorsLayer::new()
            .allow_origin(allow)
            .allow_methods([Method::GET, Method::POST, Method::DELETE])
            .allow_headers(Any),
    ))
}

pub fn router(app: AppState, cfg: &ServiceConfig) -> Result<Router, String> {
    let r = Router::new()
        .route("/health", get(health))
        .route("/schemas", get(schemas))
        .route("/schemas/{name}", get(schema))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(close_session))
        .route("/sessions/{id}/turns", post(post_turn))
        .route("/sessions/{id}/navigate", post(navigate))
        .route("/sessions/{id}/{which}", get(snapshot))
        .with_state(app);
    Ok(match cors(cfg.cors_origin.as_deref())? {
        Some(layer) => r.layer(layer),
        None => r,
    })
}

/// Bind and serve until the process is stopped.
pub async fn serve(engine: Arc<Engine>, defaults: SessionConfig, cfg: ServiceConfig) -> std::io::Result<()> {
    let app = AppState::new(engine, defaults, &cfg);
    let router = router(app, &cfg).map_err(std::io::Error::other)?;
    let addr: SocketAddr = format!("{}:{}", cfg.host, cfg.port)
        .parse()
        .map_err(|e| std::io::Error::other(format!("bad listen address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router).await
}

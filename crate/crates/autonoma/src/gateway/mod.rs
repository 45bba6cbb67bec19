//! LAN gateway: prompt submission, conversation queries, approvals and a
//! resumable event stream, behind an IP allowlist and paired bearer tokens.

mod pairing;

use std::future::Future;
use std::net::{IpAddr, SocketAddr};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{CloseFrame, Message as WsMessage, WebSocket, WebSocketUpgrade};
use axum::extract::{ConnectInfo, DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use autonoma_core::netfilter::{ip_filter, Cidr, FilterDecision};
use autonoma_core::{ArtifactRef, Message, Plan, WorkflowEvent, WorkflowStatus};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;

pub use pairing::{qr_payload, AuthError, PairingRegistry, PairingSession, TOKEN_BYTES};

use crate::agentkit::plugin::SubprocessAgent;
use crate::agentkit::{Agent, Registry, TokenStore};
use crate::agents::{
    BrowserAgent, CoderAgent, ComputerAgent, EchoAgent, FileManagerAgent, FixtureCorpus, ReporterAgent, ResearcherAgent,
    SearchTool,
};
use crate::config::{ConfigError, ServiceConfig};
use crate::coordinator::Coordinator;
use crate::engine::{plan_of, Engine, EngineError, EngineSettings};
use crate::planner::LlmPlanner;
use crate::store::{Store, StoreError};
use crate::supervisor::ApprovalError;

/// Header a client may send to identify itself for token binding; without
/// it the remote IP is the client id.
pub const CLIENT_ID_HEADER: &str = "x-autonoma-client";

/// WebSocket close codes.
pub const CLOSE_UNAUTHENTICATED: u16 = 4401;
pub const CLOSE_NOT_FOUND: u16 = 4404;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone)]
struct AppState {
    engine: Engine,
    allowlist: Arc<Vec<Cidr>>,
    pairing: Arc<PairingRegistry>,
}

/// The HTTP + WebSocket service in front of an [`Engine`].
#[derive(Clone)]
pub struct Gateway {
    state: AppState,
    max_body_bytes: usize,
}

impl Gateway {
    pub fn new(engine: Engine, allowlist: Vec<Cidr>, pairing: Arc<PairingRegistry>, max_body_bytes: usize) -> Self {
        Gateway { state: AppState { engine, allowlist: Arc::new(allowlist), pairing }, max_body_bytes }
    }

    /// Builds the engine, store and agent roster described by `cfg`.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Gateway, GatewayError> {
        let engine = engine_from_config(cfg)?;
        let pairing = Arc::new(PairingRegistry::new(Duration::from_secs(cfg.pairing_ttl_secs)));
        Ok(Gateway::new(engine, cfg.allowlist.clone(), pairing, cfg.max_body_bytes))
    }

    pub fn engine(&self) -> &Engine {
        &self.state.engine
    }

    pub fn pairing(&self) -> &Arc<PairingRegistry> {
        &self.state.pairing
    }

    pub fn router(&self) -> Router {
        let api = Router::new()
            .route("/api/prompt", post(submit_prompt))
            .route("/api/conversations", get(list_conversations))
            .route("/api/conversations/{id}", get(get_conversation))
            .route("/api/approvals/{id}", post(resolve_approval))
            .layer(middleware::from_fn_with_state(self.state.clone(), require_token));
        Router::new()
            .merge(api)
            .route("/ws/conversations/{id}", get(stream_events))
            .layer(DefaultBodyLimit::max(self.max_body_bytes))
            .layer(middleware::from_fn_with_state(self.state.clone(), filter_ip))
            .with_state(self.state.clone())
    }

    /// Serves until `shutdown` resolves.
    pub async fn serve<F>(self, listener: TcpListener, shutdown: F) -> std::io::Result<()>
    where
        F: Future<Output = ()> + Send + 'static,
    {
        let app = self.router().into_make_service_with_connect_info::<SocketAddr>();
        axum::serve(listener, app).with_graceful_shutdown(shutdown).await
    }
}

pub fn engine_from_config(cfg: &ServiceConfig) -> Result<Engine, GatewayError> {
    let provider = Arc::new(cfg.providers.build()?);
    let store = Store::open(&cfg.storage_root)?;
    let jail = cfg.jail_root();
    std::fs::create_dir_all(&jail)?;
    let jail = jail.to_string_lossy().into_owned();
    let tokens = Arc::new(TokenStore::new());
    let search: Vec<Arc<dyn SearchTool>> = match &cfg.corpus_dir {
        Some(dir) => vec![Arc::new(FixtureCorpus::load_dir(dir)?)],
        None => Vec::new(),
    };

    let registry = Arc::new(Registry::new());
    let register = |agent: Arc<dyn Agent>| {
        registry.register(agent).map_err(|e| GatewayError::Config(ConfigError::Invalid(e.to_string())))
    };
    register(Arc::new(EchoAgent::default()))?;
    register(Arc::new(ResearcherAgent::new(search.clone(), 3)))?;
    register(Arc::new(CoderAgent::new(jail.clone())))?;
    register(Arc::new(FileManagerAgent::new(jail, tokens.clone())))?;
    register(Arc::new(BrowserAgent::default()))?;
    register(Arc::new(ComputerAgent::default()))?;
    register(Arc::new(ReporterAgent::new(Some(provider.clone()))))?;
    for plugin in &cfg.plugins {
        register(Arc::new(SubprocessAgent::load(&plugin.program, plugin.args.clone())?))?;
    }

    let settings = EngineSettings { policy: cfg.policy, pregather_budget: cfg.pregather_budget, narrative: true };
    Ok(Engine::builder(
        Arc::new(Coordinator::with_defaults(provider.clone())),
        Arc::new(LlmPlanner::new(provider.clone())),
        provider,
        registry,
    )
    .tokens(tokens)
    .search_tools(search)
    .settings(settings)
    .store(store, true)
    .build()?)
}

#[derive(Debug, Serialize)]
struct ErrorBody {
    error: &'static str,
    message: String,
}

fn error(status: StatusCode, code: &'static str, message: impl Into<String>) -> Response {
    (status, Json(ErrorBody { error: code, message: message.into() })).into_response()
}

fn engine_error(e: EngineError) -> Response {
    match e {
        EngineError::Busy => error(StatusCode::CONFLICT, "busy", e.to_string()),
        EngineError::NotFound(_) => error(StatusCode::NOT_FOUND, "not_found", e.to_string()),
        EngineError::NoActiveWorkflow | EngineError::Approval(ApprovalError::NoPendingApproval) => {
            error(StatusCode::CONFLICT, "no_pending_approval", e.to_string())
        }
        EngineError::Approval(ApprovalError::DigestMismatch) => {
            error(StatusCode::CONFLICT, "digest_mismatch", e.to_string())
        }
        other => {
            tracing::error!(error = %other, "request failed");
            error(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string())
        }
    }
}

fn remote_ip(req: &Request) -> Option<IpAddr> {
    req.extensions().get::<ConnectInfo<SocketAddr>>().map(|c| c.0.ip())
}

/// Runs before routing and before any body is read. Requests without a
/// known peer address are denied.
async fn filter_ip(State(state): State<AppState>, req: Request, next: Next) -> Response {
    match remote_ip(&req) {
        Some(ip) if ip_filter(ip, &state.allowlist) == FilterDecision::Allow => next.run(req).await,
        peer => {
            tracing::debug!(?peer, "request filtered");
            StatusCode::FORBIDDEN.into_response()
        }
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers.get(header::AUTHORIZATION)?.to_str().ok()?.strip_prefix("Bearer ").map(str::trim)
}

fn client_id(headers: &HeaderMap, ip: Option<IpAddr>) -> String {
    headers
        .get(CLIENT_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .unwrap_or_else(|| ip.map(|i| i.to_string()).unwrap_or_default())
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let client = client_id(req.headers(), remote_ip(&req));
    match state.pairing.authenticate(bearer(req.headers()), &client) {
        Ok(()) => next.run(req).await,
        Err(e) => error(StatusCode::UNAUTHORIZED, "unauthenticated", e.to_string()),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversation_id: Option<String>,
    pub text: String,
    #[serde(default)]
    pub attachments: Vec<ArtifactRef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptAccepted {
    pub conversation_id: String,
    pub accepted: bool,
}

async fn submit_prompt(State(state): State<AppState>, Json(req): Json<PromptRequest>) -> Response {
    if req.text.trim().is_empty() {
        return error(StatusCode::BAD_REQUEST, "empty_prompt", "prompt text is empty");
    }
    let engine = &state.engine;
    let conv = match &req.conversation_id {
        Some(id) => engine.conversation(id),
        None => engine.new_conversation(),
    };
    let conv = match conv {
        Ok(c) => c,
        Err(e) => return engine_error(e),
    };
    match engine.submit(&conv, &req.text, req.attachments) {
        Ok(handle) => {
            let id = conv.id();
            let log_id = id.clone();
            tokio::spawn(async move {
                match handle.await {
                    Ok(Ok(out)) => tracing::info!(conversation = %log_id, status = %out.status, "turn finished"),
                    Ok(Err(e)) => tracing::error!(conversation = %log_id, error = %e, "turn failed"),
                    Err(e) => tracing::error!(conversation = %log_id, error = %e, "turn task aborted"),
                }
            });
            (StatusCode::ACCEPTED, Json(PromptAccepted { conversation_id: id, accepted: true })).into_response()
        }
        Err(e) => engine_error(e),
    }
}

async fn list_conversations(State(state): State<AppState>) -> Response {
    match state.engine.list_conversations() {
        Ok(list) => Json(list).into_response(),
        Err(e) => engine_error(e),
    }
}

/// Full view of one conversation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationView {
    pub id: String,
    pub status: WorkflowStatus,
    pub busy: bool,
    pub last_seq: u64,
    pub plan: Option<Plan>,
    pub messages: Vec<Message>,
    pub events: Vec<WorkflowEvent>,
}

async fn get_conversation(State(state): State<AppState>, Path(id): Path<String>) -> Response {
    let conv = match state.engine.conversation(&id) {
        Ok(c) => c,
        Err(e) => return engine_error(e),
    };
    let journal = conv.journal();
    let st = journal.state();
    Json(ConversationView {
        id: conv.id(),
        status: st.status,
        busy: conv.is_busy(),
        last_seq: st.last_seq,
        plan: plan_of(journal),
        messages: journal.messages(),
        events: journal.events(),
    })
    .into_response()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApprovalDecision {
    pub action_digest: String,
    pub approved: bool,
}

async fn resolve_approval(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(decision): Json<ApprovalDecision>,
) -> Response {
    let conv = match state.engine.conversation(&id) {
        Ok(c) => c,
        Err(e) => return engine_error(e),
    };
    match state.engine.resolve_approval(&conv, &decision.action_digest, decision.approved).await {
        Ok(()) => Json(json!({ "ok": true })).into_response(),
        Err(e) => engine_error(e),
    }
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    #[serde(default)]
    since: u64,
    /// Browsers cannot set headers on WebSocket requests.
    #[serde(default)]
    token: Option<String>,
}

/// Frames the server sends on the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerFrame {
    Event { event: WorkflowEvent },
    Pong,
    Ack { r#for: String },
    Error { r#for: String, error: String },
}

/// Frames a client may send on the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientFrame {
    Approval { action_digest: String, approved: bool },
    Cancel,
    Ping,
}

async fn stream_events(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
    ConnectInfo(peer): ConnectInfo<SocketAddr>,
    headers: HeaderMap,
    ws: WebSocketUpgrade,
) -> Response {
    let token = bearer(&headers).map(str::to_string).or(q.token.clone());
    let auth = state.pairing.authenticate(token.as_deref(), &client_id(&headers, Some(peer.ip())));
    ws.on_upgrade(move |socket| async move {
        if let Err(e) = auth {
            close(socket, CLOSE_UNAUTHENTICATED, &e.to_string()).await;
            return;
        }
        match state.engine.conversation(&id) {
            Ok(conv) => run_stream(socket, state.engine.clone(), conv, q.since).await,
            Err(e) => close(socket, CLOSE_NOT_FOUND, &e.to_string()).await,
        }
    })
}

async fn close(mut socket: WebSocket, code: u16, reason: &str) {
    let frame = CloseFrame { code, reason: reason.into() };
    let _ = socket.send(WsMessage::Close(Some(frame))).await;
}

fn frame_text(frame: &ServerFrame) -> WsMessage {
    WsMessage::Text(serde_json::to_string(frame).expect("frame serializes").into())
}

async fn send_event(socket: &mut WebSocket, last: &mut u64, event: WorkflowEvent) -> bool {
    if event.seq <= *last {
        return true;
    }
    *last = event.seq;
    socket.send(frame_text(&ServerFrame::Event { event })).await.is_ok()
}

async fn run_stream(mut socket: WebSocket, engine: Engine, conv: Arc<crate::engine::Conversation>, since: u64) {
    let (backlog, mut rx) = conv.journal().subscribe_since(since);
    let mut last = since;
    for e in backlog {
        if !send_event(&mut socket, &mut last, e).await {
            return;
        }
    }
    loop {
        tokio::select! {
            live = rx.recv() => match live {
                Ok(e) => {
                    if !send_event(&mut socket, &mut last, e).await {
                        return;
                    }
                }
                Err(RecvError::Lagged(_)) => {
                    for e in conv.journal().events_since(last) {
                        if !send_event(&mut socket, &mut last, e).await {
                            return;
                        }
                    }
                }
                Err(RecvError::Closed) => return,
            },
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(WsMessage::Text(t))) => t,
                    Some(Ok(WsMessage::Close(_))) | None | Some(Err(_)) => return,
                    Some(Ok(_)) => continue,
                };
                let reply = handle_client_frame(&engine, &conv, &text).await;
                if socket.send(frame_text(&reply)).await.is_err() {
                    return;
                }
            }
        }
    }
}

async fn handle_client_frame(engine: &Engine, conv: &crate::engine::Conversation, text: &str) -> ServerFrame {
    let frame: ClientFrame = match serde_json::from_str(text) {
        Ok(f) => f,
        Err(e) => return ServerFrame::Error { r#for: "unknown".into(), error: format!("unsupported message: {e}") },
    };
    let (what, result) = match frame {
        ClientFrame::Ping => return ServerFrame::Pong,
        ClientFrame::Cancel => ("cancel", engine.cancel(conv)),
        ClientFrame::Approval { action_digest, approved } => {
            ("approval", engine.resolve_approval(conv, &action_digest, approved).await)
        }
    };
    match result {
        Ok(()) => ServerFrame::Ack { r#for: what.into() },
        Err(e) => {
            let code = match e {
                EngineError::Approval(ApprovalError::DigestMismatch) => "digest_mismatch",
                EngineError::Approval(ApprovalError::NoPendingApproval) => "no_pending_approval",
                EngineError::NoActiveWorkflow => "no_active_workflow",
                _ => "internal",
            };
            ServerFrame::Error { r#for: what.into(), error: code.into() }
        }
    }
}

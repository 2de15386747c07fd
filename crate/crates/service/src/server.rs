//! HTTP and WebSocket endpoints over per-session owner threads.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::SinkExt;
use serde::Deserialize;
use skillgraph::formats::API_SCHEMA;
use skillgraph::{EpisodeRecord, SkillGraph, ValueCache};
use tokio::sync::{broadcast, oneshot, watch};

use crate::api::{
    Ack, CommandRequest, CreateSession, DisturbRequest, ErrorCode, ErrorPayload, GraphSummary, SessionInfo,
    SessionList, SessionSpec, StateSnapshot, StreamMessage,
};
use crate::session::{resolve_spec, Action, SessionCore, SessionError};

/// Snapshots a slow subscriber may fall behind before it sees a gap.
const STREAM_BUFFER: usize = 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub defaults: SessionSpec,
    pub max_sessions: usize,
}

/// An API error with its HTTP status.
#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub ErrorPayload);

impl ApiError {
    fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        let status = match code {
            ErrorCode::BadRequest | ErrorCode::UnknownSkill | ErrorCode::UnknownGraph => StatusCode::BAD_REQUEST,
            ErrorCode::UnknownSession => StatusCode::NOT_FOUND,
            ErrorCode::ResourceLimit => StatusCode::TOO_MANY_REQUESTS,
            ErrorCode::SessionFinished => StatusCode::CONFLICT,
        };
        ApiError(status, ErrorPayload::new(code, message))
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(ErrorCode::UnknownSession, format!("unknown session `{id}`"))
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let code = match &e {
            SessionError::BadRequest(_) => ErrorCode::BadRequest,
            SessionError::UnknownSkill(_) => ErrorCode::UnknownSkill,
            SessionError::UnknownGraph(_) => ErrorCode::UnknownGraph,
            SessionError::Finished(_) => ErrorCode::SessionFinished,
        };
        Self::new(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type Reply<T> = oneshot::Sender<T>;

enum Msg {
    Act(Action, Reply<Result<u64, SessionError>>),
    Record(Reply<EpisodeRecord>),
}

/// What subscribers see of the latest tick.
#[derive(Debug, Clone)]
struct Latest {
    snapshot: Arc<StateSnapshot>,
    text: Arc<str>,
}

#[derive(Debug, Clone)]
struct Outgoing {
    tick: u64,
    end: bool,
    text: Arc<str>,
}

struct SessionHandle {
    id: String,
    spec: SessionSpec,
    tx: mpsc::Sender<Msg>,
    latest: watch::Receiver<Option<Latest>>,
    finished: watch::Receiver<Option<u64>>,
    stream: broadcast::Sender<Outgoing>,
}

impl SessionHandle {
    fn send(&self, msg: Msg) -> Result<(), ApiError> {
        self.tx.send(msg).map_err(|_| ApiError::unknown_session(&self.id))
    }
}

struct Inner {
    graph: Arc<SkillGraph>,
    cache: Arc<ValueCache>,
    cfg: ServiceConfig,
    summary: GraphSummary,
    sessions: Mutex<BTreeMap<String, Arc<SessionHandle>>>,
    next_id: AtomicU64,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct Service {
    inner: Arc<Inner>,
}

impl Service {
    pub fn new(graph: Arc<SkillGraph>, cfg: ServiceConfig) -> Self {
        Self {
            inner: Arc::new(Inner {
                summary: GraphSummary::of(&graph),
                graph,
                cache: Arc::new(ValueCache::new()),
                cfg,
                sessions: Mutex::new(BTreeMap::new()),
                next_id: AtomicU64::new(1),
            }),
        }
    }

    pub fn graph(&self) -> &Arc<SkillGraph> {
        &self.inner.graph
    }

    pub fn cache(&self) -> &Arc<ValueCache> {
        &self.inner.cache
    }

    pub fn router(self) -> Router {
        Router::new()
            .route("/api/graph", get(graph_summary))
            .route("/api/sessions", get(list_sessions).post(create_session))
            .route("/api/sessions/{id}", get(session_info).delete(delete_session))
            .route("/api/sessions/{id}/command", post(post_command))
            .route("/api/sessions/{id}/disturb", post(post_disturb))
            .route("/api/sessions/{id}/estop", post(post_estop))
            .route("/api/sessions/{id}/stream", get(stream))
            .route("/api/sessions/{id}/episode", get(episode))
            .with_state(self)
    }

    fn session(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.inner
            .sessions
            .lock()
            .expect("session lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    /// Starts a session thread and registers it.
    pub fn create(&self, req: &CreateSession) -> Result<String, ApiError> {
        let spec = resolve_spec(&self.inner.graph, req, &self.inner.cfg.defaults)?;
        let mut sessions = self.inner.sessions.lock().expect("session lock");
        if sessions.len() >= self.inner.cfg.max_sessions {
            return Err(ApiError::new(
                ErrorCode::ResourceLimit,
                format!("at most {} sessions", self.inner.cfg.max_sessions),
            ));
        }
        let id = format!("s{}", self.inner.next_id.fetch_add(1, Ordering::Relaxed));
        let core = SessionCore::new(&id, self.inner.graph.clone(), self.inner.cache.clone(), spec.clone())?;
        let (tx, rx) = mpsc::channel();
        let (latest_tx, latest) = watch::channel(None);
        let (finished_tx, finished) = watch::channel(None);
        let (stream, _) = broadcast::channel(STREAM_BUFFER);
        let out = stream.clone();
        thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || owner_loop(core, rx, latest_tx, finished_tx, out))
            .map_err(|e| ApiError::new(ErrorCode::ResourceLimit, format!("cannot start session: {e}")))?;
        sessions.insert(
            id.clone(),
            Arc::new(SessionHandle {
                id: id.clone(),
                spec,
                tx,
                latest,
                finished,
                stream,
            }),
        );
        tracing::info!(session = %id, "session created");
        Ok(id)
    }
}

fn encode(msg: &StreamMessage) -> Arc<str> {
    serde_json::to_string(msg).expect("stream messages serialize").into()
}

/// Owns one session: drains queued actions at each tick boundary, steps,
/// and publishes the snapshot. Exits when the service drops the session.
fn owner_loop(
    mut core: SessionCore,
    rx: mpsc::Receiver<Msg>,
    latest: watch::Sender<Option<Latest>>,
    finished: watch::Sender<Option<u64>>,
    stream: broadcast::Sender<Outgoing>,
) {
    let period = (core.spec().tick_hz > 0.0).then(|| Duration::from_secs_f64(1.0 / core.spec().tick_hz));
    let mut pending: Vec<(Action, Reply<Result<u64, SessionError>>)> = Vec::new();
    let mut deadline = Instant::now();
    let take = |msg: Msg, core: &SessionCore, pending: &mut Vec<_>| match msg {
        Msg::Act(a, reply) => pending.push((a, reply)),
        Msg::Record(reply) => {
            let _ = reply.send(core.record());
        }
    };
    loop {
        if core.finished() {
            // Keep answering until the session is deleted.
            for (a, reply) in pending.drain(..) {
                let _ = reply.send(core.apply(&[a]).remove(0));
            }
            match rx.recv() {
                Ok(msg) => take(msg, &core, &mut pending),
                Err(_) => return,
            }
            continue;
        }
        if let Some(p) = period {
            loop {
                let now = Instant::now();
                if now >= deadline {
                    break;
                }
                match rx.recv_timeout(deadline - now) {
                    Ok(msg) => take(msg, &core, &mut pending),
                    Err(mpsc::RecvTimeoutError::Timeout) => break,
                    Err(mpsc::RecvTimeoutError::Disconnected) => return,
                }
            }
            // Fall behind rather than burst to catch up.
            deadline = (deadline + p).max(Instant::now());
        }
        loop {
            match rx.try_recv() {
                Ok(msg) => take(msg, &core, &mut pending),
                Err(mpsc::TryRecvError::Empty) => break,
                Err(mpsc::TryRecvError::Disconnected) => return,
            }
        }
        let (actions, replies): (Vec<Action>, Vec<_>) = pending.drain(..).unzip();
        for (r, reply) in core.apply(&actions).into_iter().zip(replies) {
            let _ = reply.send(r);
        }
        let snapshot = Arc::new(core.step());
        let text = encode(&StreamMessage::Snapshot((*snapshot).clone()));
        let tick = snapshot.tick;
        latest.send_replace(Some(Latest {
            snapshot,
            text: text.clone(),
        }));
        let _ = stream.send(Outgoing { tick, end: false, text });
        if core.finished() {
            finished.send_replace(Some(core.tick()));
            let _ = stream.send(Outgoing {
                tick: core.tick(),
                end: true,
                text: encode(&StreamMessage::end(core.tick())),
            });
        }
        if period.is_none() {
            thread::yield_now();
        }
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &str) -> Result<T, ApiError> {
    let body = if body.trim().is_empty() { "{}" } else { body };
    serde_json::from_str(body).map_err(|e| ApiError::new(ErrorCode::BadRequest, format!("invalid payload: {e}")))
}

async fn graph_summary(State(svc): State<Service>) -> Json<GraphSummary> {
    Json(svc.inner.summary.clone())
}

async fn list_sessions(State(svc): State<Service>) -> Json<SessionList> {
    let ids = svc
        .inner
        .sessions
        .lock()
        .expect("session lock")
        .keys()
        .cloned()
        .collect();
    Json(SessionList::new(ids))
}

async fn create_session(State(svc): State<Service>, body: String) -> Result<Response, ApiError> {
    let req: CreateSession = parse(&body)?;
    let id = svc.create(&req)?;
    let h = svc.session(&id)?;
    Ok((StatusCode::CREATED, Json(info(&h, &svc))).into_response())
}

fn info(h: &SessionHandle, svc: &Service) -> SessionInfo {
    SessionInfo {
        schema: API_SCHEMA.to_string(),
        session: h.id.clone(),
        graph_digest: svc.inner.graph.digest().to_string(),
        spec: h.spec.clone(),
        finished: h.finished.borrow().is_some(),
        subscribers: h.stream.receiver_count(),
        snapshot: h.latest.borrow().as_ref().map(|l| (*l.snapshot).clone()),
    }
}

async fn session_info(State(svc): State<Service>, Path(id): Path<String>) -> Result<Json<SessionInfo>, ApiError> {
    let h = svc.session(&id)?;
    Ok(Json(info(&h, &svc)))
}

async fn delete_session(State(svc): State<Service>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    svc.inner
        .sessions
        .lock()
        .expect("session lock")
        .remove(&id)
        .ok_or_else(|| ApiError::unknown_session(&id))?;
    tracing::info!(session = %id, "session deleted");
    Ok(StatusCode::NO_CONTENT)
}

async fn act(svc: &Service, id: &str, action: Action) -> Result<Json<Ack>, ApiError> {
    let h = svc.session(id)?;
    action.validate(&svc.inner.graph)?;
    let kind = action.kind();
    let (reply, rx) = oneshot::channel();
    h.send(Msg::Act(action, reply))?;
    let tick = rx.await.map_err(|_| ApiError::unknown_session(id))??;
    Ok(Json(Ack::new(id, kind, tick)))
}

async fn post_command(State(svc): State<Service>, Path(id): Path<String>, body: String) -> Result<Json<Ack>, ApiError> {
    svc.session(&id)?;
    let req: CommandRequest = parse(&body)?;
    crate::api::check_schema(&req.schema).map_err(|m| ApiError::new(ErrorCode::BadRequest, m))?;
    act(&svc, &id, Action::Command(req.skill)).await
}

async fn post_disturb(State(svc): State<Service>, Path(id): Path<String>, body: String) -> Result<Json<Ack>, ApiError> {
    svc.session(&id)?;
    let req: DisturbRequest = parse(&body)?;
    crate::api::check_schema(&req.schema).map_err(|m| ApiError::new(ErrorCode::BadRequest, m))?;
    act(&svc, &id, Action::Disturb(req.delta)).await
}

async fn post_estop(State(svc): State<Service>, Path(id): Path<String>) -> Result<Json<Ack>, ApiError> {
    act(&svc, &id, Action::Estop).await
}

async fn episode(State(svc): State<Service>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let h = svc.session(&id)?;
    let (reply, rx) = oneshot::channel();
    h.send(Msg::Record(reply))?;
    let rec = rx.await.map_err(|_| ApiError::unknown_session(&id))?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], rec.to_text()).into_response())
}

#[derive(Debug, Deserialize)]
struct StreamQuery {
    /// Last tick the subscriber saw before reconnecting.
    since: Option<u64>,
}

async fn stream(
    State(svc): State<Service>,
    Path(id): Path<String>,
    Query(q): Query<StreamQuery>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    let h = svc.session(&id)?;
    // Subscribe before reading the latest tick so nothing falls in between.
    let rx = h.stream.subscribe();
    let latest = h.latest.borrow().clone();
    let finished = *h.finished.borrow();
    Ok(ws.on_upgrade(move |socket| forward(socket, rx, latest, finished, q.since)))
}

async fn send_text(socket: &mut WebSocket, text: &str) -> bool {
    socket.send(Message::Text(text.to_string().into())).await.is_ok()
}

async fn forward(
    mut socket: WebSocket,
    mut rx: broadcast::Receiver<Outgoing>,
    latest: Option<Latest>,
    finished: Option<u64>,
    since: Option<u64>,
) {
    let mut last = since;
    let emit = async |socket: &mut WebSocket, last: &mut Option<u64>, tick: u64, text: &str| -> bool {
        if last.is_some_and(|l| tick <= l) {
            return true;
        }
        let expected = last.map_or(tick, |l| l + 1);
        if tick > expected && !send_text(socket, &encode(&StreamMessage::gap(expected, tick - 1))).await {
            return false;
        }
        *last = Some(tick);
        send_text(socket, text).await
    };
    if let Some(l) = &latest {
        if !emit(&mut socket, &mut last, l.snapshot.tick, &l.text).await {
            return;
        }
    }
    if let Some(end) = finished {
        let _ = send_text(&mut socket, &encode(&StreamMessage::end(end))).await;
        let _ = socket.close().await;
        return;
    }
    loop {
        tokio::select! {
            item = rx.recv() => match item {
                Ok(o) if o.end => {
                    let _ = send_text(&mut socket, &o.text).await;
                    let _ = socket.close().await;
                    return;
                }
                Ok(o) => {
                    if !emit(&mut socket, &mut last, o.tick, &o.text).await {
                        return;
                    }
                }
                // The next snapshot reports the gap.
                Err(broadcast::error::RecvError::Lagged(_)) => continue,
                Err(broadcast::error::RecvError::Closed) => {
                    let _ = socket.close().await;
                    return;
                }
            },
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => return,
                Some(Ok(_)) => {}
            },
        }
    }
}

/// Serves the API until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, service: Service) -> std::io::Result<()> {
    axum::serve(listener, service.router()).await
}

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use flowclass_core::game::{
    AccessCode, AdvanceMode, AnswerId, GameError, GameId, GamePhase, GameService, NewGame, SessionPhase, SessionToken,
};
use flowclass_core::{Diagram, NodePath};
use futures::Stream;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::watch;

use crate::error::ApiError;
use crate::events::{Audience, Batch, EventKind, EventMessage, Hub};
use crate::store::Store;

pub const SESSION_HEADER: &str = "x-session-token";

pub struct AppState {
    core: Mutex<Core>,
    pub hub: Hub,
    secret: String,
    max_body_bytes: usize,
    shutdown: watch::Sender<bool>,
}

struct Core {
    service: GameService,
    store: Store,
    /// Set after a failed write; the in-memory state is then ahead of the
    /// disk and no further mutation is accepted.
    failed: bool,
}

impl AppState {
    pub fn new(service: GameService, store: Store, hub: Hub, secret: String, max_body_bytes: usize) -> Self {
        Self {
            core: Mutex::new(Core {
                service,
                store,
                failed: false,
            }),
            hub,
            secret,
            max_body_bytes,
            shutdown: watch::channel(false).0,
        }
    }

    /// Ends every open event stream.
    pub fn close_streams(&self) {
        self.shutdown.send_replace(true);
    }

    fn read<T>(&self, f: impl FnOnce(&GameService) -> T) -> T {
        f(&self.core.lock().expect("core lock").service)
    }

    /// Runs one mutating operation: apply, persist, publish, in that order,
    /// under one lock so that events leave in commit order.
    fn commit<T>(
        &self,
        op: impl FnOnce(&mut GameService) -> Result<T, GameError>,
        publish: impl FnOnce(&GameService, &T, &Hub),
    ) -> Result<T, ApiError> {
        let mut guard = self.core.lock().expect("core lock");
        let core = &mut *guard;
        if core.failed {
            return Err(ApiError::storage("storage failed earlier; restart the server"));
        }
        let out = op(&mut core.service)?;
        let records = core.service.take_journal();
        if let Err(e) = core.store.append(&records) {
            core.failed = true;
            tracing::error!(error = %e, "journal append failed");
            return Err(ApiError::storage(e));
        }
        if core.store.snapshot_due() {
            if let Err(e) = core.store.snapshot(core.service.state()) {
                // the journal still holds everything; retry at the next commit
                tracing::warn!(error = %e, "snapshot failed");
            }
        }
        publish(&core.service, &out, &self.hub);
        Ok(out)
    }
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    let limit = state.max_body_bytes;
    Router::new()
        .route("/health", get(health))
        .route("/api/games", get(list_games))
        .route("/api/join", post(join))
        .route("/api/session/state", get(session_state))
        .route("/api/session/diagram", post(submit_diagram))
        .route("/api/session/paths", post(submit_paths))
        .route("/api/session/phase2", get(phase2))
        .route("/api/session/events", get(session_events))
        .route("/api/session/events/poll", get(session_poll))
        .route("/api/prof/games", post(create_game).get(all_games))
        .route("/api/prof/games/{id}/open", post(open_game))
        .route("/api/prof/games/{id}/advance", post(advance_game))
        .route("/api/prof/games/{id}/close", post(close_game))
        .route("/api/prof/games/{id}/monitor", get(monitor))
        .route("/api/prof/answers", get(list_answers))
        .route("/api/prof/answers/{id}", get(get_answer).delete(delete_answer))
        .route("/api/prof/events", get(prof_events))
        .route("/api/prof/events/poll", get(prof_poll))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

// ---- extractors ------------------------------------------------------------

/// JSON body with protocol-shaped errors, including 413 for oversized bodies.
pub struct JsonBody<T>(pub T);

impl<T: DeserializeOwned, S: Send + Sync> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e: BytesRejection| {
            if e.status() == StatusCode::PAYLOAD_TOO_LARGE {
                ApiError::new(
                    StatusCode::PAYLOAD_TOO_LARGE,
                    "body_too_large",
                    "request body is too large",
                )
            } else {
                ApiError::malformed(e.body_text())
            }
        })?;
        serde_json::from_slice(&bytes)
            .map(JsonBody)
            .map_err(|e| ApiError::malformed(e.to_string()))
    }
}

/// Bearer secret, or `?secret=` for clients that cannot set headers.
pub struct Professor;

impl FromRequestParts<Shared> for Professor {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, Self::Rejection> {
        let header = parts
            .headers
            .get(axum::http::header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::to_owned);
        let given = header.or_else(|| query_param(parts, "secret"));
        match given {
            Some(s) if same_secret(&s, &state.secret) => Ok(Professor),
            Some(_) => Err(ApiError::unauthorized("wrong professor secret")),
            None => Err(ApiError::unauthorized("professor secret required")),
        }
    }
}

fn same_secret(a: &str, b: &str) -> bool {
    a.len() == b.len() && a.bytes().zip(b.bytes()).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// `X-Session-Token` header, or `?token=`.
pub struct Student(pub SessionToken);

impl FromRequestParts<Shared> for Student {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &Shared) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(SESSION_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::to_owned)
            .or_else(|| query_param(parts, "token"))
            .ok_or_else(|| ApiError::unauthorized("session token required"))?;
        let token = SessionToken::new(token);
        state.read(|svc| svc.session(&token).map(|_| ()))?;
        Ok(Student(token))
    }
}

fn query_param(parts: &Parts, key: &str) -> Option<String> {
    let Query(mut params) = Query::<HashMap<String, String>>::try_from_uri(&parts.uri).ok()?;
    params.remove(key)
}

// ---- event payloads ---------------------------------------------------------

fn counters(svc: &GameService, game_id: &GameId) -> Value {
    match svc.monitor(game_id) {
        Ok(m) => json!({
            "game_number": m.game_number,
            "phase": m.phase,
            "players_count": m.players_count,
            "diagrams_submitted": m.diagrams_submitted,
            "paths_submitted": m.paths_submitted,
            "paths_without_diagram": m.paths_without_diagram,
        }),
        Err(_) => Value::Null,
    }
}

fn monitor_update(svc: &GameService, hub: &Hub, game_id: &GameId) {
    hub.publish(
        Audience::Professor,
        EventKind::MonitorUpdate,
        game_id,
        counters(svc, game_id),
    );
}

fn phase_advanced(svc: &GameService, hub: &Hub, token: &SessionToken) {
    let Ok(session) = svc.session(token) else { return };
    let Ok(game) = svc.game(&session.game_id) else { return };
    hub.publish(
        Audience::Session(token.clone()),
        EventKind::PhaseAdvanced,
        &game.game_id,
        json!({ "session_phase": session.session_phase, "reference_diagram": game.reference_diagram }),
    );
}

// ---- student routes ----------------------------------------------------------

async fn health(State(state): State<Shared>) -> Json<Value> {
    Json(json!({ "status": "ok", "epoch": state.hub.epoch() }))
}

#[derive(Deserialize)]
struct CodeQuery {
    code: Option<String>,
}

async fn list_games(State(state): State<Shared>, Query(q): Query<CodeQuery>) -> Json<Value> {
    let games = state.read(|svc| svc.list_games(q.code.as_deref().unwrap_or("")));
    Json(json!({ "games": games }))
}

#[derive(Serialize, Deserialize)]
pub struct JoinRequest {
    pub code: String,
    pub student_id: String,
    pub game_number: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JoinResponse {
    pub session_token: SessionToken,
    pub game_id: GameId,
    pub game_number: u32,
    pub session_phase: SessionPhase,
    pub resumed: bool,
}

async fn join(
    State(state): State<Shared>,
    JsonBody(req): JsonBody<JoinRequest>,
) -> Result<Json<JoinResponse>, ApiError> {
    let joined = state.commit(
        |svc| svc.join(&req.code, &req.student_id, req.game_number),
        |svc, j, hub| {
            if !j.resumed {
                monitor_update(svc, hub, &j.game_id);
                if j.session_phase == SessionPhase::Phase2 {
                    phase_advanced(svc, hub, &j.session_token);
                }
            }
        },
    )?;
    Ok(Json(JoinResponse {
        session_token: joined.session_token,
        game_id: joined.game_id,
        game_number: req.game_number,
        session_phase: joined.session_phase,
        resumed: joined.resumed,
    }))
}

async fn session_state(State(state): State<Shared>, Student(token): Student) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(state.read(|svc| svc.session_view(&token))?))
}

#[derive(Serialize, Deserialize)]
pub struct DiagramSubmission {
    pub diagram: Diagram,
}

async fn submit_diagram(
    State(state): State<Shared>,
    Student(token): Student,
    JsonBody(body): JsonBody<DiagramSubmission>,
) -> Result<impl IntoResponse, ApiError> {
    let accepted = state.commit(
        |svc| svc.submit_diagram(&token, body.diagram),
        |svc, acc, hub| {
            if let Ok(s) = svc.session(&token) {
                monitor_update(svc, hub, &s.game_id);
            }
            if acc.session_phase == SessionPhase::Phase2 {
                phase_advanced(svc, hub, &token);
            }
        },
    )?;
    Ok(Json(accepted))
}

#[derive(Serialize, Deserialize)]
pub struct PathsSubmission {
    pub paths: Vec<NodePath>,
}

async fn submit_paths(
    State(state): State<Shared>,
    Student(token): Student,
    JsonBody(body): JsonBody<PathsSubmission>,
) -> Result<impl IntoResponse, ApiError> {
    let accepted = state.commit(
        |svc| svc.submit_paths(&token, body.paths),
        |svc, acc, hub| {
            if !acc.repeated {
                if let Ok(s) = svc.session(&token) {
                    monitor_update(svc, hub, &s.game_id);
                }
            }
        },
    )?;
    Ok(Json(accepted))
}

async fn phase2(State(state): State<Shared>, Student(token): Student) -> Result<impl IntoResponse, ApiError> {
    let diagram = state.read(|svc| svc.phase2_payload(&token).cloned())?;
    Ok(Json(json!({ "reference_diagram": diagram })))
}

#[derive(Deserialize)]
struct StreamQuery {
    last_event_id: Option<u64>,
    after: Option<u64>,
}

fn last_event_id(headers: &HeaderMap, q: &StreamQuery) -> Option<u64> {
    headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse().ok())
        .or(q.last_event_id)
        .or(q.after)
}

async fn session_events(
    State(state): State<Shared>,
    Student(token): Student,
    headers: HeaderMap,
    Query(q): Query<StreamQuery>,
) -> impl IntoResponse {
    let after = last_event_id(&headers, &q);
    event_stream(state, Audience::Session(token), after)
}

#[derive(Serialize, Deserialize)]
pub struct PollResponse {
    #[serde(flatten)]
    pub batch: Batch,
    /// Pass back as `after` on the next poll.
    pub cursor: u64,
    /// Current state for sessions; monitor counters are not included for the
    /// professor, who reads them from the monitor endpoint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<Value>,
}

fn poll(state: &AppState, who: &Audience, after: Option<u64>) -> (Batch, u64) {
    let batch = state.hub.read(who, after);
    let base = u64::from(state.hub.epoch()) << 32;
    let cursor = match batch.events.last() {
        Some(e) => e.sequence_number,
        None if batch.resync => base,
        None => after.unwrap_or(base),
    };
    (batch, cursor)
}

async fn session_poll(
    State(state): State<Shared>,
    Student(token): Student,
    Query(q): Query<StreamQuery>,
) -> Result<Json<PollResponse>, ApiError> {
    let (batch, cursor) = poll(&state, &Audience::Session(token.clone()), q.after.or(q.last_event_id));
    let view = state.read(|svc| svc.session_view(&token))?;
    Ok(Json(PollResponse {
        batch,
        cursor,
        state: Some(serde_json::to_value(view).expect("serializable")),
    }))
}

// ---- professor routes ---------------------------------------------------------

#[derive(Serialize, Deserialize)]
pub struct CreateGameRequest {
    pub reference_diagram: Diagram,
    pub reference_paths: Vec<NodePath>,
    /// Generated when absent.
    #[serde(default)]
    pub code: Option<String>,
    #[serde(default = "default_mode")]
    pub advance_mode: AdvanceMode,
}

fn default_mode() -> AdvanceMode {
    AdvanceMode::ProfessorTriggered
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateGameResponse {
    pub game_id: GameId,
    pub game_number: u32,
    pub reference_cc: u32,
    pub code: String,
}

async fn create_game(
    State(state): State<Shared>,
    _: Professor,
    JsonBody(req): JsonBody<CreateGameRequest>,
) -> Result<impl IntoResponse, ApiError> {
    let code = match req.code {
        Some(c) => c,
        None => AccessCode::generate(&mut rand::rng()).to_string(),
    };
    let created = state.commit(
        |svc| {
            svc.create_game(NewGame {
                reference_diagram: req.reference_diagram,
                reference_paths: req.reference_paths,
                code: code.clone(),
                advance_mode: req.advance_mode,
            })
        },
        |_, _, _| {},
    )?;
    let code = state.read(|svc| svc.game(&created.game_id).map(|g| g.code.to_string()))?;
    Ok((
        StatusCode::CREATED,
        Json(CreateGameResponse {
            game_id: created.game_id,
            game_number: created.game_number,
            reference_cc: created.reference_cc,
            code,
        }),
    ))
}

async fn all_games(State(state): State<Shared>, _: Professor) -> Json<Value> {
    Json(json!({ "games": state.read(|svc| svc.games()) }))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseResponse {
    pub game_id: GameId,
    pub phase: GamePhase,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moved: Option<usize>,
}

async fn open_game(
    State(state): State<Shared>,
    _: Professor,
    Path(id): Path<String>,
) -> Result<Json<PhaseResponse>, ApiError> {
    let id = GameId::new(id);
    let phase = state.commit(
        |svc| svc.open_game(&id),
        |svc, phase, hub| {
            hub.publish(
                Audience::Professor,
                EventKind::GameOpened,
                &id,
                json!({ "phase": phase }),
            );
            monitor_update(svc, hub, &id);
        },
    )?;
    Ok(Json(PhaseResponse {
        game_id: id,
        phase,
        moved: None,
    }))
}

async fn advance_game(
    State(state): State<Shared>,
    _: Professor,
    Path(id): Path<String>,
) -> Result<Json<PhaseResponse>, ApiError> {
    let id = GameId::new(id);
    let advanced = state.commit(
        |svc| svc.advance_game(&id),
        |svc, adv, hub| {
            for token in &adv.moved {
                phase_advanced(svc, hub, token);
            }
            hub.publish(
                Audience::Professor,
                EventKind::PhaseAdvanced,
                &id,
                json!({ "phase": GamePhase::Phase2Open, "moved": adv.moved.len() }),
            );
            monitor_update(svc, hub, &id);
        },
    )?;
    Ok(Json(PhaseResponse {
        game_id: id,
        phase: GamePhase::Phase2Open,
        moved: Some(advanced.moved.len()),
    }))
}

async fn close_game(
    State(state): State<Shared>,
    _: Professor,
    Path(id): Path<String>,
) -> Result<Json<PhaseResponse>, ApiError> {
    let id = GameId::new(id);
    let phase = state.commit(
        |svc| svc.close_game(&id),
        |svc, phase, hub| {
            let payload = json!({ "phase": phase });
            for s in svc.state().sessions.values().filter(|s| s.game_id == id) {
                hub.publish(
                    Audience::Session(s.session_token.clone()),
                    EventKind::GameClosed,
                    &id,
                    payload.clone(),
                );
            }
            hub.publish(Audience::Professor, EventKind::GameClosed, &id, payload);
            monitor_update(svc, hub, &id);
        },
    )?;
    Ok(Json(PhaseResponse {
        game_id: id,
        phase,
        moved: None,
    }))
}

async fn monitor(
    State(state): State<Shared>,
    _: Professor,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(state.read(|svc| svc.monitor(&GameId::new(id)))?))
}

#[derive(Deserialize)]
struct AnswersQuery {
    game_id: Option<String>,
}

async fn list_answers(State(state): State<Shared>, _: Professor, Query(q): Query<AnswersQuery>) -> Json<Value> {
    let game = q.game_id.map(GameId::new);
    Json(json!({ "answers": state.read(|svc| svc.list_answers(game.as_ref())) }))
}

async fn get_answer(
    State(state): State<Shared>,
    _: Professor,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(state.read(|svc| svc.answer(&AnswerId::new(id)).cloned())?))
}

async fn delete_answer(
    State(state): State<Shared>,
    _: Professor,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    let id = AnswerId::new(id);
    let game = state.read(|svc| svc.answer(&id).map(|a| a.game_id.clone()))?;
    state.commit(
        |svc| svc.delete_answer(&id),
        |svc, _, hub| monitor_update(svc, hub, &game),
    )?;
    Ok(Json(json!({ "deleted": id })))
}

async fn prof_events(
    State(state): State<Shared>,
    _: Professor,
    headers: HeaderMap,
    Query(q): Query<StreamQuery>,
) -> impl IntoResponse {
    let after = last_event_id(&headers, &q);
    event_stream(state, Audience::Professor, after)
}

async fn prof_poll(State(state): State<Shared>, _: Professor, Query(q): Query<StreamQuery>) -> Json<PollResponse> {
    let (batch, cursor) = poll(&state, &Audience::Professor, q.after.or(q.last_event_id));
    Json(PollResponse {
        batch,
        cursor,
        state: None,
    })
}

// ---- streaming -----------------------------------------------------------------

fn sse_event(e: &EventMessage) -> Event {
    Event::default()
        .id(e.sequence_number.to_string())
        .event(e.kind.as_str())
        .data(serde_json::to_string(e).expect("serializable"))
}

fn resync_event(epoch: u32) -> Event {
    Event::default()
        .event("resync")
        .data(json!({ "type": "resync", "epoch": epoch }).to_string())
}

struct Cursor {
    state: Shared,
    who: Audience,
    after: Option<u64>,
    pending: VecDeque<Event>,
    published: watch::Receiver<u64>,
    shutdown: watch::Receiver<bool>,
}

fn event_stream(
    state: Shared,
    who: Audience,
    after: Option<u64>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let cursor = Cursor {
        published: state.hub.watch(),
        shutdown: state.shutdown.subscribe(),
        state,
        who,
        after,
        pending: VecDeque::new(),
    };
    let stream = futures::stream::unfold(cursor, |mut c| async move {
        loop {
            if *c.shutdown.borrow() {
                return None;
            }
            if let Some(ev) = c.pending.pop_front() {
                return Some((Ok(ev), c));
            }
            // mark the current version seen before reading, so nothing published
            // after the read can be missed
            c.published.borrow_and_update();
            let batch = c.state.hub.read(&c.who, c.after);
            if batch.resync {
                c.pending.push_back(resync_event(c.state.hub.epoch()));
                c.after = Some(u64::from(c.state.hub.epoch()) << 32);
            }
            for e in &batch.events {
                c.after = Some(e.sequence_number);
                c.pending.push_back(sse_event(e));
            }
            if !c.pending.is_empty() {
                continue;
            }
            tokio::select! {
                changed = c.published.changed() => {
                    if changed.is_err() {
                        return None;
                    }
                }
                _ = c.shutdown.changed() => {}
            }
        }
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}

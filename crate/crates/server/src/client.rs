//! Typed client for the wire protocol, used by the simulator and the tests.
//!
//! Requests are retried only when the connection could not be established,
//! so a retried request never reached the server.

use std::pin::Pin;
use std::time::Duration;

use flowclass_core::game::{
    Answer, AnswerId, AnswerSummary, DiagramAccepted, GameId, GameListing, MonitorSnapshot, PathsAccepted,
    SessionToken, SessionView,
};
use flowclass_core::{Diagram, NodePath};
use futures::{Stream, StreamExt};
use reqwest::{Method, RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::time::Instant;

use crate::api::{
    CreateGameRequest, CreateGameResponse, JoinRequest, JoinResponse, PhaseResponse, PollResponse, SESSION_HEADER,
};
use crate::error::ErrorBody;

pub type EventStream = Pin<Box<dyn Stream<Item = Result<SseFrame, ClientError>> + Send>>;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("{status}: {} ({})", .body.error.code, .body.error.message)]
    Api { status: StatusCode, body: ErrorBody },
    #[error("unexpected {status} response: {text}")]
    Unexpected { status: StatusCode, text: String },
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.error.code),
            _ => None,
        }
    }

    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } | ClientError::Unexpected { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status(),
        }
    }
}

#[derive(Clone)]
pub struct Client {
    http: reqwest::Client,
    base: String,
    secret: Option<String>,
    /// How long to keep retrying refused connections.
    pub connect_patience: Duration,
}

impl Client {
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            http: reqwest::Client::new(),
            base: base.into().trim_end_matches('/').to_owned(),
            secret: None,
            connect_patience: Duration::from_secs(20),
        }
    }

    pub fn professor(base: impl Into<String>, secret: impl Into<String>) -> Self {
        Self {
            secret: Some(secret.into()),
            ..Self::new(base)
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn request(&self, method: Method, path: &str) -> RequestBuilder {
        let rb = self.http.request(method, format!("{}{path}", self.base));
        match &self.secret {
            Some(s) => rb.bearer_auth(s),
            None => rb,
        }
    }

    /// Sends, retrying refused connections with backoff.
    pub async fn send(&self, build: impl Fn() -> RequestBuilder) -> Result<reqwest::Response, ClientError> {
        let deadline = Instant::now() + self.connect_patience;
        let mut wait = Duration::from_millis(25);
        loop {
            match build().send().await {
                Err(e) if e.is_connect() && Instant::now() < deadline => {
                    tokio::time::sleep(wait).await;
                    wait = (wait * 2).min(Duration::from_millis(400));
                }
                other => return Ok(other?),
            }
        }
    }

    /// Raw status and body, for transcript tests.
    pub async fn raw(
        &self,
        method: Method,
        path: &str,
        headers: &[(&str, &str)],
        body: Option<&str>,
    ) -> Result<(StatusCode, String), ClientError> {
        let resp = self
            .send(|| {
                let mut rb = self.request(method.clone(), path);
                for (k, v) in headers {
                    rb = rb.header(*k, *v);
                }
                if let Some(b) = body {
                    rb = rb.header("content-type", "application/json").body(b.to_owned());
                }
                rb
            })
            .await?;
        let status = resp.status();
        Ok((status, resp.text().await?))
    }

    async fn call<T: DeserializeOwned>(&self, build: impl Fn() -> RequestBuilder) -> Result<T, ClientError> {
        let resp = self.send(build).await?;
        let status = resp.status();
        let text = resp.text().await?;
        if status.is_success() {
            serde_json::from_str(&text).map_err(|_| ClientError::Unexpected { status, text })
        } else {
            match serde_json::from_str::<ErrorBody>(&text) {
                Ok(body) => Err(ClientError::Api { status, body }),
                Err(_) => Err(ClientError::Unexpected { status, text }),
            }
        }
    }

    fn session(&self, method: Method, path: &str, token: &SessionToken) -> RequestBuilder {
        self.request(method, path).header(SESSION_HEADER, token.as_str())
    }

    // ---- student ----

    pub async fn health(&self) -> Result<Value, ClientError> {
        self.call(|| self.request(Method::GET, "/health")).await
    }

    pub async fn list_games(&self, code: &str) -> Result<Vec<GameListing>, ClientError> {
        #[derive(Deserialize)]
        struct Games {
            games: Vec<GameListing>,
        }
        let g: Games = self
            .call(|| self.request(Method::GET, "/api/games").query(&[("code", code)]))
            .await?;
        Ok(g.games)
    }

    pub async fn join(&self, code: &str, student_id: &str, game_number: u32) -> Result<JoinResponse, ClientError> {
        let body = JoinRequest {
            code: code.into(),
            student_id: student_id.into(),
            game_number,
        };
        self.call(|| self.request(Method::POST, "/api/join").json(&body)).await
    }

    pub async fn submit_diagram(
        &self,
        token: &SessionToken,
        diagram: &Diagram,
    ) -> Result<DiagramAccepted, ClientError> {
        let body = json!({ "diagram": diagram });
        self.call(|| self.session(Method::POST, "/api/session/diagram", token).json(&body))
            .await
    }

    pub async fn submit_paths(&self, token: &SessionToken, paths: &[NodePath]) -> Result<PathsAccepted, ClientError> {
        let body = json!({ "paths": paths });
        self.call(|| self.session(Method::POST, "/api/session/paths", token).json(&body))
            .await
    }

    pub async fn session_state(&self, token: &SessionToken) -> Result<SessionView, ClientError> {
        self.call(|| self.session(Method::GET, "/api/session/state", token))
            .await
    }

    pub async fn phase2(&self, token: &SessionToken) -> Result<Diagram, ClientError> {
        #[derive(Deserialize)]
        struct P {
            reference_diagram: Diagram,
        }
        let p: P = self
            .call(|| self.session(Method::GET, "/api/session/phase2", token))
            .await?;
        Ok(p.reference_diagram)
    }

    pub async fn poll_session(&self, token: &SessionToken, after: Option<u64>) -> Result<PollResponse, ClientError> {
        self.call(|| with_after(self.session(Method::GET, "/api/session/events/poll", token), after))
            .await
    }

    /// Opens the session's event stream.
    pub async fn session_events(
        &self,
        token: &SessionToken,
        last_event_id: Option<u64>,
    ) -> Result<EventStream, ClientError> {
        self.open_stream(
            || self.session(Method::GET, "/api/session/events", token),
            last_event_id,
        )
        .await
    }

    // ---- professor ----

    pub async fn create_game(&self, req: &CreateGameRequest) -> Result<CreateGameResponse, ClientError> {
        self.call(|| self.request(Method::POST, "/api/prof/games").json(req))
            .await
    }

    pub async fn games(&self) -> Result<Value, ClientError> {
        self.call(|| self.request(Method::GET, "/api/prof/games")).await
    }

    pub async fn open_game(&self, id: &GameId) -> Result<PhaseResponse, ClientError> {
        self.call(|| self.request(Method::POST, &format!("/api/prof/games/{id}/open")))
            .await
    }

    pub async fn advance_game(&self, id: &GameId) -> Result<PhaseResponse, ClientError> {
        self.call(|| self.request(Method::POST, &format!("/api/prof/games/{id}/advance")))
            .await
    }

    pub async fn close_game(&self, id: &GameId) -> Result<PhaseResponse, ClientError> {
        self.call(|| self.request(Method::POST, &format!("/api/prof/games/{id}/close")))
            .await
    }

    pub async fn monitor(&self, id: &GameId) -> Result<MonitorSnapshot, ClientError> {
        self.call(|| self.request(Method::GET, &format!("/api/prof/games/{id}/monitor")))
            .await
    }

    pub async fn list_answers(&self, game: Option<&GameId>) -> Result<Vec<AnswerSummary>, ClientError> {
        #[derive(Deserialize)]
        struct Answers {
            answers: Vec<AnswerSummary>,
        }
        let a: Answers = self.call(|| answers_request(self, game)).await?;
        Ok(a.answers)
    }

    /// The answer list exactly as the server sent it.
    pub async fn list_answers_text(&self, game: Option<&GameId>) -> Result<String, ClientError> {
        let resp = self.send(|| answers_request(self, game)).await?;
        Ok(resp.error_for_status()?.text().await?)
    }

    pub async fn answer(&self, id: &AnswerId) -> Result<Answer, ClientError> {
        self.call(|| self.request(Method::GET, &format!("/api/prof/answers/{id}")))
            .await
    }

    pub async fn delete_answer(&self, id: &AnswerId) -> Result<Value, ClientError> {
        self.call(|| self.request(Method::DELETE, &format!("/api/prof/answers/{id}")))
            .await
    }

    pub async fn poll_professor(&self, after: Option<u64>) -> Result<PollResponse, ClientError> {
        self.call(|| with_after(self.request(Method::GET, "/api/prof/events/poll"), after))
            .await
    }

    pub async fn professor_events(&self, last_event_id: Option<u64>) -> Result<EventStream, ClientError> {
        self.open_stream(|| self.request(Method::GET, "/api/prof/events"), last_event_id)
            .await
    }

    async fn open_stream(
        &self,
        build: impl Fn() -> RequestBuilder,
        last_event_id: Option<u64>,
    ) -> Result<EventStream, ClientError> {
        let resp = self
            .send(|| {
                let rb = build().header("accept", "text/event-stream");
                match last_event_id {
                    Some(id) => rb.header("last-event-id", id.to_string()),
                    None => rb,
                }
            })
            .await?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.text().await?;
            return Err(match serde_json::from_str::<ErrorBody>(&text) {
                Ok(body) => ClientError::Api { status, body },
                Err(_) => ClientError::Unexpected { status, text },
            });
        }
        Ok(Box::pin(sse_frames(resp.bytes_stream())))
    }
}

fn answers_request(c: &Client, game: Option<&GameId>) -> RequestBuilder {
    let rb = c.request(Method::GET, "/api/prof/answers");
    match game {
        Some(g) => rb.query(&[("game_id", g.as_str())]),
        None => rb,
    }
}

fn with_after(rb: RequestBuilder, after: Option<u64>) -> RequestBuilder {
    match after {
        Some(a) => rb.query(&[("after", a)]),
        None => rb,
    }
}

/// One server-sent event.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SseFrame {
    pub id: Option<String>,
    pub event: Option<String>,
    pub data: String,
}

fn parse_frame(block: &str) -> Option<SseFrame> {
    let mut frame = SseFrame::default();
    let mut data = Vec::new();
    for line in block.lines() {
        if line.starts_with(':') {
            continue;
        }
        let (field, value) = line.split_once(':').unwrap_or((line, ""));
        let value = value.strip_prefix(' ').unwrap_or(value);
        match field {
            "id" => frame.id = Some(value.to_owned()),
            "event" => frame.event = Some(value.to_owned()),
            "data" => data.push(value),
            _ => {}
        }
    }
    if data.is_empty() && frame.event.is_none() {
        return None;
    }
    frame.data = data.join("\n");
    Some(frame)
}

fn sse_frames(
    bytes: impl Stream<Item = reqwest::Result<bytes::Bytes>> + Unpin + Send,
) -> impl Stream<Item = Result<SseFrame, ClientError>> + Send {
    futures::stream::unfold((bytes, String::new(), false), |(mut bytes, mut buf, done)| async move {
        if done {
            return None;
        }
        loop {
            if let Some(end) = buf.find("\n\n") {
                let block: String = buf.drain(..end + 2).collect();
                if let Some(frame) = parse_frame(&block) {
                    return Some((Ok(frame), (bytes, buf, false)));
                }
                continue;
            }
            match bytes.next().await {
                Some(Ok(chunk)) => buf.push_str(&String::from_utf8_lossy(&chunk).replace("\r\n", "\n")),
                Some(Err(e)) => return Some((Err(ClientError::Transport(e)), (bytes, buf, true))),
                None => return None,
            }
        }
    })
}

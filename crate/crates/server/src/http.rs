//! HTTP routes and the server-sent event stream.

use std::convert::Infallible;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use classroom_core::{IncomingEvent, IncomingKind};
use futures::stream::{self, Stream};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use crate::pipeline::Engine;

/// Body of `POST /api/events`: one event in the generic row layout.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventPayload {
    pub student_id: String,
    pub question_id: String,
    #[serde(default)]
    pub kc: Option<String>,
    pub event_type: EventType,
    #[serde(default)]
    pub correct: Option<Flag>,
    /// Hints only; numbered automatically when omitted.
    #[serde(default)]
    pub hint_ordinal: Option<u32>,
    /// Accepted for parity with the file layout; the server stamps its own time.
    #[serde(default)]
    pub timestamp_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Response,
    Hint,
}

/// `true`/`false` or `1`/`0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum Flag {
    Bool(bool),
    Int(u8),
}

impl EventPayload {
    pub fn into_incoming(self) -> Result<IncomingEvent, String> {
        let kind = match self.event_type {
            EventType::Response => {
                let correct = match self.correct {
                    Some(Flag::Bool(b)) => b,
                    Some(Flag::Int(0)) => false,
                    Some(Flag::Int(1)) => true,
                    Some(Flag::Int(v)) => return Err(format!("correct must be 0 or 1, got {v}")),
                    None => return Err("response events need `correct`".into()),
                };
                IncomingKind::Response { correct }
            }
            EventType::Hint => IncomingKind::Hint {
                ordinal: self.hint_ordinal,
            },
        };
        Ok(IncomingEvent {
            student_id: self.student_id,
            question_id: self.question_id,
            kc_id: self.kc,
            kind,
        })
    }
}

fn json_response<T: Serialize + ?Sized>(status: StatusCode, body: &T) -> Response {
    match serde_json::to_vec(body) {
        Ok(bytes) => (status, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    json_response(status, &json!({ "error": message.into() }))
}

pub fn router(engine: Engine) -> Router {
    Router::new()
        .route("/api/events", post(post_event))
        .route("/api/snapshot", get(latest_snapshot))
        .route("/api/snapshot/{version}", get(snapshot_by_version))
        .route("/api/clustering", get(clustering))
        .route("/api/kpis", get(kpis))
        .route("/api/alerts", get(alerts))
        .route("/api/spec", get(spec))
        .route("/api/stream", get(stream))
        .with_state(engine)
}

async fn post_event(State(engine): State<Engine>, body: Bytes) -> Response {
    let payload: EventPayload = match serde_json::from_slice(&body) {
        Ok(p) => p,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    };
    let incoming = match payload.into_incoming() {
        Ok(ev) => ev,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e),
    };
    match engine.ingest(incoming) {
        Ok(ack) => json_response(StatusCode::ACCEPTED, &ack),
        Err(e) => error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    }
}

async fn latest_snapshot(State(engine): State<Engine>) -> Response {
    json_response(StatusCode::OK, &*engine.hub().latest())
}

async fn snapshot_by_version(State(engine): State<Engine>, Path(version): Path<u64>) -> Response {
    match engine.hub().get(version) {
        Some(s) => json_response(StatusCode::OK, &*s),
        None => error(
            StatusCode::NOT_FOUND,
            format!("version {version} is not among the retained snapshots"),
        ),
    }
}

async fn clustering(State(engine): State<Engine>) -> Response {
    let s = engine.hub().latest();
    json_response(
        StatusCode::OK,
        &json!({ "version": s.version, "clustering": s.clustering, "recommendations": s.recommendations }),
    )
}

async fn kpis(State(engine): State<Engine>) -> Response {
    let s = engine.hub().latest();
    json_response(
        StatusCode::OK,
        &json!({ "version": s.version, "kpis": s.kpis, "kc_summary": s.kc_summary, "histogram": s.histogram }),
    )
}

async fn alerts(State(engine): State<Engine>) -> Response {
    let s = engine.hub().latest();
    json_response(StatusCode::OK, &json!({ "version": s.version, "alerts": s.alerts }))
}

async fn spec(State(engine): State<Engine>) -> Response {
    json_response(StatusCode::OK, &*engine.spec())
}

#[derive(Debug, Deserialize)]
pub struct StreamParams {
    pub last_seen: Option<u64>,
}

/// First a `snapshot` event with the full current snapshot (skipped when
/// the client's `last_seen` is already current), then a `version` event
/// `{"version": v}` per publish. A subscriber that falls too far behind
/// gets a `resync` event `{"last_seen": v}` and the stream ends; it should
/// reconnect with `?last_seen=v`.
async fn stream(
    State(engine): State<Engine>,
    Query(params): Query<StreamParams>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let (current, rx) = engine.hub().subscribe();
    let first = if params.last_seen == Some(current.version) {
        None
    } else {
        Event::default().event("snapshot").json_data(&*current).ok()
    };
    let initial = stream::iter(first.map(Ok));
    let updates = stream::unfold((rx, current.version, false), |(mut rx, last, done)| async move {
        if done {
            return None;
        }
        loop {
            match rx.recv().await {
                Ok(v) if v > last => {
                    let ev = Event::default()
                        .event("version")
                        .data(json!({ "version": v }).to_string());
                    return Some((Ok(ev), (rx, v, false)));
                }
                Ok(_) => continue,
                Err(RecvError::Lagged(_)) => {
                    let ev = Event::default()
                        .event("resync")
                        .data(json!({ "last_seen": last }).to_string());
                    return Some((Ok(ev), (rx, last, true)));
                }
                Err(RecvError::Closed) => return None,
            }
        }
    });
    Sse::new(stream::StreamExt::chain(initial, updates)).keep_alive(KeepAlive::new().interval(Duration::from_secs(15)))
}

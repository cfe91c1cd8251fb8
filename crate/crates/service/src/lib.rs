//! Review service: a local HTTP/JSON API over [`ReviewState`].
//!
//! Writes are validated against a copy of the state, journaled, then made
//! visible, all under one write lock. Reads share the lock.

use std::fs::File;
use std::future::Future;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{FromRequestParts, Path as UrlPath, Query, State};
use axum::http::request::Parts;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use chrono::Utc;
use serde::Deserialize;
use tokio::net::TcpListener;
use tracing::info;

use elitepol_core::corpus::Speech;
use elitepol_core::jsonl;
use elitepol_core::resolution::ResolutionDecision;
use elitepol_core::review::api::{
    ConfirmInput, ErrorBody, GoldInput, Health, MatchPatch, QueueItem, ResolutionInput, SupergoldView, TaskInput,
    CODER_HEADER,
};
use elitepol_core::review::{
    Applied, MetricsView, ReviewError, ReviewEvent, ReviewInputs, ReviewState, ReviewTask, TaskKind, TaskStatus,
};
use elitepol_core::validation::{Correction, GoldRecord, MatchSet, SupergoldBuild, SupergoldDecision};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("cannot listen on {addr}: port is already in use")]
    PortBusy { addr: String },
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("review journal {path}: {source}")]
    Journal { path: PathBuf, source: std::io::Error },
    #[error("review journal {path}, event {line}: {error}")]
    Replay {
        path: PathBuf,
        line: usize,
        error: ReviewError,
    },
}

pub struct Service {
    state: RwLock<ReviewState>,
    journal: std::sync::Mutex<Option<File>>,
}

impl Service {
    /// A service without a journal, for tests and dry runs.
    pub fn in_memory(inputs: ReviewInputs) -> Self {
        Self {
            state: RwLock::new(ReviewState::new(inputs)),
            journal: std::sync::Mutex::new(None),
        }
    }

    /// Replays `journal` over `inputs` and keeps appending to it.
    pub fn open(inputs: ReviewInputs, journal: &Path) -> Result<Self, ServiceError> {
        let io = |source| ServiceError::Journal {
            path: journal.to_path_buf(),
            source,
        };
        let events: Vec<ReviewEvent> = jsonl::read_path_or_empty(journal).map_err(io)?;
        let state = ReviewState::replay(inputs, &events).map_err(|(line, error)| ServiceError::Replay {
            path: journal.to_path_buf(),
            line,
            error,
        })?;
        if let Some(dir) = journal.parent() {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let file = jsonl::open_append(journal).map_err(io)?;
        info!(events = events.len(), journal = %journal.display(), "review journal replayed");
        Ok(Self {
            state: RwLock::new(state),
            journal: std::sync::Mutex::new(Some(file)),
        })
    }

    fn read<T>(&self, f: impl FnOnce(&ReviewState) -> T) -> T {
        f(&self.state.read().expect("state lock"))
    }

    /// Applies `event`, journaling it when it changes anything, and returns
    /// `f` of the new state.
    pub fn submit<T>(&self, event: ReviewEvent, f: impl FnOnce(&ReviewState) -> T) -> Result<(Applied, T), ApiError> {
        let mut state = self.state.write().expect("state lock");
        let mut next = state.clone();
        let applied = next.apply(&event)?;
        if applied == Applied::Changed {
            let mut journal = self.journal.lock().expect("journal lock");
            if let Some(file) = journal.as_mut() {
                jsonl::append(file, &event).and_then(|_| file.flush()).map_err(|e| {
                    ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("journal write failed: {e}"))
                })?;
            }
            *state = next;
        }
        Ok((applied, f(&state)))
    }

    /// Forces journaled events to disk.
    pub fn flush(&self) -> std::io::Result<()> {
        match self.journal.lock().expect("journal lock").as_mut() {
            Some(f) => f.sync_all(),
            None => Ok(()),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<ReviewError> for ApiError {
    fn from(e: ReviewError) -> Self {
        let status = match e {
            ReviewError::NotFound(_) => StatusCode::NOT_FOUND,
            ReviewError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ReviewError::Conflict(_) => StatusCode::CONFLICT,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

/// Coder name from the `X-Coder` header, required on writes.
pub struct Coder(pub String);

impl<S: Send + Sync> FromRequestParts<S> for Coder {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        parts
            .headers
            .get(CODER_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| Coder(v.to_string()))
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing X-Coder header"))
    }
}

type Shared = State<Arc<Service>>;

pub fn router(service: Arc<Service>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/speeches/sample", get(sample))
        .route("/gold", get(list_gold).post(add_gold))
        .route("/matches", get(matches))
        .route("/matches/{id}", patch(correct_match))
        .route("/supergold", get(supergold))
        .route("/supergold/{id}/confirm", get(supergold_record).post(decide_supergold))
        .route("/resolution-queue", get(resolution_queue))
        .route("/resolution-queue/{id}", post(decide_resolution))
        .route("/metrics", get(metrics))
        .route("/tasks", get(tasks))
        .route("/tasks/{id}/complete", post(complete_task))
        .route("/tasks/{id}/skip", post(skip_task))
        .with_state(service)
}

/// Binds `addr`, turning an occupied port into a readable error.
pub async fn bind(addr: &str) -> Result<TcpListener, ServiceError> {
    TcpListener::bind(addr).await.map_err(|source| {
        if source.kind() == std::io::ErrorKind::AddrInUse {
            ServiceError::PortBusy { addr: addr.into() }
        } else {
            ServiceError::Bind {
                addr: addr.into(),
                source,
            }
        }
    })
}

/// Serves until `shutdown` resolves, then flushes the journal.
pub async fn serve(
    listener: TcpListener,
    service: Arc<Service>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(service.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    service.flush()
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: VERSION.into(),
    })
}

async fn sample(State(svc): Shared) -> Json<Vec<Speech>> {
    Json(svc.read(|s| s.sample().to_vec()))
}

async fn list_gold(State(svc): Shared) -> Json<Vec<GoldRecord>> {
    Json(svc.read(|s| s.gold()))
}

async fn add_gold(
    State(svc): Shared,
    Coder(coder): Coder,
    Json(input): Json<GoldInput>,
) -> Result<(StatusCode, Json<GoldRecord>), ApiError> {
    let record = GoldRecord {
        speech_id: input.speech_id,
        coder,
        actor_surface: input.actor,
        sentiment: input.sentiment,
    };
    let event = ReviewEvent::GoldAdded {
        record: record.clone(),
        at: Utc::now(),
    };
    svc.submit(event, |_| ())?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn matches(State(svc): Shared) -> Json<MatchSet> {
    Json(svc.read(|s| s.matches().clone()))
}

async fn correct_match(
    State(svc): Shared,
    UrlPath(id): UrlPath<String>,
    Coder(coder): Coder,
    Json(patch): Json<MatchPatch>,
) -> Result<Json<MatchSet>, ApiError> {
    let event = ReviewEvent::MatchCorrected {
        correction: Correction {
            triple_id: id,
            op: patch.op,
            coder,
            at: Some(Utc::now()),
        },
        revision: patch.revision,
    };
    let (_, ms) = svc.submit(event, |s| s.matches().clone())?;
    Ok(Json(ms))
}

async fn supergold(State(svc): Shared) -> Json<SupergoldBuild> {
    Json(svc.read(|s| s.supergold().clone()))
}

fn supergold_view(s: &ReviewState, id: &str) -> Option<SupergoldView> {
    let record = s.supergold().records.iter().find(|r| r.id == id)?.clone();
    let task = s.task(&format!("confirm:{id}")).cloned();
    Some(SupergoldView { record, task })
}

async fn supergold_record(State(svc): Shared, UrlPath(id): UrlPath<String>) -> Result<Json<SupergoldView>, ApiError> {
    svc.read(|s| supergold_view(s, &id))
        .map(Json)
        .ok_or_else(|| ReviewError::NotFound(format!("supergold record {id}")).into())
}

async fn decide_supergold(
    State(svc): Shared,
    UrlPath(id): UrlPath<String>,
    Coder(coder): Coder,
    Json(input): Json<ConfirmInput>,
) -> Result<Json<SupergoldView>, ApiError> {
    let event = ReviewEvent::SupergoldDecided {
        decision: SupergoldDecision {
            id: id.clone(),
            confirm: input.confirm,
            coder,
        },
        revision: input.revision,
        at: Utc::now(),
    };
    let (_, view) = svc.submit(event, |s| supergold_view(s, &id))?;
    view.map(Json)
        .ok_or_else(|| ReviewError::NotFound(format!("supergold record {id}")).into())
}

fn queue_item(s: &ReviewState, id: &str) -> Option<QueueItem> {
    let entry = s.resolution_queue().iter().find(|q| q.id == id)?.clone();
    let decided = s.resolution_decision(id);
    Some(QueueItem {
        entry,
        decision: decided.map(|(d, _)| d.clone()),
        decided_by: decided.map(|(_, c)| c.clone()),
    })
}

async fn resolution_queue(State(svc): Shared) -> Json<Vec<QueueItem>> {
    Json(svc.read(|s| {
        s.resolution_queue()
            .iter()
            .filter_map(|q| queue_item(s, &q.id))
            .collect()
    }))
}

async fn decide_resolution(
    State(svc): Shared,
    UrlPath(id): UrlPath<String>,
    Coder(coder): Coder,
    Json(input): Json<ResolutionInput>,
) -> Result<Json<QueueItem>, ApiError> {
    let event = ReviewEvent::ResolutionDecided {
        decision: ResolutionDecision {
            queue_id: id.clone(),
            approve: input.approve,
            canonical_entity: input.canonical_entity,
        },
        coder,
        revision: input.revision,
        at: Utc::now(),
    };
    let (_, item) = svc.submit(event, |s| queue_item(s, &id))?;
    item.map(Json)
        .ok_or_else(|| ReviewError::NotFound(format!("queue entry {id}")).into())
}

async fn metrics(State(svc): Shared) -> Json<MetricsView> {
    Json(svc.read(|s| s.metrics()))
}

#[derive(Debug, Deserialize)]
struct TaskQuery {
    kind: Option<String>,
    status: Option<String>,
}

async fn tasks(State(svc): Shared, Query(q): Query<TaskQuery>) -> Result<Json<Vec<ReviewTask>>, ApiError> {
    let bad = |e: String| ApiError::new(StatusCode::BAD_REQUEST, e);
    let kind = q.kind.as_deref().map(str::parse::<TaskKind>).transpose().map_err(bad)?;
    let status = q
        .status
        .as_deref()
        .map(str::parse::<TaskStatus>)
        .transpose()
        .map_err(bad)?;
    Ok(Json(svc.read(|s| s.tasks(kind, status).into_iter().cloned().collect())))
}

fn close_task(
    svc: &Service,
    id: String,
    coder: String,
    revision: u64,
    status: TaskStatus,
) -> Result<Json<ReviewTask>, ApiError> {
    let event = ReviewEvent::TaskClosed {
        task_id: id.clone(),
        revision,
        status,
        coder,
        at: Utc::now(),
    };
    let (_, task) = svc.submit(event, |s| s.task(&id).cloned())?;
    task.map(Json)
        .ok_or_else(|| ReviewError::NotFound(format!("task {id}")).into())
}

async fn complete_task(
    State(svc): Shared,
    UrlPath(id): UrlPath<String>,
    Coder(coder): Coder,
    Json(input): Json<TaskInput>,
) -> Result<Json<ReviewTask>, ApiError> {
    close_task(&svc, id, coder, input.revision, TaskStatus::Done)
}

async fn skip_task(
    State(svc): Shared,
    UrlPath(id): UrlPath<String>,
    Coder(coder): Coder,
    Json(input): Json<TaskInput>,
) -> Result<Json<ReviewTask>, ApiError> {
    close_task(&svc, id, coder, input.revision, TaskStatus::Skipped)
}

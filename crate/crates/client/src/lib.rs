//! Typed HTTP client for the review service.

use reqwest::{Method, RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

use elitepol_core::corpus::Speech;
use elitepol_core::review::api::{
    ConfirmInput, ErrorBody, GoldInput, Health, MatchPatch, QueueItem, ResolutionInput, SupergoldView, TaskInput,
    CODER_HEADER,
};
use elitepol_core::review::{MetricsView, ReviewTask, TaskKind, TaskStatus};
use elitepol_core::validation::{CorrectionOp, GoldRecord, MatchSet, SupergoldBuild};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("{status}: {message}")]
    Api { status: StatusCode, message: String },
    #[error(transparent)]
    Transport(#[from] reqwest::Error),
}

impl ClientError {
    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status(),
        }
    }

    pub fn is_conflict(&self) -> bool {
        self.status() == Some(StatusCode::CONFLICT)
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct ReviewClient {
    http: reqwest::Client,
    base: String,
    coder: String,
}

fn kebab<T: Serialize>(v: &T) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

/// Path segment escaping for ids, which may contain `:`.
fn seg(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for b in id.bytes() {
        if b.is_ascii_alphanumeric() || b"-._~:".contains(&b) {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    out
}

impl ReviewClient {
    /// `base` is e.g. `http://127.0.0.1:8787`; `coder` tags every write.
    pub fn new(base: impl Into<String>, coder: impl Into<String>) -> Self {
        Self {
            http: reqwest::Client::new(),
            base: base.into().trim_end_matches('/').to_string(),
            coder: coder.into(),
        }
    }

    pub fn coder(&self) -> &str {
        &self.coder
    }

    fn request(&self, method: Method, path: &str) -> RequestBuilder {
        self.http
            .request(method, format!("{}{path}", self.base))
            .header(CODER_HEADER, &self.coder)
    }

    async fn send<T: DeserializeOwned>(&self, req: RequestBuilder) -> Result<T> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ErrorBody>(&text)
            .map(|b| b.error)
            .unwrap_or(text);
        Err(ClientError::Api { status, message })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T> {
        self.send(self.request(Method::GET, path)).await
    }

    async fn write<B: Serialize, T: DeserializeOwned>(&self, method: Method, path: &str, body: &B) -> Result<T> {
        self.send(self.request(method, path).json(body)).await
    }

    pub async fn health(&self) -> Result<Health> {
        self.get("/health").await
    }

    pub async fn sample(&self) -> Result<Vec<Speech>> {
        self.get("/speeches/sample").await
    }

    pub async fn gold(&self) -> Result<Vec<GoldRecord>> {
        self.get("/gold").await
    }

    pub async fn add_gold(&self, speech_id: &str, actor: &str, sentiment: i8) -> Result<GoldRecord> {
        let body = GoldInput {
            speech_id: speech_id.into(),
            actor: actor.into(),
            sentiment,
        };
        self.write(Method::POST, "/gold", &body).await
    }

    pub async fn matches(&self) -> Result<MatchSet> {
        self.get("/matches").await
    }

    pub async fn correct_match(&self, triple_id: &str, op: CorrectionOp, revision: Option<u64>) -> Result<MatchSet> {
        let body = MatchPatch { op, revision };
        self.write(Method::PATCH, &format!("/matches/{}", seg(triple_id)), &body)
            .await
    }

    pub async fn supergold(&self) -> Result<SupergoldBuild> {
        self.get("/supergold").await
    }

    pub async fn supergold_record(&self, id: &str) -> Result<SupergoldView> {
        self.get(&format!("/supergold/{}/confirm", seg(id))).await
    }

    pub async fn decide_supergold(&self, id: &str, confirm: bool, revision: Option<u64>) -> Result<SupergoldView> {
        let body = ConfirmInput { confirm, revision };
        self.write(Method::POST, &format!("/supergold/{}/confirm", seg(id)), &body)
            .await
    }

    pub async fn resolution_queue(&self) -> Result<Vec<QueueItem>> {
        self.get("/resolution-queue").await
    }

    pub async fn decide_resolution(&self, queue_id: &str, input: &ResolutionInput) -> Result<QueueItem> {
        self.write(Method::POST, &format!("/resolution-queue/{}", seg(queue_id)), input)
            .await
    }

    pub async fn metrics(&self) -> Result<MetricsView> {
        self.get("/metrics").await
    }

    pub async fn tasks(&self, kind: Option<TaskKind>, status: Option<TaskStatus>) -> Result<Vec<ReviewTask>> {
        let mut query = Vec::new();
        if let Some(k) = kind {
            query.push(("kind", kebab(&k)));
        }
        if let Some(s) = status {
            query.push(("status", kebab(&s)));
        }
        self.send(self.request(Method::GET, "/tasks").query(&query)).await
    }

    pub async fn complete_task(&self, task_id: &str, revision: u64) -> Result<ReviewTask> {
        self.write(
            Method::POST,
            &format!("/tasks/{}/complete", seg(task_id)),
            &TaskInput { revision },
        )
        .await
    }

    pub async fn skip_task(&self, task_id: &str, revision: u64) -> Result<ReviewTask> {
        self.write(
            Method::POST,
            &format!("/tasks/{}/skip", seg(task_id)),
            &TaskInput { revision },
        )
        .await
    }
}

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::time::Instant;

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tracing::{info, warn};

use super::{call_with_retry, Backend, BackendError, FinishStatus, Query, RawResponse, RetryPolicy};
use crate::corpus::Speech;
use crate::jsonl;

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("journal i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("backend authentication failed, aborting batch: {0}")]
    Auth(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOptions {
    /// Maximum requests in flight.
    pub concurrency: usize,
    pub retry: RetryPolicy,
    /// Speech bodies longer than this many characters are truncated.
    pub max_chars: Option<usize>,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            concurrency: 4,
            retry: RetryPolicy::default(),
            max_chars: None,
        }
    }
}

/// One line of the append-only submission journal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalEntry {
    pub speech_id: String,
    pub status: FinishStatus,
    pub attempts: u32,
    pub response_digest: String,
    pub backend: String,
    #[serde(default)]
    pub model: Option<String>,
    pub temperature: f64,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default)]
pub struct BatchReport {
    /// Terminal responses for every submitted speech, in input order.
    pub responses: Vec<RawResponse>,
    /// Speeches sent to the backend during this call.
    pub submitted: usize,
    /// Speeches skipped because the journal already held them.
    pub resumed: usize,
    pub failed: usize,
}

pub fn read_journal(path: &Path) -> std::io::Result<Vec<JournalEntry>> {
    jsonl::read_path_or_empty(path)
}

pub fn digest(body: &str) -> String {
    hex::encode(Sha256::digest(body.as_bytes()))
}

fn truncate_chars(text: &str, max: Option<usize>, speech_id: &str) -> String {
    match max {
        Some(max) if text.chars().count() > max => {
            warn!(speech_id, max_chars = max, "speech truncated to fit the model context");
            text.chars().take(max).collect()
        }
        _ => text.to_string(),
    }
}

/// Sends every non-excluded speech through `backend` once.
///
/// Responses are appended to `responses_path` and then journaled in
/// `journal_path`. Speeches already in the journal are not sent again, so an
/// interrupted batch resumes where it stopped. An authentication failure
/// aborts the whole batch; any other exhausted failure yields a response with
/// [`FinishStatus::Failed`].
pub async fn submit_batch(
    speeches: &[Speech],
    prompt: &str,
    backend: &dyn Backend,
    journal_path: &Path,
    responses_path: &Path,
    opts: &BatchOptions,
) -> Result<BatchReport, GatewayError> {
    let done: HashSet<String> = read_journal(journal_path)?.into_iter().map(|e| e.speech_id).collect();
    let mut by_id: HashMap<String, RawResponse> = jsonl::read_path_or_empty::<RawResponse>(responses_path)?
        .into_iter()
        .filter(|r| done.contains(&r.speech_id))
        .map(|r| (r.speech_id.clone(), r))
        .collect();

    let mut seen = HashSet::new();
    let pending: Vec<&Speech> = speeches
        .iter()
        .filter(|s| !s.excluded && seen.insert(s.speech_id.clone()))
        .filter(|s| !done.contains(&s.speech_id))
        .collect();
    let resumed = speeches
        .iter()
        .filter(|s| !s.excluded && done.contains(&s.speech_id))
        .count();
    info!(
        pending = pending.len(),
        resumed,
        backend = backend.id(),
        "submitting batch"
    );

    let info = backend.describe();
    let mut journal = jsonl::open_append(journal_path)?;
    let mut responses = jsonl::open_append(responses_path)?;

    let mut results = stream::iter(pending.into_iter().map(|speech| {
        let query = Query::Extract {
            speech_id: speech.speech_id.clone(),
            prompt: prompt.to_string(),
            text: truncate_chars(&speech.text, opts.max_chars, &speech.speech_id),
        };
        async move {
            let started = Instant::now();
            let outcome = call_with_retry(backend, &query, &opts.retry).await;
            (speech.speech_id.clone(), outcome, started.elapsed())
        }
    }))
    .buffer_unordered(opts.concurrency.max(1));

    let mut submitted = 0;
    while let Some((speech_id, outcome, elapsed)) = results.next().await {
        let (body, status, attempts, error) = match outcome {
            Ok((body, attempts)) => (body, FinishStatus::Ok, attempts, None),
            Err((BackendError::Auth(msg), _)) => return Err(GatewayError::Auth(msg)),
            Err((err, attempts)) => (String::new(), FinishStatus::Failed, attempts, Some(err.to_string())),
        };
        let response = RawResponse {
            speech_id: speech_id.clone(),
            body,
            backend: backend.id().to_string(),
            latency_ms: elapsed.as_millis() as u64,
            timestamp: Utc::now(),
            status,
            attempts,
            error,
        };
        jsonl::append(&mut responses, &response)?;
        jsonl::append(
            &mut journal,
            &JournalEntry {
                speech_id: speech_id.clone(),
                status,
                attempts,
                response_digest: digest(&response.body),
                backend: info.backend.clone(),
                model: info.model.clone(),
                temperature: info.temperature,
                at: response.timestamp,
            },
        )?;
        submitted += 1;
        by_id.insert(speech_id, response);
    }

    let mut ordered = Vec::new();
    let mut emitted = HashSet::new();
    for s in speeches {
        if emitted.insert(s.speech_id.clone()) {
            if let Some(r) = by_id.remove(&s.speech_id) {
                ordered.push(r);
            }
        }
    }
    let failed = ordered.iter().filter(|r| r.status == FinishStatus::Failed).count();
    Ok(BatchReport {
        responses: ordered,
        submitted,
        resumed,
        failed,
    })
}

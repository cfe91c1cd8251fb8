//! Submission of speeches to an LLM backend.
//!
//! A [`Backend`] answers a [`Query`] with a text body. Two implementations
//! ship: [`HttpBackend`] talks to an OpenAI-compatible chat-completion
//! endpoint, [`MockBackend`] answers from planted annotations and is the
//! oracle for end-to-end tests.

mod batch;
mod http;
mod mock;
mod prompt;
mod retry;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Speech;

pub use batch::{read_journal, submit_batch, BatchOptions, BatchReport, GatewayError, JournalEntry};
pub use http::{HttpBackend, HttpBackendConfig};
pub use mock::{Fault, MockBackend, MockFaults, PlantedAnnotation, PlantedMention, PlantedWorld};
pub use prompt::{
    classification_prompt, country_name, extraction_message, render_prompt, suggestion_prompt, verification_prompt,
    PromptError, PromptTemplate, YearRange, EXTRACTION_V1, FORMAT_REMINDER,
};
pub use retry::{call_with_retry, RetryPolicy};

/// What is being asked of the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Query {
    Extract {
        speech_id: String,
        prompt: String,
        text: String,
    },
    Verify {
        speech_id: String,
        actor: String,
        prompt: String,
        text: String,
    },
    Classify {
        alias: String,
        country: String,
        prompt: String,
    },
    Suggest {
        alias: String,
        candidates: Vec<String>,
        prompt: String,
    },
}

impl Query {
    /// The single user message sent to a chat-completion backend.
    pub fn user_message(&self) -> String {
        match self {
            Query::Extract { prompt, text, .. } | Query::Verify { prompt, text, .. } => {
                extraction_message(prompt, text)
            }
            Query::Classify { prompt, .. } | Query::Suggest { prompt, .. } => prompt.clone(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("rate limited")]
    RateLimited,
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("request rejected: {0}")]
    Permanent(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::RateLimited | BackendError::Transient(_))
    }
}

#[async_trait]
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    /// Model and decoding parameters, recorded in the journal.
    fn describe(&self) -> BackendInfo {
        BackendInfo {
            backend: self.id().to_string(),
            model: None,
            temperature: 0.0,
        }
    }

    async fn complete(&self, query: &Query) -> Result<String, BackendError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub backend: String,
    pub model: Option<String>,
    pub temperature: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractionRequest {
    pub speech_id: String,
    pub prompt: String,
    pub text: String,
    pub backend: String,
    pub attempt: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub speech_id: String,
    pub body: String,
    pub backend: String,
    pub latency_ms: u64,
    pub timestamp: DateTime<Utc>,
    pub status: FinishStatus,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Yes,
    No,
    /// Backend failed; needs a human decision.
    Indeterminate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionCheck {
    pub verdict: Verdict,
    pub rationale: String,
}

/// Asks `backend` whether `actor` is referred to in `speech`.
pub async fn verify_mention(actor: &str, speech: &Speech, backend: &dyn Backend, policy: &RetryPolicy) -> MentionCheck {
    assert!(!actor.trim().is_empty(), "actor must be non-empty");
    let query = Query::Verify {
        speech_id: speech.speech_id.clone(),
        actor: actor.to_string(),
        prompt: verification_prompt(&speech.country, actor),
        text: speech.text.clone(),
    };
    match call_with_retry(backend, &query, policy).await {
        Ok((body, _)) => parse_verdict(&body),
        Err((err, _)) => MentionCheck {
            verdict: Verdict::Indeterminate,
            rationale: format!("verification failed: {err}"),
        },
    }
}

/// Reads YES/NO from the first non-empty line; anything else is indeterminate.
pub fn parse_verdict(body: &str) -> MentionCheck {
    let mut lines = body.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines.next().unwrap_or("");
    let word: String = first
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .chars()
        .take_while(|c| c.is_alphabetic())
        .collect::<String>()
        .to_lowercase();
    let verdict = match word.as_str() {
        "yes" => Verdict::Yes,
        "no" => Verdict::No,
        _ => Verdict::Indeterminate,
    };
    let rationale = match verdict {
        Verdict::Indeterminate => body.trim().to_string(),
        _ => {
            let rest_of_first = first
                .trim_start_matches(|c: char| !c.is_alphanumeric())
                .get(word.len()..)
                .unwrap_or("")
                .trim_start_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
            let mut parts: Vec<&str> = Vec::new();
            if !rest_of_first.is_empty() {
                parts.push(rest_of_first);
            }
            parts.extend(lines);
            parts.join(" ")
        }
    };
    MentionCheck { verdict, rationale }
}

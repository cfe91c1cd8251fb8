use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, Query, FORMAT_REMINDER};
use crate::resolution::{fold, fuzzy_match};

/// A reference planted in a synthetic speech.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedMention {
    pub actor: String,
    pub context: String,
    pub rationale: String,
    pub sentiment: i8,
    /// False when the speech refers to the actor only by pronoun.
    #[serde(default = "yes")]
    pub explicit: bool,
    /// Not a political actor: reported by extraction, denied on verification.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub spurious: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedAnnotation {
    pub speech_id: String,
    pub mentions: Vec<PlantedMention>,
}

/// Everything the mock backend knows.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedWorld {
    pub annotations: Vec<PlantedAnnotation>,
    /// Folded alias -> class label answered to classification queries.
    #[serde(default)]
    pub classes: BTreeMap<String, String>,
}

impl PlantedWorld {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Fraction of extraction responses that come back broken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockFaults {
    /// Responses emitted as prose instead of CSV.
    #[serde(default)]
    pub prose_fraction: f64,
    /// Responses with one out-of-range sentiment.
    #[serde(default)]
    pub bad_sentiment_fraction: f64,
    /// Of the faulty responses, the share that stays broken after a format reminder.
    #[serde(default)]
    pub unrecoverable_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for MockFaults {
    fn default() -> Self {
        Self {
            prose_fraction: 0.0,
            bad_sentiment_fraction: 0.0,
            unrecoverable_fraction: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    None,
    Prose,
    BadSentiment { row: usize },
}

/// Deterministic backend answering from a [`PlantedWorld`].
pub struct MockBackend {
    id: String,
    annotations: HashMap<String, Vec<PlantedMention>>,
    classes: BTreeMap<String, String>,
    faults: MockFaults,
    calls: AtomicUsize,
}

fn unit(seed: u64, key: &str, salt: &str) -> f64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(salt.as_bytes());
    h.update([0]);
    h.update(key.as_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    (u64::from_le_bytes(bytes) >> 11) as f64 / (1u64 << 53) as f64
}

impl MockBackend {
    pub fn new(id: impl Into<String>, world: PlantedWorld, faults: MockFaults) -> Self {
        let annotations = world
            .annotations
            .into_iter()
            .map(|a| (a.speech_id, a.mentions))
            .collect();
        Self {
            id: id.into(),
            annotations,
            classes: world.classes,
            faults,
            calls: AtomicUsize::new(0),
        }
    }

    /// Number of queries answered so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// The fault planted for a speech's first response.
    pub fn fault_for(&self, speech_id: &str) -> Fault {
        let mentions = self.annotations.get(speech_id).map(Vec::len).unwrap_or(0);
        if mentions == 0 {
            return Fault::None;
        }
        let u = unit(self.faults.seed, speech_id, "fault");
        if u < self.faults.prose_fraction {
            Fault::Prose
        } else if u < self.faults.prose_fraction + self.faults.bad_sentiment_fraction {
            let row = (unit(self.faults.seed, speech_id, "row") * mentions as f64) as usize;
            Fault::BadSentiment {
                row: row.min(mentions - 1),
            }
        } else {
            Fault::None
        }
    }

    /// Whether a faulty speech answers correctly once reminded of the format.
    pub fn recoverable(&self, speech_id: &str) -> bool {
        unit(self.faults.seed, speech_id, "recover") >= self.faults.unrecoverable_fraction
    }

    fn extraction_body(&self, speech_id: &str, prompt: &str) -> String {
        let mentions = self.annotations.get(speech_id).cloned().unwrap_or_default();
        let reminded = prompt.ends_with(FORMAT_REMINDER);
        let mut fault = self.fault_for(speech_id);
        if reminded && self.recoverable(speech_id) {
            fault = Fault::None;
        }
        match fault {
            Fault::Prose => {
                let names: Vec<&str> = mentions.iter().map(|m| m.actor.as_str()).collect();
                format!(
                    "The speaker refers to several political actors, notably {}. Overall the tone \
                     toward them is mixed and mostly critical of the opposing side.",
                    names.join(" and ")
                )
            }
            Fault::None => csv_table(&mentions, None),
            Fault::BadSentiment { row } => csv_table(&mentions, Some(row)),
        }
    }

    fn verify_body(&self, speech_id: &str, actor: &str, text: &str) -> String {
        let folded = fold(actor);
        let planted = self.annotations.get(speech_id).and_then(|ms| {
            ms.iter()
                .find(|m| fold(&m.actor) == folded || fuzzy_match(&m.actor, actor) >= 0.85)
        });
        match planted {
            Some(m) if m.spurious => format!("NO\n{actor} is not a political actor."),
            Some(m) if !m.explicit => {
                format!(
                    "YES\nThe speaker refers to {actor} by pronoun in the passage: {}",
                    m.context
                )
            }
            Some(_) => format!("YES\nThe speech names {actor} directly."),
            None if !folded.is_empty() && fold(text).contains(&folded) => {
                format!("YES\nThe speech text contains {actor}.")
            }
            None => format!("NO\nThe speech does not refer to {actor}."),
        }
    }
}

fn csv_table(mentions: &[PlantedMention], corrupt_row: Option<usize>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["actor", "context", "rationale", "sentiment"])
        .expect("in-memory write");
    for (i, m) in mentions.iter().enumerate() {
        let sentiment = if corrupt_row == Some(i) {
            if m.sentiment >= 0 {
                m.sentiment + 6
            } else {
                m.sentiment - 6
            }
        } else {
            m.sentiment
        };
        w.write_record([
            m.actor.as_str(),
            m.context.as_str(),
            m.rationale.as_str(),
            &sentiment.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

#[async_trait]
impl Backend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    async fn complete(&self, query: &Query) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(match query {
            Query::Extract { speech_id, prompt, .. } => self.extraction_body(speech_id, prompt),
            Query::Verify {
                speech_id, actor, text, ..
            } => self.verify_body(speech_id, actor, text),
            Query::Classify { alias, .. } => self
                .classes
                .get(&fold(alias))
                .cloned()
                .unwrap_or_else(|| "discard".to_string()),
            Query::Suggest { alias, candidates, .. } => candidates
                .iter()
                .map(|c| (c, fuzzy_match(alias, c)))
                .filter(|(_, s)| *s >= 0.6)
                .max_by(|a, b| a.1.total_cmp(&b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(c, _)| c.clone())
                .unwrap_or_else(|| "NONE".to_string()),
        })
    }
}

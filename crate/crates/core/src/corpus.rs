//! Speech corpus ingestion and the procedural-address pre-filter.
//!
//! Corpora arrive as CSV (ParlSpeech-style, with a header row) or JSONL. A
//! [`CorpusManifest`] declares the format, the year range and how source
//! columns map onto [`Speech`] fields. Records that fail validation never
//! abort the run; they are written to a reject log with their line number.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unreadable input: {0}")]
    Io(#[from] std::io::Error),
    #[error("unreadable CSV stream: {0}")]
    Csv(String),
    #[error("invalid manifest: {0}")]
    Manifest(String),
    #[error("invalid vocative pattern for {country}: {source}")]
    Pattern {
        country: String,
        #[source]
        source: regex::Error,
    },
    #[error("malformed store record on line {line}: {message}")]
    Store { line: usize, message: String },
}

/// One parliamentary speech after normalization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Speech {
    pub speech_id: String,
    pub country: String,
    pub date: NaiveDate,
    pub speaker_name: String,
    pub speaker_party: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chamber: Option<String>,
    pub text: String,
    pub source: String,
    /// Set when a leading formal address was removed.
    #[serde(default)]
    pub address_stripped: bool,
    /// Set when nothing is left to analyze after stripping.
    #[serde(default)]
    pub excluded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Jsonl,
}

/// Source column (CSV) or key (JSONL) for each speech field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMapping {
    pub speech_id: String,
    pub date: String,
    pub speaker_name: String,
    pub speaker_party: String,
    pub text: String,
    #[serde(default)]
    pub chamber: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub name: String,
    pub country: String,
    pub year_from: i32,
    pub year_to: i32,
    #[serde(default)]
    pub expected_records: Option<usize>,
    pub format: InputFormat,
    pub mapping: FieldMapping,
    /// chrono format string for the date column.
    #[serde(default = "default_date_format")]
    pub date_format: String,
    /// Free-form selection note (e.g. "interpellations only"). Recorded, not interpreted.
    #[serde(default)]
    pub filter: Option<String>,
}

fn default_date_format() -> String {
    "%Y-%m-%d".to_string()
}

impl CorpusManifest {
    /// Loads a manifest from TOML or JSON, chosen by file extension.
    pub fn load(path: &Path) -> Result<Self, IngestError> {
        let raw = std::fs::read_to_string(path)?;
        let manifest: CorpusManifest = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&raw).map_err(|e| IngestError::Manifest(e.to_string()))?,
            _ => toml::from_str(&raw).map_err(|e| IngestError::Manifest(e.to_string()))?,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.year_from > self.year_to {
            return Err(IngestError::Manifest(format!(
                "empty year range {}..{}",
                self.year_from, self.year_to
            )));
        }
        if !is_country_code(&self.country) {
            return Err(IngestError::Manifest(format!(
                "country must be a two-letter code, got {:?}",
                self.country
            )));
        }
        let m = &self.mapping;
        for (field, column) in [
            ("speech_id", &m.speech_id),
            ("date", &m.date),
            ("speaker_name", &m.speaker_name),
            ("speaker_party", &m.speaker_party),
            ("text", &m.text),
        ] {
            if column.trim().is_empty() {
                return Err(IngestError::Manifest(format!("mapping for {field} is empty")));
            }
        }
        Ok(())
    }
}

pub fn is_country_code(code: &str) -> bool {
    code.len() == 2 && code.bytes().all(|b| b.is_ascii_uppercase())
}

/// A record that could not become a [`Speech`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectRecord {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Ingested {
    pub speeches: Vec<Speech>,
    pub rejects: Vec<RejectRecord>,
}

impl Ingested {
    pub fn record_count(&self) -> usize {
        self.speeches.len() + self.rejects.len()
    }
}

/// Line number and fields, or why the record could not be read.
type RawRecord = (usize, Result<BTreeMap<String, String>, String>);

/// Reads every record of `input` according to `manifest`.
///
/// Every input record ends up either as a speech or as a reject; only an
/// unreadable stream is fatal.
pub fn ingest<R: Read>(manifest: &CorpusManifest, input: R) -> Result<Ingested, IngestError> {
    let raw: Vec<RawRecord> = match manifest.format {
        InputFormat::Csv => read_csv_records(input)?,
        InputFormat::Jsonl => read_jsonl_records(input)?,
    };
    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for (line, record) in raw {
        let speech = record.and_then(|fields| build_speech(manifest, &fields));
        match speech {
            Ok(speech) => {
                if !seen.insert(speech.speech_id.clone()) {
                    out.rejects.push(RejectRecord {
                        line,
                        reason: format!("duplicate speech_id {}", speech.speech_id),
                    });
                } else {
                    out.speeches.push(speech);
                }
            }
            Err(reason) => out.rejects.push(RejectRecord { line, reason }),
        }
    }
    Ok(out)
}

fn read_csv_records<R: Read>(input: R) -> Result<Vec<RawRecord>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Csv(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect::<Vec<_>>();
    let mut out = Vec::new();
    for result in reader.records() {
        match result {
            Ok(record) => {
                let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
                if record.len() != headers.len() {
                    out.push((
                        line,
                        Err(format!("expected {} columns, found {}", headers.len(), record.len())),
                    ));
                    continue;
                }
                let fields = headers.iter().cloned().zip(record.iter().map(str::to_string)).collect();
                out.push((line, Ok(fields)));
            }
            Err(e) => {
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(IngestError::Csv(e.to_string()));
                }
                let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
                out.push((line, Err(format!("csv: {e}"))));
            }
        }
    }
    Ok(out)
}

fn read_jsonl_records<R: Read>(input: R) -> Result<Vec<RawRecord>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(serde_json::Value::Object(map)) => Ok(map
                .into_iter()
                .filter_map(|(k, v)| {
                    let s = match v {
                        serde_json::Value::String(s) => s,
                        serde_json::Value::Null => return None,
                        other => other.to_string(),
                    };
                    Some((k, s))
                })
                .collect()),
            Ok(_) => Err("record is not a JSON object".to_string()),
            Err(e) => Err(format!("json: {e}")),
        };
        out.push((idx + 1, parsed));
    }
    Ok(out)
}

fn build_speech(manifest: &CorpusManifest, fields: &BTreeMap<String, String>) -> Result<Speech, String> {
    let m = &manifest.mapping;
    let get = |col: &str| -> Result<&str, String> {
        fields
            .get(col)
            .map(String::as_str)
            .ok_or_else(|| format!("missing field {col}"))
    };
    let speech_id = get(&m.speech_id)?.trim().to_string();
    if speech_id.is_empty() {
        return Err("empty speech_id".into());
    }
    let date_raw = get(&m.date)?.trim();
    let date = NaiveDate::parse_from_str(date_raw, &manifest.date_format)
        .map_err(|e| format!("unparseable date {date_raw:?}: {e}"))?;
    if date.year() < manifest.year_from || date.year() > manifest.year_to {
        return Err(format!(
            "date {date} outside declared range {}..{}",
            manifest.year_from, manifest.year_to
        ));
    }
    let speaker_name = get(&m.speaker_name)?.trim().to_string();
    let party = get(&m.speaker_party)?.trim();
    let speaker_party = match party {
        "" | "NA" | "-" => None,
        p => Some(p.to_string()),
    };
    let chamber = match &m.chamber {
        Some(col) => fields.get(col).map(|c| c.trim().to_string()).filter(|c| !c.is_empty()),
        None => None,
    };
    let text = normalize_text(get(&m.text)?);
    if text.is_empty() {
        return Err("empty text".into());
    }
    Ok(Speech {
        speech_id,
        country: manifest.country.clone(),
        date,
        speaker_name,
        speaker_party,
        chamber,
        text,
        source: manifest.name.clone(),
        address_stripped: false,
        excluded: false,
    })
}

/// Unifies line endings and trims surrounding whitespace. Tokens are untouched.
pub fn normalize_text(raw: &str) -> String {
    raw.replace("\r\n", "\n").replace('\r', "\n").trim().to_string()
}

/// Per-country regexes identifying a formal address sentence.
#[derive(Debug, Clone, Default)]
pub struct VocativePatterns {
    by_country: BTreeMap<String, Vec<Regex>>,
}

impl VocativePatterns {
    /// Parses a TOML table of `COUNTRY = ["regex", ...]`. Patterns are case-insensitive.
    pub fn from_toml(raw: &str) -> Result<Self, IngestError> {
        let table: BTreeMap<String, Vec<String>> =
            toml::from_str(raw).map_err(|e| IngestError::Manifest(format!("vocatives: {e}")))?;
        let mut by_country = BTreeMap::new();
        for (country, patterns) in table {
            let compiled = patterns
                .iter()
                .map(|p| {
                    RegexBuilder::new(p)
                        .case_insensitive(true)
                        .build()
                        .map_err(|source| IngestError::Pattern {
                            country: country.clone(),
                            source,
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            by_country.insert(country, compiled);
        }
        Ok(Self { by_country })
    }

    pub fn load(path: &Path) -> Result<Self, IngestError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn for_country(&self, country: &str) -> &[Regex] {
        self.by_country.get(country).map(Vec::as_slice).unwrap_or(&[])
    }

    fn is_address(&self, country: &str, sentence: &str) -> bool {
        let sentence = sentence.trim();
        self.for_country(country).iter().any(|re| re.is_match(sentence))
    }
}

/// Byte offset just past the first sentence: the first `.`, `!` or `?` that is
/// followed by whitespace, plus that whitespace. Falls back to the whole text.
fn first_sentence_end(text: &str) -> usize {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if matches!(bytes[i], b'.' | b'!' | b'?') {
            let mut j = i + 1;
            while j < bytes.len() && matches!(bytes[j], b'.' | b'!' | b'?') {
                j += 1;
            }
            if j == bytes.len() {
                return j;
            }
            if text[j..].starts_with(char::is_whitespace) {
                let rest = &text[j..];
                let ws = rest.len() - rest.trim_start().len();
                return j + ws;
            }
            i = j;
            continue;
        }
        i += 1;
    }
    bytes.len()
}

/// Removes the leading formal-address sentence(s) of a speech.
///
/// Consecutive leading address sentences ("Dear colleagues! Dear Prime
/// Minister!") are all removed, which makes the operation idempotent. What
/// remains is a byte-identical suffix of the original text.
pub fn strip_address(speech: &Speech, patterns: &VocativePatterns) -> Speech {
    let mut offset = 0;
    loop {
        let rest = &speech.text[offset..];
        if rest.is_empty() {
            break;
        }
        let end = first_sentence_end(rest);
        if !patterns.is_address(&speech.country, &rest[..end]) {
            break;
        }
        offset += end;
    }
    let mut out = speech.clone();
    if offset > 0 {
        out.text = speech.text[offset..].to_string();
        out.address_stripped = true;
        out.excluded = out.text.trim().is_empty();
    }
    out
}

/// Writes speeches as JSONL, one record per line.
pub fn write_store<W: Write>(mut w: W, speeches: &[Speech]) -> std::io::Result<()> {
    for s in speeches {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_store<R: Read>(r: R) -> Result<Vec<Speech>, IngestError> {
    crate::jsonl::read(r).map_err(|e| IngestError::Store {
        line: e.line,
        message: e.message,
    })
}

pub fn write_rejects<W: Write>(mut w: W, rejects: &[RejectRecord]) -> std::io::Result<()> {
    for r in rejects {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Sidecar written next to a speech store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub corpora: Vec<CorpusManifest>,
    pub speeches: usize,
    pub rejects: usize,
    pub excluded: usize,
}

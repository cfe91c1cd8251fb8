//! Turns raw model responses into [`Mention`]s.
//!
//! Models are asked for a CSV table but often wrap it in prose or answer in
//! plain text. The parser looks for the longest CSV block whose header names
//! the expected columns; anything it cannot use is routed to the reprocess
//! queue instead of being dropped.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use tracing::debug;

use crate::corpus::Speech;
use crate::gateway::{call_with_retry, Backend, FinishStatus, Query, RawResponse, RetryPolicy, FORMAT_REMINDER};
use crate::resolution::fold;

/// One reference to a political actor extracted from a speech.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub speech_id: String,
    /// Position of the row in the model's table.
    pub row: usize,
    pub actor_surface: String,
    pub context_description: String,
    pub political_rationale: String,
    pub sentiment: i8,
    /// The model gave a fractional score that was rounded.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub sentiment_rounded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReprocessReason {
    NotCsv,
    BadColumns,
    BadSentiment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReprocessEntry {
    pub speech_id: String,
    pub raw_body: String,
    pub reason: ReprocessReason,
    pub attempts: u32,
    /// Row-level entries name the offending row and its actor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor: Option<String>,
    pub detail: String,
}

impl ReprocessEntry {
    fn response_level(resp: &RawResponse, reason: ReprocessReason, detail: impl Into<String>) -> Self {
        Self {
            speech_id: resp.speech_id.clone(),
            raw_body: resp.body.clone(),
            reason,
            attempts: 0,
            row: None,
            actor: None,
            detail: detail.into(),
        }
    }
}

/// Accepted header spellings for each expected column, compared after folding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnAliases {
    pub actor: Vec<String>,
    pub context: Vec<String>,
    pub rationale: Vec<String>,
    pub sentiment: Vec<String>,
}

impl Default for ColumnAliases {
    fn default() -> Self {
        let v = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        Self {
            actor: v(&[
                "actor",
                "political actor",
                "actor name",
                "name",
                "entity",
                "political entity",
            ]),
            context: v(&[
                "context",
                "context description",
                "description",
                "detailed analysis",
                "sections",
            ]),
            rationale: v(&["rationale", "political rationale", "reason", "justification"]),
            sentiment: v(&[
                "sentiment",
                "score",
                "sentiment score",
                "attitude",
                "emotional attitude",
            ]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Actor,
    Context,
    Rationale,
    Sentiment,
}

impl ColumnAliases {
    fn column_of(&self, header: &str) -> Option<Column> {
        let h = fold(header);
        let hit = |names: &[String]| names.iter().any(|n| fold(n) == h);
        if hit(&self.actor) {
            Some(Column::Actor)
        } else if hit(&self.context) {
            Some(Column::Context)
        } else if hit(&self.rationale) {
            Some(Column::Rationale)
        } else if hit(&self.sentiment) {
            Some(Column::Sentiment)
        } else {
            None
        }
    }

    /// Column positions if every expected column is present.
    fn layout(&self, header: &[String]) -> Option<[usize; 4]> {
        let mut pos = [None; 4];
        for (i, h) in header.iter().enumerate() {
            if let Some(c) = self.column_of(h) {
                let slot = &mut pos[c as usize];
                if slot.is_none() {
                    *slot = Some(i);
                }
            }
        }
        Some([pos[0]?, pos[1]?, pos[2]?, pos[3]?])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedResponse {
    pub mentions: Vec<Mention>,
    pub reprocess: Vec<ReprocessEntry>,
    /// A well-formed table with no rows.
    pub empty_table: bool,
}

struct Block {
    layout: [usize; 4],
    rows: Vec<Vec<String>>,
}

fn parse_line(line: &str) -> Option<Vec<String>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(line.as_bytes());
    let rec = r.records().next()?.ok()?;
    Some(rec.iter().map(str::to_string).collect())
}

/// Reads records from `text` (which starts at a header line) until the field
/// count changes or the CSV stops parsing.
fn read_block(text: &str, layout: [usize; 4], width: usize) -> Block {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let Ok(rec) = rec else { break };
        if i == 0 {
            continue;
        }
        if rec.len() != width {
            break;
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Block { layout, rows }
}

fn clean_body(body: &str) -> String {
    body.replace("\r\n", "\n")
        .lines()
        .map(|l| if l.trim_start().starts_with("```") { "" } else { l })
        .collect::<Vec<_>>()
        .join("\n")
}

fn locate_table(body: &str, aliases: &ColumnAliases) -> Option<Block> {
    let mut best: Option<Block> = None;
    let mut offset = 0;
    for line in body.split_inclusive('\n') {
        if let Some(fields) = parse_line(line.trim_end_matches('\n')) {
            if let Some(layout) = aliases.layout(&fields) {
                let block = read_block(&body[offset..], layout, fields.len());
                if best.as_ref().is_none_or(|b| block.rows.len() > b.rows.len()) {
                    best = Some(block);
                }
            }
        }
        offset += line.len();
    }
    best
}

/// Two consecutive lines with the same number (≥ 3) of comma-separated fields.
fn looks_tabular(body: &str) -> bool {
    let widths: Vec<usize> = body
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| parse_line(l).map(|f| f.len()).unwrap_or(0))
        .collect();
    widths.windows(2).any(|w| w[0] >= 3 && w[0] == w[1])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SentimentError {
    NotNumeric,
    OutOfRange(i64),
}

/// Parses a sentiment cell. Fractional values are rounded half away from zero
/// and reported as rounded.
pub fn parse_sentiment(raw: &str) -> Result<(i8, bool), SentimentError> {
    let cleaned: String = raw
        .trim()
        .chars()
        .map(|c| match c {
            '\u{2212}' | '\u{2013}' | '\u{2014}' => '-',
            c => c,
        })
        .collect();
    let cleaned = cleaned.trim_start_matches('+');
    let numeric: String = cleaned
        .char_indices()
        .take_while(|&(i, c)| c.is_ascii_digit() || c == '.' || (i == 0 && c == '-'))
        .map(|(_, c)| c)
        .collect();
    let value: f64 = numeric.parse().map_err(|_| SentimentError::NotNumeric)?;
    if !value.is_finite() {
        return Err(SentimentError::NotNumeric);
    }
    let rounded = value.round();
    let was_rounded = rounded != value;
    if !(-5.0..=5.0).contains(&rounded) {
        return Err(SentimentError::OutOfRange(rounded as i64));
    }
    Ok((rounded as i8, was_rounded))
}

/// Parses one response. Never panics on arbitrary input.
pub fn parse_response(resp: &RawResponse, aliases: &ColumnAliases) -> ParsedResponse {
    let mut out = ParsedResponse::default();
    if resp.status != FinishStatus::Ok {
        return out;
    }
    let body = clean_body(&resp.body);
    let Some(block) = locate_table(&body, aliases) else {
        let reason = if looks_tabular(&body) {
            ReprocessReason::BadColumns
        } else {
            ReprocessReason::NotCsv
        };
        let detail = match reason {
            ReprocessReason::BadColumns => "table header lacks actor/context/rationale/sentiment",
            _ => "no CSV table in response",
        };
        out.reprocess.push(ReprocessEntry::response_level(resp, reason, detail));
        return out;
    };
    if block.rows.is_empty() {
        out.empty_table = true;
        return out;
    }
    let [a, c, r, s] = block.layout;
    for (row, fields) in block.rows.iter().enumerate() {
        let actor = fields[a].trim().to_string();
        let row_entry = |reason, detail: String| ReprocessEntry {
            speech_id: resp.speech_id.clone(),
            raw_body: resp.body.clone(),
            reason,
            attempts: 0,
            row: Some(row),
            actor: Some(actor.clone()),
            detail,
        };
        if actor.is_empty() {
            out.reprocess.push(row_entry(
                ReprocessReason::BadColumns,
                format!("row {row} has no actor"),
            ));
            continue;
        }
        match parse_sentiment(&fields[s]) {
            Ok((sentiment, sentiment_rounded)) => out.mentions.push(Mention {
                speech_id: resp.speech_id.clone(),
                row,
                actor_surface: actor.clone(),
                context_description: fields[c].trim().to_string(),
                political_rationale: fields[r].trim().to_string(),
                sentiment,
                sentiment_rounded,
            }),
            Err(e) => out.reprocess.push(row_entry(
                ReprocessReason::BadSentiment,
                format!("row {row} sentiment {:?}: {e:?}", fields[s]),
            )),
        }
    }
    out
}

/// Per-run accounting of parsed responses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub responses_in: usize,
    pub failed_responses: usize,
    pub responses_with_mentions: usize,
    pub responses_rejected: usize,
    pub empty_tables: usize,
    pub mentions: usize,
    pub reprocess_entries: usize,
    pub reasons: BTreeMap<String, usize>,
    pub rounded_sentiments: usize,
    pub recovered_mentions: usize,
    pub recovered_entries: usize,
    pub parked: usize,
    pub resubmissions: usize,
}

impl ParseReport {
    /// Every response lands in exactly one bucket.
    pub fn conserved(&self) -> bool {
        self.responses_in
            == self.failed_responses + self.responses_with_mentions + self.responses_rejected + self.empty_tables
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseRun {
    pub mentions: Vec<Mention>,
    pub reprocess: Vec<ReprocessEntry>,
    pub report: ParseReport,
}

pub fn parse_all(responses: &[RawResponse], aliases: &ColumnAliases) -> ParseRun {
    let mut run = ParseRun::default();
    for resp in responses {
        run.report.responses_in += 1;
        if resp.status != FinishStatus::Ok {
            run.report.failed_responses += 1;
            continue;
        }
        let parsed = parse_response(resp, aliases);
        if !parsed.mentions.is_empty() {
            run.report.responses_with_mentions += 1;
        } else if !parsed.reprocess.is_empty() {
            run.report.responses_rejected += 1;
        } else {
            run.report.empty_tables += 1;
        }
        run.mentions.extend(parsed.mentions);
        run.reprocess.extend(parsed.reprocess);
    }
    run.report.mentions = run.mentions.len();
    run.report.reprocess_entries = run.reprocess.len();
    run.report.rounded_sentiments = run.mentions.iter().filter(|m| m.sentiment_rounded).count();
    for e in &run.reprocess {
        let key = serde_json::to_value(e.reason)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        *run.report.reasons.entry(key).or_default() += 1;
    }
    run
}

#[derive(Debug, Clone, Default)]
pub struct ReprocessOutcome {
    pub mentions: Vec<Mention>,
    pub parked: Vec<ReprocessEntry>,
    /// Entries that produced usable output.
    pub recovered: usize,
    /// Row errors found in a retried response and queued again.
    pub requeued: usize,
    pub resubmissions: usize,
}

impl ReprocessOutcome {
    /// Every queued entry, original or requeued, was recovered or parked.
    pub fn conserved(&self, entries_in: usize) -> bool {
        entries_in + self.requeued == self.recovered + self.parked.len()
    }
}

/// Resubmits queued entries with a format reminder appended to the prompt.
///
/// Response-level entries keep every row of a successful retry; row-level
/// entries keep only the retried row for the same actor. Entries that fail
/// `cap` times are parked for manual review.
pub async fn reprocess(
    queue: Vec<ReprocessEntry>,
    speeches: &HashMap<String, Speech>,
    prompt: &str,
    backend: &dyn Backend,
    policy: &RetryPolicy,
    aliases: &ColumnAliases,
    cap: u32,
) -> ReprocessOutcome {
    let mut out = ReprocessOutcome::default();
    let reminded = format!("{prompt}{FORMAT_REMINDER}");
    let mut queue: std::collections::VecDeque<ReprocessEntry> = queue.into();
    while let Some(mut entry) = queue.pop_front() {
        let Some(speech) = speeches.get(&entry.speech_id) else {
            entry.detail = format!("{}; speech not in store", entry.detail);
            out.parked.push(entry);
            continue;
        };
        let mut recovered = false;
        while entry.attempts < cap {
            entry.attempts += 1;
            out.resubmissions += 1;
            let query = Query::Extract {
                speech_id: speech.speech_id.clone(),
                prompt: reminded.clone(),
                text: speech.text.clone(),
            };
            let Ok((body, attempts)) = call_with_retry(backend, &query, policy).await else {
                continue;
            };
            let resp = RawResponse {
                speech_id: speech.speech_id.clone(),
                body,
                backend: backend.id().to_string(),
                latency_ms: 0,
                timestamp: chrono::DateTime::UNIX_EPOCH,
                status: FinishStatus::Ok,
                attempts,
                error: None,
            };
            let parsed = parse_response(&resp, aliases);
            match entry.row {
                None => {
                    let response_failed = parsed.mentions.is_empty()
                        && !parsed.empty_table
                        && parsed.reprocess.iter().any(|e| e.row.is_none());
                    if response_failed {
                        continue;
                    }
                    out.mentions.extend(parsed.mentions);
                    for mut e in parsed.reprocess {
                        e.attempts = entry.attempts;
                        out.requeued += 1;
                        queue.push_back(e);
                    }
                    recovered = true;
                }
                Some(row) => {
                    let want = entry.actor.as_deref().map(fold).unwrap_or_default();
                    let pick = parsed
                        .mentions
                        .iter()
                        .find(|m| m.row == row && fold(&m.actor_surface) == want)
                        .or_else(|| parsed.mentions.iter().find(|m| fold(&m.actor_surface) == want));
                    let Some(m) = pick else { continue };
                    out.mentions.push(Mention { row, ..m.clone() });
                    recovered = true;
                }
            }
            break;
        }
        if recovered {
            out.recovered += 1;
        } else {
            debug!(speech_id = %entry.speech_id, attempts = entry.attempts, "parked");
            out.parked.push(entry);
        }
    }
    out
}

//! Quality control against human coding: sampling, alignment of AI findings
//! with Gold, Supergold construction, and the sensitivity and accuracy
//! metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use chrono::{DateTime, Utc};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Speech;
use crate::extraction::Mention;
use crate::gateway::{verify_mention, Backend, RetryPolicy, Verdict};
use crate::resolution::ResolvedReference;
use crate::resolution::{fold, fuzzy_match};

#[derive(Debug, thiserror::Error)]
pub enum ValidationError {
    #[error("sampling {k} non-adjacent speeches needs at least {required} eligible speeches, store has {available}")]
    StoreTooSmall {
        k: usize,
        required: usize,
        available: usize,
    },
    #[error("gold line {line}: {message}")]
    Gold { line: usize, message: String },
    #[error("entity truth line {line}: {message}")]
    Truth { line: usize, message: String },
    #[error("supergold has no confirmed records")]
    EmptySupergold,
    #[error("{0} supergold records still await human confirmation")]
    PendingSupergold(usize),
    #[error("entity-stage fixture is empty")]
    EmptyFixture,
    #[error("verifier backend {0:?} is the extraction backend; use a different model")]
    SameBackend(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `k` positions out of `0..n`, no two consecutive, sorted, reproducible
/// from `seed`. Uniform over all such subsets.
pub fn sample_indices(n: usize, k: usize, seed: u64) -> Result<Vec<usize>, ValidationError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let required = 2 * k - 1;
    if n < required {
        return Err(ValidationError::StoreTooSmall {
            k,
            required,
            available: n,
        });
    }
    // Choosing k of n−k+1 slots and spreading them by their rank is a
    // bijection onto the non-adjacent k-subsets of n.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picks = rand::seq::index::sample(&mut rng, n - k + 1, k).into_vec();
    picks.sort_unstable();
    Ok(picks.into_iter().enumerate().map(|(i, v)| v + i).collect())
}

/// Samples non-excluded speeches in source order. Two picks are never
/// neighbours among eligible speeches, hence never neighbours in the store.
pub fn sample_speeches(store: &[Speech], k: usize, seed: u64) -> Result<Vec<Speech>, ValidationError> {
    let eligible: Vec<&Speech> = store.iter().filter(|s| !s.excluded).collect();
    let idx = sample_indices(eligible.len(), k, seed)?;
    Ok(idx.into_iter().map(|i| eligible[i].clone()).collect())
}

/// One human-coded finding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldRecord {
    pub speech_id: String,
    pub coder: String,
    #[serde(rename = "actor", alias = "actor_surface")]
    pub actor_surface: String,
    pub sentiment: i8,
}

impl GoldRecord {
    pub fn check(&self, sampled: Option<&BTreeSet<String>>) -> Result<(), String> {
        if self.actor_surface.trim().is_empty() {
            return Err("actor is empty".into());
        }
        if !(-5..=5).contains(&self.sentiment) {
            return Err(format!("sentiment {} outside -5..5", self.sentiment));
        }
        if let Some(ids) = sampled {
            if !ids.contains(&self.speech_id) {
                return Err(format!("speech {} is not in the sample", self.speech_id));
            }
        }
        Ok(())
    }
}

/// Reads `speech_id,coder,actor,sentiment` CSV.
pub fn read_gold(reader: impl Read, sampled: Option<&BTreeSet<String>>) -> Result<Vec<GoldRecord>, ValidationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<GoldRecord>().enumerate() {
        let line = i + 2;
        let rec = row.map_err(|e| ValidationError::Gold {
            line,
            message: e.to_string(),
        })?;
        rec.check(sampled)
            .map_err(|message| ValidationError::Gold { line, message })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn gold_csv(records: &[GoldRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in records {
        w.serialize(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

/// A finding on one side of an alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    /// Row number for AI findings; rank within the speech for Gold findings.
    pub index: usize,
    pub actor_surface: String,
    pub sentiment: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub id: String,
    pub speech_id: String,
    pub ai: Option<Finding>,
    pub gold: Option<Finding>,
    pub score: Option<f64>,
    /// The Gold finding has a near-identical sibling in the same speech.
    #[serde(default)]
    pub duplicate: bool,
    #[serde(default)]
    pub corrected: bool,
}

impl Triple {
    fn new(speech_id: &str, ai: Option<Finding>, gold: Option<Finding>) -> Self {
        let score = match (&ai, &gold) {
            (Some(a), Some(g)) => Some(fuzzy_match(&a.actor_surface, &g.actor_surface)),
            _ => None,
        };
        Self {
            id: triple_id(speech_id, ai.as_ref(), gold.as_ref()),
            speech_id: speech_id.to_string(),
            ai,
            gold,
            score,
            duplicate: false,
            corrected: false,
        }
    }

    fn sort_key(&self) -> (&str, usize, usize) {
        (
            &self.speech_id,
            self.ai.as_ref().map_or(usize::MAX, |f| f.index),
            self.gold.as_ref().map_or(usize::MAX, |f| f.index),
        )
    }

    /// Surface form used for the Supergold entry.
    pub fn actor_surface(&self) -> &str {
        self.gold
            .as_ref()
            .or(self.ai.as_ref())
            .map(|f| f.actor_surface.as_str())
            .unwrap_or("")
    }
}

/// `{speech}.a{row}.g{rank}` with absent sides omitted.
pub fn triple_id(speech_id: &str, ai: Option<&Finding>, gold: Option<&Finding>) -> String {
    let mut id = speech_id.to_string();
    if let Some(a) = ai {
        id.push_str(&format!(".a{}", a.index));
    }
    if let Some(g) = gold {
        id.push_str(&format!(".g{}", g.index));
    }
    id
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum CorrectionOp {
    /// Fold another triple of the same speech into this one. Where both
    /// carry a finding on the same side, the other one is dropped as a
    /// duplicate.
    Merge { with: String },
    /// Separate a pair into two singletons.
    Split,
    /// Remove the triple and its findings.
    Delete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correction {
    pub triple_id: String,
    #[serde(flatten)]
    pub op: CorrectionOp,
    pub coder: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub triple_id: String,
    pub op: String,
    pub coder: String,
    /// Triple ids produced by the operation.
    pub result: Vec<String>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CorrectionError {
    #[error("no triple {0}")]
    UnknownTriple(String),
    #[error("cannot merge {0} with itself")]
    SelfMerge(String),
    #[error("{0} and {1} belong to different speeches")]
    CrossSpeech(String, String),
    #[error("{0} is not a pair")]
    NotAPair(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pub threshold: f64,
    pub triples: Vec<Triple>,
    #[serde(default)]
    pub audit: Vec<AuditEntry>,
}

impl MatchSet {
    pub fn get(&self, id: &str) -> Option<&Triple> {
        self.triples.iter().find(|t| t.id == id)
    }

    fn take(&mut self, id: &str) -> Result<Triple, CorrectionError> {
        let pos = self
            .triples
            .iter()
            .position(|t| t.id == id)
            .ok_or_else(|| CorrectionError::UnknownTriple(id.to_string()))?;
        Ok(self.triples.remove(pos))
    }

    fn finish(&mut self) {
        self.triples.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
        flag_duplicates(&mut self.triples, self.threshold);
    }

    /// Applies one manual correction and records it in the audit trail.
    pub fn apply(&mut self, c: &Correction) -> Result<Vec<String>, CorrectionError> {
        let mut note = String::new();
        let produced = match &c.op {
            CorrectionOp::Merge { with } => {
                if *with == c.triple_id {
                    return Err(CorrectionError::SelfMerge(with.clone()));
                }
                let (a, b) = match (self.get(&c.triple_id), self.get(with)) {
                    (None, _) => return Err(CorrectionError::UnknownTriple(c.triple_id.clone())),
                    (_, None) => return Err(CorrectionError::UnknownTriple(with.clone())),
                    (Some(a), Some(b)) if a.speech_id != b.speech_id => {
                        return Err(CorrectionError::CrossSpeech(a.id.clone(), b.id.clone()))
                    }
                    _ => (self.take(&c.triple_id)?, self.take(with)?),
                };
                let mut dropped = Vec::new();
                if let (Some(_), Some(x)) = (&a.ai, &b.ai) {
                    dropped.push(format!("a{}", x.index));
                }
                if let (Some(_), Some(x)) = (&a.gold, &b.gold) {
                    dropped.push(format!("g{}", x.index));
                }
                if !dropped.is_empty() {
                    note = format!("dropped {} as duplicate", dropped.join(", "));
                }
                let mut merged = Triple::new(&a.speech_id, a.ai.or(b.ai), a.gold.or(b.gold));
                merged.corrected = true;
                let id = merged.id.clone();
                self.triples.push(merged);
                vec![id]
            }
            CorrectionOp::Split => {
                let t = self
                    .get(&c.triple_id)
                    .ok_or_else(|| CorrectionError::UnknownTriple(c.triple_id.clone()))?;
                if t.ai.is_none() || t.gold.is_none() {
                    return Err(CorrectionError::NotAPair(t.id.clone()));
                }
                let t = self.take(&c.triple_id)?;
                let mut ai = Triple::new(&t.speech_id, t.ai, None);
                let mut gold = Triple::new(&t.speech_id, None, t.gold);
                ai.corrected = true;
                gold.corrected = true;
                let ids = vec![ai.id.clone(), gold.id.clone()];
                self.triples.push(ai);
                self.triples.push(gold);
                ids
            }
            CorrectionOp::Delete => {
                self.take(&c.triple_id)?;
                Vec::new()
            }
        };
        self.audit.push(AuditEntry {
            triple_id: c.triple_id.clone(),
            op: match c.op {
                CorrectionOp::Merge { .. } => "merge",
                CorrectionOp::Split => "split",
                CorrectionOp::Delete => "delete",
            }
            .into(),
            coder: c.coder.clone(),
            result: produced.clone(),
            note,
            at: c.at,
        });
        self.finish();
        Ok(produced)
    }

    /// Applies stored corrections in order. Corrections whose target no
    /// longer exists are skipped and reported.
    pub fn apply_overlay(&mut self, corrections: &[Correction]) -> Vec<(Correction, CorrectionError)> {
        let mut skipped = Vec::new();
        for c in corrections {
            if let Err(e) = self.apply(c) {
                tracing::warn!(triple = %c.triple_id, "correction skipped: {e}");
                skipped.push((c.clone(), e));
            }
        }
        skipped
    }

    pub fn ai_findings(&self) -> usize {
        self.triples.iter().filter(|t| t.ai.is_some()).count()
    }

    pub fn gold_findings(&self) -> usize {
        self.triples.iter().filter(|t| t.gold.is_some()).count()
    }
}

fn flag_duplicates(triples: &mut [Triple], threshold: f64) {
    let mut by_speech: BTreeMap<&str, Vec<(usize, &str)>> = BTreeMap::new();
    for (i, t) in triples.iter().enumerate() {
        if let Some(g) = &t.gold {
            by_speech.entry(&t.speech_id).or_default().push((i, &g.actor_surface));
        }
    }
    let mut flagged = BTreeSet::new();
    for golds in by_speech.values() {
        for (x, (i, a)) in golds.iter().enumerate() {
            for (j, b) in &golds[x + 1..] {
                if fuzzy_match(a, b) >= threshold {
                    flagged.insert(*i);
                    flagged.insert(*j);
                }
            }
        }
    }
    for (i, t) in triples.iter_mut().enumerate() {
        t.duplicate = flagged.contains(&i);
    }
}

/// Gold findings ranked within each speech by content, so ids do not depend
/// on file order.
fn rank_gold(gold: &[GoldRecord]) -> BTreeMap<&str, Vec<Finding>> {
    let mut by_speech: BTreeMap<&str, Vec<&GoldRecord>> = BTreeMap::new();
    for g in gold {
        by_speech.entry(&g.speech_id).or_default().push(g);
    }
    by_speech
        .into_iter()
        .map(|(speech, mut rows)| {
            rows.sort_by(|a, b| {
                (fold(&a.actor_surface), &a.actor_surface, a.sentiment, &a.coder).cmp(&(
                    fold(&b.actor_surface),
                    &b.actor_surface,
                    b.sentiment,
                    &b.coder,
                ))
            });
            let findings = rows
                .into_iter()
                .enumerate()
                .map(|(index, g)| Finding {
                    index,
                    actor_surface: g.actor_surface.clone(),
                    sentiment: g.sentiment,
                })
                .collect();
            (speech, findings)
        })
        .collect()
}

/// Greedy best-score matching per speech. Pairs scoring at least
/// `threshold` are taken in descending score order; the rest stay singletons.
pub fn align(ai: &[Mention], gold: &[GoldRecord], threshold: f64) -> MatchSet {
    let mut ai_by_speech: BTreeMap<&str, Vec<Finding>> = BTreeMap::new();
    for m in ai {
        ai_by_speech.entry(&m.speech_id).or_default().push(Finding {
            index: m.row,
            actor_surface: m.actor_surface.clone(),
            sentiment: m.sentiment,
        });
    }
    let gold_by_speech = rank_gold(gold);
    let speeches: BTreeSet<&str> = ai_by_speech.keys().chain(gold_by_speech.keys()).copied().collect();

    let mut triples = Vec::new();
    for speech in speeches {
        let mut a = ai_by_speech.remove(speech).unwrap_or_default();
        a.sort_by_key(|f| f.index);
        let g = gold_by_speech.get(speech).cloned().unwrap_or_default();
        let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
        for (i, fa) in a.iter().enumerate() {
            for (j, fg) in g.iter().enumerate() {
                let s = fuzzy_match(&fa.actor_surface, &fg.actor_surface);
                if s >= threshold {
                    candidates.push((s, i, j));
                }
            }
        }
        // Ties go to the closer sentiment, then to position.
        candidates.sort_by(|x, y| {
            y.0.total_cmp(&x.0)
                .then_with(|| {
                    let dx = (a[x.1].sentiment - g[x.2].sentiment).abs();
                    let dy = (a[y.1].sentiment - g[y.2].sentiment).abs();
                    dx.cmp(&dy)
                })
                .then_with(|| (x.1, x.2).cmp(&(y.1, y.2)))
        });
        let mut used_a = vec![false; a.len()];
        let mut used_g = vec![false; g.len()];
        for (_, i, j) in candidates {
            if used_a[i] || used_g[j] {
                continue;
            }
            used_a[i] = true;
            used_g[j] = true;
            triples.push(Triple::new(speech, Some(a[i].clone()), Some(g[j].clone())));
        }
        for (i, f) in a.into_iter().enumerate() {
            if !used_a[i] {
                triples.push(Triple::new(speech, Some(f), None));
            }
        }
        for (j, f) in g.into_iter().enumerate() {
            if !used_g[j] {
                triples.push(Triple::new(speech, None, Some(f)));
            }
        }
    }
    let mut ms = MatchSet {
        threshold,
        triples,
        audit: Vec::new(),
    };
    ms.finish();
    ms
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    HumanOnly,
    AiVerified,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupergoldStatus {
    Pending,
    Confirmed,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupergoldRecord {
    /// Id of the triple the record came from.
    pub id: String,
    pub speech_id: String,
    pub actor_surface: String,
    pub provenance: Provenance,
    pub status: SupergoldStatus,
    /// Second-model answer for AI-only findings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_by: Option<String>,
}

impl SupergoldRecord {
    pub fn confirmed(&self) -> bool {
        self.status == SupergoldStatus::Confirmed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SupergoldDecision {
    pub id: String,
    pub confirm: bool,
    pub coder: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SupergoldBuild {
    pub records: Vec<SupergoldRecord>,
    /// AI-only triples the verifier denied; these count as false positives.
    pub denied: Vec<String>,
}

/// Second-model verdicts for AI-only findings, keyed by triple id.
pub type Verdicts = BTreeMap<String, Verdict>;

/// Asks `verifier` about every AI-only triple not yet in `known`.
pub async fn verify_ai_only(
    ms: &MatchSet,
    speeches: &HashMap<String, Speech>,
    verifier: &dyn Backend,
    extraction_backend: &str,
    policy: &RetryPolicy,
    known: &Verdicts,
) -> Result<Verdicts, ValidationError> {
    if verifier.id() == extraction_backend {
        return Err(ValidationError::SameBackend(extraction_backend.to_string()));
    }
    let mut out = Verdicts::new();
    for t in &ms.triples {
        let (Some(a), None) = (&t.ai, &t.gold) else {
            continue;
        };
        let verdict = match (known.get(&t.id), speeches.get(&t.speech_id)) {
            (Some(v), _) => *v,
            (None, Some(speech)) => verify_mention(&a.actor_surface, speech, verifier, policy).await.verdict,
            (None, None) => Verdict::Indeterminate,
        };
        out.insert(t.id.clone(), verdict);
    }
    Ok(out)
}

/// Human findings are copied; AI-only findings enter when the verifier
/// affirmed them or could not decide. Human decisions are applied last,
/// everything else stays pending.
pub fn derive_supergold(ms: &MatchSet, verdicts: &Verdicts, decisions: &[SupergoldDecision]) -> SupergoldBuild {
    let mut out = SupergoldBuild::default();
    for t in &ms.triples {
        let (provenance, verdict) = match (&t.ai, &t.gold) {
            (Some(_), Some(_)) => (Provenance::Both, None),
            (None, Some(_)) => (Provenance::HumanOnly, None),
            (Some(_), None) => match verdicts.get(&t.id).copied().unwrap_or(Verdict::Indeterminate) {
                Verdict::No => {
                    out.denied.push(t.id.clone());
                    continue;
                }
                v => (Provenance::AiVerified, Some(v)),
            },
            (None, None) => continue,
        };
        out.records.push(SupergoldRecord {
            id: t.id.clone(),
            speech_id: t.speech_id.clone(),
            actor_surface: t.actor_surface().to_string(),
            provenance,
            status: SupergoldStatus::Pending,
            verdict,
            decided_by: None,
        });
    }
    apply_supergold_decisions(&mut out.records, decisions);
    out
}

/// Verification followed by derivation, with no human decisions yet.
pub async fn build_supergold(
    ms: &MatchSet,
    speeches: &HashMap<String, Speech>,
    verifier: &dyn Backend,
    extraction_backend: &str,
    policy: &RetryPolicy,
) -> Result<SupergoldBuild, ValidationError> {
    let verdicts = verify_ai_only(ms, speeches, verifier, extraction_backend, policy, &Verdicts::new()).await?;
    Ok(derive_supergold(ms, &verdicts, &[]))
}

/// Applies human decisions by record id; unknown ids are returned.
pub fn apply_supergold_decisions(records: &mut [SupergoldRecord], decisions: &[SupergoldDecision]) -> Vec<String> {
    let mut unknown = Vec::new();
    for d in decisions {
        match records.iter_mut().find(|r| r.id == d.id) {
            Some(r) => {
                r.status = if d.confirm {
                    SupergoldStatus::Confirmed
                } else {
                    SupergoldStatus::Rejected
                };
                r.decided_by = Some(d.coder.clone());
            }
            None => unknown.push(d.id.clone()),
        }
    }
    unknown
}

/// Unattended runs: confirms human and verifier-affirmed records, rejects
/// the ones the verifier could not decide.
pub fn auto_confirm(records: &mut [SupergoldRecord]) {
    for r in records.iter_mut().filter(|r| r.status == SupergoldStatus::Pending) {
        r.status = if r.verdict == Some(Verdict::Indeterminate) {
            SupergoldStatus::Rejected
        } else {
            SupergoldStatus::Confirmed
        };
        r.decided_by = Some("auto".into());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationMetrics {
    pub supergold_size: usize,
    pub ai_findings: usize,
    pub gold_findings: usize,
    pub valid_ai_findings: usize,
    pub matched_pairs: usize,
    pub sensitivity_vs_supergold: f64,
    pub human_sensitivity_vs_supergold: f64,
    /// Valid AI findings per human finding; exceeds 100 when the model
    /// finds more than the coder.
    pub sensitivity_vs_human: Option<f64>,
    pub fdr: Option<f64>,
    pub mean_abs_diff: Option<f64>,
    pub mean_signed_diff: Option<f64>,
    #[serde(default)]
    pub entity_precision: Option<f64>,
    #[serde(default)]
    pub entity_recall: Option<f64>,
    #[serde(default)]
    pub entity_f1: Option<f64>,
}

fn pct(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 * 100.0 / den as f64)
}

/// Metrics over confirmed Supergold records. Sentiment differences are
/// AI minus Gold over matched pairs.
pub fn compute_metrics(ms: &MatchSet, supergold: &[SupergoldRecord]) -> Result<ValidationMetrics, ValidationError> {
    let pending = supergold
        .iter()
        .filter(|r| r.status == SupergoldStatus::Pending)
        .count();
    if pending > 0 {
        return Err(ValidationError::PendingSupergold(pending));
    }
    let confirmed: BTreeSet<&str> = supergold
        .iter()
        .filter(|r| r.confirmed())
        .map(|r| r.id.as_str())
        .collect();
    if confirmed.is_empty() {
        return Err(ValidationError::EmptySupergold);
    }
    let mut sg_with_ai = 0;
    let mut sg_with_gold = 0;
    let mut sg_size = 0;
    let mut valid_ai = 0;
    let mut pairs = 0usize;
    let mut abs_sum = 0i64;
    let mut signed_sum = 0i64;
    for t in &ms.triples {
        let in_sg = confirmed.contains(t.id.as_str());
        if in_sg {
            sg_size += 1;
            sg_with_ai += usize::from(t.ai.is_some());
            sg_with_gold += usize::from(t.gold.is_some());
            valid_ai += usize::from(t.ai.is_some());
        }
        if let (Some(a), Some(g)) = (&t.ai, &t.gold) {
            let d = i64::from(a.sentiment) - i64::from(g.sentiment);
            pairs += 1;
            abs_sum += d.abs();
            signed_sum += d;
        }
    }
    if sg_size == 0 {
        return Err(ValidationError::EmptySupergold);
    }
    let ai_findings = ms.ai_findings();
    let gold_findings = ms.gold_findings();
    Ok(ValidationMetrics {
        supergold_size: sg_size,
        ai_findings,
        gold_findings,
        valid_ai_findings: valid_ai,
        matched_pairs: pairs,
        sensitivity_vs_supergold: pct(sg_with_ai, sg_size).unwrap_or(0.0),
        human_sensitivity_vs_supergold: pct(sg_with_gold, sg_size).unwrap_or(0.0),
        sensitivity_vs_human: pct(valid_ai, gold_findings),
        fdr: pct(ai_findings - valid_ai, ai_findings),
        mean_abs_diff: (pairs > 0).then(|| abs_sum as f64 / pairs as f64),
        mean_signed_diff: (pairs > 0).then(|| signed_sum as f64 / pairs as f64),
        entity_precision: None,
        entity_recall: None,
        entity_f1: None,
    })
}

/// Metrics that treat pending records as absent, for progress displays.
pub fn provisional_metrics(ms: &MatchSet, supergold: &[SupergoldRecord]) -> Result<ValidationMetrics, ValidationError> {
    let decided: Vec<SupergoldRecord> = supergold
        .iter()
        .filter(|r| r.status != SupergoldStatus::Pending)
        .cloned()
        .collect();
    compute_metrics(ms, &decided)
}

impl ValidationMetrics {
    pub fn with_entity(mut self, e: &EntityMetrics) -> Self {
        self.entity_precision = Some(e.precision);
        self.entity_recall = Some(e.recall);
        self.entity_f1 = Some(e.f1);
        self
    }
}

/// Hand label for one extracted mention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityTruth {
    pub speech_id: String,
    pub row: usize,
    /// Empty when the mention should not resolve to any entity.
    #[serde(default, deserialize_with = "empty_as_none")]
    pub canonical_entity: Option<String>,
}

fn empty_as_none<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
    let s: Option<String> = Option::deserialize(d)?;
    Ok(s.filter(|v| !v.trim().is_empty()))
}

pub fn read_entity_truth(reader: impl Read) -> Result<Vec<EntityTruth>, ValidationError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| ValidationError::Truth {
                line: i + 2,
                message: e.to_string(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub totals: Confusion,
    pub per_entity: BTreeMap<String, Confusion>,
}

fn prf(c: Confusion) -> (f64, f64, f64) {
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Precision and recall of canonicalization decisions. A wrong entity is
/// both a false positive (for the predicted entity) and a false negative
/// (for the true one).
pub fn entity_stage_metrics(
    resolved: &[ResolvedReference],
    truth: &[EntityTruth],
) -> Result<EntityMetrics, ValidationError> {
    if truth.is_empty() {
        return Err(ValidationError::EmptyFixture);
    }
    let truth_map: BTreeMap<(&str, usize), Option<&str>> = truth
        .iter()
        .map(|t| ((t.speech_id.as_str(), t.row), t.canonical_entity.as_deref()))
        .collect();
    let pred_map: BTreeMap<(&str, usize), Option<&str>> = resolved
        .iter()
        .map(|r| {
            (
                (r.mention.speech_id.as_str(), r.mention.row),
                r.canonical_entity.as_deref(),
            )
        })
        .collect();
    let keys: BTreeSet<&(&str, usize)> = truth_map.keys().chain(pred_map.keys()).collect();
    let mut totals = Confusion::default();
    let mut per_entity: BTreeMap<String, Confusion> = BTreeMap::new();
    for key in keys {
        let t = truth_map.get(key).copied().flatten();
        let p = pred_map.get(key).copied().flatten();
        match (p, t) {
            (Some(p), Some(t)) if p == t => {
                totals.tp += 1;
                per_entity.entry(t.to_string()).or_default().tp += 1;
            }
            (p, t) => {
                if let Some(p) = p {
                    totals.fp += 1;
                    per_entity.entry(p.to_string()).or_default().fp += 1;
                }
                if let Some(t) = t {
                    totals.fn_ += 1;
                    per_entity.entry(t.to_string()).or_default().fn_ += 1;
                }
            }
        }
    }
    let (precision, recall, f1) = prf(totals);
    Ok(EntityMetrics {
        precision,
        recall,
        f1,
        totals,
        per_entity,
    })
}

impl EntityMetrics {
    pub fn for_entity(&self, entity: &str) -> (f64, f64, f64) {
        prf(self.per_entity.get(entity).copied().unwrap_or_default())
    }
}

/// One labelled line of the quality report.
pub struct ReportRow<'a> {
    pub model: &'a str,
    pub country: &'a str,
    pub metrics: &'a ValidationMetrics,
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "N/A".into())
}

/// Plain-text table with the usual quality-control columns.
pub fn report_table(rows: &[ReportRow]) -> String {
    let header = [
        "Model",
        "Country",
        "Sensitivity vs Supergold (%)",
        "Sensitivity vs Human (%)",
        "Difference in Attitude vs Human",
        "Signed Difference",
        "FDR (%)",
        "Entity P/R/F1",
    ];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            let m = r.metrics;
            let entity = match (m.entity_precision, m.entity_recall, m.entity_f1) {
                (Some(p), Some(rc), Some(f)) => format!("{p:.2}/{rc:.2}/{f:.2}"),
                _ => "N/A".into(),
            };
            [
                r.model.to_string(),
                r.country.to_string(),
                cell(Some(m.sensitivity_vs_supergold)),
                cell(m.sensitivity_vs_human),
                cell(m.mean_abs_diff),
                cell(m.mean_signed_diff),
                cell(m.fdr),
                entity,
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join(" | ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out.push_str(&(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-") + "\n"));
    for row in &body {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
    }
    out
}

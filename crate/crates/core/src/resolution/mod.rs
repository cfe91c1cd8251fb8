//! Classification of extracted actors and their canonicalization to parties.
//!
//! Classification sorts an actor into one of four classes (or discards it as
//! non-political). Resolution then maps the surface form to a canonical
//! entity through the dated [`Registry`]: exact folded match first, then a
//! fuzzy match above threshold, then a suggestion that waits for a human.

mod fuzzy;
mod registry;

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::Speech;
use crate::extraction::Mention;
use crate::gateway::{call_with_retry, classification_prompt, suggestion_prompt, Backend, Query, RetryPolicy};

pub use fuzzy::{fold, fuzzy_match, MAX_DISTINCT};
pub use registry::{EntityClass, GovernmentSpan, Registry, RegistryEntry, RegistryError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "class")]
pub enum Classification {
    Class(EntityClass),
    /// Not a political actor.
    Discard,
    /// Classification failed; needs review.
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictSource {
    Registry,
    Llm,
}

/// A cached classification of one alias.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub country: String,
    pub alias: String,
    pub folded: String,
    #[serde(flatten)]
    pub classification: Classification,
    pub source: VerdictSource,
}

/// Append-only table of LLM classifications, consulted before asking again.
#[derive(Debug, Clone, Default)]
pub struct ClassificationCache {
    by_key: BTreeMap<(String, String), ClassificationRecord>,
    added: Vec<ClassificationRecord>,
}

impl ClassificationCache {
    pub fn from_records(records: Vec<ClassificationRecord>) -> Self {
        let by_key = records
            .into_iter()
            .map(|r| ((r.country.clone(), r.folded.clone()), r))
            .collect();
        Self {
            by_key,
            added: Vec::new(),
        }
    }

    pub fn get(&self, country: &str, folded: &str) -> Option<Classification> {
        self.by_key
            .get(&(country.to_string(), folded.to_string()))
            .map(|r| r.classification)
    }

    fn insert(&mut self, record: ClassificationRecord) {
        self.added.push(record.clone());
        self.by_key
            .insert((record.country.clone(), record.folded.clone()), record);
    }

    /// Records added since load, in insertion order.
    pub fn added(&self) -> &[ClassificationRecord] {
        &self.added
    }

    pub fn records(&self) -> Vec<ClassificationRecord> {
        self.by_key.values().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolveOptions {
    /// Minimum [`fuzzy_match`] score for an automatic registry match.
    pub fuzzy_threshold: f64,
    /// Below the threshold but at least this: queue a suggestion for review.
    pub suggestion_floor: f64,
}

impl Default for ResolveOptions {
    fn default() -> Self {
        Self {
            fuzzy_threshold: 0.85,
            suggestion_floor: 0.5,
        }
    }
}

fn best_registry_match<'a>(
    registry: &'a Registry,
    country: &str,
    folded: &str,
    date: NaiveDate,
) -> Option<(&'a RegistryEntry, f64)> {
    let mut best: Option<(&RegistryEntry, f64)> = None;
    for (alias, entry) in registry.valid_at(country, date) {
        let score = fuzzy_match(alias, folded);
        let better = match best {
            None => true,
            Some((b, s)) => score > s || (score == s && fold(&entry.alias) < fold(&b.alias)),
        };
        if better {
            best = Some((entry, score));
        }
    }
    best
}

fn parse_classification(body: &str) -> Option<Classification> {
    let folded = fold(body);
    let first_line = folded.as_str();
    if first_line.contains("discard") {
        return Some(Classification::Discard);
    }
    for (needle, class) in [
        ("foreign institution", EntityClass::ForeignInstitution),
        ("party or member", EntityClass::PartyOrMember),
        ("government", EntityClass::Government),
        ("institution", EntityClass::Institution),
    ] {
        if first_line.contains(needle) {
            return Some(Classification::Class(class));
        }
    }
    None
}

/// Classifies an actor: registry first, then the cache, then the backend.
pub async fn classify(
    mention: &Mention,
    speech: &Speech,
    registry: &Registry,
    cache: &mut ClassificationCache,
    opts: &ResolveOptions,
    backend: &dyn Backend,
    policy: &RetryPolicy,
) -> Classification {
    let folded = fold(&mention.actor_surface);
    if let Some(e) = registry.any_for_alias(&speech.country, &folded, Some(speech.date)) {
        return Classification::Class(e.entity_class);
    }
    if let Some((e, score)) = best_registry_match(registry, &speech.country, &folded, speech.date) {
        if score >= opts.fuzzy_threshold {
            return Classification::Class(e.entity_class);
        }
    }
    if let Some(c) = cache.get(&speech.country, &folded) {
        return c;
    }
    let query = Query::Classify {
        alias: mention.actor_surface.clone(),
        country: speech.country.clone(),
        prompt: classification_prompt(&speech.country, &mention.actor_surface),
    };
    let verdict = match call_with_retry(backend, &query, policy).await {
        Ok((body, _)) => parse_classification(&body),
        Err(_) => None,
    };
    match verdict {
        Some(c) => {
            cache.insert(ClassificationRecord {
                country: speech.country.clone(),
                alias: mention.actor_surface.clone(),
                folded,
                classification: c,
                source: VerdictSource::Llm,
            });
            c
        }
        None => Classification::Unresolved,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResolutionMethod {
    RegistryExact,
    RegistryFuzzy,
    LlmAssisted,
    Unresolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Government,
    Opposition,
}

/// A mention mapped onto a canonical entity and, where applicable, a party.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedReference {
    #[serde(flatten)]
    pub mention: Mention,
    pub date: NaiveDate,
    pub country: String,
    pub entity_class: Option<EntityClass>,
    pub canonical_entity: Option<String>,
    pub referring_party: Option<String>,
    pub referred_party: Option<String>,
    /// Whether the referred party governed on the speech date.
    pub referred_role: Option<Role>,
    pub self_reference: bool,
    pub resolution_method: ResolutionMethod,
    /// False only for llm-assisted matches awaiting human approval.
    pub confirmed: bool,
    pub match_score: Option<f64>,
}

impl ResolvedReference {
    /// Usable as a party-to-party reference in the index.
    pub fn is_party_dyad(&self, government_as_party: bool) -> bool {
        let class_ok = match self.entity_class {
            Some(EntityClass::PartyOrMember) => true,
            Some(EntityClass::Government) => government_as_party,
            _ => false,
        };
        class_ok
            && self.confirmed
            && self.resolution_method != ResolutionMethod::Unresolved
            && self.referred_party.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub canonical_entity: String,
    pub alias: String,
    pub party_id: Option<String>,
    pub score: f64,
}

/// A low-confidence match waiting for human approval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    /// `speech_id:row`, stable across runs.
    pub id: String,
    pub speech_id: String,
    pub row: usize,
    pub alias: String,
    pub country: String,
    pub date: NaiveDate,
    pub candidates: Vec<Candidate>,
    #[serde(default)]
    pub suggested: Option<String>,
}

/// Human decision on a [`QueueEntry`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionDecision {
    pub queue_id: String,
    pub approve: bool,
    #[serde(default)]
    pub canonical_entity: Option<String>,
}

pub fn queue_id(speech_id: &str, row: usize) -> String {
    format!("{speech_id}:{row}")
}

fn role_of(registry: &Registry, country: &str, date: NaiveDate, party: &str) -> Option<Role> {
    registry.government_at(country, date).map(|g| {
        if g.includes(party) {
            Role::Government
        } else {
            Role::Opposition
        }
    })
}

fn referred_party_for(registry: &Registry, entry: &RegistryEntry, country: &str, date: NaiveDate) -> Option<String> {
    match entry.entity_class {
        EntityClass::PartyOrMember => entry.party_id.clone(),
        EntityClass::Government => entry
            .party_id
            .clone()
            .or_else(|| registry.government_at(country, date).map(|g| g.party_id.clone())),
        _ => None,
    }
}

fn finish(mut r: ResolvedReference, registry: &Registry) -> ResolvedReference {
    r.referred_role = r
        .referred_party
        .as_deref()
        .and_then(|p| role_of(registry, &r.country, r.date, p));
    r.self_reference = matches!(
        (&r.referring_party, &r.referred_party),
        (Some(a), Some(b)) if a == b
    );
    r
}

/// Resolves one classified mention on the speech date.
///
/// Returns the reference and, for llm-assisted matches, the review-queue entry.
pub fn resolve(
    mention: &Mention,
    speech: &Speech,
    class: EntityClass,
    registry: &Registry,
    opts: &ResolveOptions,
) -> (ResolvedReference, Option<QueueEntry>) {
    let folded = fold(&mention.actor_surface);
    let base = ResolvedReference {
        mention: mention.clone(),
        date: speech.date,
        country: speech.country.clone(),
        entity_class: Some(class),
        canonical_entity: None,
        referring_party: speech.speaker_party.clone(),
        referred_party: None,
        referred_role: None,
        self_reference: false,
        resolution_method: ResolutionMethod::Unresolved,
        confirmed: true,
        match_score: None,
    };
    let matched = registry
        .exact(&speech.country, &folded, speech.date)
        .map(|e| (e, 1.0, ResolutionMethod::RegistryExact))
        .or_else(|| {
            best_registry_match(registry, &speech.country, &folded, speech.date)
                .filter(|(_, s)| *s >= opts.fuzzy_threshold)
                .map(|(e, s)| (e, s, ResolutionMethod::RegistryFuzzy))
        });
    if let Some((entry, score, method)) = matched {
        let r = ResolvedReference {
            entity_class: Some(entry.entity_class),
            canonical_entity: Some(entry.canonical_entity.clone()),
            referred_party: referred_party_for(registry, entry, &speech.country, speech.date),
            resolution_method: method,
            match_score: Some(score),
            ..base
        };
        return (finish(r, registry), None);
    }

    let mut candidates: Vec<Candidate> = registry
        .valid_at(&speech.country, speech.date)
        .map(|(alias, e)| Candidate {
            canonical_entity: e.canonical_entity.clone(),
            alias: e.alias.clone(),
            party_id: e.party_id.clone(),
            score: fuzzy_match(alias, &folded),
        })
        .filter(|c| c.score >= opts.suggestion_floor)
        .collect();
    candidates.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.alias.cmp(&b.alias)));
    candidates.dedup_by(|a, b| a.canonical_entity == b.canonical_entity);
    candidates.truncate(3);
    if candidates.is_empty() {
        return (finish(base, registry), None);
    }
    let entry = QueueEntry {
        id: queue_id(&mention.speech_id, mention.row),
        speech_id: mention.speech_id.clone(),
        row: mention.row,
        alias: mention.actor_surface.clone(),
        country: speech.country.clone(),
        date: speech.date,
        suggested: None,
        candidates,
    };
    let r = ResolvedReference {
        resolution_method: ResolutionMethod::LlmAssisted,
        confirmed: false,
        match_score: Some(entry.candidates[0].score),
        ..base
    };
    (finish(r, registry), Some(entry))
}

/// Applies a human decision to an llm-assisted reference.
pub fn apply_decision(r: &mut ResolvedReference, decision: &ResolutionDecision, registry: &Registry) {
    if !decision.approve {
        r.resolution_method = ResolutionMethod::Unresolved;
        r.confirmed = true;
        r.match_score = None;
        return;
    }
    let Some(entity) = &decision.canonical_entity else {
        return;
    };
    let Some(entry) = registry.entity_at(&r.country, entity, r.date) else {
        return;
    };
    r.entity_class = Some(entry.entity_class);
    r.canonical_entity = Some(entry.canonical_entity.clone());
    r.referred_party = referred_party_for(registry, entry, &r.country, r.date);
    r.confirmed = true;
    *r = finish(r.clone(), registry);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardedMention {
    #[serde(flatten)]
    pub mention: Mention,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolveReport {
    pub mentions_in: usize,
    pub discarded: usize,
    pub by_method: BTreeMap<String, usize>,
    pub classification_unresolved: usize,
    pub queued: usize,
    pub approved: usize,
    pub llm_classifications: usize,
}

impl ResolveReport {
    pub fn conserved(&self) -> bool {
        self.mentions_in == self.discarded + self.by_method.values().sum::<usize>()
    }
}

#[derive(Debug, Clone, Default)]
pub struct ResolutionRun {
    pub references: Vec<ResolvedReference>,
    pub discarded: Vec<DiscardedMention>,
    pub queue: Vec<QueueEntry>,
    pub report: ResolveReport,
}

/// Classifies and resolves every mention, applying any recorded decisions.
#[allow(clippy::too_many_arguments)]
pub async fn resolve_all(
    mentions: &[Mention],
    speeches: &HashMap<String, Speech>,
    registry: &Registry,
    cache: &mut ClassificationCache,
    decisions: &[ResolutionDecision],
    opts: &ResolveOptions,
    backend: &dyn Backend,
    policy: &RetryPolicy,
) -> ResolutionRun {
    let decisions: HashMap<&str, &ResolutionDecision> = decisions.iter().map(|d| (d.queue_id.as_str(), d)).collect();
    let mut run = ResolutionRun::default();
    let cached_before = cache.added().len();
    for m in mentions {
        run.report.mentions_in += 1;
        let Some(speech) = speeches.get(&m.speech_id) else {
            run.discarded.push(DiscardedMention {
                mention: m.clone(),
                reason: "speech not in store".into(),
            });
            continue;
        };
        let class = match classify(m, speech, registry, cache, opts, backend, policy).await {
            Classification::Discard => {
                run.discarded.push(DiscardedMention {
                    mention: m.clone(),
                    reason: "non-political".into(),
                });
                continue;
            }
            Classification::Unresolved => {
                run.report.classification_unresolved += 1;
                None
            }
            Classification::Class(c) => Some(c),
        };
        let (mut r, queued) = match class {
            Some(c) => resolve(m, speech, c, registry, opts),
            None => {
                let (mut r, q) = resolve(m, speech, EntityClass::PartyOrMember, registry, opts);
                if r.resolution_method != ResolutionMethod::RegistryExact {
                    r.entity_class = None;
                }
                (r, q)
            }
        };
        if let Some(mut q) = queued {
            if let Some(d) = decisions.get(q.id.as_str()) {
                apply_decision(&mut r, d, registry);
                run.report.approved += usize::from(d.approve);
            } else {
                q.suggested = suggest(&q, backend, policy).await;
                run.queue.push(q);
            }
        }
        run.references.push(r);
    }
    run.report.discarded = run.discarded.len();
    run.report.queued = run.queue.len();
    run.report.llm_classifications = cache.added().len() - cached_before;
    for r in &run.references {
        let key = serde_json::to_value(r.resolution_method)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        *run.report.by_method.entry(key).or_default() += 1;
    }
    run
}

async fn suggest(q: &QueueEntry, backend: &dyn Backend, policy: &RetryPolicy) -> Option<String> {
    let aliases: Vec<String> = q.candidates.iter().map(|c| c.alias.clone()).collect();
    let query = Query::Suggest {
        alias: q.alias.clone(),
        candidates: aliases.clone(),
        prompt: suggestion_prompt(&q.country, &q.alias, &q.date.to_string(), &aliases),
    };
    let (body, _) = call_with_retry(backend, &query, policy).await.ok()?;
    let answer = fold(body.lines().next().unwrap_or(""));
    q.candidates
        .iter()
        .find(|c| fold(&c.alias) == answer)
        .map(|c| c.canonical_entity.clone())
}

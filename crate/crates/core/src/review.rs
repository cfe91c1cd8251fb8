//! Human-in-the-loop review state.
//!
//! Inputs come from the last pipeline run. Every human action is an event;
//! the state is the inputs plus the events applied in order, so replaying a
//! journal rebuilds it exactly. Pipeline artifacts are never touched here:
//! the next pipeline run reads the journal as a correction overlay.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::Speech;
use crate::extraction::Mention;
use crate::resolution::{QueueEntry, ResolutionDecision};
use crate::validation::{
    align, compute_metrics, derive_supergold, provisional_metrics, Correction, CorrectionError, GoldRecord, MatchSet,
    SupergoldBuild, SupergoldDecision, SupergoldStatus, ValidationMetrics, Verdicts,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    CodeSpeech,
    FixMatch,
    ConfirmSupergold,
    ApproveResolution,
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "code-speech" => Ok(Self::CodeSpeech),
            "fix-match" => Ok(Self::FixMatch),
            "confirm-supergold" => Ok(Self::ConfirmSupergold),
            "approve-resolution" => Ok(Self::ApproveResolution),
            other => Err(format!("unknown task kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Open,
    Done,
    Skipped,
}

impl std::str::FromStr for TaskStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "open" => Ok(Self::Open),
            "done" => Ok(Self::Done),
            "skipped" => Ok(Self::Skipped),
            other => Err(format!("unknown task status {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTask {
    pub task_id: String,
    pub kind: TaskKind,
    /// Speech id, triple id, Supergold record id or queue id.
    pub payload: String,
    pub status: TaskStatus,
    pub revision: u64,
    /// Creation order.
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completed_at: Option<DateTime<Utc>>,
}

/// What the service starts from.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReviewInputs {
    pub sample: Vec<Speech>,
    /// Extracted mentions of the sampled speeches.
    pub ai_findings: Vec<Mention>,
    /// Gold coded before the service started.
    pub gold: Vec<GoldRecord>,
    pub verdicts: Verdicts,
    pub resolution_queue: Vec<QueueEntry>,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum ReviewEvent {
    GoldAdded {
        record: GoldRecord,
        at: DateTime<Utc>,
    },
    MatchCorrected {
        correction: Correction,
        #[serde(default)]
        revision: Option<u64>,
    },
    SupergoldDecided {
        decision: SupergoldDecision,
        #[serde(default)]
        revision: Option<u64>,
        at: DateTime<Utc>,
    },
    ResolutionDecided {
        decision: ResolutionDecision,
        coder: String,
        #[serde(default)]
        revision: Option<u64>,
        at: DateTime<Utc>,
    },
    TaskClosed {
        task_id: String,
        revision: u64,
        status: TaskStatus,
        coder: String,
        at: DateTime<Utc>,
    },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReviewError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("conflict: {0}")]
    Conflict(String),
}

/// Outcome of applying an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Applied {
    /// State changed; the event must be journaled.
    Changed,
    /// The same change was already applied; nothing to journal.
    Replayed,
}

#[derive(Debug, Clone)]
pub struct ReviewState {
    inputs: ReviewInputs,
    sample_ids: BTreeSet<String>,
    gold_added: Vec<GoldRecord>,
    corrections: Vec<Correction>,
    supergold_decisions: Vec<SupergoldDecision>,
    resolution_decisions: BTreeMap<String, (ResolutionDecision, String)>,
    tasks: Vec<ReviewTask>,
    matches: MatchSet,
    supergold: SupergoldBuild,
}

fn task_id(kind: TaskKind, payload: &str) -> String {
    let prefix = match kind {
        TaskKind::CodeSpeech => "code",
        TaskKind::FixMatch => "fix",
        TaskKind::ConfirmSupergold => "confirm",
        TaskKind::ApproveResolution => "approve",
    };
    format!("{prefix}:{payload}")
}

impl ReviewState {
    pub fn new(inputs: ReviewInputs) -> Self {
        let sample_ids = inputs.sample.iter().map(|s| s.speech_id.clone()).collect();
        let mut state = Self {
            inputs,
            sample_ids,
            gold_added: Vec::new(),
            corrections: Vec::new(),
            supergold_decisions: Vec::new(),
            resolution_decisions: BTreeMap::new(),
            tasks: Vec::new(),
            matches: MatchSet::default(),
            supergold: SupergoldBuild::default(),
        };
        let speeches: Vec<String> = state.inputs.sample.iter().map(|s| s.speech_id.clone()).collect();
        for id in speeches {
            state.add_task(TaskKind::CodeSpeech, &id);
        }
        let queue: Vec<String> = state.inputs.resolution_queue.iter().map(|q| q.id.clone()).collect();
        for id in queue {
            state.add_task(TaskKind::ApproveResolution, &id);
        }
        state.recompute();
        state
    }

    /// Rebuilds the state from inputs and a journal.
    pub fn replay(inputs: ReviewInputs, events: &[ReviewEvent]) -> Result<Self, (usize, ReviewError)> {
        let mut state = Self::new(inputs);
        for (i, e) in events.iter().enumerate() {
            state.apply(e).map_err(|err| (i + 1, err))?;
        }
        Ok(state)
    }

    fn add_task(&mut self, kind: TaskKind, payload: &str) {
        let id = task_id(kind, payload);
        if self.tasks.iter().any(|t| t.task_id == id) {
            return;
        }
        self.tasks.push(ReviewTask {
            task_id: id,
            kind,
            payload: payload.to_string(),
            status: TaskStatus::Open,
            revision: 0,
            seq: self.tasks.len() as u64,
            completed_by: None,
            completed_at: None,
        });
    }

    fn all_gold(&self) -> Vec<GoldRecord> {
        self.inputs.gold.iter().chain(&self.gold_added).cloned().collect()
    }

    fn recompute(&mut self) {
        let mut ms = align(&self.inputs.ai_findings, &self.all_gold(), self.inputs.threshold);
        ms.apply_overlay(&self.corrections);
        self.supergold = derive_supergold(&ms, &self.inputs.verdicts, &self.supergold_decisions);
        self.matches = ms;
        let flagged: Vec<String> = self
            .matches
            .triples
            .iter()
            .filter(|t| t.duplicate)
            .map(|t| t.id.clone())
            .collect();
        for id in flagged {
            self.add_task(TaskKind::FixMatch, &id);
        }
        let pending: Vec<String> = self
            .supergold
            .records
            .iter()
            .filter(|r| r.status == SupergoldStatus::Pending)
            .map(|r| r.id.clone())
            .collect();
        for id in pending {
            self.add_task(TaskKind::ConfirmSupergold, &id);
        }
    }

    fn task_mut(&mut self, kind: TaskKind, payload: &str) -> Option<&mut ReviewTask> {
        let id = task_id(kind, payload);
        self.tasks.iter_mut().find(|t| t.task_id == id)
    }

    /// Checks the revision a client acted on against the task, if any.
    fn check_revision(&self, kind: TaskKind, payload: &str, revision: Option<u64>) -> Result<(), ReviewError> {
        let id = task_id(kind, payload);
        match (self.tasks.iter().find(|t| t.task_id == id), revision) {
            (Some(t), Some(r)) if t.revision != r => Err(ReviewError::Conflict(format!(
                "task {id} is at revision {}, request was for {r}",
                t.revision
            ))),
            _ => Ok(()),
        }
    }

    fn close(&mut self, kind: TaskKind, payload: &str, coder: &str, at: DateTime<Utc>) {
        if let Some(t) = self.task_mut(kind, payload) {
            if t.status == TaskStatus::Open {
                t.status = TaskStatus::Done;
                t.revision += 1;
                t.completed_by = Some(coder.to_string());
                t.completed_at = Some(at);
            }
        }
    }

    /// Validates and applies one event.
    pub fn apply(&mut self, event: &ReviewEvent) -> Result<Applied, ReviewError> {
        match event {
            ReviewEvent::GoldAdded { record, .. } => {
                record.check(Some(&self.sample_ids)).map_err(ReviewError::Invalid)?;
                self.gold_added.push(record.clone());
                self.recompute();
                Ok(Applied::Changed)
            }
            ReviewEvent::MatchCorrected { correction, revision } => {
                self.check_revision(TaskKind::FixMatch, &correction.triple_id, *revision)?;
                let mut trial = self.matches.clone();
                trial.apply(correction).map_err(|e| match e {
                    CorrectionError::UnknownTriple(id) => ReviewError::NotFound(format!("match {id}")),
                    other => ReviewError::Invalid(other.to_string()),
                })?;
                self.corrections.push(correction.clone());
                let at = correction.at.unwrap_or_default();
                self.close(TaskKind::FixMatch, &correction.triple_id, &correction.coder, at);
                self.recompute();
                Ok(Applied::Changed)
            }
            ReviewEvent::SupergoldDecided { decision, revision, at } => {
                let record = self
                    .supergold
                    .records
                    .iter()
                    .find(|r| r.id == decision.id)
                    .ok_or_else(|| ReviewError::NotFound(format!("supergold record {}", decision.id)))?;
                if record.status != SupergoldStatus::Pending {
                    let same = record.decided_by.as_deref() == Some(decision.coder.as_str())
                        && (record.status == SupergoldStatus::Confirmed) == decision.confirm;
                    return if same {
                        Ok(Applied::Replayed)
                    } else {
                        Err(ReviewError::Conflict(format!(
                            "supergold record {} already decided",
                            decision.id
                        )))
                    };
                }
                self.check_revision(TaskKind::ConfirmSupergold, &decision.id, *revision)?;
                self.supergold_decisions.push(decision.clone());
                self.close(TaskKind::ConfirmSupergold, &decision.id, &decision.coder, *at);
                self.recompute();
                Ok(Applied::Changed)
            }
            ReviewEvent::ResolutionDecided {
                decision,
                coder,
                revision,
                at,
            } => {
                if !self.inputs.resolution_queue.iter().any(|q| q.id == decision.queue_id) {
                    return Err(ReviewError::NotFound(format!("queue entry {}", decision.queue_id)));
                }
                if decision.approve && decision.canonical_entity.as_deref().is_none_or(|e| e.trim().is_empty()) {
                    return Err(ReviewError::Invalid("approval needs a canonical_entity".into()));
                }
                if let Some((prev, prev_coder)) = self.resolution_decisions.get(&decision.queue_id) {
                    return if prev == decision && prev_coder == coder {
                        Ok(Applied::Replayed)
                    } else {
                        Err(ReviewError::Conflict(format!(
                            "queue entry {} already decided",
                            decision.queue_id
                        )))
                    };
                }
                self.check_revision(TaskKind::ApproveResolution, &decision.queue_id, *revision)?;
                self.resolution_decisions
                    .insert(decision.queue_id.clone(), (decision.clone(), coder.clone()));
                self.close(TaskKind::ApproveResolution, &decision.queue_id, coder, *at);
                Ok(Applied::Changed)
            }
            ReviewEvent::TaskClosed {
                task_id,
                revision,
                status,
                coder,
                at,
            } => {
                if *status == TaskStatus::Open {
                    return Err(ReviewError::Invalid(
                        "a task can only be closed as done or skipped".into(),
                    ));
                }
                let task = self
                    .tasks
                    .iter_mut()
                    .find(|t| t.task_id == *task_id)
                    .ok_or_else(|| ReviewError::NotFound(format!("task {task_id}")))?;
                if task.status != TaskStatus::Open {
                    let same = task.status == *status
                        && task.completed_by.as_deref() == Some(coder.as_str())
                        && task.revision == revision + 1;
                    return if same {
                        Ok(Applied::Replayed)
                    } else {
                        Err(ReviewError::Conflict(format!(
                            "task {task_id} is already {:?}",
                            task.status
                        )))
                    };
                }
                if task.revision != *revision {
                    return Err(ReviewError::Conflict(format!(
                        "task {task_id} is at revision {}, request was for {revision}",
                        task.revision
                    )));
                }
                task.status = *status;
                task.revision += 1;
                task.completed_by = Some(coder.clone());
                task.completed_at = Some(*at);
                Ok(Applied::Changed)
            }
        }
    }

    pub fn sample(&self) -> &[Speech] {
        &self.inputs.sample
    }

    pub fn gold(&self) -> Vec<GoldRecord> {
        self.all_gold()
    }

    pub fn matches(&self) -> &MatchSet {
        &self.matches
    }

    pub fn supergold(&self) -> &SupergoldBuild {
        &self.supergold
    }

    pub fn resolution_queue(&self) -> &[QueueEntry] {
        &self.inputs.resolution_queue
    }

    pub fn resolution_decision(&self, queue_id: &str) -> Option<&(ResolutionDecision, String)> {
        self.resolution_decisions.get(queue_id)
    }

    pub fn task(&self, task_id: &str) -> Option<&ReviewTask> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }

    /// Open tasks first, each group in creation order.
    pub fn tasks(&self, kind: Option<TaskKind>, status: Option<TaskStatus>) -> Vec<&ReviewTask> {
        let mut out: Vec<&ReviewTask> = self
            .tasks
            .iter()
            .filter(|t| kind.is_none_or(|k| t.kind == k) && status.is_none_or(|s| t.status == s))
            .collect();
        out.sort_by_key(|t| (t.status != TaskStatus::Open, t.seq));
        out
    }

    pub fn metrics(&self) -> MetricsView {
        let pending = self
            .supergold
            .records
            .iter()
            .filter(|r| r.status == SupergoldStatus::Pending)
            .count();
        MetricsView {
            complete: pending == 0,
            pending,
            metrics: compute_metrics(&self.matches, &self.supergold.records).ok(),
            provisional: provisional_metrics(&self.matches, &self.supergold.records).ok(),
        }
    }
}

/// Metrics as seen during review.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsView {
    pub complete: bool,
    pub pending: usize,
    /// Final metrics, once nothing is pending.
    pub metrics: Option<ValidationMetrics>,
    /// Metrics over the decided records only.
    pub provisional: Option<ValidationMetrics>,
}

/// Overlay extracted from a journal for the next pipeline run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub gold: Vec<GoldRecord>,
    pub corrections: Vec<Correction>,
    pub supergold_decisions: Vec<SupergoldDecision>,
    pub resolution_decisions: Vec<ResolutionDecision>,
}

impl Overlay {
    pub fn from_events(events: &[ReviewEvent]) -> Self {
        let mut out = Self::default();
        for e in events {
            match e {
                ReviewEvent::GoldAdded { record, .. } => out.gold.push(record.clone()),
                ReviewEvent::MatchCorrected { correction, .. } => out.corrections.push(correction.clone()),
                ReviewEvent::SupergoldDecided { decision, .. } => out.supergold_decisions.push(decision.clone()),
                ReviewEvent::ResolutionDecided { decision, .. } => out.resolution_decisions.push(decision.clone()),
                ReviewEvent::TaskClosed { .. } => {}
            }
        }
        out
    }
}

/// Request and response bodies of the review HTTP API.
pub mod api {
    use serde::{Deserialize, Serialize};

    use crate::resolution::{QueueEntry, ResolutionDecision};
    use crate::validation::{CorrectionOp, SupergoldRecord};

    use super::ReviewTask;

    /// Header carrying the coder name on every write.
    pub const CODER_HEADER: &str = "x-coder";

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct Health {
        pub status: String,
        pub version: String,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct ErrorBody {
        pub error: String,
    }

    /// A Gold finding as posted by a coder; the coder comes from the header.
    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct GoldInput {
        pub speech_id: String,
        pub actor: String,
        pub sentiment: i8,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct MatchPatch {
        #[serde(flatten)]
        pub op: CorrectionOp,
        /// Revision of the fix-match task the coder saw, if there is one.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub revision: Option<u64>,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct ConfirmInput {
        pub confirm: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub revision: Option<u64>,
    }

    /// A Supergold record with its confirmation task.
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct SupergoldView {
        pub record: SupergoldRecord,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub task: Option<ReviewTask>,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct ResolutionInput {
        pub approve: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub canonical_entity: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub revision: Option<u64>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct QueueItem {
        pub entry: QueueEntry,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub decision: Option<ResolutionDecision>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pub decided_by: Option<String>,
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
    pub struct TaskInput {
        pub revision: u64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Verdict;
    use crate::validation::CorrectionOp;
    use chrono::NaiveDate;

    fn speech(id: &str) -> Speech {
        Speech {
            speech_id: id.into(),
            country: "HU".into(),
            date: NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
            speaker_name: "X".into(),
            speaker_party: Some("FIDESZ".into()),
            chamber: None,
            text: "Orban spoke.".into(),
            source: "t".into(),
            address_stripped: false,
            excluded: false,
        }
    }

    fn mention(speech: &str, row: usize, actor: &str, s: i8) -> Mention {
        Mention {
            speech_id: speech.into(),
            row,
            actor_surface: actor.into(),
            context_description: String::new(),
            political_rationale: String::new(),
            sentiment: s,
            sentiment_rounded: false,
        }
    }

    fn at() -> DateTime<Utc> {
        DateTime::UNIX_EPOCH
    }

    fn inputs() -> ReviewInputs {
        ReviewInputs {
            sample: vec![speech("s1"), speech("s2")],
            ai_findings: vec![mention("s1", 0, "Orban", -2), mention("s1", 1, "Brussels", -1)],
            gold: vec![],
            verdicts: [("s1.a1".to_string(), Verdict::Yes)].into(),
            resolution_queue: vec![],
            threshold: 0.85,
        }
    }

    fn gold(speech: &str, actor: &str, s: i8) -> ReviewEvent {
        ReviewEvent::GoldAdded {
            record: GoldRecord {
                speech_id: speech.into(),
                coder: "ann".into(),
                actor_surface: actor.into(),
                sentiment: s,
            },
            at: at(),
        }
    }

    #[test]
    fn coding_then_confirming_updates_metrics() {
        let mut st = ReviewState::new(inputs());
        assert_eq!(st.apply(&gold("s1", "Orbán", -3)), Ok(Applied::Changed));
        assert!(st.apply(&gold("s9", "Orbán", -3)).is_err());
        assert_eq!(st.supergold().records.len(), 2);
        assert!(!st.metrics().complete);
        for id in ["s1.a0.g0", "s1.a1"] {
            let ev = ReviewEvent::SupergoldDecided {
                decision: SupergoldDecision {
                    id: id.into(),
                    confirm: true,
                    coder: "ann".into(),
                },
                revision: Some(0),
                at: at(),
            };
            assert_eq!(st.apply(&ev), Ok(Applied::Changed));
            assert_eq!(st.apply(&ev), Ok(Applied::Replayed));
        }
        let m = st.metrics().metrics.unwrap();
        assert_eq!(m.sensitivity_vs_supergold, 100.0);
        assert_eq!(m.sensitivity_vs_human, Some(200.0));
        assert_eq!(m.mean_signed_diff, Some(1.0));
    }

    #[test]
    fn replay_matches_live_state() {
        let events = vec![
            gold("s1", "Orban", -2),
            ReviewEvent::MatchCorrected {
                correction: Correction {
                    triple_id: "s1.a0.g0".into(),
                    op: CorrectionOp::Split,
                    coder: "ann".into(),
                    at: None,
                },
                revision: None,
            },
        ];
        let mut live = ReviewState::new(inputs());
        for e in &events {
            live.apply(e).unwrap();
        }
        let replayed = ReviewState::replay(inputs(), &events).unwrap();
        assert_eq!(live.matches(), replayed.matches());
        assert_eq!(live.tasks(None, None), replayed.tasks(None, None));
        assert_eq!(replayed.matches().triples.len(), 3);
    }

    #[test]
    fn task_race_has_one_winner() {
        let mut st = ReviewState::new(inputs());
        let close = |coder: &str| ReviewEvent::TaskClosed {
            task_id: "code:s1".into(),
            revision: 0,
            status: TaskStatus::Done,
            coder: coder.into(),
            at: at(),
        };
        assert_eq!(st.apply(&close("a")), Ok(Applied::Changed));
        assert!(matches!(st.apply(&close("b")), Err(ReviewError::Conflict(_))));
        assert_eq!(st.apply(&close("a")), Ok(Applied::Replayed));
        let open = st.tasks(Some(TaskKind::CodeSpeech), Some(TaskStatus::Open));
        assert_eq!(open.len(), 1);
        let all = st.tasks(Some(TaskKind::CodeSpeech), None);
        assert_eq!(all[0].task_id, "code:s2");
    }

    #[test]
    fn overlay_collects_decisions() {
        let events = vec![gold("s1", "Orban", -2)];
        let o = Overlay::from_events(&events);
        assert_eq!(o.gold.len(), 1);
        assert!(o.corrections.is_empty());
    }
}

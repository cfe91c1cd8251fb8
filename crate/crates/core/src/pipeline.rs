//! Stage orchestration driven by one config file.
//!
//! Every stage reads the artifacts of the previous one from the work
//! directory and rewrites its own outputs, so a stage can be re-run on its
//! own. The review journal written by the service is read as an overlay.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::corpus::{self, CorpusManifest, RejectRecord, Speech, StoreManifest, VocativePatterns};
use crate::extraction::{parse_all, reprocess, ColumnAliases, Mention, ParseReport, ReprocessEntry};
use crate::gateway::{
    read_journal, render_prompt, submit_batch, Backend, BatchOptions, FinishStatus, HttpBackend, HttpBackendConfig,
    JournalEntry, MockBackend, MockFaults, PlantedWorld, PromptTemplate, RawResponse, RetryPolicy, YearRange,
};
use crate::index::{self, EpsRecord, ExportFormat, Granularity};
use crate::jsonl;
use crate::resolution::{
    resolve_all, ClassificationCache, ClassificationRecord, DiscardedMention, QueueEntry, Registry, ResolveOptions,
    ResolveReport, ResolvedReference,
};
use crate::review::{Overlay, ReviewEvent, ReviewInputs};
use crate::sha256_hex;
use crate::validation::{
    align, auto_confirm, compute_metrics, derive_supergold, entity_stage_metrics, gold_csv, provisional_metrics,
    read_entity_truth, read_gold, report_table, sample_speeches, verify_ai_only, EntityMetrics, GoldRecord, ReportRow,
    SupergoldStatus, ValidationMetrics, Verdicts,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<FieldError>),
    #[error("work directory is locked by another run ({0}); remove the file if that run is gone")]
    Locked(PathBuf),
    #[error("{stage} failed: {message}")]
    Stage { stage: &'static str, message: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            _ => 1,
        }
    }

    fn config(field: &str, message: impl Into<String>) -> Self {
        PipelineError::Config(vec![FieldError {
            field: field.into(),
            message: message.into(),
        }])
    }
}

fn stage_err(stage: &'static str) -> impl Fn(&dyn std::fmt::Display) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Context {
    pub country: String,
    pub year_from: i32,
    pub year_to: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusInput {
    pub manifest: PathBuf,
    pub data: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub inputs: Vec<CorpusInput>,
    #[serde(default)]
    pub vocatives: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryConfig {
    pub aliases: PathBuf,
    #[serde(default)]
    pub governments: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptConfig {
    /// Template file; the built-in template when absent.
    #[serde(default)]
    pub template: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum BackendSpec {
    Mock {
        world: PathBuf,
        #[serde(default)]
        faults: MockFaults,
    },
    Http {
        endpoint: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default)]
        temperature: f64,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

fn default_timeout() -> u64 {
    120
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractConfig {
    pub concurrency: usize,
    pub max_chars: Option<usize>,
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    /// Format-reminder resubmissions per queued entry.
    pub reprocess_cap: u32,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        let retry = RetryPolicy::default();
        Self {
            concurrency: 4,
            max_chars: Some(200_000),
            max_attempts: retry.max_attempts,
            base_delay_ms: retry.base_delay_ms,
            max_delay_ms: retry.max_delay_ms,
            reprocess_cap: 2,
        }
    }
}

impl ExtractConfig {
    pub fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts,
            base_delay_ms: self.base_delay_ms,
            max_delay_ms: self.max_delay_ms,
            ..RetryPolicy::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResolveConfig {
    pub fuzzy_threshold: f64,
    pub suggestion_floor: f64,
}

impl Default for ResolveConfig {
    fn default() -> Self {
        let o = ResolveOptions::default();
        Self {
            fuzzy_threshold: o.fuzzy_threshold,
            suggestion_floor: o.suggestion_floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndexConfig {
    pub granularity: Granularity,
    pub min_out_refs: u64,
    pub government_as_party: bool,
}

impl Default for IndexConfig {
    fn default() -> Self {
        let o = index::IndexOptions::default();
        Self {
            granularity: o.granularity,
            min_out_refs: o.min_out_refs,
            government_as_party: o.government_as_party,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub k: usize,
    pub seed: u64,
    pub gold: Option<PathBuf>,
    pub entity_truth: Option<PathBuf>,
    pub match_threshold: f64,
    /// Decide pending Supergold records without a human.
    pub auto_confirm: bool,
    /// Label for the report's model column.
    pub model_label: Option<String>,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            k: 300,
            seed: 0,
            gold: None,
            entity_truth: None,
            match_threshold: 0.85,
            auto_confirm: false,
            model_label: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewConfig {
    pub bind: String,
    /// Defaults to `review_journal.jsonl` in the work directory.
    pub journal: Option<PathBuf>,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8787".into(),
            journal: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub work_dir: PathBuf,
    pub context: Context,
    pub corpus: CorpusConfig,
    pub registry: RegistryConfig,
    #[serde(default)]
    pub prompt: PromptConfig,
    /// Name of the extraction backend in `backends`.
    pub backend: String,
    /// Name of the second-opinion backend used for Supergold verification.
    #[serde(default)]
    pub verifier: Option<String>,
    pub backends: BTreeMap<String, BackendSpec>,
    #[serde(default)]
    pub extract: ExtractConfig,
    #[serde(default)]
    pub resolve: ResolveConfig,
    #[serde(default)]
    pub index: IndexConfig,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub review: ReviewConfig,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub work_dir: Option<PathBuf>,
    pub backend: Option<String>,
    pub verifier: Option<String>,
    pub concurrency: Option<usize>,
    pub granularity: Option<Granularity>,
    pub min_out_refs: Option<u64>,
    pub government_as_party: Option<bool>,
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub auto_confirm: Option<bool>,
    pub bind: Option<String>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::config("config", format!("cannot read {}: {e}", path.display())))?;
        let mut config: PipelineConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&raw).map_err(|e| PipelineError::config("config", e.to_string()))?,
            _ => toml::from_str(&raw).map_err(|e| PipelineError::config("config", e.to_string()))?,
        };
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.work_dir {
            self.work_dir = v.clone();
        }
        if let Some(v) = &o.backend {
            self.backend = v.clone();
        }
        if let Some(v) = &o.verifier {
            self.verifier = Some(v.clone());
        }
        if let Some(v) = o.concurrency {
            self.extract.concurrency = v;
        }
        if let Some(v) = o.granularity {
            self.index.granularity = v;
        }
        if let Some(v) = o.min_out_refs {
            self.index.min_out_refs = v;
        }
        if let Some(v) = o.government_as_party {
            self.index.government_as_party = v;
        }
        if let Some(v) = o.k {
            self.validate.k = v;
        }
        if let Some(v) = o.seed {
            self.validate.seed = v;
        }
        if let Some(v) = o.auto_confirm {
            self.validate.auto_confirm = v;
        }
        if let Some(v) = &o.bind {
            self.review.bind = v.clone();
        }
    }

    /// Path relative to the config file, unless absolute.
    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn work(&self) -> PathBuf {
        self.path(&self.work_dir)
    }

    pub fn journal_path(&self) -> PathBuf {
        match &self.review.journal {
            Some(p) => self.path(p),
            None => self.work().join("review_journal.jsonl"),
        }
    }

    /// Field-level problems; empty when the config is usable.
    pub fn validate(&self) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut err = |field: &str, message: String| {
            errs.push(FieldError {
                field: field.into(),
                message,
            })
        };
        if !corpus::is_country_code(&self.context.country) {
            err(
                "context.country",
                format!("{:?} is not a two-letter country code", self.context.country),
            );
        }
        if self.context.year_from > self.context.year_to {
            err("context.year_from", "must not be after year_to".into());
        }
        if self.corpus.inputs.is_empty() {
            err("corpus.inputs", "at least one input is required".into());
        }
        let mut files: Vec<(String, &Path)> = Vec::new();
        for (i, input) in self.corpus.inputs.iter().enumerate() {
            files.push((format!("corpus.inputs[{i}].manifest"), &input.manifest));
            files.push((format!("corpus.inputs[{i}].data"), &input.data));
        }
        if let Some(v) = &self.corpus.vocatives {
            files.push(("corpus.vocatives".into(), v));
        }
        files.push(("registry.aliases".into(), &self.registry.aliases));
        if let Some(g) = &self.registry.governments {
            files.push(("registry.governments".into(), g));
        }
        if let Some(t) = &self.prompt.template {
            files.push(("prompt.template".into(), t));
        }
        if let Some(g) = &self.validate.gold {
            files.push(("validate.gold".into(), g));
        }
        if let Some(t) = &self.validate.entity_truth {
            files.push(("validate.entity_truth".into(), t));
        }
        for (name, spec) in &self.backends {
            if let BackendSpec::Mock { world, faults } = spec {
                files.push((format!("backends.{name}.world"), world));
                let total = faults.prose_fraction + faults.bad_sentiment_fraction;
                let fractions = [
                    faults.prose_fraction,
                    faults.bad_sentiment_fraction,
                    faults.unrecoverable_fraction,
                ];
                if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || total > 1.0 {
                    err(
                        &format!("backends.{name}.faults"),
                        "fractions must lie in [0, 1] and sum to at most 1".into(),
                    );
                }
            }
        }
        for (field, p) in files {
            if !self.path(p).is_file() {
                err(&field, format!("file {} does not exist", self.path(p).display()));
            }
        }
        if !self.backends.contains_key(&self.backend) {
            err("backend", format!("no backend named {:?} in [backends]", self.backend));
        }
        if let Some(v) = &self.verifier {
            if !self.backends.contains_key(v) {
                err("verifier", format!("no backend named {v:?} in [backends]"));
            } else if *v == self.backend {
                err("verifier", "must differ from the extraction backend".into());
            }
        }
        if self.extract.concurrency == 0 {
            err("extract.concurrency", "must be at least 1".into());
        }
        if self.extract.max_attempts == 0 {
            err("extract.max_attempts", "must be at least 1".into());
        }
        for (field, v) in [
            ("resolve.fuzzy_threshold", self.resolve.fuzzy_threshold),
            ("resolve.suggestion_floor", self.resolve.suggestion_floor),
            ("validate.match_threshold", self.validate.match_threshold),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                err(field, format!("{v} is outside (0, 1]"));
            }
        }
        if self.resolve.suggestion_floor > self.resolve.fuzzy_threshold {
            err("resolve.suggestion_floor", "must not exceed fuzzy_threshold".into());
        }
        if self.validate.k == 0 {
            err("validate.k", "must be at least 1".into());
        }
        if self.review.bind.parse::<std::net::SocketAddr>().is_err() {
            err("review.bind", format!("{:?} is not a socket address", self.review.bind));
        }
        errs
    }

    /// Digest of the effective configuration.
    pub fn digest(&self) -> String {
        sha256_hex(serde_json::to_vec(self).expect("serializable"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Extract,
    Parse,
    Resolve,
    Index,
    Validate,
    Export,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Extract,
        Stage::Parse,
        Stage::Resolve,
        Stage::Index,
        Stage::Validate,
        Stage::Export,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Parse => "parse",
            Stage::Resolve => "resolve",
            Stage::Index => "index",
            Stage::Validate => "validate",
            Stage::Export => "export",
        }
    }
}

/// Holds `.lock` in the work directory for the lifetime of a run.
#[derive(Debug)]
pub struct WorkLock {
    path: PathBuf,
}

impl WorkLock {
    pub fn acquire(work: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(work).map_err(|e| stage_err("lock")(&e))?;
        let path = work.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(PipelineError::Locked(path)),
            Err(e) => Err(stage_err("lock")(&e)),
        }
    }
}

impl Drop for WorkLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Artifact locations inside the work directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn file(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn speeches(&self) -> PathBuf {
        self.file("store/speeches.jsonl")
    }
    pub fn journal(&self) -> PathBuf {
        self.file("extract/journal.jsonl")
    }
    pub fn responses(&self) -> PathBuf {
        self.file("extract/responses.jsonl")
    }
    pub fn mentions(&self) -> PathBuf {
        self.file("parse/mentions.jsonl")
    }
    pub fn references(&self) -> PathBuf {
        self.file("resolve/references.jsonl")
    }
    pub fn queue(&self) -> PathBuf {
        self.file("resolve/queue.jsonl")
    }
    pub fn eps_records(&self) -> PathBuf {
        self.file("index/eps_records.json")
    }
}

/// Files whose raw bytes carry wall-clock data; their manifest digest is
/// taken over a timestamp-free projection.
const LOGS: [&str; 2] = ["extract/journal.jsonl", "extract/responses.jsonl"];

/// Files in the work directory that describe runs rather than results.
const UNTRACKED: [&str; 4] = [".lock", "run_manifest.json", "run_log.jsonl", "review_journal.jsonl"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub prompt_version: String,
    pub command: String,
    pub config_digest: String,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut s = serde_json::to_string_pretty(value).map_err(std::io::Error::other)?;
    s.push('\n');
    std::fs::write(path, s)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> std::io::Result<T> {
    let raw = std::fs::read_to_string(path)?;
    serde_json::from_str(&raw).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    jsonl::write_path(path, items)
}

/// Reads the review journal; a missing file is an empty journal.
pub fn read_review_journal(path: &Path) -> std::io::Result<Vec<ReviewEvent>> {
    jsonl::read_path_or_empty(path)
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub layout: Layout,
}

/// Short machine-readable stage outcome, also logged.
pub type Summary = serde_json::Value;

impl Pipeline {
    /// Validates the config and prepares the work directory layout.
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        let errs = config.validate();
        if !errs.is_empty() {
            return Err(PipelineError::Config(errs));
        }
        let layout = Layout { root: config.work() };
        Ok(Self { config, layout })
    }

    pub fn lock(&self) -> Result<WorkLock, PipelineError> {
        WorkLock::acquire(&self.layout.root)
    }

    pub fn build_backend(&self, name: &str) -> Result<Box<dyn Backend>, PipelineError> {
        let spec = self
            .config
            .backends
            .get(name)
            .ok_or_else(|| PipelineError::config("backend", format!("no backend named {name:?}")))?;
        match spec {
            BackendSpec::Mock { world, faults } => {
                let world = PlantedWorld::load(&self.config.path(world))
                    .map_err(|e| PipelineError::config(&format!("backends.{name}.world"), e.to_string()))?;
                Ok(Box::new(MockBackend::new(name, world, faults.clone())))
            }
            BackendSpec::Http {
                endpoint,
                model,
                api_key_env,
                temperature,
                timeout_secs,
            } => {
                let backend = HttpBackend::new(HttpBackendConfig {
                    id: name.to_string(),
                    endpoint: endpoint.clone(),
                    model: model.clone(),
                    api_key_env: api_key_env.clone(),
                    temperature: *temperature,
                    timeout_secs: *timeout_secs,
                })
                .map_err(|e| PipelineError::config(&format!("backends.{name}"), e.to_string()))?;
                Ok(Box::new(backend))
            }
        }
    }

    pub fn template(&self) -> Result<PromptTemplate, PipelineError> {
        match &self.config.prompt.template {
            Some(p) => PromptTemplate::load(&self.config.path(p))
                .map_err(|e| PipelineError::config("prompt.template", e.to_string())),
            None => Ok(PromptTemplate::builtin()),
        }
    }

    pub fn prompt(&self) -> Result<String, PipelineError> {
        let ctx = &self.config.context;
        render_prompt(
            &self.template()?,
            &ctx.country,
            YearRange {
                from: ctx.year_from,
                to: ctx.year_to,
            },
        )
        .map_err(|e| PipelineError::config("prompt.template", e.to_string()))
    }

    pub fn registry(&self) -> Result<Registry, PipelineError> {
        let r = &self.config.registry;
        Registry::load(
            &self.config.path(&r.aliases),
            r.governments.as_ref().map(|g| self.config.path(g)).as_deref(),
        )
        .map_err(|e| PipelineError::config("registry", e.to_string()))
    }

    pub fn speeches(&self) -> Result<Vec<Speech>, PipelineError> {
        let f = File::open(self.layout.speeches()).map_err(|e| PipelineError::Stage {
            stage: "store",
            message: format!("{e}; run ingest first"),
        })?;
        corpus::read_store(f).map_err(|e| stage_err("store")(&e))
    }

    fn overlay(&self) -> Result<Overlay, PipelineError> {
        let events = read_review_journal(&self.config.journal_path()).map_err(|e| stage_err("review journal")(&e))?;
        Ok(Overlay::from_events(&events))
    }

    pub async fn run(&self, stage: Stage) -> Result<Summary, PipelineError> {
        let summary = match stage {
            Stage::Ingest => self.ingest()?,
            Stage::Extract => self.extract().await?,
            Stage::Parse => self.parse().await?,
            Stage::Resolve => self.resolve().await?,
            Stage::Index => self.index()?,
            Stage::Validate => self.validate().await?,
            Stage::Export => self.export(None, None)?,
        };
        info!(stage = stage.name(), %summary, "stage finished");
        Ok(summary)
    }

    /// Runs every stage in order, stopping at the first failure.
    pub async fn run_all(&self) -> Result<Vec<(Stage, Summary)>, PipelineError> {
        let mut out = Vec::new();
        for stage in Stage::ALL {
            out.push((stage, self.run(stage).await?));
        }
        Ok(out)
    }

    pub fn ingest(&self) -> Result<Summary, PipelineError> {
        let err = stage_err("ingest");
        let patterns = match &self.config.corpus.vocatives {
            Some(p) => VocativePatterns::load(&self.config.path(p))
                .map_err(|e| PipelineError::config("corpus.vocatives", e.to_string()))?,
            None => VocativePatterns::default(),
        };
        let mut speeches: Vec<Speech> = Vec::new();
        let mut rejects: Vec<serde_json::Value> = Vec::new();
        let mut manifests = Vec::new();
        let mut seen = BTreeSet::new();
        for (i, input) in self.config.corpus.inputs.iter().enumerate() {
            let manifest = CorpusManifest::load(&self.config.path(&input.manifest))
                .map_err(|e| PipelineError::config(&format!("corpus.inputs[{i}].manifest"), e.to_string()))?;
            let data = File::open(self.config.path(&input.data)).map_err(|e| err(&e))?;
            let ingested = corpus::ingest(&manifest, data).map_err(|e| err(&e))?;
            if let Some(expected) = manifest.expected_records {
                if ingested.record_count() != expected {
                    warn!(
                        corpus = %manifest.name,
                        expected,
                        found = ingested.record_count(),
                        "record count differs from manifest"
                    );
                }
            }
            for r in ingested.rejects {
                rejects.push(reject_json(&manifest.name, &r));
            }
            for s in ingested.speeches {
                if !seen.insert(s.speech_id.clone()) {
                    rejects.push(serde_json::json!({
                        "corpus": manifest.name,
                        "speech_id": s.speech_id,
                        "reason": "speech_id already used by an earlier input",
                    }));
                    continue;
                }
                speeches.push(corpus::strip_address(&s, &patterns));
            }
            manifests.push(manifest);
        }
        let excluded = speeches.iter().filter(|s| s.excluded).count();
        let stripped = speeches.iter().filter(|s| s.address_stripped).count();
        std::fs::create_dir_all(self.layout.file("store")).map_err(|e| err(&e))?;
        let f = File::create(self.layout.speeches()).map_err(|e| err(&e))?;
        corpus::write_store(std::io::BufWriter::new(f), &speeches).map_err(|e| err(&e))?;
        write_jsonl(&self.layout.file("store/rejects.jsonl"), &rejects).map_err(|e| err(&e))?;
        let store_manifest = StoreManifest {
            corpora: manifests,
            speeches: speeches.len(),
            rejects: rejects.len(),
            excluded,
        };
        write_json(&self.layout.file("store/manifest.json"), &store_manifest).map_err(|e| err(&e))?;
        Ok(serde_json::json!({
            "speeches": speeches.len(),
            "rejects": rejects.len(),
            "address_stripped": stripped,
            "excluded": excluded,
        }))
    }

    pub async fn extract(&self) -> Result<Summary, PipelineError> {
        let err = stage_err("extract");
        let speeches: Vec<Speech> = self.speeches()?.into_iter().filter(|s| !s.excluded).collect();
        let prompt = self.prompt()?;
        let backend = self.build_backend(&self.config.backend)?;
        std::fs::create_dir_all(self.layout.file("extract")).map_err(|e| err(&e))?;
        let opts = BatchOptions {
            concurrency: self.config.extract.concurrency,
            retry: self.config.extract.retry(),
            max_chars: self.config.extract.max_chars,
        };
        let report = submit_batch(
            &speeches,
            &prompt,
            backend.as_ref(),
            &self.layout.journal(),
            &self.layout.responses(),
            &opts,
        )
        .await
        .map_err(|e| err(&e))?;
        Ok(serde_json::json!({
            "speeches": speeches.len(),
            "submitted": report.submitted,
            "resumed": report.resumed,
            "failed": report.failed,
        }))
    }

    /// The journaled response of every eligible speech, in store order.
    fn latest_responses(&self, speeches: &[Speech]) -> Result<Vec<RawResponse>, PipelineError> {
        let err = stage_err("parse");
        let journaled: BTreeSet<String> = read_journal(&self.layout.journal())
            .map_err(|e| err(&e))?
            .into_iter()
            .map(|e| e.speech_id)
            .collect();
        let mut latest: HashMap<String, RawResponse> = HashMap::new();
        for r in jsonl::read_path_or_empty::<RawResponse>(&self.layout.responses()).map_err(|e| err(&e))? {
            if journaled.contains(&r.speech_id) {
                latest.insert(r.speech_id.clone(), r);
            }
        }
        Ok(speeches
            .iter()
            .filter(|s| !s.excluded)
            .filter_map(|s| latest.remove(&s.speech_id))
            .collect())
    }

    pub async fn parse(&self) -> Result<Summary, PipelineError> {
        let err = stage_err("parse");
        let speeches = self.speeches()?;
        let order: HashMap<&str, usize> = speeches
            .iter()
            .enumerate()
            .map(|(i, s)| (s.speech_id.as_str(), i))
            .collect();
        let responses = self.latest_responses(&speeches)?;
        let aliases = ColumnAliases::default();
        let mut run = parse_all(&responses, &aliases);
        let queued = run.reprocess.len();
        let outcome = if queued > 0 {
            let by_id: HashMap<String, Speech> = speeches.iter().map(|s| (s.speech_id.clone(), s.clone())).collect();
            let backend = self.build_backend(&self.config.backend)?;
            reprocess(
                std::mem::take(&mut run.reprocess),
                &by_id,
                &self.prompt()?,
                backend.as_ref(),
                &self.config.extract.retry(),
                &aliases,
                self.config.extract.reprocess_cap,
            )
            .await
        } else {
            Default::default()
        };
        let conserved = outcome.conserved(queued);
        let mut mentions = run.mentions;
        mentions.extend(outcome.mentions.iter().cloned());
        mentions.sort_by_key(|m| (order.get(m.speech_id.as_str()).copied().unwrap_or(usize::MAX), m.row));
        let mut report: ParseReport = run.report;
        report.recovered_mentions = outcome.mentions.len();
        report.recovered_entries = outcome.recovered;
        report.parked = outcome.parked.len();
        report.resubmissions = outcome.resubmissions;
        write_jsonl(&self.layout.mentions(), &mentions).map_err(|e| err(&e))?;
        write_jsonl(&self.layout.file("parse/parked.jsonl"), &outcome.parked).map_err(|e| err(&e))?;
        write_json(
            &self.layout.file("parse/report.json"),
            &serde_json::json!({ "report": report, "requeued": outcome.requeued, "conserved": report.conserved() && conserved }),
        )
        .map_err(|e| err(&e))?;
        if !report.conserved() || !conserved {
            return Err(PipelineError::Stage {
                stage: "parse",
                message: "record accounting does not balance".into(),
            });
        }
        Ok(serde_json::json!({
            "responses": report.responses_in,
            "mentions": mentions.len(),
            "queued": queued,
            "recovered": outcome.recovered,
            "parked": outcome.parked.len(),
        }))
    }

    pub async fn resolve(&self) -> Result<Summary, PipelineError> {
        let err = stage_err("resolve");
        let speeches = self.speeches()?;
        let by_id: HashMap<String, Speech> = speeches.into_iter().map(|s| (s.speech_id.clone(), s)).collect();
        let mentions: Vec<Mention> = jsonl::read_path(&self.layout.mentions()).map_err(|e| err(&e))?;
        let registry = self.registry()?;
        let cache_path = self.layout.file("resolve/classifications.jsonl");
        let cached: Vec<ClassificationRecord> = jsonl::read_path_or_empty(&cache_path).map_err(|e| err(&e))?;
        let mut cache = ClassificationCache::from_records(cached);
        let overlay = self.overlay()?;
        let backend = self.build_backend(&self.config.backend)?;
        let opts = ResolveOptions {
            fuzzy_threshold: self.config.resolve.fuzzy_threshold,
            suggestion_floor: self.config.resolve.suggestion_floor,
        };
        let run = resolve_all(
            &mentions,
            &by_id,
            &registry,
            &mut cache,
            &overlay.resolution_decisions,
            &opts,
            backend.as_ref(),
            &self.config.extract.retry(),
        )
        .await;
        write_jsonl(&self.layout.references(), &run.references).map_err(|e| err(&e))?;
        write_jsonl::<DiscardedMention>(&self.layout.file("resolve/discarded.jsonl"), &run.discarded)
            .map_err(|e| err(&e))?;
        write_jsonl::<QueueEntry>(&self.layout.queue(), &run.queue).map_err(|e| err(&e))?;
        write_jsonl(&cache_path, &cache.records()).map_err(|e| err(&e))?;
        let report: &ResolveReport = &run.report;
        // The classifier call count depends on the cache, not on the inputs,
        // so it stays out of the artifact.
        let mut persisted = serde_json::to_value(report).expect("serializable");
        persisted.as_object_mut().expect("object").remove("llm_classifications");
        write_json(&self.layout.file("resolve/report.json"), &persisted).map_err(|e| err(&e))?;
        if !report.conserved() {
            return Err(PipelineError::Stage {
                stage: "resolve",
                message: "mention accounting does not balance".into(),
            });
        }
        Ok(serde_json::to_value(report).expect("serializable"))
    }

    pub fn index(&self) -> Result<Summary, PipelineError> {
        let err = stage_err("index");
        let refs: Vec<ResolvedReference> = jsonl::read_path(&self.layout.references()).map_err(|e| err(&e))?;
        let cfg = &self.config.index;
        let agg = index::aggregate_dyads(&refs, cfg.granularity, cfg.government_as_party);
        let records = index::compute_index(&agg, cfg.min_out_refs);
        write_text(&self.layout.file("index/dyads.csv"), &index::dyads_csv(&agg)).map_err(|e| err(&e))?;
        write_text(&self.layout.file("index/eps_series.csv"), &index::series_csv(&records)).map_err(|e| err(&e))?;
        write_text(
            &self.layout.file("index/eps_series.json"),
            &index::series_json(&records),
        )
        .map_err(|e| err(&e))?;
        write_json(&self.layout.eps_records(), &records).map_err(|e| err(&e))?;
        write_json(&self.layout.file("index/diagnostics.json"), &agg.diagnostics).map_err(|e| err(&e))?;
        Ok(serde_json::json!({
            "references": refs.len(),
            "dyads": agg.dyads.len(),
            "periods": agg.shares.len(),
            "records": records.len(),
            "flagged": records.iter().filter(|r| r.flags.any()).count(),
        }))
    }

    pub fn records(&self) -> Result<Vec<EpsRecord>, PipelineError> {
        read_json(&self.layout.eps_records()).map_err(|e| PipelineError::Stage {
            stage: "export",
            message: format!("{e}; run index first"),
        })
    }

    /// Writes the series in `format` (both when `None`) to `out` or to
    /// `export/` in the work directory.
    pub fn export(&self, format: Option<ExportFormat>, out: Option<&Path>) -> Result<Summary, PipelineError> {
        let err = stage_err("export");
        let records = self.records()?;
        let formats = match format {
            Some(f) => vec![f],
            None => vec![ExportFormat::Csv, ExportFormat::Json],
        };
        let mut written = Vec::new();
        for f in formats {
            let path = match (out, f) {
                (Some(p), _) => p.to_path_buf(),
                (None, ExportFormat::Csv) => self.layout.file("export/eps_series.csv"),
                (None, ExportFormat::Json) => self.layout.file("export/eps_series.json"),
            };
            write_text(&path, &index::export_series(&records, f)).map_err(|e| err(&e))?;
            written.push(path.display().to_string());
        }
        Ok(serde_json::json!({ "records": records.len(), "written": written }))
    }

    pub async fn validate(&self) -> Result<Summary, PipelineError> {
        let err = stage_err("validate");
        let cfg = &self.config.validate;
        let speeches = self.speeches()?;
        let sample = sample_speeches(&speeches, cfg.k, cfg.seed).map_err(|e| err(&e))?;
        let sample_ids: BTreeSet<String> = sample.iter().map(|s| s.speech_id.clone()).collect();
        let mentions: Vec<Mention> = jsonl::read_path(&self.layout.mentions()).map_err(|e| err(&e))?;
        let ai: Vec<Mention> = mentions
            .into_iter()
            .filter(|m| sample_ids.contains(&m.speech_id))
            .collect();

        let mut base_gold: Vec<GoldRecord> = match &cfg.gold {
            Some(p) => {
                let f = File::open(self.config.path(p)).map_err(|e| err(&e))?;
                read_gold(f, None).map_err(|e| err(&e))?
            }
            None => Vec::new(),
        };
        let gold_in_file = base_gold.len();
        base_gold.retain(|g| sample_ids.contains(&g.speech_id));
        let overlay = self.overlay()?;
        let gold: Vec<GoldRecord> = base_gold.iter().chain(&overlay.gold).cloned().collect();

        let mut ms = align(&ai, &gold, cfg.match_threshold);
        let skipped = ms.apply_overlay(&overlay.corrections);

        let verdicts_path = self.layout.file("validate/verdicts.json");
        let known: Verdicts = if verdicts_path.exists() {
            read_json(&verdicts_path).map_err(|e| err(&e))?
        } else {
            Verdicts::new()
        };
        let verdicts = match &self.config.verifier {
            Some(name) => {
                let verifier = self.build_backend(name)?;
                let by_id: HashMap<String, Speech> = sample.iter().map(|s| (s.speech_id.clone(), s.clone())).collect();
                verify_ai_only(
                    &ms,
                    &by_id,
                    verifier.as_ref(),
                    &self.config.backend,
                    &self.config.extract.retry(),
                    &known,
                )
                .await
                .map_err(|e| err(&e))?
            }
            None => {
                warn!("no verifier configured; AI-only findings await human decisions");
                known
            }
        };
        let mut supergold = derive_supergold(&ms, &verdicts, &overlay.supergold_decisions);
        if cfg.auto_confirm {
            auto_confirm(&mut supergold.records);
        }
        let pending = supergold
            .records
            .iter()
            .filter(|r| r.status == SupergoldStatus::Pending)
            .count();
        let metrics: Option<ValidationMetrics> = compute_metrics(&ms, &supergold.records).ok();
        let provisional = provisional_metrics(&ms, &supergold.records).ok();

        let entity: Option<EntityMetrics> = match &cfg.entity_truth {
            Some(p) => {
                let f = File::open(self.config.path(p)).map_err(|e| err(&e))?;
                let truth = read_entity_truth(f).map_err(|e| err(&e))?;
                let refs: Vec<ResolvedReference> =
                    jsonl::read_path_or_empty(&self.layout.references()).map_err(|e| err(&e))?;
                Some(entity_stage_metrics(&refs, &truth).map_err(|e| err(&e))?)
            }
            None => None,
        };
        let metrics = metrics.map(|m| match &entity {
            Some(e) => m.with_entity(e),
            None => m,
        });

        let dir = |f: &str| self.layout.file(&format!("validate/{f}"));
        write_jsonl(&dir("sample.jsonl"), &sample).map_err(|e| err(&e))?;
        write_jsonl(&dir("ai_findings.jsonl"), &ai).map_err(|e| err(&e))?;
        write_text(&dir("gold_base.csv"), &gold_csv(&base_gold)).map_err(|e| err(&e))?;
        write_json(&verdicts_path, &verdicts).map_err(|e| err(&e))?;
        write_json(&dir("matches.json"), &ms).map_err(|e| err(&e))?;
        write_json(&dir("supergold.json"), &supergold).map_err(|e| err(&e))?;
        write_json(
            &dir("metrics.json"),
            &serde_json::json!({
                "complete": pending == 0,
                "pending": pending,
                "metrics": metrics,
                "provisional": provisional,
                "entity": entity,
            }),
        )
        .map_err(|e| err(&e))?;
        let shown = metrics.as_ref().or(provisional.as_ref());
        let report = match shown {
            Some(m) => {
                let mut t = report_table(&[ReportRow {
                    model: cfg.model_label.as_deref().unwrap_or(&self.config.backend),
                    country: &self.config.context.country,
                    metrics: m,
                }]);
                if pending > 0 {
                    t.push_str(&format!(
                        "\nprovisional: {pending} Supergold records await confirmation\n"
                    ));
                }
                t
            }
            None => "no confirmed Supergold records yet\n".to_string(),
        };
        write_text(&dir("report.txt"), &report).map_err(|e| err(&e))?;
        Ok(serde_json::json!({
            "sample": sample.len(),
            "ai_findings": ai.len(),
            "gold": gold.len(),
            "gold_outside_sample": gold_in_file - base_gold.len(),
            "triples": ms.triples.len(),
            "corrections_skipped": skipped.len(),
            "supergold": supergold.records.len(),
            "pending": pending,
            "complete": metrics.is_some(),
        }))
    }

    /// What the review service needs from the last validate and resolve runs.
    pub fn review_inputs(&self) -> Result<ReviewInputs, PipelineError> {
        let err = stage_err("serve");
        let dir = |f: &str| self.layout.file(&format!("validate/{f}"));
        let missing = |e: std::io::Error| PipelineError::Stage {
            stage: "serve",
            message: format!("{e}; run validate first"),
        };
        let gold = match File::open(dir("gold_base.csv")) {
            Ok(f) => read_gold(f, None).map_err(|e| err(&e))?,
            Err(_) => Vec::new(),
        };
        let verdicts: Verdicts = if dir("verdicts.json").exists() {
            read_json(&dir("verdicts.json")).map_err(|e| err(&e))?
        } else {
            Verdicts::new()
        };
        Ok(ReviewInputs {
            sample: jsonl::read_path(&dir("sample.jsonl")).map_err(missing)?,
            ai_findings: jsonl::read_path_or_empty(&dir("ai_findings.jsonl")).map_err(|e| err(&e))?,
            gold,
            verdicts,
            resolution_queue: jsonl::read_path_or_empty(&self.layout.queue()).map_err(|e| err(&e))?,
            threshold: self.config.validate.match_threshold,
        })
    }

    /// Digests of inputs and artifacts for reproducibility checks.
    pub fn manifest(&self, command: &str) -> Result<RunManifest, PipelineError> {
        let err = stage_err("manifest");
        let mut inputs = BTreeMap::new();
        let c = &self.config;
        let mut add = |label: String, p: &Path| -> Result<(), PipelineError> {
            let path = c.path(p);
            if path.is_file() {
                let bytes = std::fs::read(&path).map_err(|e| err(&e))?;
                inputs.insert(label, sha256_hex(bytes));
            }
            Ok(())
        };
        for (i, input) in c.corpus.inputs.iter().enumerate() {
            add(format!("corpus.inputs[{i}].manifest"), &input.manifest)?;
            add(format!("corpus.inputs[{i}].data"), &input.data)?;
        }
        if let Some(v) = &c.corpus.vocatives {
            add("corpus.vocatives".into(), v)?;
        }
        add("registry.aliases".into(), &c.registry.aliases)?;
        if let Some(g) = &c.registry.governments {
            add("registry.governments".into(), g)?;
        }
        if let Some(g) = &c.validate.gold {
            add("validate.gold".into(), g)?;
        }
        if let Some(t) = &c.validate.entity_truth {
            add("validate.entity_truth".into(), t)?;
        }
        for (name, spec) in &c.backends {
            if let BackendSpec::Mock { world, .. } = spec {
                add(format!("backends.{name}.world"), world)?;
            }
        }
        add("review_journal".into(), &c.journal_path())?;
        inputs.insert("prompt".into(), sha256_hex(self.template()?.text));

        let mut artifacts = BTreeMap::new();
        for (rel, path) in walk(&self.layout.root).map_err(|e| err(&e))? {
            if UNTRACKED.contains(&rel.as_str()) || c.journal_path() == path {
                continue;
            }
            let digest = if LOGS.contains(&rel.as_str()) {
                log_digest(&rel, &path).map_err(|e| err(&e))?
            } else {
                sha256_hex(std::fs::read(&path).map_err(|e| err(&e))?)
            };
            artifacts.insert(rel, digest);
        }
        Ok(RunManifest {
            version: VERSION.into(),
            prompt_version: self.template()?.version,
            command: command.into(),
            config_digest: c.digest(),
            inputs,
            artifacts,
        })
    }

    pub fn write_manifest(&self, command: &str, ok: bool) -> Result<RunManifest, PipelineError> {
        let err = stage_err("manifest");
        let m = self.manifest(command)?;
        write_json(&self.layout.file("run_manifest.json"), &m).map_err(|e| err(&e))?;
        let mut log = jsonl::open_append(&self.layout.file("run_log.jsonl")).map_err(|e| err(&e))?;
        jsonl::append(
            &mut log,
            &serde_json::json!({ "command": command, "ok": ok, "at": chrono::Utc::now(), "config_digest": m.config_digest }),
        )
        .map_err(|e| err(&e))?;
        Ok(m)
    }
}

fn reject_json(corpus: &str, r: &RejectRecord) -> serde_json::Value {
    serde_json::json!({ "corpus": corpus, "line": r.line, "reason": r.reason })
}

/// Files under `root`, as sorted (relative path with `/`, path) pairs.
fn walk(root: &Path) -> std::io::Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        if !dir.exists() {
            continue;
        }
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("under root")
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy().into_owned())
                    .collect::<Vec<_>>()
                    .join("/");
                out.push((rel, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Digest over the order-free, timestamp-free content of a submission log.
fn log_digest(rel: &str, path: &Path) -> std::io::Result<String> {
    let mut lines: Vec<String> = if rel.ends_with("journal.jsonl") {
        jsonl::read_path::<JournalEntry>(path)?
            .into_iter()
            .map(|e| format!("{}\t{:?}\t{}", e.speech_id, e.status, e.response_digest))
            .collect()
    } else {
        jsonl::read_path::<RawResponse>(path)?
            .into_iter()
            .filter(|r| r.status == FinishStatus::Ok || r.error.is_some())
            .map(|r| format!("{}\t{:?}\t{}", r.speech_id, r.status, sha256_hex(&r.body)))
            .collect()
    };
    lines.sort();
    Ok(sha256_hex(lines.join("\n")))
}

/// Parked reprocess entries of the last parse run.
pub fn parked(layout: &Layout) -> std::io::Result<Vec<ReprocessEntry>> {
    jsonl::read_path_or_empty(&layout.file("parse/parked.jsonl"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(dir: &Path) -> PipelineConfig {
        for f in ["corpus.toml", "speeches.csv", "registry.csv", "world.json"] {
            std::fs::write(dir.join(f), "").unwrap();
        }
        let raw = r#"
work_dir = "work"
backend = "mock"
[context]
country = "HU"
year_from = 2019
year_to = 2021
[corpus]
inputs = [{ manifest = "corpus.toml", data = "speeches.csv" }]
[registry]
aliases = "registry.csv"
[backends.mock]
kind = "mock"
world = "world.json"
"#;
        std::fs::write(dir.join("p.toml"), raw).unwrap();
        PipelineConfig::load(&dir.join("p.toml")).unwrap()
    }

    #[test]
    fn valid_minimal_config() {
        let dir = tempfile::tempdir().unwrap();
        let c = minimal(dir.path());
        assert!(c.validate().is_empty(), "{:?}", c.validate());
        assert_eq!(c.work(), dir.path().join("work"));
    }

    #[test]
    fn field_level_errors() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = minimal(dir.path());
        c.context.country = "Hungary".into();
        c.verifier = Some("mock".into());
        c.extract.concurrency = 0;
        std::fs::remove_file(dir.path().join("registry.csv")).unwrap();
        let fields: Vec<String> = c.validate().into_iter().map(|e| e.field).collect();
        assert_eq!(
            fields,
            ["context.country", "registry.aliases", "verifier", "extract.concurrency"]
        );
        let err = Pipeline::new(c).err().unwrap();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        minimal(dir.path());
        let path = dir.path().join("p.toml");
        let raw = std::fs::read_to_string(&path)
            .unwrap()
            .replace("backend = \"mock\"", "backend = \"mock\"\nbakend = 1");
        std::fs::write(&path, raw).unwrap();
        assert!(matches!(PipelineConfig::load(&path), Err(PipelineError::Config(_))));
    }

    #[test]
    fn overrides_take_precedence() {
        let dir = tempfile::tempdir().unwrap();
        let mut c = minimal(dir.path());
        c.apply(&Overrides {
            granularity: Some(Granularity::Quarter),
            k: Some(12),
            ..Default::default()
        });
        assert_eq!(c.index.granularity, Granularity::Quarter);
        assert_eq!(c.validate.k, 12);
    }

    #[test]
    fn lock_is_exclusive() {
        let dir = tempfile::tempdir().unwrap();
        let first = WorkLock::acquire(dir.path()).unwrap();
        assert!(matches!(WorkLock::acquire(dir.path()), Err(PipelineError::Locked(_))));
        drop(first);
        assert!(WorkLock::acquire(dir.path()).is_ok());
    }
}

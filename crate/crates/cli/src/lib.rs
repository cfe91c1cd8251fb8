//! `elitepol` command line.
//!
//! Pipeline stages run in-process against the work directory. `serve` hosts
//! the review service and `review` talks to a running one over HTTP.

use std::path::PathBuf;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use elitepol_client::ReviewClient;
use elitepol_core::index::{ExportFormat, Granularity};
use elitepol_core::pipeline::{Overrides, Pipeline, PipelineConfig, PipelineError, Stage};
use elitepol_core::review::api::ResolutionInput;
use elitepol_core::review::{TaskKind, TaskStatus};
use elitepol_core::synthetic::{self, SynthConfig};
use elitepol_core::validation::CorrectionOp;

pub const OK: i32 = 0;
pub const STAGE_FAILURE: i32 = 1;
pub const CONFIG_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "elitepol",
    version,
    about = "Elite polarization scores from parliamentary speech"
)]
pub struct Cli {
    /// Pipeline config (TOML, or JSON with a .json extension).
    #[arg(short, long, global = true, default_value = "elitepol.toml", env = "ELITEPOL_CONFIG")]
    pub config: PathBuf,

    /// Work directory; overrides `work_dir` in the config.
    #[arg(long, global = true)]
    pub work_dir: Option<PathBuf>,

    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load corpora into the speech store and strip formal addresses.
    Ingest,
    /// Send every stored speech to the extraction backend (resumable).
    Extract(ExtractArgs),
    /// Parse model responses into mentions and reprocess malformed ones.
    Parse(ExtractArgs),
    /// Resolve mentions to entities and parties.
    Resolve(ExtractArgs),
    /// Aggregate dyads and compute the polarization index.
    Index(IndexArgs),
    /// Sample speeches, align with Gold, build Supergold and score.
    Validate(ValidateArgs),
    /// Write the index series.
    Export(ExportArgs),
    /// Run every stage in order, stopping at the first failure.
    All(AllArgs),
    /// Host the review service.
    Serve(ServeArgs),
    /// Talk to a running review service.
    Review(ReviewArgs),
    /// Write a synthetic corpus with planted annotations and a config for it.
    Synth(SynthArgs),
}

#[derive(Debug, Args, Default)]
pub struct ExtractArgs {
    /// Backend name from `[backends]`.
    #[arg(long)]
    pub backend: Option<String>,
    /// Requests in flight at once.
    #[arg(long)]
    pub concurrency: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct IndexArgs {
    #[arg(long, value_parser = parse_granularity)]
    pub granularity: Option<Granularity>,
    /// Out-references below which a party cell is flagged.
    #[arg(long)]
    pub min_out_refs: Option<u64>,
    /// Count references to the government as references to the governing parties.
    #[arg(long)]
    pub government_as_party: bool,
}

#[derive(Debug, Args, Default)]
pub struct ValidateArgs {
    /// Speeches to sample.
    #[arg(long)]
    pub k: Option<usize>,
    /// Sampling seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Second-opinion backend name from `[backends]`.
    #[arg(long)]
    pub verifier: Option<String>,
    /// Decide pending Supergold records without a human.
    #[arg(long)]
    pub auto_confirm: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
}

#[derive(Debug, Args, Default)]
pub struct ExportArgs {
    /// Only this format; both when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Output file (needs --format).
    #[arg(long, requires = "format")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct AllArgs {
    #[command(flatten)]
    pub extract: ExtractArgs,
    #[command(flatten)]
    pub index: IndexArgs,
    #[command(flatten)]
    pub validate: ValidateArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Listen address; overrides `review.bind`.
    #[arg(long)]
    pub bind: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReviewArgs {
    /// Service URL; derived from `review.bind` in the config when omitted.
    #[arg(long, env = "ELITEPOL_URL")]
    pub url: Option<String>,
    /// Coder name sent with every write.
    #[arg(long, env = "ELITEPOL_CODER", default_value = "cli")]
    pub coder: String,
    #[command(subcommand)]
    pub action: ReviewAction,
}

#[derive(Debug, Subcommand)]
pub enum ReviewAction {
    /// List tasks, open ones first.
    Tasks {
        #[arg(long, value_parser = parse_kind)]
        kind: Option<TaskKind>,
        #[arg(long, value_parser = parse_status)]
        status: Option<TaskStatus>,
    },
    /// Current metrics.
    Metrics,
    /// Add a Gold finding.
    Gold {
        speech_id: String,
        actor: String,
        #[arg(allow_negative_numbers = true)]
        sentiment: i8,
    },
    /// Merge, split or delete a match.
    Match {
        triple_id: String,
        #[arg(value_parser = ["merge", "split", "delete"])]
        op: String,
        /// Triple to merge into this one.
        #[arg(long, required_if_eq("op", "merge"))]
        with: Option<String>,
        #[arg(long)]
        revision: Option<u64>,
    },
    /// Confirm (or reject) a Supergold record.
    Confirm {
        id: String,
        #[arg(long)]
        reject: bool,
        #[arg(long)]
        revision: Option<u64>,
    },
    /// Decide a queued entity resolution.
    Resolve {
        queue_id: String,
        /// Canonical entity to approve.
        #[arg(long, conflicts_with = "reject", required_unless_present = "reject")]
        approve: Option<String>,
        #[arg(long)]
        reject: bool,
        #[arg(long)]
        revision: Option<u64>,
    },
    /// Mark a task done.
    Complete {
        task_id: String,
        #[arg(long)]
        revision: u64,
    },
    /// Mark a task skipped.
    Skip {
        task_id: String,
        #[arg(long)]
        revision: u64,
    },
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Directory to write into.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = SynthConfig::default().speeches)]
    pub speeches: usize,
    #[arg(long, default_value_t = SynthConfig::default().seed)]
    pub seed: u64,
}

fn parse_granularity(s: &str) -> Result<Granularity, String> {
    s.parse()
}

fn parse_kind(s: &str) -> Result<TaskKind, String> {
    s.parse()
}

fn parse_status(s: &str) -> Result<TaskStatus, String> {
    s.parse()
}

impl Cli {
    fn overrides(&self) -> Overrides {
        let mut o = Overrides {
            work_dir: self.work_dir.clone(),
            ..Default::default()
        };
        let extract = |o: &mut Overrides, a: &ExtractArgs| {
            o.backend = a.backend.clone();
            o.concurrency = a.concurrency;
        };
        let index = |o: &mut Overrides, a: &IndexArgs| {
            o.granularity = a.granularity;
            o.min_out_refs = a.min_out_refs;
            o.government_as_party = a.government_as_party.then_some(true);
        };
        let validate = |o: &mut Overrides, a: &ValidateArgs| {
            o.k = a.k;
            o.seed = a.seed;
            o.verifier = a.verifier.clone();
            o.auto_confirm = a.auto_confirm.then_some(true);
        };
        match &self.command {
            Command::Extract(a) | Command::Parse(a) | Command::Resolve(a) => extract(&mut o, a),
            Command::Index(a) => index(&mut o, a),
            Command::Validate(a) => validate(&mut o, a),
            Command::All(a) => {
                extract(&mut o, &a.extract);
                index(&mut o, &a.index);
                validate(&mut o, &a.validate);
            }
            Command::Serve(a) => o.bind = a.bind.clone(),
            _ => {}
        }
        o
    }

    fn command_line(&self) -> String {
        std::env::args().skip(1).collect::<Vec<_>>().join(" ")
    }
}

fn load(cli: &Cli) -> Result<Pipeline, PipelineError> {
    let mut config = PipelineConfig::load(&cli.config)?;
    config.apply(&cli.overrides());
    Pipeline::new(config)
}

fn print(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn fail(e: &PipelineError) -> i32 {
    eprintln!("error: {e}");
    e.exit_code()
}

/// Runs a parsed command line and returns the process exit code.
pub async fn run(cli: Cli) -> i32 {
    match &cli.command {
        Command::Synth(a) => return synth(a),
        Command::Review(a) => return review(&cli, a).await,
        Command::Serve(_) => return serve(&cli).await,
        _ => {}
    }
    let pipeline = match load(&cli) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let _lock = match pipeline.lock() {
        Ok(l) => l,
        Err(e) => return fail(&e),
    };
    let result = match &cli.command {
        Command::Ingest => pipeline.run(Stage::Ingest).await,
        Command::Extract(_) => pipeline.run(Stage::Extract).await,
        Command::Parse(_) => pipeline.run(Stage::Parse).await,
        Command::Resolve(_) => pipeline.run(Stage::Resolve).await,
        Command::Index(_) => pipeline.run(Stage::Index).await,
        Command::Validate(_) => pipeline.run(Stage::Validate).await,
        Command::Export(a) => {
            let format = a.format.map(|f| match f {
                FormatArg::Csv => ExportFormat::Csv,
                FormatArg::Json => ExportFormat::Json,
            });
            pipeline.export(format, a.out.as_deref())
        }
        Command::All(_) => pipeline.run_all().await.map(|stages| {
            json!(stages
                .into_iter()
                .map(|(s, v)| (s.name().to_string(), v))
                .collect::<serde_json::Map<_, _>>())
        }),
        Command::Synth(_) | Command::Review(_) | Command::Serve(_) => unreachable!("handled above"),
    };
    let ok = result.is_ok();
    if let Err(e) = pipeline.write_manifest(&cli.command_line(), ok) {
        eprintln!("warning: {e}");
    }
    match result {
        Ok(summary) => {
            print(&summary);
            OK
        }
        Err(e) => fail(&e),
    }
}

fn synth(a: &SynthArgs) -> i32 {
    let config = SynthConfig {
        speeches: a.speeches,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let corpus = synthetic::generate(&config);
    match synthetic::write(&corpus, &a.out) {
        Ok(()) => {
            print(&json!({
                "out": a.out.display().to_string(),
                "speeches": config.speeches,
                "planted_references": corpus.references.len(),
                "config": a.out.join("elitepol.toml").display().to_string(),
            }));
            OK
        }
        Err(e) => {
            eprintln!("error: cannot write {}: {e}", a.out.display());
            STAGE_FAILURE
        }
    }
}

async fn serve(cli: &Cli) -> i32 {
    let pipeline = match load(cli) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let inputs = match pipeline.review_inputs() {
        Ok(i) => i,
        Err(e) => return fail(&e),
    };
    let journal = pipeline.config.journal_path();
    let service = match elitepol_service::Service::open(inputs, &journal) {
        Ok(s) => Arc::new(s),
        Err(e) => {
            eprintln!("error: {e}");
            return STAGE_FAILURE;
        }
    };
    let bind = &pipeline.config.review.bind;
    let listener = match elitepol_service::bind(bind).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return STAGE_FAILURE;
        }
    };
    let addr = listener
        .local_addr()
        .map(|a| a.to_string())
        .unwrap_or_else(|_| bind.clone());
    eprintln!(
        "review service listening on http://{addr} (journal {})",
        journal.display()
    );
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    match elitepol_service::serve(listener, service, shutdown).await {
        Ok(()) => OK,
        Err(e) => {
            eprintln!("error: {e}");
            STAGE_FAILURE
        }
    }
}

fn to_json<T: serde::Serialize>(v: T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

fn service_url(cli: &Cli, a: &ReviewArgs) -> Result<String, PipelineError> {
    if let Some(u) = &a.url {
        return Ok(u.clone());
    }
    let config = PipelineConfig::load(&cli.config)?;
    Ok(format!("http://{}", config.review.bind))
}

async fn review(cli: &Cli, a: &ReviewArgs) -> i32 {
    let url = match service_url(cli, a) {
        Ok(u) => u,
        Err(e) => return fail(&e),
    };
    let c = ReviewClient::new(url, &a.coder);
    let result: Result<serde_json::Value, elitepol_client::ClientError> = match &a.action {
        ReviewAction::Tasks { kind, status } => c.tasks(*kind, *status).await.map(to_json),
        ReviewAction::Metrics => c.metrics().await.map(to_json),
        ReviewAction::Gold {
            speech_id,
            actor,
            sentiment,
        } => c.add_gold(speech_id, actor, *sentiment).await.map(to_json),
        ReviewAction::Match {
            triple_id,
            op,
            with,
            revision,
        } => {
            let op = match op.as_str() {
                "merge" => CorrectionOp::Merge {
                    with: with.clone().unwrap_or_default(),
                },
                "split" => CorrectionOp::Split,
                _ => CorrectionOp::Delete,
            };
            c.correct_match(triple_id, op, *revision).await.map(to_json)
        }
        ReviewAction::Confirm { id, reject, revision } => c.decide_supergold(id, !reject, *revision).await.map(to_json),
        ReviewAction::Resolve {
            queue_id,
            approve,
            revision,
            ..
        } => {
            let input = ResolutionInput {
                approve: approve.is_some(),
                canonical_entity: approve.clone(),
                revision: *revision,
            };
            c.decide_resolution(queue_id, &input).await.map(to_json)
        }
        ReviewAction::Complete { task_id, revision } => c.complete_task(task_id, *revision).await.map(to_json),
        ReviewAction::Skip { task_id, revision } => c.skip_task(task_id, *revision).await.map(to_json),
    };
    match result {
        Ok(v) => {
            print(&v);
            OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            STAGE_FAILURE
        }
    }
}

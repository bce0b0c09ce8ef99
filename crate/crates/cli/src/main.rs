//! `nnlda`: train and evaluate topic models whose document priors come
//! from side data.
//!
//! Exit codes are a stable contract for scripting: 0 on success, 1 on
//! runtime failures (IO, bad data, diverged training), 2 on usage errors.

mod data;
mod eval;
mod generate;
mod manifest;
mod synth;
mod train;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nnlda_core::PriorKind;

#[derive(Parser)]
#[command(name = "nnlda", version, about = "Topic models with side-data priors")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Directory receiving all outputs and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Worker threads for document-parallel passes (default: all cores).
    /// The NNLDA_THREADS environment variable takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the synthetic review corpus.
    Synth(SynthArgs),
    /// Fit a topic model; writes a checkpoint and an ELBO trace.
    Train(TrainArgs),
    /// Score a checkpoint on a corpus.
    Eval(EvalArgs),
    /// Generate a comment from side data alone.
    Generate(GenerateArgs),
}

#[derive(Args)]
pub struct SynthArgs {
    /// Number of documents.
    #[arg(long)]
    pub n_docs: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Output corpus file (.csv or .jsonl), relative to --out-dir.
    #[arg(long, default_value = "corpus.csv")]
    pub out: PathBuf,

    /// Shortest document length.
    #[arg(long, default_value_t = 1)]
    pub min_len: usize,

    /// Longest document length.
    #[arg(long, default_value_t = 5)]
    pub max_len: usize,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Training corpus (.csv or .jsonl).
    #[arg(long)]
    pub data: PathBuf,

    /// Prior family.
    #[arg(long, value_enum)]
    pub prior: PriorArg,

    /// Number of topics.
    #[arg(long)]
    pub topics: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Checkpoint output path, relative to --out-dir.
    #[arg(long, default_value = "checkpoint.json")]
    pub checkpoint: PathBuf,

    /// ELBO trace CSV path, relative to --out-dir.
    #[arg(long, default_value = "elbo_trace.csv")]
    pub trace: PathBuf,

    #[command(flatten)]
    pub schema: SchemaArgs,

    #[command(flatten)]
    pub hyper: HyperArgs,
}

/// Training hyperparameters; the defaults reproduce the reference setup.
#[derive(Args)]
pub struct HyperArgs {
    /// Symmetric concentration of the fixed prior.
    #[arg(long, default_value_t = 1.0)]
    pub fixed_alpha: f64,

    #[arg(long, default_value_t = 200)]
    pub max_iterations: usize,

    /// Relative ELBO change that stops EM.
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,

    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,

    #[arg(long, default_value_t = 0.9)]
    pub adam_beta1: f64,

    #[arg(long, default_value_t = 0.999)]
    pub adam_beta2: f64,

    #[arg(long, default_value_t = 1e-8)]
    pub adam_epsilon: f64,

    #[arg(long, default_value_t = 0.1)]
    pub weight_decay: f64,

    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,

    /// Prior optimizer steps per EM iteration (default: one pass over the
    /// corpus).
    #[arg(long)]
    pub gamma_steps: Option<usize>,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Model checkpoint to score.
    #[arg(long)]
    pub model: PathBuf,

    /// Evaluation corpus (.csv or .jsonl).
    #[arg(long)]
    pub data: PathBuf,

    /// Tasks to run, comma separated (default: all).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub tasks: Option<Vec<Task>>,

    /// Topic counts for a perplexity-vs-K table over saved checkpoints.
    #[arg(long, value_delimiter = ',')]
    pub topics_sweep: Option<Vec<usize>>,

    /// Checkpoint path template for --topics-sweep; `{k}` is replaced by
    /// each topic count.
    #[arg(long)]
    pub sweep_checkpoints: Option<String>,

    #[command(flatten)]
    pub schema: SchemaArgs,
}

#[derive(Args)]
pub struct GenerateArgs {
    /// Model checkpoint.
    #[arg(long)]
    pub model: PathBuf,

    /// Side value as COLUMN=VALUE; repeat once per side column.
    #[arg(long, value_name = "COLUMN=VALUE")]
    pub side: Vec<String>,

    /// Number of tokens to generate.
    #[arg(long, default_value_t = 5)]
    pub n_words: usize,
}

/// Column mapping flags shared by commands that read a corpus file.
#[derive(Args, Clone)]
pub struct SchemaArgs {
    /// Text column.
    #[arg(long, default_value = "text")]
    pub text_column: String,

    /// Side columns, comma separated (default: every unclaimed column).
    #[arg(long, value_delimiter = ',')]
    pub side_columns: Option<Vec<String>>,

    /// Integer label column (default: `label` when the file has it).
    #[arg(long)]
    pub label_column: Option<String>,

    /// Gold category column (default: `category` when the file has it).
    #[arg(long)]
    pub category_column: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PriorArg {
    Lda,
    Dmr,
    Nnlda,
}

impl PriorArg {
    pub fn kind(self) -> PriorKind {
        match self {
            PriorArg::Lda => PriorKind::Fixed,
            PriorArg::Dmr => PriorKind::Dmr,
            PriorArg::Nnlda => PriorKind::Neural,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Perplexity,
    Grouping,
    Features,
    Lift,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Perplexity => "perplexity",
            Task::Grouping => "grouping",
            Task::Features => "features",
            Task::Lift => "lift",
        }
    }
}

/// Failures split by exit code.
pub enum CliError {
    /// Bad invocation; exits 2.
    Usage(String),
    /// Failure while doing the work; exits 1.
    Runtime(anyhow::Error),
}

pub type CliResult = Result<(), CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Runtime(err) => write!(f, "{err:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Runtime(err)
    }
}

impl From<nnlda_core::Error> for CliError {
    fn from(err: nnlda_core::Error) -> Self {
        match err {
            // Only ever reached from user-typed side values; data files
            // build their schema from their own contents.
            nnlda_core::Error::UnknownSideValue { .. } => CliError::Usage(err.to_string()),
            other => CliError::Runtime(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Runtime(err.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::Runtime(err.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::Runtime(err.into())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn execute(cli: Cli) -> CliResult {
    configure_threads(cli.threads)?;
    std::fs::create_dir_all(&cli.out_dir)?;
    match cli.command {
        Cmd::Synth(args) => synth::run(&cli.out_dir, args),
        Cmd::Train(args) => train::run(&cli.out_dir, args),
        Cmd::Eval(args) => eval::run(&cli.out_dir, args),
        Cmd::Generate(args) => generate::run(&cli.out_dir, args),
    }
}

fn configure_threads(flag: Option<usize>) -> CliResult {
    let threads = match std::env::var("NNLDA_THREADS") {
        Ok(raw) => Some(raw.trim().parse::<usize>().map_err(|_| {
            usage(format!(
                "NNLDA_THREADS must be a positive integer, got `{raw}`"
            ))
        })?),
        Err(_) => flag,
    };
    match threads {
        None => Ok(()),
        Some(0) => Err(usage("thread count must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(anyhow::anyhow!("thread pool setup failed: {e}"))),
    }
}

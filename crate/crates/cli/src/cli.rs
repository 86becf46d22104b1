//! Command-line surface.

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "mergeval",
    version,
    about = "Merge model checkpoints by task-vector arithmetic and score multimodal code-QA responses"
)]
pub struct Cli {
    /// Emit machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,

    /// quiet, info or debug.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,

    /// Worker threads for scoring and merging.
    #[arg(long, global = true)]
    pub max_parallel: Option<usize>,

    /// Directory for judge reply caching.
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,

    /// Seed for randomized behavior (retry jitter).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// JSON config file; command-line flags win over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// List the tensors of a checkpoint (name, dtype, shape, bytes).
    Inspect { checkpoint: PathBuf },
    /// Compute a task vector: fine-tuned minus base, merge tensors only.
    Diff {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        ft: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Parameter policy JSON; defaults to the built-in backbone policy.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Merge checkpoints per a recipe file.
    Merge {
        #[arg(long)]
        recipe: PathBuf,
    },
    /// Lambda sweeps: candidate generation and selection.
    Sweep {
        #[command(subcommand)]
        command: SweepCommand,
    },
    /// Score model responses against a question file.
    Score(ScoreArgs),
    /// Pairwise agreement between two binary label files.
    Agree {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Remove corpus items near-duplicating reference samples.
    Dedup {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
        /// Where to write the JSON report; stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
pub enum SweepCommand {
    /// Write one merged candidate per lambda.
    Plan {
        /// Recipe template; its lambda/output fields are ignored.
        #[arg(long)]
        template: PathBuf,
        /// Comma-separated lambda values.
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Pick the best lambda from a score table.
    Select {
        #[arg(long, value_delimiter = ',')]
        lambdas: Vec<f64>,
        #[arg(long)]
        scores: PathBuf,
    },
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub questions: PathBuf,
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// Pass/fail threshold for binarization.
    #[arg(long, default_value_t = 50.0)]
    pub threshold: f64,
    /// exclude: leave unsupported-runtime questions out of aggregation;
    /// zero: score the affected criterion 0.
    #[arg(long, default_value = "exclude")]
    pub skip_policy: String,
    /// Use the deterministic in-process judge instead of the HTTP API.
    #[arg(long)]
    pub mock_judge: bool,
    /// JSON-lines transcript of judge traffic.
    #[arg(long)]
    pub transcript: Option<PathBuf>,
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use multiverse_core::engine::{CostModel, DEFAULT_MAX_LEN};
use multiverse_core::tokenizer::{TokenizerMode, TOKENIZER_ENV};

mod commands;
mod stats;

#[derive(Debug, Parser)]
#[command(name = "multiverse", version, about = "Parallel-branch trajectory tools")]
struct Cli {
    /// Tokenizer used for token counts, layouts and simulation.
    #[arg(long, global = true, env = TOKENIZER_ENV, default_value = "whitespace")]
    tokenizer: TokenizerMode,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a trajectory against the tag grammar and optional limits.
    Validate(ValidateArgs),
    /// Structural statistics for a directory of trajectories.
    Stats(StatsArgs),
    /// Positions and attention mask of a trajectory's layout.
    AttentionDump(AttentionDumpArgs),
    /// Replay a trajectory through the engine simulator.
    Simulate(SimulateArgs),
    /// Speedup against parallel degree and batch size on synthetic blocks.
    Sweep(SweepArgs),
    /// Relative edit distance between an original and a rewritten text.
    CurateCheck(CurateCheckArgs),
}

#[derive(Debug, Args)]
struct Output {
    /// Write the report here instead of stdout.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    file: PathBuf,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    max_paths: Option<usize>,
    /// Nesting limit of the curation profile (depth 2).
    #[arg(long, conflicts_with = "max_depth")]
    curation: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct StatsArgs {
    dir: PathBuf,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum DumpFormat {
    Json,
    Text,
}

#[derive(Debug, Args)]
struct AttentionDumpArgs {
    file: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    format: DumpFormat,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    trajectory: PathBuf,
    /// `constant` or `capacity:C`.
    #[arg(long, default_value = "constant")]
    cost: CostModel,
    /// Tokens a single path may emit before it is cut off.
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the event log here as JSON lines.
    #[arg(long)]
    events: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Path counts of the synthetic blocks.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,6,8")]
    paths: Vec<usize>,
    /// Batch sizes.
    #[arg(long, value_delimiter = ',', default_value = "1,4,16,64")]
    batch: Vec<usize>,
    #[arg(long, default_value = "capacity:64")]
    cost: CostModel,
    /// Base number of words per path.
    #[arg(long, default_value_t = 16)]
    words: usize,
    /// Extra words per path, drawn uniformly from 0..=jitter.
    #[arg(long, default_value_t = 4)]
    jitter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sweep these trajectory files instead of synthetic blocks.
    #[arg(long)]
    trajectory: Vec<PathBuf>,
    /// Emit CSV (`degree,latency_per_token,batch,speedup`) instead of JSON.
    #[arg(long)]
    csv: bool,
    #[command(flatten)]
    output: Output,
}

#[derive(Debug, Args)]
struct CurateCheckArgs {
    #[arg(long)]
    original: PathBuf,
    #[arg(long)]
    candidate: PathBuf,
    #[arg(long, default_value_t = multiverse_core::curator::DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Compare whole texts even when both sides carry step labels.
    #[arg(long)]
    whole_text: bool,
    #[command(flatten)]
    output: Output,
}

/// Outcome of a subcommand that ran to completion.
pub enum Verdict {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let tok = multiverse_core::tokenizer::Tokenizer::new(cli.tokenizer, 256);
    let result = match cli.command {
        Command::Validate(a) => commands::validate(a),
        Command::Stats(a) => stats::run(a, &tok),
        Command::AttentionDump(a) => commands::attention_dump(a, &tok),
        Command::Simulate(a) => commands::simulate(a, &tok),
        Command::Sweep(a) => commands::sweep(a, &tok),
        Command::CurateCheck(a) => commands::curate_check(a),
    };
    match result {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

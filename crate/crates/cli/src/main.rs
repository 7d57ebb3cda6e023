//! `fsac`: generate corpora, train and grid-search correction models, correct
//! or validate single flowsheets, evaluate checkpoints, export DOT.

mod commands;
mod flowsheet;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::RunConfig;

/// Bad flags or config values; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A domain failure already reported on stdout (lint findings, divergence);
/// exits with status 1 without further output.
#[derive(Debug)]
pub struct Reported(pub String);

impl std::fmt::Display for Reported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Reported {}

#[derive(Parser)]
#[command(name = "fsac", version, about = "Flowsheet autocorrection pipeline")]
struct Cli {
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run config: JSON object with dotted keys ("gen.n_pairs", "train.lr", ...).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set model.d_model=256. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a train/val/test corpus of (erroneous, correct) pairs.
    Gen(GenArgs),
    /// Train a model on a corpus directory.
    Train(TrainArgs),
    /// Grid search over width, depth, learning rate and batch size.
    Grid(GridArgs),
    /// Suggest corrections for one flowsheet string.
    Correct(CorrectArgs),
    /// Score a checkpoint on a corpus split.
    Eval(EvalArgs),
    /// Parse and lint one flowsheet string.
    Validate(InputArgs),
    /// Render one flowsheet string as a Graphviz digraph.
    ExportDot(DotArgs),
    /// Print the token vocabulary.
    Vocab,
}

#[derive(Args)]
pub struct GenArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Corpus directory (train.jsonl, val.jsonl).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the checkpoint, log and manifest.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    max_seconds: Option<u64>,
    #[arg(long)]
    d_model: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eval_every: Option<usize>,
    /// Use only the first N training pairs.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
pub struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated axis values; defaults are the full 81-cell space.
    #[arg(long, value_delimiter = ',')]
    d_model: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    layers: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    lr: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    batch: Vec<usize>,
    /// Per-cell step budget.
    #[arg(long)]
    max_steps: Option<usize>,
    /// Per-cell wall-clock budget in seconds.
    #[arg(long)]
    max_seconds: Option<u64>,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args)]
pub struct InputArgs {
    /// Flowsheet string; read from standard input when absent.
    #[arg(long)]
    input: Option<String>,
}

#[derive(Args)]
pub struct CorrectArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    top_k: Option<usize>,
    /// Print one JSON document instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    split: String,
    #[arg(long)]
    beam: Option<usize>,
    /// Score only the first N records.
    #[arg(long)]
    limit: Option<usize>,
    /// Report path; defaults to <data>/report_<split>.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DotArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            anyhow::bail!(UsageError("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = RunConfig::from_file(cli.config.as_deref())?;
    cfg.apply_assignments(&cli.set)?;
    match cli.cmd {
        Cmd::Gen(a) => commands::gen(cfg, a),
        Cmd::Train(a) => commands::train(cfg, a),
        Cmd::Grid(a) => commands::grid(cfg, a),
        Cmd::Correct(a) => commands::correct(cfg, a),
        Cmd::Eval(a) => commands::eval(cfg, a),
        Cmd::Validate(a) => commands::validate(a),
        Cmd::ExportDot(a) => commands::export_dot(a),
        Cmd::Vocab => commands::vocab(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Reported>() => ExitCode::from(1),
        Err(e) if e.is::<UsageError>() => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

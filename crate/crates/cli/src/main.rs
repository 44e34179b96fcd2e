//! `tsa` — event-aware cross-attention modulation toolbox.
//!
//! Exit codes: 0 success (including planner fallback), 1 usage error,
//! 2 data or format error.

mod commands;
mod config;
mod util;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn data(e: impl std::fmt::Display) -> Self {
        CliError::Data(e.to_string())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Data(msg) => write!(f, "{msg}"),
        }
    }
}

impl<E: std::error::Error> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "tsa",
    version,
    about = "Temporally segmented attention: modulation, masks, planning, heatmaps, benchmarks",
    arg_required_else_help = true
)]
pub struct Cli {
    /// JSON config file; command flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run event-aware attention modulation over Q/K tensors and a layout.
    Modulate(ModulateArgs),
    /// Extract the motion-region mask for one subject.
    Mask(MaskArgs),
    /// Produce per-event frame intervals and write a completed layout.
    Segment(SegmentArgs),
    /// Export per-event, per-frame attention heatmaps as PGM images.
    Viz(VizArgs),
    /// Time vanilla attention against the fused and dense modulated paths.
    Bench(BenchArgs),
    /// Run the mock denoising loop and write per-step alignment metrics.
    DenoiseSim(DenoiseSimArgs),
}

#[derive(Args, Debug)]
pub struct ModulateArgs {
    /// Video-token queries, TSA1 rank-2 (N x d).
    #[arg(long, value_name = "Q.tsa")]
    pub q: PathBuf,
    /// Text-token keys, TSA1 rank-2 (M x d).
    #[arg(long, value_name = "K.tsa")]
    pub k: PathBuf,
    /// Layout JSON document.
    #[arg(long, value_name = "L.json")]
    pub layout: PathBuf,
    /// Output attention, TSA1 rank-2 (N x M).
    #[arg(long, value_name = "A.tsa")]
    pub out: PathBuf,
    /// Use the dense reference path instead of the fused path.
    #[arg(long)]
    pub oracle: bool,
    /// Also write the dense bias matrix (per subject).
    #[arg(long, value_name = "B.tsa")]
    pub emit_bias: Option<PathBuf>,
    /// Also write the dense reinforcement matrix (per subject).
    #[arg(long, value_name = "R.tsa")]
    pub emit_reinforcement: Option<PathBuf>,
    /// Also write the motion mask (per subject) as a rank-1 tensor.
    #[arg(long, value_name = "M.tsa")]
    pub emit_mask: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct MaskArgs {
    #[arg(long, value_name = "Q.tsa")]
    pub q: PathBuf,
    #[arg(long, value_name = "K.tsa")]
    pub k: PathBuf,
    #[arg(long, value_name = "L.json")]
    pub layout: PathBuf,
    /// Output mask, TSA1 rank-1 of 0.0/1.0 values.
    #[arg(long, value_name = "M.tsa")]
    pub out: PathBuf,
    /// Subject index within the layout.
    #[arg(long)]
    pub subject: Option<usize>,
    /// Also write one PGM image per frame into this directory.
    #[arg(long, value_name = "DIR")]
    pub pgm_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    /// Prompt text (mutually exclusive with --prompt-file).
    #[arg(long, conflicts_with = "prompt_file")]
    pub prompt: Option<String>,
    /// Read the prompt from a file.
    #[arg(long, value_name = "FILE")]
    pub prompt_file: Option<PathBuf>,
    /// Layout skeleton JSON; its event frame intervals are (re)planned.
    #[arg(long, value_name = "E.json")]
    pub events: PathBuf,
    /// Latent frame count; overrides the skeleton's video.frames.
    #[arg(long)]
    pub frames: Option<usize>,
    /// Planning mode.
    #[arg(long, value_parser = ["uniform", "llm", "user"])]
    pub mode: Option<String>,
    /// Chat-completion endpoint URL (llm mode).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Model name (llm mode).
    #[arg(long)]
    pub model: Option<String>,
    /// Request timeout in seconds (llm mode).
    #[arg(long)]
    pub timeout: Option<f64>,
    /// Completed layout JSON output.
    #[arg(long, value_name = "L.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct VizArgs {
    /// Attention matrix, TSA1 rank-2 (N x M).
    #[arg(long, value_name = "A.tsa")]
    pub attn: PathBuf,
    #[arg(long, value_name = "L.json")]
    pub layout: PathBuf,
    /// Directory for event{i}_frame{f}.pgm images.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Video token count; must be a multiple of 64.
    #[arg(long)]
    pub n: Option<usize>,
    /// Text token count.
    #[arg(long)]
    pub m: Option<usize>,
    /// Head dimension.
    #[arg(long)]
    pub d: Option<usize>,
    /// Repetitions per timed path.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Synthetic-input seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Emit the report as JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Args, Debug)]
pub struct DenoiseSimArgs {
    /// Synthetic-instance spec JSON.
    #[arg(long, value_name = "S.json")]
    pub spec: PathBuf,
    /// Schedule string, e.g. "steps=50,fraction=0.2".
    #[arg(long)]
    pub schedule: String,
    /// Metrics CSV output path.
    #[arg(long, value_name = "metrics.csv")]
    pub out: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                print!("{e}");
                std::process::exit(0);
            }
            _ => {
                eprint!("{e}");
                std::process::exit(1);
            }
        },
    };

    let config = match config::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };

    let result = match cli.command {
        Command::Modulate(args) => commands::modulate::run(args),
        Command::Mask(args) => commands::mask::run(args, &config),
        Command::Segment(args) => commands::segment::run(args, &config),
        Command::Viz(args) => commands::viz::run(args),
        Command::Bench(args) => commands::bench::run(args, &config),
        Command::DenoiseSim(args) => commands::sim::run(args),
    };

    match result {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}

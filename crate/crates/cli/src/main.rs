//! `focusfuse` command-line front end: corpus synthesis, scorer training,
//! fusion and metric evaluation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::FileConfig;

/// Failure classes, mapped to exit codes 2 and 1.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<focusfuse::Error> for CliError {
    fn from(e: focusfuse::Error) -> Self {
        if e.is_validation() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Runtime(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "focusfuse", version, about = "Boundary-aware multi-focus image fusion")]
struct Cli {
    /// TOML run configuration; command-line flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Random seed (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a training corpus of synthetic multi-focus composites.
    Synth(commands::synth::SynthArgs),
    /// Train the initial and/or boundary focus scorer on a corpus.
    Train(commands::train::TrainArgs),
    /// Fuse two aligned source images.
    Fuse(commands::fuse::FuseArgs),
    /// Compute fusion quality metrics for a list of (A, B, F) triples.
    Eval(commands::eval::EvalArgs),
}

/// Values shared by every subcommand after merging flags and file.
pub struct Common {
    pub file: FileConfig,
    pub seed: u64,
}

#[derive(Args, Clone, Debug, Default)]
pub struct PipelineArgs {
    /// Scorer patch size.
    #[arg(long)]
    pub patch_size: Option<usize>,
    /// Half-size of the boundary averaging window.
    #[arg(long)]
    pub window_half: Option<usize>,
    /// Score every n-th pixel and fill the rest from the nearest scored one.
    #[arg(long)]
    pub stride: Option<usize>,
    /// Binarization threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let threads = cli.threads.or(file.threads);
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let seed = cli.seed.or(file.seed).unwrap_or(0);
    log::info!("seed={seed} threads={}", rayon::current_num_threads());
    let common = Common { file, seed };
    match cli.command {
        Command::Synth(args) => commands::synth::run(&common, args),
        Command::Train(args) => commands::train::run(&common, args),
        Command::Fuse(args) => commands::fuse::run(&common, args),
        Command::Eval(args) => commands::eval::run(&common, args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ssimuse::bench::{Mode, SweepParameter};
use ssimuse::midi::TrackFilter;

/// Structural similarity for symbolic music: compare pieces, audit a query
/// against a corpus, and run the forced-replication benchmark.
#[derive(Debug, Parser)]
#[command(name = "ssimuse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Score two MIDI files clip by clip and report the best-matching clip.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Rank every clip of a corpus directory against a query file.
    Audit {
        query: PathBuf,
        corpus: PathBuf,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run the forced-replication benchmark on a directory of MIDI files.
    Bench {
        corpus: PathBuf,
        #[command(flatten)]
        bench: BenchArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep one structure-term hyperparameter over the benchmark.
    Sweep {
        corpus: PathBuf,
        /// window, hop or weight-exp
        #[arg(long)]
        parameter: Option<SweepParameter>,
        /// Values to try; defaults depend on the parameter.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[command(flatten)]
        bench: BenchArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Write a seeded synthetic corpus of multi-track MIDI files.
    SynthCorpus {
        dir: PathBuf,
        #[arg(long, default_value_t = 48)]
        pieces: usize,
        #[arg(long, default_value_t = 32)]
        bars: usize,
        #[arg(long, env = "SSIMUSE_SEED", default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Emit {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Args)]
struct Common {
    #[arg(long)]
    mode: Option<Mode>,
    /// Structure-term window length in steps.
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    weight_exp: Option<f64>,
    /// Time-shift penalty strength.
    #[arg(long)]
    lambda: Option<f64>,
    /// Track indices or name globs, comma separated.
    #[arg(long)]
    tracks: Option<TrackFilter>,
    #[arg(long, default_value_t = 4)]
    steps_per_quarter: u32,
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "ssimuse-out")]
    out: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "csv,json")]
    emit: Vec<Emit>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[arg(long, env = "SSIMUSE_SEED")]
    seed: Option<u64>,
    #[arg(long)]
    set_size: Option<usize>,
    #[arg(long)]
    synthetics: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
}

/// Failure classes, each with its own exit code.
#[derive(Debug)]
enum Failure {
    Input(anyhow::Error),
    Rejected(String),
    Config(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Rejected(_) => 2,
            Failure::Config(_) => 3,
        }
    }
}

impl From<ssimuse::Error> for Failure {
    fn from(e: ssimuse::Error) -> Self {
        match e {
            ssimuse::Error::InvalidParams(_) | ssimuse::Error::BadClipLength { .. } => Failure::Config(e.into()),
            _ => Failure::Input(e.into()),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Input(e) => eprintln!("error: {e:#}"),
                Failure::Rejected(msg) => eprintln!("rejected: {msg}"),
                Failure::Config(e) => eprintln!("config error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}

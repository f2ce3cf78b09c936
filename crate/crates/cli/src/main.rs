//! `duolens` command-line front end.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "duolens", version, about = "Dual-encoder detector for machine-generated text and code")]
struct Cli {
    /// Worker threads (falls back to DUOLENS_THREADS, then all cores).
    #[arg(long, global = true, env = "DUOLENS_THREADS")]
    threads: Option<usize>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ingest JSONL pools, balance labels per language and write train/dev/test splits.
    BuildDataset(commands::data::BuildDatasetArgs),
    /// Train the fusion head on frozen encoders.
    TrainHead(commands::model::TrainHeadArgs),
    /// Fit a linear probe on one frozen encoder.
    Probe(commands::model::ProbeArgs),
    /// Fit the temperature on a dev split and store it in the head bundle.
    Calibrate(commands::model::CalibrateArgs),
    /// Score samples and emit one JSONL detection per input line.
    Detect(commands::eval::DetectArgs),
    /// Evaluate a split and write the report as JSON and CSV.
    Eval(commands::eval::EvalArgs),
    /// Accuracy of each per-language head on every other language.
    CrossEval(commands::eval::CrossEvalArgs),
    /// Apply a rename or reformat transform to code samples.
    Perturb(commands::data::PerturbArgs),
    /// AUROC retention between clean and perturbed copies of a split.
    Retention(commands::eval::RetentionArgs),
    /// Throughput, latency and peak tensor memory at 512-token inputs.
    Bench(commands::eval::BenchArgs),
    /// Write a randomly initialized encoder bundle with its vocabulary.
    InitEncoder(commands::model::InitEncoderArgs),
    /// Generate synthetic corpora.
    Synth(commands::data::SynthArgs),
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output file, or - for stdout.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let internal = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<duolens::Error>(), Some(duolens::Error::Internal(_))));
    if internal {
        3
    } else {
        2
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        anyhow::ensure!(n >= 1, duolens::Error::invalid("--threads must be at least 1"));
        pool = pool.num_threads(n);
    }
    let pool = pool.build()?;
    let threads = pool.current_num_threads();
    pool.install(|| commands::dispatch(cli.command, threads))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(3),
    }
}

//! `byt5kit`: byte-level seq2seq modeling from the command line.
//!
//! One binary covers the whole pipeline: corpus cleaning and statistics,
//! span-corruption data generation, pretraining and fine-tuning, decoding,
//! metric scoring, judge scoring, deployment benchmarks, and energy
//! estimates. Settings layer as defaults, config file, `BYT5KIT_*`
//! environment variables, then flags; the resolved configuration and seed
//! are logged to stderr on every run, and identical resolved settings give
//! identical primary output. Usage errors exit 2; everything else that
//! fails exits 1 with one JSON error object on stderr.

mod commands;
mod config;
mod error;
mod http;

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;

use clap::{Parser, Subcommand};

use crate::config::Overrides;
use crate::error::CliError;

/// Binary version plus the checkpoint format it reads and writes.
fn version_line() -> &'static str {
    static LINE: OnceLock<String> = OnceLock::new();
    LINE.get_or_init(|| {
        format!(
            "{} (checkpoint format {})",
            env!("CARGO_PKG_VERSION"),
            byt5kit::model::CHECKPOINT_FORMAT_VERSION
        )
    })
}

/// Byte-level seq2seq modeling toolkit.
#[derive(Debug, Parser)]
#[command(name = "byt5kit", version = version_line(), about)]
struct Cli {
    /// TOML config file; BYT5KIT_CONFIG when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed for every stochastic component; BYT5KIT_SEED when
    /// omitted.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model preset name; BYT5KIT_PRESET when omitted.
    #[arg(long, global = true)]
    preset: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize unicode and optionally strip punctuation.
    Clean(commands::CleanArgs),
    /// Report corpus statistics or a word-length histogram.
    Stats(commands::StatsArgs),
    /// Report tokens-per-word fertility under the byte tokenizer.
    Fertility(commands::FertilityArgs),
    /// Emit span-corruption training examples as JSONL.
    Corrupt(commands::CorruptArgs),
    /// Pretrain on span-corruption JSONL and write a checkpoint.
    Train(commands::TrainArgs),
    /// Fine-tune a checkpoint on input/target JSONL.
    Finetune(commands::FinetuneArgs),
    /// Decode a completion for a prompt from a checkpoint.
    Generate(commands::GenerateArgs),
    /// Score predictions against references with a text metric.
    Eval(commands::EvalArgs),
    /// Score responses on four dimensions with a judge model.
    Judge(commands::JudgeArgs),
    /// Measure decoding latency and throughput over batch sizes.
    Bench(commands::BenchArgs),
    /// Print the token id manifest.
    VocabManifest(commands::VocabManifestArgs),
    /// Estimate energy use and carbon emission for a run.
    Carbon(commands::CarbonArgs),
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        config: cli.config.clone(),
        seed: cli.seed,
        preset: cli.preset.clone(),
    };
    let mut config = config::load(&overrides)?;
    match &cli.command {
        Command::Clean(args) => commands::apply_clean_overrides(&mut config, args),
        Command::Corrupt(args) => commands::apply_corrupt_overrides(&mut config, args),
        Command::Train(args) => commands::apply_train_overrides(&mut config, &args.knobs),
        Command::Finetune(args) => commands::apply_train_overrides(&mut config, &args.knobs),
        Command::Generate(args) => commands::apply_decode_overrides(&mut config, &args.knobs),
        Command::Judge(args) => commands::apply_judge_overrides(&mut config, args),
        _ => {}
    }
    let model_config = config::finalize(&mut config)?;

    eprintln!("byt5kit: seed {}", config.seed);
    eprintln!(
        "byt5kit: resolved config {}",
        serde_json::to_string(&config).map_err(CliError::run)?
    );

    match &cli.command {
        Command::Clean(args) => commands::run_clean(&config, args),
        Command::Stats(args) => commands::run_stats(&config, args),
        Command::Fertility(args) => commands::run_fertility(&config, args),
        Command::Corrupt(args) => commands::run_corrupt(&config, args),
        Command::Train(args) => commands::run_train(&config, &model_config, args),
        Command::Finetune(args) => commands::run_finetune(&config, args),
        Command::Generate(args) => commands::run_generate(&config, args),
        Command::Eval(args) => commands::run_eval(args),
        Command::Judge(args) => commands::run_judge(&config, args),
        Command::Bench(args) => commands::run_bench(&config, args),
        Command::VocabManifest(args) => commands::run_vocab_manifest(args),
        Command::Carbon(args) => commands::run_carbon(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", err.to_json());
            ExitCode::FAILURE
        }
    }
}

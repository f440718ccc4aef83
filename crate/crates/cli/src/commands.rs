//! Subcommand argument declarations and implementations.
//!
//! Every command reads its settings from the resolved [`GlobalConfig`],
//! applies its own flag overrides first, and writes machine-readable
//! primary output (JSON, JSONL, or CSV) to stdout or the given path. Logs
//! and progress notes go to stderr so stdout stays parseable.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use byt5kit::bench::{
    consistency_check, records_to_csv, BenchOptions, Device, FakeClock, FakeProbe,
    FixedCostRunner, ModelRunner, MonotonicClock, ResidentPeakProbe,
};
use byt5kit::corrupt::{pack_corpus, CorruptionExample};
use byt5kit::judge::{
    aggregate_table, score_response, table_to_csv, JudgeVerdict, MockTransport, ModelEntry,
};
use byt5kit::metrics::{corpus_bleu, gleu, macro_f1};
use byt5kit::model::{
    generate, load_checkpoint, save_checkpoint, train, DecodeMode, ModelConfig, ParameterSet,
    RngState, TrainPair,
};
use byt5kit::textprep::{clean_document, corpus_stats, length_histogram};
use byt5kit::vocab;
use clap::{Args, ValueEnum};

use crate::config::{GlobalConfig, JudgeSection};
use crate::error::CliError;
use crate::http::HttpTransport;

fn read_to_string(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Reads the given file, or stdin when no path is given.
fn read_input(path: Option<&Path>) -> Result<String, CliError> {
    match path {
        Some(path) => read_to_string(path),
        None => {
            let mut text = String::new();
            std::io::stdin()
                .read_to_string(&mut text)
                .map_err(|e| CliError::Io {
                    path: PathBuf::from("<stdin>"),
                    detail: e.to_string(),
                })?;
            Ok(text)
        }
    }
}

/// Writes to the given file, or stdout when no path is given.
fn write_output(path: Option<&Path>, content: &str) -> Result<(), CliError> {
    match path {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| CliError::Io {
                    path: parent.to_path_buf(),
                    detail: e.to_string(),
                })?;
            }
            fs::write(path, content).map_err(|e| CliError::Io {
                path: path.to_path_buf(),
                detail: e.to_string(),
            })
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

/// Byte-encodes text with a trailing eos, truncating to the context window.
fn encode_for_context(text: &str, context_length: usize) -> Vec<u32> {
    let mut ids = vocab::encode(text, true);
    if ids.len() > context_length {
        ids.truncate(context_length - 1);
        ids.push(vocab::EOS_ID);
    }
    ids
}

/// Text cleaning: unicode normalization plus optional punctuation stripping.
#[derive(Debug, Args)]
pub struct CleanArgs {
    /// Input text file; stdin when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Override punctuation stripping on or off.
    #[arg(long)]
    pub strip_punctuation: Option<bool>,
    /// Override whitespace-run collapsing on or off.
    #[arg(long)]
    pub collapse_whitespace: Option<bool>,
}

pub fn apply_clean_overrides(config: &mut GlobalConfig, args: &CleanArgs) {
    if let Some(strip) = args.strip_punctuation {
        config.clean.strip_punctuation = strip;
    }
    if let Some(collapse) = args.collapse_whitespace {
        config.clean.collapse_whitespace = collapse;
    }
}

pub fn run_clean(config: &GlobalConfig, args: &CleanArgs) -> Result<(), CliError> {
    let text = read_input(args.input.as_deref())?;
    let cleaned = clean_document(&text, &config.clean);
    write_output(args.output.as_deref(), &cleaned)
}

/// Corpus statistics as JSON, or a word-length histogram as CSV.
#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Input text file, one document per line; stdin when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Emit a `length,count` histogram of document word lengths instead.
    #[arg(long)]
    pub histogram: bool,
}

pub fn run_stats(config: &GlobalConfig, args: &StatsArgs) -> Result<(), CliError> {
    let text = read_input(args.input.as_deref())?;
    if args.histogram {
        let mut csv = String::from("length,count\n");
        for (length, count) in length_histogram(text.lines()) {
            csv.push_str(&format!("{length},{count}\n"));
        }
        print!("{csv}");
        return Ok(());
    }
    let stats = corpus_stats(text.lines(), &config.segmentation);
    let report = serde_json::json!({
        "words": stats.word_count,
        "sentences": stats.sentence_count,
        "avg_words_per_sentence": stats.avg_words_per_sentence,
        "bytes": stats.byte_count,
    });
    println!("{report}");
    Ok(())
}

/// Tokens-per-word fertility of a corpus under the byte tokenizer.
#[derive(Debug, Args)]
pub struct FertilityArgs {
    /// Corpus file, one document per line; the configured corpus path when
    /// omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

pub fn run_fertility(config: &GlobalConfig, args: &FertilityArgs) -> Result<(), CliError> {
    let path = args.input.clone().unwrap_or_else(|| config.paths.corpus.clone());
    let text = read_to_string(&path)?;
    let mut tokens = 0u64;
    let mut words = 0u64;
    for line in text.lines() {
        tokens += vocab::encode(line, false).len() as u64;
        words += byt5kit::textprep::count_words(line);
    }
    let report = vocab::fertility(tokens, words).map_err(CliError::run)?;
    println!("{}", serde_json::to_string(&report).map_err(CliError::run)?);
    Ok(())
}

/// Span-corruption training data as JSONL.
#[derive(Debug, Args)]
pub struct CorruptArgs {
    /// Input text file, one cleaned document per line; stdin when omitted.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output JSONL file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Override the fraction of bytes to mask.
    #[arg(long)]
    pub density: Option<f64>,
    /// Override the mean masked-span length in bytes.
    #[arg(long)]
    pub mean_span: Option<f64>,
    /// Override the context window in ids.
    #[arg(long)]
    pub context: Option<usize>,
}

pub fn apply_corrupt_overrides(config: &mut GlobalConfig, args: &CorruptArgs) {
    if let Some(density) = args.density {
        config.corruption.noise_density = density;
    }
    if let Some(mean) = args.mean_span {
        config.corruption.mean_span_length = mean;
    }
    if let Some(context) = args.context {
        config.corruption.context_length = context;
    }
}

pub fn run_corrupt(config: &GlobalConfig, args: &CorruptArgs) -> Result<(), CliError> {
    let text = read_input(args.input.as_deref())?;
    let mut out = String::new();
    for example in pack_corpus(text.lines(), &config.corruption) {
        let example = example.map_err(CliError::run)?;
        out.push_str(&example.to_json_line());
        out.push('\n');
    }
    write_output(args.output.as_deref(), &out)
}

/// Shared optimizer flag overrides for `train` and `finetune`.
#[derive(Debug, Args)]
pub struct TrainKnobs {
    /// Override the peak learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Override the linear warmup step count.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Override the examples per forward batch.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Override the batches accumulated per optimizer step.
    #[arg(long)]
    pub accum: Option<usize>,
    /// Override the total optimizer steps.
    #[arg(long)]
    pub steps: Option<usize>,
}

pub fn apply_train_overrides(config: &mut GlobalConfig, knobs: &TrainKnobs) {
    if let Some(lr) = knobs.lr {
        config.train.learning_rate = lr;
    }
    if let Some(warmup) = knobs.warmup {
        config.train.warmup_steps = warmup;
    }
    if let Some(batch) = knobs.batch_size {
        config.train.batch_size = batch;
    }
    if let Some(accum) = knobs.accum {
        config.train.grad_accum_steps = accum;
    }
    if let Some(steps) = knobs.steps {
        config.train.total_steps = steps;
    }
}

/// Pretraining on span-corruption JSONL.
#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training data: JSONL with input_ids and target_ids per line.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write; `<checkpoints>/model.ckpt` when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Checkpoint to continue from instead of a fresh initialization.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub knobs: TrainKnobs,
}

fn load_corruption_pairs(path: &Path) -> Result<Vec<TrainPair>, CliError> {
    let text = read_to_string(path)?;
    let mut pairs = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let example = CorruptionExample::from_json_line(line).map_err(|e| CliError::Data {
            path: path.to_path_buf(),
            line: index + 1,
            detail: e.to_string(),
        })?;
        pairs.push(TrainPair::from(example));
    }
    if pairs.is_empty() {
        return Err(CliError::Data {
            path: path.to_path_buf(),
            line: 1,
            detail: "no training examples".to_string(),
        });
    }
    Ok(pairs)
}

fn run_training(
    config: &GlobalConfig,
    model_config: &ModelConfig,
    mut params: ParameterSet,
    pairs: Vec<TrainPair>,
    output: Option<&Path>,
    default_name: &str,
) -> Result<(), CliError> {
    let needed = config
        .train
        .total_steps
        .saturating_mul(config.train.batch_size)
        .saturating_mul(config.train.grad_accum_steps);
    let stream = pairs.iter().cloned().cycle().take(needed);
    let report = train(&mut params, model_config, &config.train, stream).map_err(CliError::run)?;

    let path = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| config.paths.checkpoints.join(default_name));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::Io {
            path: parent.to_path_buf(),
            detail: e.to_string(),
        })?;
    }
    save_checkpoint(&path, model_config, &params, &RngState::from_seed(config.seed))
        .map_err(CliError::run)?;

    let summary = serde_json::json!({
        "checkpoint": path,
        "steps_run": report.steps_run,
        "examples_seen": report.examples_seen,
        "loss_trace": report.loss_trace,
    });
    println!("{summary}");
    Ok(())
}

pub fn run_train(
    config: &GlobalConfig,
    model_config: &ModelConfig,
    args: &TrainArgs,
) -> Result<(), CliError> {
    let pairs = load_corruption_pairs(&args.data)?;
    let (model_config, params) = match &args.resume {
        Some(path) => {
            let checkpoint = load_checkpoint(path).map_err(CliError::run)?;
            (checkpoint.config, checkpoint.params)
        }
        None => (
            model_config.clone(),
            ParameterSet::init(model_config, config.seed),
        ),
    };
    run_training(config, &model_config, params, pairs, args.output.as_deref(), "model.ckpt")
}

/// Fine-tuning a checkpoint on seq2seq JSONL.
#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Training data: JSONL with input and target text fields per line.
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to start from.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Checkpoint to write; `<checkpoints>/finetuned.ckpt` when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub knobs: TrainKnobs,
}

fn load_seq2seq_pairs(path: &Path, context_length: usize) -> Result<Vec<TrainPair>, CliError> {
    let text = read_to_string(path)?;
    let mut pairs = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let data_error = |detail: String| CliError::Data {
            path: path.to_path_buf(),
            line: index + 1,
            detail,
        };
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| data_error(e.to_string()))?;
        let input = value["input"]
            .as_str()
            .ok_or_else(|| data_error("missing string field \"input\"".to_string()))?;
        let target = value["target"]
            .as_str()
            .ok_or_else(|| data_error("missing string field \"target\"".to_string()))?;
        pairs.push(TrainPair {
            input_ids: encode_for_context(input, context_length),
            target_ids: encode_for_context(target, context_length),
        });
    }
    if pairs.is_empty() {
        return Err(CliError::Data {
            path: path.to_path_buf(),
            line: 1,
            detail: "no training examples".to_string(),
        });
    }
    Ok(pairs)
}

pub fn run_finetune(config: &GlobalConfig, args: &FinetuneArgs) -> Result<(), CliError> {
    let checkpoint = load_checkpoint(&args.checkpoint).map_err(CliError::run)?;
    let pairs = load_seq2seq_pairs(&args.data, checkpoint.config.context_length)?;
    run_training(
        config,
        &checkpoint.config,
        checkpoint.params,
        pairs,
        args.output.as_deref(),
        "finetuned.ckpt",
    )
}

/// Decoding algorithm selection on the command line.
#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// Highest logit at every step.
    Greedy,
    /// Beam search over sequence log-probability.
    Beam,
    /// Temperature sampling over the top-k logits.
    Sample,
}

impl From<ModeArg> for DecodeMode {
    fn from(mode: ModeArg) -> DecodeMode {
        match mode {
            ModeArg::Greedy => DecodeMode::Greedy,
            ModeArg::Beam => DecodeMode::Beam,
            ModeArg::Sample => DecodeMode::Sample,
        }
    }
}

/// Shared decoding flag overrides.
#[derive(Debug, Args)]
pub struct DecodeKnobs {
    /// Override the decoding algorithm.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Override the live beam count.
    #[arg(long)]
    pub beams: Option<usize>,
    /// Override the sampling temperature.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Override the sampling candidate pool size.
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Override the generated-id cap.
    #[arg(long)]
    pub max_length: Option<usize>,
}

pub fn apply_decode_overrides(config: &mut GlobalConfig, knobs: &DecodeKnobs) {
    if let Some(mode) = knobs.mode {
        config.decode.mode = mode.into();
    }
    if let Some(beams) = knobs.beams {
        config.decode.num_beams = beams;
    }
    if let Some(temperature) = knobs.temperature {
        config.decode.temperature = temperature;
    }
    if let Some(top_k) = knobs.top_k {
        config.decode.top_k = top_k;
    }
    if let Some(max_length) = knobs.max_length {
        config.decode.max_length = max_length;
    }
}

/// Generation from a checkpoint.
#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Checkpoint to decode with.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Prompt text; wins over --input.
    #[arg(long)]
    pub prompt: Option<String>,
    /// Prompt file; stdin when neither --prompt nor --input is given.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub knobs: DecodeKnobs,
}

pub fn run_generate(config: &GlobalConfig, args: &GenerateArgs) -> Result<(), CliError> {
    let checkpoint = load_checkpoint(&args.checkpoint).map_err(CliError::run)?;
    let prompt = match &args.prompt {
        Some(prompt) => prompt.clone(),
        None => read_input(args.input.as_deref())?,
    };
    let prompt = prompt.strip_suffix('\n').unwrap_or(&prompt).to_string();
    let enc_ids = encode_for_context(&prompt, checkpoint.config.context_length);
    let ids = generate(
        &checkpoint.params,
        &checkpoint.config,
        &enc_ids,
        &config.decode,
        config.seed,
    )
    .map_err(CliError::run)?;
    let decoded = vocab::decode(&ids).map_err(CliError::run)?;
    eprintln!("byt5kit: generated {} ids, {} bytes", ids.len(), decoded.bytes.len());
    println!("{}", decoded.text);
    Ok(())
}

/// Metric selection on the command line.
#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    /// Macro-averaged F1 over classification labels.
    MacroF1,
    /// Corpus BLEU with brevity penalty and optional smoothing.
    Bleu,
    /// GLEU: min of pooled n-gram precision and recall.
    Gleu,
}

/// Metric scoring over prediction/reference JSONL.
#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Metric to compute.
    #[arg(long, value_enum)]
    pub metric: MetricArg,
    /// JSONL with hyp/ref (or pred/gold) string fields per line.
    #[arg(long)]
    pub data: PathBuf,
    /// BLEU only: apply the epsilon smoothing floor.
    #[arg(long)]
    pub smoothing: Option<bool>,
    /// GLEU only: largest n-gram order pooled.
    #[arg(long)]
    pub max_n: Option<usize>,
}

pub fn run_eval(args: &EvalArgs) -> Result<(), CliError> {
    let text = read_to_string(&args.data)?;
    let mut hyps: Vec<String> = Vec::new();
    let mut refs: Vec<String> = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let data_error = |detail: String| CliError::Data {
            path: args.data.clone(),
            line: index + 1,
            detail,
        };
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| data_error(e.to_string()))?;
        let hyp = value["hyp"].as_str().or_else(|| value["pred"].as_str());
        let reference = value["ref"].as_str().or_else(|| value["gold"].as_str());
        match (hyp, reference) {
            (Some(h), Some(r)) => {
                hyps.push(h.to_string());
                refs.push(r.to_string());
            }
            _ => {
                return Err(data_error(
                    "expected string fields hyp/ref or pred/gold".to_string(),
                ))
            }
        }
    }
    let report = match args.metric {
        MetricArg::MacroF1 => {
            let labels: Vec<String> = hyps
                .iter()
                .chain(refs.iter())
                .cloned()
                .collect::<std::collections::BTreeSet<String>>()
                .into_iter()
                .collect();
            macro_f1(&hyps, &refs, &labels).map_err(CliError::run)?
        }
        MetricArg::Bleu => {
            corpus_bleu(&hyps, &refs, args.smoothing.unwrap_or(true)).map_err(CliError::run)?
        }
        MetricArg::Gleu => gleu(&hyps, &refs, args.max_n.unwrap_or(4)).map_err(CliError::run)?,
    };
    println!("{}", serde_json::to_string(&report).map_err(CliError::run)?);
    Ok(())
}

/// Judge scoring of responses against their prompts.
#[derive(Debug, Args)]
pub struct JudgeArgs {
    /// Prompt file, one prompt per line.
    #[arg(long)]
    pub prompts: PathBuf,
    /// Response file, line-aligned with the prompts.
    #[arg(long)]
    pub responses: PathBuf,
    /// Override the judge calls per dimension per response.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Override the chat-completion endpoint URL.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Override the judge model name.
    #[arg(long)]
    pub model: Option<String>,
    /// Override the name of the credential environment variable.
    #[arg(long)]
    pub auth_env: Option<String>,
    /// Override the per-request timeout in seconds.
    #[arg(long)]
    pub timeout_s: Option<u64>,
    /// Override the concurrent request bound.
    #[arg(long)]
    pub parallelism: Option<usize>,
    /// Row label for the judged model in the CSV table.
    #[arg(long, default_value = "model")]
    pub subject: String,
    /// Parameter-count label for the CSV table.
    #[arg(long, default_value = "-")]
    pub subject_params: String,
    /// Score offline with a scripted transport cycling these
    /// comma-separated replies instead of calling the endpoint.
    #[arg(long)]
    pub mock_replies: Option<String>,
    /// CSV table output path; `<reports>/judge_table.csv` when omitted.
    #[arg(long)]
    pub csv_out: Option<PathBuf>,
}

pub fn apply_judge_overrides(config: &mut GlobalConfig, args: &JudgeArgs) {
    if let Some(runs) = args.runs {
        config.judge.runs = runs;
    }
    if let Some(endpoint) = &args.endpoint {
        config.judge.endpoint = endpoint.clone();
    }
    if let Some(model) = &args.model {
        config.judge.model = model.clone();
    }
    if let Some(auth_env) = &args.auth_env {
        config.judge.auth_env = auth_env.clone();
    }
    if let Some(timeout) = args.timeout_s {
        config.judge.timeout_s = timeout;
    }
    if let Some(parallelism) = args.parallelism {
        config.judge.parallelism = parallelism;
    }
}

fn score_pairs_http(
    section: &JudgeSection,
    token: &str,
    pairs: &[(String, String)],
) -> Result<Vec<Vec<JudgeVerdict>>, CliError> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<Vec<JudgeVerdict>, byt5kit::judge::JudgeError>>>> =
        pairs.iter().map(|_| Mutex::new(None)).collect();
    let workers = section.parallelism.min(pairs.len()).max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut transport =
                    HttpTransport::new(&section.endpoint, &section.model, token, section.timeout_s);
                loop {
                    let index = next.fetch_add(1, Ordering::Relaxed);
                    if index >= pairs.len() {
                        break;
                    }
                    let (prompt, response) = &pairs[index];
                    let outcome = score_response(&mut transport, prompt, response, section.runs);
                    *slots[index].lock().expect("no panics while scoring") = Some(outcome);
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("no panics while scoring")
                .expect("every pair was scored")
                .map_err(CliError::run)
        })
        .collect()
}

pub fn run_judge(config: &GlobalConfig, args: &JudgeArgs) -> Result<(), CliError> {
    let prompts = read_to_string(&args.prompts)?;
    let responses = read_to_string(&args.responses)?;
    let pairs: Vec<(String, String)> = prompts
        .lines()
        .zip(responses.lines())
        .map(|(p, r)| (p.to_string(), r.to_string()))
        .collect();
    let prompt_count = prompts.lines().count();
    let response_count = responses.lines().count();
    if prompt_count != response_count {
        return Err(CliError::Run {
            detail: format!(
                "{} prompts but {} responses; the files must be line-aligned",
                prompt_count, response_count
            ),
        });
    }
    if pairs.is_empty() {
        return Err(CliError::Run { detail: "no prompt/response pairs".to_string() });
    }

    let all_verdicts: Vec<Vec<JudgeVerdict>> = match &args.mock_replies {
        Some(replies) => {
            let mut transport = MockTransport::cycling(
                &config.judge.model,
                replies.split(',').map(str::trim).collect(),
            );
            pairs
                .iter()
                .map(|(prompt, response)| {
                    score_response(&mut transport, prompt, response, config.judge.runs)
                        .map_err(CliError::run)
                })
                .collect::<Result<_, _>>()?
        }
        None => {
            if config.judge.endpoint.is_empty() {
                return Err(CliError::Config {
                    field: "judge.endpoint".to_string(),
                    detail: "no endpoint configured; set it or pass --mock-replies".to_string(),
                });
            }
            let token = std::env::var(&config.judge.auth_env).map_err(|_| CliError::Config {
                field: "judge.auth_env".to_string(),
                detail: format!(
                    "environment variable {} is not set",
                    config.judge.auth_env
                ),
            })?;
            score_pairs_http(&config.judge, &token, &pairs)?
        }
    };

    let report: Vec<serde_json::Value> = all_verdicts
        .iter()
        .enumerate()
        .map(|(pair, verdicts)| serde_json::json!({ "pair": pair, "verdicts": verdicts }))
        .collect();
    println!(
        "{}",
        serde_json::to_string(&report).map_err(CliError::run)?
    );

    let entry = ModelEntry {
        model: args.subject.clone(),
        params: args.subject_params.clone(),
        verdicts: all_verdicts.into_iter().flatten().collect(),
    };
    let csv = table_to_csv(&aggregate_table(&[entry]).map_err(CliError::run)?);
    let csv_path = args
        .csv_out
        .clone()
        .unwrap_or_else(|| config.paths.reports.join("judge_table.csv"));
    write_output(Some(&csv_path), &csv)?;
    eprintln!("byt5kit: wrote judge table to {}", csv_path.display());
    Ok(())
}

/// Device label on the command line.
#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DeviceArg {
    /// Host CPU.
    Cpu,
    /// Accelerator device.
    Accelerator,
}

impl From<DeviceArg> for Device {
    fn from(device: DeviceArg) -> Device {
        match device {
            DeviceArg::Cpu => Device::Cpu,
            DeviceArg::Accelerator => Device::Accelerator,
        }
    }
}

/// Latency/throughput measurement over batch sizes.
#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Prompt file, one prompt per line.
    #[arg(long)]
    pub prompts: PathBuf,
    /// Comma-separated batch sizes, strictly ascending.
    #[arg(long, value_delimiter = ',')]
    pub batch_sizes: Vec<usize>,
    /// Device label recorded on every row.
    #[arg(long, value_enum, default_value = "cpu")]
    pub device: DeviceArg,
    /// Checkpoint to measure.
    #[arg(long, conflicts_with = "fake_cost_ms")]
    pub checkpoint: Option<PathBuf>,
    /// Measure a simulated runner with this fixed cost per prompt instead
    /// of a checkpoint, on a deterministic fake clock.
    #[arg(long)]
    pub fake_cost_ms: Option<u64>,
    /// Timed repetitions per batch size.
    #[arg(long)]
    pub reps: Option<usize>,
    /// JSON summary path; `<reports>/bench_summary.json` when omitted.
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
}

pub fn run_bench(config: &GlobalConfig, args: &BenchArgs) -> Result<(), CliError> {
    let text = read_to_string(&args.prompts)?;
    let prompts: Vec<String> = text.lines().map(str::to_string).collect();
    let options = BenchOptions {
        reps: args.reps.unwrap_or_else(|| BenchOptions::default().reps),
        device: args.device.into(),
    };

    let records = match (&args.checkpoint, args.fake_cost_ms) {
        (Some(path), None) => {
            let checkpoint = load_checkpoint(path).map_err(CliError::run)?;
            let mut runner = ModelRunner::new(
                &checkpoint.params,
                &checkpoint.config,
                config.decode.clone(),
                config.seed,
            );
            byt5kit::bench::run_bench(
                &mut runner,
                &mut MonotonicClock::new(),
                &mut ResidentPeakProbe,
                &prompts,
                &args.batch_sizes,
                &options,
            )
            .map_err(CliError::run)?
        }
        (None, Some(cost_ms)) => {
            let clock = FakeClock::new();
            let mut runner = FixedCostRunner::new(clock.clone(), Duration::from_millis(cost_ms));
            let mut timer = clock.clone();
            let mut probe = FakeProbe { value: None };
            byt5kit::bench::run_bench(
                &mut runner,
                &mut timer,
                &mut probe,
                &prompts,
                &args.batch_sizes,
                &options,
            )
            .map_err(CliError::run)?
        }
        _ => {
            return Err(CliError::Config {
                field: "bench".to_string(),
                detail: "exactly one of --checkpoint or --fake-cost-ms is required".to_string(),
            })
        }
    };

    print!("{}", records_to_csv(&records));

    let consistency = consistency_check(&records).map_err(CliError::run)?;
    let summary = serde_json::json!({
        "device": Device::from(args.device),
        "records": records,
        "consistency": consistency,
    });
    let summary_path = args
        .summary_out
        .clone()
        .unwrap_or_else(|| config.paths.reports.join("bench_summary.json"));
    write_output(Some(&summary_path), &summary.to_string())?;
    eprintln!("byt5kit: wrote bench summary to {}", summary_path.display());
    Ok(())
}

/// Vocabulary manifest output.
#[derive(Debug, Args)]
pub struct VocabManifestArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

pub fn run_vocab_manifest(args: &VocabManifestArgs) -> Result<(), CliError> {
    let manifest = vocab::manifest();
    let json = serde_json::to_string_pretty(&manifest).map_err(CliError::run)?;
    write_output(args.output.as_deref(), &format!("{json}\n"))
}

/// Energy and carbon estimation.
#[derive(Debug, Args)]
pub struct CarbonArgs {
    /// Per-device power draw in kilowatts.
    #[arg(long)]
    pub tdp_kw: f64,
    /// Number of devices.
    #[arg(long)]
    pub devices: u32,
    /// Wall-clock hours.
    #[arg(long)]
    pub hours: f64,
    /// Grid carbon intensity in kg CO2 per kWh.
    #[arg(long)]
    pub intensity: f64,
}

pub fn run_carbon(args: &CarbonArgs) -> Result<(), CliError> {
    let estimate =
        byt5kit::bench::carbon_estimate(args.tdp_kw, args.devices, args.hours, args.intensity)
            .map_err(CliError::run)?;
    eprintln!(
        "byt5kit: {} kWh, {} kg CO2",
        estimate.energy_kwh, estimate.emission_kg
    );
    println!("{}", serde_json::to_string(&estimate).map_err(CliError::run)?);
    Ok(())
}

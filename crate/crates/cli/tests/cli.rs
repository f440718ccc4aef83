//! End-to-end tests driving the compiled binary.
//!
//! Every invocation runs in a scratch directory with all `BYT5KIT_*`
//! variables cleared, so the host environment cannot leak into a test.

use std::io::Write;
use std::path::Path;
use std::process::{Command, Stdio};

use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn run_in(dir: &Path, args: &[&str], stdin: Option<&str>, envs: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_byt5kit"));
    cmd.current_dir(dir);
    for (name, _) in std::env::vars() {
        if name.starts_with("BYT5KIT_") {
            cmd.env_remove(&name);
        }
    }
    for (name, value) in envs {
        cmd.env(name, value);
    }
    cmd.args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mut child = cmd.spawn().expect("binary spawns");
    if let Some(text) = stdin {
        child
            .stdin
            .take()
            .expect("stdin is piped")
            .write_all(text.as_bytes())
            .expect("stdin accepts input");
    } else {
        drop(child.stdin.take());
    }
    let out = child.wait_with_output().expect("binary exits");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn write_file(dir: &Path, name: &str, content: &str) {
    std::fs::write(dir.join(name), content).expect("fixture writes");
}

/// The stderr JSON error object from a failed run.
fn stderr_error(run: &Run) -> serde_json::Value {
    let line = run
        .stderr
        .lines()
        .last()
        .expect("stderr carries an error line");
    let value: serde_json::Value = serde_json::from_str(line).expect("error line is JSON");
    value["error"].clone()
}

/// The resolved-config JSON logged to stderr on every successful run.
fn resolved_config(run: &Run) -> serde_json::Value {
    let line = run
        .stderr
        .lines()
        .find_map(|l| l.strip_prefix("byt5kit: resolved config "))
        .expect("stderr logs the resolved config");
    serde_json::from_str(line).expect("resolved config is JSON")
}

#[test]
fn version_prints_toolkit_and_checkpoint_format() {
    let dir = TempDir::new().unwrap();
    let run = run_in(dir.path(), &["--version"], None, &[]);
    assert_eq!(run.code, 0);
    assert!(run.stdout.contains("0.1.0"), "stdout: {}", run.stdout);
    assert!(
        run.stdout.contains("checkpoint format 1"),
        "stdout: {}",
        run.stdout
    );
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let run = run_in(dir.path(), &["frobnicate"], None, &[]);
    assert_eq!(run.code, 2);
}

#[test]
fn carbon_matches_reference_arithmetic() {
    let dir = TempDir::new().unwrap();
    let run = run_in(
        dir.path(),
        &[
            "carbon", "--tdp-kw", "0.25", "--devices", "2", "--hours", "600", "--intensity", "0.7",
        ],
        None,
        &[],
    );
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let value: serde_json::Value = serde_json::from_str(run.stdout.trim()).unwrap();
    assert_eq!(value["energy_kwh"], 300.0);
    assert_eq!(value["emission_kg"], 210.0);
}

#[test]
fn unsupported_config_version_is_rejected() {
    let dir = TempDir::new().unwrap();
    write_file(dir.path(), "cfg.toml", "version = 2\n");
    let run = run_in(
        dir.path(),
        &["--config", "cfg.toml", "vocab-manifest"],
        None,
        &[],
    );
    assert_eq!(run.code, 1);
    let error = stderr_error(&run);
    assert_eq!(error["kind"], "config");
    assert_eq!(error["field"], "version");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    write_file(dir.path(), "cfg.toml", "sede = 4\n");
    let run = run_in(
        dir.path(),
        &["--config", "cfg.toml", "vocab-manifest"],
        None,
        &[],
    );
    assert_eq!(run.code, 1);
    let error = stderr_error(&run);
    assert_eq!(error["kind"], "config");
    assert!(
        error["message"].as_str().unwrap().contains("sede"),
        "message: {}",
        error["message"]
    );
}

#[test]
fn malformed_env_seed_is_rejected() {
    let dir = TempDir::new().unwrap();
    let run = run_in(
        dir.path(),
        &["vocab-manifest"],
        None,
        &[("BYT5KIT_SEED", "abc")],
    );
    assert_eq!(run.code, 1);
    let error = stderr_error(&run);
    assert_eq!(error["kind"], "config");
    assert_eq!(error["field"], "BYT5KIT_SEED");
}

#[test]
fn unknown_preset_is_rejected_with_the_known_names() {
    let dir = TempDir::new().unwrap();
    let run = run_in(dir.path(), &["--preset", "nope", "vocab-manifest"], None, &[]);
    assert_eq!(run.code, 1);
    let error = stderr_error(&run);
    assert_eq!(error["field"], "model.preset");
    let message = error["message"].as_str().unwrap();
    assert!(message.contains("tiny"), "message: {message}");
    assert!(message.contains("banglabyt5-small"), "message: {message}");
}

#[test]
fn flags_override_env_which_overrides_the_config_file() {
    let dir = TempDir::new().unwrap();
    write_file(
        dir.path(),
        "cfg.toml",
        "seed = 1\n\n[corruption]\nnoise_density = 0.3\n",
    );
    let envs = [("BYT5KIT_CONFIG", "cfg.toml"), ("BYT5KIT_SEED", "5")];

    let flag_run = run_in(dir.path(), &["--seed", "9", "vocab-manifest"], None, &envs);
    assert_eq!(flag_run.code, 0, "stderr: {}", flag_run.stderr);
    let config = resolved_config(&flag_run);
    assert_eq!(config["seed"], 9);
    assert_eq!(config["corruption"]["noise_density"], 0.3);
    assert_eq!(config["corruption"]["seed"], 9, "global seed is stamped in");
    assert_eq!(config["train"]["seed"], 9, "global seed is stamped in");

    let env_run = run_in(dir.path(), &["vocab-manifest"], None, &envs);
    assert_eq!(resolved_config(&env_run)["seed"], 5);

    let file_run = run_in(
        dir.path(),
        &["vocab-manifest"],
        None,
        &[("BYT5KIT_CONFIG", "cfg.toml")],
    );
    assert_eq!(resolved_config(&file_run)["seed"], 1);
}

#[test]
fn clean_normalizes_stdin_to_stdout() {
    let dir = TempDir::new().unwrap();
    let run = run_in(
        dir.path(),
        &["clean"],
        Some("\u{0995}\u{09BF}\u{200C}\u{099B}\u{09C1}, ok!\n"),
        &[],
    );
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    assert_eq!(run.stdout, "\u{0995}\u{09BF}\u{099B}\u{09C1} ok\n");

    let keep = run_in(
        dir.path(),
        &["clean", "--strip-punctuation", "false"],
        Some("ok!\n"),
        &[],
    );
    assert_eq!(keep.stdout, "ok!\n");
}

#[test]
fn stats_reports_corpus_numbers_and_a_histogram() {
    let dir = TempDir::new().unwrap();
    write_file(dir.path(), "corpus.txt", "one two three.\nfour five. six seven.\n");
    let run = run_in(dir.path(), &["stats", "--input", "corpus.txt"], None, &[]);
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let value: serde_json::Value = serde_json::from_str(run.stdout.trim()).unwrap();
    assert_eq!(value["words"], 7);
    assert_eq!(value["sentences"], 3);
    assert_eq!(value["bytes"], 35);
    let expected_avg = 7.0 / 3.0;
    assert!((value["avg_words_per_sentence"].as_f64().unwrap() - expected_avg).abs() < 1e-12);

    let histogram = run_in(
        dir.path(),
        &["stats", "--input", "corpus.txt", "--histogram"],
        None,
        &[],
    );
    assert_eq!(histogram.stdout, "length,count\n3,1\n4,1\n");
}

#[test]
fn fertility_reports_the_token_word_quotient() {
    let dir = TempDir::new().unwrap();
    write_file(dir.path(), "corpus.txt", "ab cd\n");
    let run = run_in(dir.path(), &["fertility", "--input", "corpus.txt"], None, &[]);
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let value: serde_json::Value = serde_json::from_str(run.stdout.trim()).unwrap();
    assert_eq!(value["token_count"], 5);
    assert_eq!(value["word_count"], 2);
    assert_eq!(value["fertility_rounded"], 2.5);
    assert!(value.get("note").is_none() || value["note"].is_null());
}

#[test]
fn corrupt_is_deterministic_for_a_fixed_seed() {
    let dir = TempDir::new().unwrap();
    write_file(
        dir.path(),
        "corpus.txt",
        "the quick brown fox jumps over the lazy dog\npack my box with five dozen liquor jugs\n",
    );
    let args = ["corrupt", "--input", "corpus.txt", "--seed", "7", "--context", "64"];
    let first = run_in(dir.path(), &args, None, &[]);
    let second = run_in(dir.path(), &args, None, &[]);
    assert_eq!(first.code, 0, "stderr: {}", first.stderr);
    assert_eq!(first.stdout, second.stdout);
    assert!(!first.stdout.is_empty());
    for line in first.stdout.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(value["input_ids"].is_array());
        assert!(value["target_ids"].is_array());
    }

    let reseeded = run_in(
        dir.path(),
        &["corrupt", "--input", "corpus.txt", "--seed", "8", "--context", "64"],
        None,
        &[],
    );
    assert_ne!(first.stdout, reseeded.stdout, "the seed must matter");
}

#[test]
fn train_generate_and_finetune_round_trip() {
    let dir = TempDir::new().unwrap();
    write_file(
        dir.path(),
        "corpus.txt",
        "the quick brown fox jumps over the lazy dog\npack my box with five dozen liquor jugs\n",
    );
    let corrupt = run_in(
        dir.path(),
        &["corrupt", "--input", "corpus.txt", "--output", "data.jsonl", "--seed", "7", "--context", "64"],
        None,
        &[],
    );
    assert_eq!(corrupt.code, 0, "stderr: {}", corrupt.stderr);

    let train = run_in(
        dir.path(),
        &[
            "train", "--data", "data.jsonl", "--steps", "3", "--batch-size", "2", "--accum", "1",
            "--warmup", "1", "--seed", "7",
        ],
        None,
        &[],
    );
    assert_eq!(train.code, 0, "stderr: {}", train.stderr);
    let summary: serde_json::Value = serde_json::from_str(train.stdout.trim()).unwrap();
    assert_eq!(summary["steps_run"], 3);
    assert_eq!(summary["examples_seen"], 6);
    assert_eq!(summary["loss_trace"].as_array().unwrap().len(), 3);
    let checkpoint = summary["checkpoint"].as_str().unwrap();
    assert!(dir.path().join(checkpoint).is_file());

    let greedy = run_in(
        dir.path(),
        &[
            "generate", "--checkpoint", checkpoint, "--prompt", "the quick", "--mode", "greedy",
            "--max-length", "8",
        ],
        None,
        &[],
    );
    assert_eq!(greedy.code, 0, "stderr: {}", greedy.stderr);
    let beam_one = run_in(
        dir.path(),
        &[
            "generate", "--checkpoint", checkpoint, "--prompt", "the quick", "--mode", "beam",
            "--beams", "1", "--max-length", "8",
        ],
        None,
        &[],
    );
    assert_eq!(greedy.stdout, beam_one.stdout, "beam width 1 must match greedy");

    write_file(
        dir.path(),
        "pairs.jsonl",
        "{\"input\":\"hello\",\"target\":\"world\"}\n{\"input\":\"foo\",\"target\":\"bar\"}\n",
    );
    let finetune = run_in(
        dir.path(),
        &[
            "finetune", "--data", "pairs.jsonl", "--checkpoint", checkpoint, "--steps", "2",
            "--batch-size", "2", "--accum", "1", "--warmup", "1",
        ],
        None,
        &[],
    );
    assert_eq!(finetune.code, 0, "stderr: {}", finetune.stderr);
    let tuned: serde_json::Value = serde_json::from_str(finetune.stdout.trim()).unwrap();
    assert_eq!(tuned["steps_run"], 2);
    assert!(dir.path().join(tuned["checkpoint"].as_str().unwrap()).is_file());
}

#[test]
fn malformed_training_data_names_the_line() {
    let dir = TempDir::new().unwrap();
    write_file(
        dir.path(),
        "data.jsonl",
        "{\"input_ids\":[5,1],\"target_ids\":[6,1]}\nnot json\n",
    );
    let run = run_in(dir.path(), &["train", "--data", "data.jsonl"], None, &[]);
    assert_eq!(run.code, 1);
    let error = stderr_error(&run);
    assert_eq!(error["kind"], "data");
    assert!(
        error["message"].as_str().unwrap().contains("data.jsonl:2"),
        "message: {}",
        error["message"]
    );
}

#[test]
fn eval_matches_the_metric_goldens() {
    let dir = TempDir::new().unwrap();
    write_file(dir.path(), "bleu.jsonl", "{\"hyp\":\"the cat\",\"ref\":\"the cat sat\"}\n");
    let bleu = run_in(dir.path(), &["eval", "--metric", "bleu", "--data", "bleu.jsonl"], None, &[]);
    assert_eq!(bleu.code, 0, "stderr: {}", bleu.stderr);
    let value: serde_json::Value = serde_json::from_str(bleu.stdout.trim()).unwrap();
    let expected = 100.0 * (-0.5f64).exp();
    assert!((value["score"].as_f64().unwrap() - expected).abs() < 1e-9);

    let unsmoothed = run_in(
        dir.path(),
        &["eval", "--metric", "bleu", "--data", "bleu.jsonl", "--smoothing", "false"],
        None,
        &[],
    );
    let value: serde_json::Value = serde_json::from_str(unsmoothed.stdout.trim()).unwrap();
    assert_eq!(value["score"].as_f64().unwrap(), 0.0);

    write_file(
        dir.path(),
        "f1.jsonl",
        concat!(
            "{\"pred\":\"A\",\"gold\":\"A\"}\n",
            "{\"pred\":\"B\",\"gold\":\"A\"}\n",
            "{\"pred\":\"B\",\"gold\":\"B\"}\n",
            "{\"pred\":\"B\",\"gold\":\"B\"}\n",
        ),
    );
    let f1 = run_in(dir.path(), &["eval", "--metric", "macro-f1", "--data", "f1.jsonl"], None, &[]);
    assert_eq!(f1.code, 0, "stderr: {}", f1.stderr);
    let value: serde_json::Value = serde_json::from_str(f1.stdout.trim()).unwrap();
    assert!((value["score"].as_f64().unwrap() - 11.0 / 15.0).abs() < 1e-12);

    write_file(dir.path(), "gleu.jsonl", "{\"hyp\":\"a b\",\"ref\":\"a c\"}\n");
    let gleu = run_in(dir.path(), &["eval", "--metric", "gleu", "--data", "gleu.jsonl"], None, &[]);
    let value: serde_json::Value = serde_json::from_str(gleu.stdout.trim()).unwrap();
    assert!((value["score"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-12);
}

#[test]
fn judge_scores_with_a_scripted_transport_and_writes_the_table() {
    let dir = TempDir::new().unwrap();
    write_file(dir.path(), "prompts.txt", "Write a poem.\nDescribe rain.\n");
    write_file(dir.path(), "responses.txt", "A poem.\nIt rains.\n");
    let run = run_in(
        dir.path(),
        &[
            "judge", "--prompts", "prompts.txt", "--responses", "responses.txt",
            "--mock-replies", "8,9", "--runs", "5", "--csv-out", "table.csv",
        ],
        None,
        &[],
    );
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let report: serde_json::Value = serde_json::from_str(run.stdout.trim()).unwrap();
    let pairs = report.as_array().unwrap();
    assert_eq!(pairs.len(), 2);
    let first = &pairs[0]["verdicts"][0];
    assert_eq!(first["dimension"], "Fluency");
    assert_eq!(first["scores"], serde_json::json!([8, 9, 8, 9, 8]));
    assert_eq!(first["mean"], 8.4);
    assert_eq!(pairs[0]["verdicts"].as_array().unwrap().len(), 4);

    let csv = std::fs::read_to_string(dir.path().join("table.csv")).unwrap();
    assert_eq!(
        csv,
        "model,params,fluency_mean,fluency_std,coherence_mean,coherence_std,\
         relevance_mean,relevance_std,creativity_mean,creativity_std\n\
         model,-,8.40,0.52,8.60,0.52,8.40,0.52,8.60,0.52\n"
    );
}

#[test]
fn judge_without_endpoint_or_script_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    write_file(dir.path(), "prompts.txt", "One prompt.\n");
    write_file(dir.path(), "responses.txt", "One response.\n");
    let run = run_in(
        dir.path(),
        &["judge", "--prompts", "prompts.txt", "--responses", "responses.txt"],
        None,
        &[],
    );
    assert_eq!(run.code, 1);
    let error = stderr_error(&run);
    assert_eq!(error["kind"], "config");
    assert_eq!(error["field"], "judge.endpoint");
}

#[test]
fn judge_rejects_misaligned_prompt_and_response_files() {
    let dir = TempDir::new().unwrap();
    write_file(dir.path(), "prompts.txt", "One.\nTwo.\n");
    write_file(dir.path(), "responses.txt", "Only one.\n");
    let run = run_in(
        dir.path(),
        &[
            "judge", "--prompts", "prompts.txt", "--responses", "responses.txt",
            "--mock-replies", "8",
        ],
        None,
        &[],
    );
    assert_eq!(run.code, 1);
    assert_eq!(stderr_error(&run)["kind"], "run");
}

#[test]
fn bench_with_a_fixed_cost_runner_reports_exact_numbers() {
    let dir = TempDir::new().unwrap();
    write_file(dir.path(), "prompts.txt", "one\ntwo\n");
    let run = run_in(
        dir.path(),
        &[
            "bench", "--prompts", "prompts.txt", "--batch-sizes", "1,2", "--fake-cost-ms", "10",
            "--summary-out", "summary.json",
        ],
        None,
        &[],
    );
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    assert_eq!(
        run.stdout,
        "batch,latency_s,throughput,peak_mem_mb\n1,0.010000,100.0000,\n2,0.010000,100.0000,\n"
    );
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["device"], "cpu");
    assert_eq!(summary["consistency"]["records_checked"], 2);
    assert_eq!(summary["consistency"]["flags"], serde_json::json!([]));
    assert_eq!(summary["records"][0]["prompt_count"], 2);
}

#[test]
fn bench_requires_exactly_one_cost_source() {
    let dir = TempDir::new().unwrap();
    write_file(dir.path(), "prompts.txt", "one\n");
    let neither = run_in(
        dir.path(),
        &["bench", "--prompts", "prompts.txt", "--batch-sizes", "1"],
        None,
        &[],
    );
    assert_eq!(neither.code, 1);
    assert_eq!(stderr_error(&neither)["kind"], "config");

    let both = run_in(
        dir.path(),
        &[
            "bench", "--prompts", "prompts.txt", "--batch-sizes", "1", "--checkpoint", "x.ckpt",
            "--fake-cost-ms", "10",
        ],
        None,
        &[],
    );
    assert_eq!(both.code, 2, "clap rejects conflicting flags");
}

#[test]
fn vocab_manifest_lists_every_id() {
    let dir = TempDir::new().unwrap();
    let run = run_in(dir.path(), &["vocab-manifest"], None, &[]);
    assert_eq!(run.code, 0, "stderr: {}", run.stderr);
    let manifest: serde_json::Value = serde_json::from_str(&run.stdout).unwrap();
    let entries = manifest.as_array().unwrap();
    assert_eq!(entries.len(), 384);
    assert_eq!(entries[0]["role"], "special");
    assert_eq!(entries[0]["detail"], "pad");
    assert_eq!(entries[383]["role"], "sentinel");
    let sentinels = entries.iter().filter(|e| e["role"] == "sentinel").count();
    assert_eq!(sentinels, 100);
}

#[test]
fn every_run_logs_its_seed_to_stderr() {
    let dir = TempDir::new().unwrap();
    let run = run_in(dir.path(), &["--seed", "42", "vocab-manifest"], None, &[]);
    assert_eq!(run.code, 0);
    assert!(
        run.stderr.lines().any(|l| l == "byt5kit: seed 42"),
        "stderr: {}",
        run.stderr
    );
}

//! Scoring generated text with an external judge model.
//!
//! Four fixed dimensions are each scored on a 1 to 10 scale over several
//! independent runs. The judge is reached through the [`JudgeTransport`]
//! trait, so tests run against a scripted mock and the HTTP binding lives
//! with the caller. Replies are parsed strictly: the first integer in the
//! reply must be in range, an out-of-range value is a parse failure rather
//! than a clamp, and a run fails after [`RETRY_LIMIT`] unparsable replies.
//! Aggregation works on integer sums, so results never depend on the order
//! verdicts are folded in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Transport attempts per run before the run counts as failed.
pub const RETRY_LIMIT: usize = 3;

/// Default number of scoring runs per dimension.
pub const DEFAULT_RUNS: usize = 5;

/// One scoring dimension and the wording of what it measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct JudgeDimension {
    /// Dimension name.
    pub name: &'static str,
    /// What the score should reflect, embedded in the judge prompt.
    pub rubric: &'static str,
}

/// The four dimensions, in scoring and table order.
pub const DIMENSIONS: [JudgeDimension; 4] = [
    JudgeDimension {
        name: "Fluency",
        rubric: "grammatical correctness and naturalness of the generated language",
    },
    JudgeDimension {
        name: "Coherence",
        rubric: "consistency and structure of multi-turn responses",
    },
    JudgeDimension {
        name: "Relevance",
        rubric: "contextual alignment with the original prompt",
    },
    JudgeDimension {
        name: "Creativity",
        rubric: "novelty and expressiveness of the generated response",
    },
];

/// Why judging failed.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum JudgeError {
    /// A required text argument was empty.
    #[error("empty {field}")]
    EmptyArgument {
        /// Which argument.
        field: &'static str,
    },
    /// An argument was out of range.
    #[error("invalid argument {field}: {detail}")]
    InvalidArg {
        /// Which argument.
        field: &'static str,
        /// What was wrong.
        detail: String,
    },
    /// The transport could not complete a request.
    #[error("judge transport failure: {detail}")]
    Transport {
        /// What went wrong.
        detail: String,
    },
    /// More than half of the runs produced no parsable score.
    #[error("{failed} of {runs} runs failed to produce a score for {dimension}")]
    TooManyFailures {
        /// Dimension being scored.
        dimension: String,
        /// Runs that exhausted their retries.
        failed: usize,
        /// Runs requested.
        runs: usize,
    },
    /// Table aggregation was given nothing to aggregate.
    #[error("no verdicts to aggregate")]
    EmptyVerdictSet,
    /// A model is missing verdicts for one of the dimensions.
    #[error("model {model} has no verdicts for {dimension}")]
    MissingDimension {
        /// Model whose row was being built.
        model: String,
        /// Dimension with no verdicts.
        dimension: String,
    },
}

/// Connection to a judge model: send a prompt, get the raw reply text.
pub trait JudgeTransport {
    /// Identifier of the judge model behind this transport.
    fn model_id(&self) -> &str;
    /// Sends one prompt and returns the judge's raw reply.
    fn complete(&mut self, prompt: &str) -> Result<String, JudgeError>;
}

/// Scripted transport for tests and offline runs.
#[derive(Debug, Clone)]
pub struct MockTransport {
    model: String,
    replies: Vec<String>,
    cursor: usize,
    cycle: bool,
    /// Total `complete` calls made, for assertions on retry behavior.
    pub calls: usize,
}

impl MockTransport {
    /// Replays `replies` in a loop, never running out.
    pub fn cycling<S: Into<String>>(model: &str, replies: Vec<S>) -> Self {
        MockTransport {
            model: model.to_string(),
            replies: replies.into_iter().map(Into::into).collect(),
            cursor: 0,
            cycle: true,
            calls: 0,
        }
    }

    /// Replays `replies` once; further calls fail as transport errors.
    pub fn sequence<S: Into<String>>(model: &str, replies: Vec<S>) -> Self {
        MockTransport {
            cycle: false,
            ..MockTransport::cycling(model, replies)
        }
    }
}

impl JudgeTransport for MockTransport {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&mut self, _prompt: &str) -> Result<String, JudgeError> {
        self.calls += 1;
        if self.replies.is_empty() || (!self.cycle && self.cursor >= self.replies.len()) {
            return Err(JudgeError::Transport {
                detail: "mock transport script exhausted".into(),
            });
        }
        let reply = self.replies[self.cursor % self.replies.len()].clone();
        self.cursor += 1;
        Ok(reply)
    }
}

/// Scores and bookkeeping for one dimension of one response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    /// Dimension name.
    pub dimension: String,
    /// Parsed scores from the successful runs, each 1 to 10.
    pub scores: Vec<u8>,
    /// Mean of `scores`.
    pub mean: f64,
    /// Sample standard deviation of `scores` (n-1 denominator, 0 when n < 2).
    pub std: f64,
    /// Runs requested.
    pub runs: usize,
    /// Runs that exhausted their retries without a parsable score.
    pub failed_runs: usize,
    /// Judge model the scores came from.
    pub judge_model: String,
    /// Every raw reply received, in request order, including retried ones.
    pub transcripts: Vec<String>,
}

/// Builds the deterministic judging prompt for one dimension.
pub fn build_judge_prompt(
    original_prompt: &str,
    model_response: &str,
    dimension: &JudgeDimension,
) -> Result<String, JudgeError> {
    if original_prompt.is_empty() {
        return Err(JudgeError::EmptyArgument { field: "original_prompt" });
    }
    if model_response.is_empty() {
        return Err(JudgeError::EmptyArgument { field: "model_response" });
    }
    Ok(format!(
        "You are judging the {name} of a model response. {name} means the {rubric}.\n\n\
         Original prompt:\n{prompt}\n\n\
         Model response:\n{response}\n\n\
         Rate the {name} of the model response on a scale of 1 to 10. \
         Reply with a single integer from 1 to 10 and nothing else.",
        name = dimension.name,
        rubric = dimension.rubric,
        prompt = original_prompt,
        response = model_response,
    ))
}

/// Extracts the score from a judge reply: the first run of ASCII digits,
/// accepted only if it parses to an integer in 1 to 10. Out-of-range
/// integers are failures, never clamped, so a reply of "11" yields nothing.
pub fn parse_score(reply: &str) -> Option<u8> {
    let bytes = reply.as_bytes();
    let start = bytes.iter().position(|b| b.is_ascii_digit())?;
    let end = bytes[start..]
        .iter()
        .position(|b| !b.is_ascii_digit())
        .map_or(bytes.len(), |offset| start + offset);
    let value: u64 = reply[start..end].parse().ok()?;
    (1..=10).contains(&value).then_some(value as u8)
}

/// Mean and sample standard deviation of integer scores, computed from
/// integer sums so the result is independent of summation order.
pub fn mean_and_std(scores: &[u8]) -> (f64, f64) {
    let n = scores.len() as u64;
    if n == 0 {
        return (0.0, 0.0);
    }
    let sum: u64 = scores.iter().map(|&s| s as u64).sum();
    let sum_sq: u64 = scores.iter().map(|&s| (s as u64) * (s as u64)).sum();
    let mean = sum as f64 / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let variance = (n * sum_sq - sum * sum) as f64 / (n * (n - 1)) as f64;
    (mean, variance.sqrt())
}

/// Scores one response across all four dimensions.
///
/// Each dimension gets `runs` independent judge calls; a call whose reply
/// does not parse is retried up to [`RETRY_LIMIT`] total attempts before the
/// run counts as failed. A dimension where more than half of the runs fail
/// is an error. Transport failures abort immediately.
pub fn score_response<T: JudgeTransport>(
    transport: &mut T,
    original_prompt: &str,
    response: &str,
    runs: usize,
) -> Result<Vec<JudgeVerdict>, JudgeError> {
    if runs == 0 {
        return Err(JudgeError::InvalidArg {
            field: "runs",
            detail: "must be at least 1".into(),
        });
    }
    let mut verdicts = Vec::with_capacity(DIMENSIONS.len());
    for dimension in &DIMENSIONS {
        let prompt = build_judge_prompt(original_prompt, response, dimension)?;
        let mut scores = Vec::with_capacity(runs);
        let mut transcripts = Vec::new();
        let mut failed_runs = 0usize;
        for _ in 0..runs {
            let mut parsed = None;
            for _ in 0..RETRY_LIMIT {
                let reply = transport.complete(&prompt)?;
                parsed = parse_score(&reply);
                transcripts.push(reply);
                if parsed.is_some() {
                    break;
                }
            }
            match parsed {
                Some(score) => scores.push(score),
                None => failed_runs += 1,
            }
        }
        if failed_runs * 2 > runs {
            return Err(JudgeError::TooManyFailures {
                dimension: dimension.name.to_string(),
                failed: failed_runs,
                runs,
            });
        }
        let (mean, std) = mean_and_std(&scores);
        verdicts.push(JudgeVerdict {
            dimension: dimension.name.to_string(),
            scores,
            mean,
            std,
            runs,
            failed_runs,
            judge_model: transport.model_id().to_string(),
            transcripts,
        });
    }
    Ok(verdicts)
}

/// One model's verdicts over a prompt set, ready for tabulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelEntry {
    /// Model name for the table row.
    pub model: String,
    /// Parameter-count label for the table row.
    pub params: String,
    /// All verdicts for this model, any number per dimension.
    pub verdicts: Vec<JudgeVerdict>,
}

/// Aggregated mean and deviation for one dimension of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    /// Dimension name.
    pub dimension: String,
    /// Grand mean over every score pooled across prompts.
    pub mean: f64,
    /// Sample standard deviation of the pooled scores.
    pub std: f64,
}

/// One row of the aggregate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    /// Model name.
    pub model: String,
    /// Parameter-count label.
    pub params: String,
    /// One cell per dimension, in [`DIMENSIONS`] order.
    pub cells: Vec<TableCell>,
}

/// Builds one table row per model: per dimension, all scores from all of
/// the model's verdicts are pooled and summarized as mean and sample std.
/// Pooling sums integers, so verdict order never changes the result.
pub fn aggregate_table(entries: &[ModelEntry]) -> Result<Vec<TableRow>, JudgeError> {
    if entries.is_empty() {
        return Err(JudgeError::EmptyVerdictSet);
    }
    let mut rows = Vec::with_capacity(entries.len());
    for entry in entries {
        let mut cells = Vec::with_capacity(DIMENSIONS.len());
        for dimension in &DIMENSIONS {
            let pooled: Vec<u8> = entry
                .verdicts
                .iter()
                .filter(|v| v.dimension == dimension.name)
                .flat_map(|v| v.scores.iter().copied())
                .collect();
            if pooled.is_empty() {
                return Err(JudgeError::MissingDimension {
                    model: entry.model.clone(),
                    dimension: dimension.name.to_string(),
                });
            }
            let (mean, std) = mean_and_std(&pooled);
            cells.push(TableCell {
                dimension: dimension.name.to_string(),
                mean,
                std,
            });
        }
        rows.push(TableRow {
            model: entry.model.clone(),
            params: entry.params.clone(),
            cells,
        });
    }
    Ok(rows)
}

/// Renders table rows as CSV with two-decimal mean and std columns.
pub fn table_to_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("model,params");
    for dimension in &DIMENSIONS {
        let lower = dimension.name.to_lowercase();
        out.push_str(&format!(",{lower}_mean,{lower}_std"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.model);
        out.push(',');
        out.push_str(&row.params);
        for cell in &row.cells {
            out.push_str(&format!(",{:.2},{:.2}", cell.mean, cell.std));
        }
        out.push('\n');
    }
    out
}

//! Decoding: greedy, beam search, and temperature sampling.
//!
//! The algorithms are written against the [`StepScorer`] trait, which maps a
//! generated prefix to next-token logits. The trained model implements it by
//! running the decoder over `[pad] ++ prefix` against a cached encoder
//! output; tests implement it with tiny table-driven scorers whose optimal
//! beams can be enumerated exhaustively.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::forward::{decoder_logits, encode_input, EncodedInput};
use super::params::ParameterSet;
use super::ModelError;
use crate::vocab;

/// Which decoding algorithm to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    /// Argmax at every step; ties break toward the lowest id.
    Greedy,
    /// Beam search over sequence log-probability, no length penalty.
    Beam,
    /// Temperature sampling restricted to the top-k logits.
    Sample,
}

/// Decoding options.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    /// Algorithm to use.
    pub mode: DecodeMode,
    /// Beams kept live in beam search; ignored elsewhere.
    pub num_beams: usize,
    /// Softmax temperature for sampling; ignored elsewhere.
    pub temperature: f64,
    /// Candidate pool size for sampling; ignored elsewhere.
    pub top_k: usize,
    /// Hard cap on generated ids, further limited by the model context.
    pub max_length: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            mode: DecodeMode::Beam,
            num_beams: 10,
            temperature: 0.7,
            top_k: 70,
            max_length: 512,
        }
    }
}

impl DecodeConfig {
    /// Rejects option combinations the decoders cannot run.
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field: &'static str, detail: String| {
            Err(ModelError::InvalidConfig { field, detail })
        };
        if self.num_beams == 0 {
            return bad("num_beams", "must be at least 1".into());
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return bad("temperature", format!("must be positive, got {}", self.temperature));
        }
        if self.top_k == 0 {
            return bad("top_k", "must be at least 1".into());
        }
        if self.max_length == 0 {
            return bad("max_length", "must be at least 1".into());
        }
        Ok(())
    }
}

/// Next-token logits for a generated prefix.
///
/// The prefix excludes the decoder start token; implementations prepend
/// their own. An empty prefix asks for the first token's logits.
pub trait StepScorer {
    /// Number of ids the logit vector covers.
    fn vocab_size(&self) -> usize;
    /// Logits over the vocabulary for the position following `prefix`.
    fn step_logits(&mut self, prefix: &[u32]) -> Vec<f64>;
}

struct ModelScorer<'a> {
    params: &'a ParameterSet,
    config: &'a ModelConfig,
    encoded: EncodedInput,
}

impl StepScorer for ModelScorer<'_> {
    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn step_logits(&mut self, prefix: &[u32]) -> Vec<f64> {
        let mut dec_ids = Vec::with_capacity(prefix.len() + 1);
        dec_ids.push(vocab::PAD_ID);
        dec_ids.extend_from_slice(prefix);
        let logits = decoder_logits(self.params, self.config, &self.encoded, &dec_ids)
            .expect("decoder ids were validated before decoding started");
        logits.row(logits.nrows() - 1).to_vec()
    }
}

fn argmax(logits: &[f64]) -> u32 {
    let mut best = 0usize;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best as u32
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&v| v - max - log_sum).collect()
}

/// Greedy decoding: at each step take the highest logit, lowest id on ties,
/// until `eos` or `max_steps` ids have been produced.
pub fn decode_greedy<S: StepScorer>(scorer: &mut S, eos: u32, max_steps: usize) -> Vec<u32> {
    let mut out = Vec::new();
    while out.len() < max_steps {
        let next = argmax(&scorer.step_logits(&out));
        out.push(next);
        if next == eos {
            break;
        }
    }
    out
}

/// Beam search over sequence log-probability.
///
/// Every live beam is expanded over the full vocabulary each step;
/// candidates are ranked by total log-probability with stable ordering, so
/// among equal scores the earlier (lower-id) expansion wins. Beams that
/// emit `eos` retire to the finished pool. The best finished beam is
/// returned, or the best still-live beam if nothing finished within
/// `max_steps`.
pub fn decode_beam<S: StepScorer>(
    scorer: &mut S,
    eos: u32,
    num_beams: usize,
    max_steps: usize,
) -> Vec<u32> {
    let mut live: Vec<(Vec<u32>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<(Vec<u32>, f64)> = Vec::new();

    for _ in 0..max_steps {
        if live.is_empty() {
            break;
        }
        let mut candidates: Vec<(Vec<u32>, f64)> = Vec::new();
        for (prefix, score) in &live {
            let log_probs = log_softmax(&scorer.step_logits(prefix));
            for (id, lp) in log_probs.iter().enumerate() {
                let mut extended = prefix.clone();
                extended.push(id as u32);
                candidates.push((extended, score + lp));
            }
        }
        candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        candidates.truncate(num_beams);
        live = Vec::new();
        for (sequence, score) in candidates {
            if *sequence.last().unwrap() == eos {
                finished.push((sequence, score));
            } else {
                live.push((sequence, score));
            }
        }
    }

    let pool = if finished.is_empty() { &live } else { &finished };
    pool.iter()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(sequence, _)| sequence.clone())
        .unwrap_or_default()
}

/// Temperature sampling over the top-k logits.
///
/// Logits are divided by `temperature`, the `k` largest are kept (ties
/// toward the lowest id), and the next id is drawn from their softmax.
pub fn decode_sample<S: StepScorer, R: Rng>(
    scorer: &mut S,
    eos: u32,
    temperature: f64,
    top_k: usize,
    max_steps: usize,
    rng: &mut R,
) -> Vec<u32> {
    let mut out = Vec::new();
    while out.len() < max_steps {
        let logits = scorer.step_logits(&out);
        let mut scaled: Vec<(usize, f64)> = logits
            .iter()
            .enumerate()
            .map(|(i, &v)| (i, v / temperature))
            .collect();
        scaled.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        scaled.truncate(top_k.min(scaled.len()));

        let max = scaled[0].1;
        let weights: Vec<f64> = scaled.iter().map(|&(_, v)| (v - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let draw = rng.gen_range(0.0..1.0) * total;
        let mut cumulative = 0.0;
        let mut chosen = scaled[scaled.len() - 1].0;
        for (&(id, _), &w) in scaled.iter().zip(weights.iter()) {
            cumulative += w;
            if draw < cumulative {
                chosen = id;
                break;
            }
        }
        out.push(chosen as u32);
        if chosen as u32 == eos {
            break;
        }
    }
    out
}

/// Generates ids for an encoder input with the configured algorithm.
///
/// The result includes the eos id when one was emitted. Generation length
/// is capped by both `decode.max_length` and the model context (the decoder
/// also holds the start token, hence `context_length - 1`).
pub fn generate(
    params: &ParameterSet,
    config: &ModelConfig,
    enc_ids: &[u32],
    decode: &DecodeConfig,
    seed: u64,
) -> Result<Vec<u32>, ModelError> {
    decode.validate()?;
    let encoded = encode_input(params, config, enc_ids)?;
    let mut scorer = ModelScorer { params, config, encoded };
    let max_steps = decode.max_length.min(config.context_length - 1);
    let eos = vocab::EOS_ID;
    Ok(match decode.mode {
        DecodeMode::Greedy => decode_greedy(&mut scorer, eos, max_steps),
        DecodeMode::Beam => decode_beam(&mut scorer, eos, decode.num_beams, max_steps),
        DecodeMode::Sample => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            decode_sample(
                &mut scorer,
                eos,
                decode.temperature,
                decode.top_k,
                max_steps,
                &mut rng,
            )
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    /// Fixed logits per step regardless of prefix.
    struct TableScorer {
        steps: Vec<Vec<f64>>,
        cursor: usize,
    }

    impl StepScorer for TableScorer {
        fn vocab_size(&self) -> usize {
            self.steps[0].len()
        }
        fn step_logits(&mut self, _prefix: &[u32]) -> Vec<f64> {
            let row = self.steps[self.cursor.min(self.steps.len() - 1)].clone();
            self.cursor += 1;
            row
        }
    }

    /// Logits depend on the prefix, so beams diverge.
    struct BranchScorer;

    impl StepScorer for BranchScorer {
        fn vocab_size(&self) -> usize {
            4
        }
        fn step_logits(&mut self, prefix: &[u32]) -> Vec<f64> {
            match prefix {
                [] => vec![0.0, 0.1, 1.0, 0.9],
                [2] => vec![0.0, 0.2, 0.1, 0.05],
                [3] => vec![0.0, 2.0, 0.1, 0.05],
                _ => vec![5.0, 0.0, 0.0, 0.0],
            }
        }
    }

    #[test]
    fn greedy_stops_at_eos_and_breaks_ties_low() {
        let mut scorer = TableScorer {
            steps: vec![
                vec![0.0, 0.0, 3.0, 3.0],
                vec![9.0, 9.0, 0.0, 0.0],
                vec![0.0, 9.0, 0.0, 0.0],
            ],
            cursor: 0,
        };
        assert_eq!(decode_greedy(&mut scorer, 1, 10), vec![2, 0, 1]);
    }

    #[test]
    fn greedy_respects_cap_without_eos() {
        let mut scorer = TableScorer {
            steps: vec![vec![0.0, 0.0, 1.0, 0.0]],
            cursor: 0,
        };
        assert_eq!(decode_greedy(&mut scorer, 1, 3), vec![2, 2, 2]);
    }

    #[test]
    fn beam_one_is_greedy() {
        let make = || TableScorer {
            steps: vec![
                vec![0.5, 0.0, 0.4, 0.3],
                vec![0.0, 0.1, 0.9, 0.0],
                vec![0.0, 5.0, 0.0, 0.0],
            ],
            cursor: 0,
        };
        let greedy = decode_greedy(&mut make(), 1, 8);
        let beam = decode_beam(&mut make(), 1, 1, 8);
        assert_eq!(greedy, beam);
    }

    #[test]
    fn beam_finds_delayed_reward_greedy_misses() {
        // Greedy takes id 2 (logit 1.0) and lands in a flat continuation;
        // the beam keeps id 3 (0.9) whose continuation is strongly peaked.
        let greedy = decode_greedy(&mut BranchScorer, 0, 2);
        assert_eq!(greedy[0], 2);
        let beam = decode_beam(&mut BranchScorer, 0, 2, 2);
        assert_eq!(beam[0], 3, "beam should back off to the better branch");
    }

    #[test]
    fn beam_returns_best_finished_not_first_finished() {
        // eos = 0. Both branches can finish; the one through id 3 scores higher.
        let beam = decode_beam(&mut BranchScorer, 0, 4, 3);
        assert_eq!(*beam.last().unwrap(), 0);
        assert_eq!(beam[0], 3);
    }

    #[test]
    fn sampling_is_deterministic_for_a_seed_and_respects_top_one() {
        let make = || TableScorer {
            steps: vec![
                vec![0.0, 0.0, 2.0, 1.0],
                vec![3.0, 2.5, 0.0, 0.0],
                vec![0.0, 9.0, 0.0, 0.0],
            ],
            cursor: 0,
        };
        let mut rng_a = ChaCha8Rng::seed_from_u64(11);
        let a = decode_sample(&mut make(), 1, 0.7, 4, 8, &mut rng_a);
        let mut rng_b = ChaCha8Rng::seed_from_u64(11);
        let b = decode_sample(&mut make(), 1, 0.7, 4, 8, &mut rng_b);
        assert_eq!(a, b);

        // top_k = 1 collapses sampling onto greedy regardless of the rng.
        let mut rng = ChaCha8Rng::seed_from_u64(999);
        let forced = decode_sample(&mut make(), 1, 0.7, 1, 8, &mut rng);
        assert_eq!(forced, decode_greedy(&mut make(), 1, 8));
    }

    #[test]
    fn generate_runs_all_modes_on_a_real_model() {
        let config = ModelConfig::tiny();
        let params = ParameterSet::init(&config, 2);
        let enc = vec![100, 101, 102, vocab::EOS_ID];
        for mode in [DecodeMode::Greedy, DecodeMode::Beam, DecodeMode::Sample] {
            let decode = DecodeConfig {
                mode,
                num_beams: 2,
                max_length: 5,
                ..DecodeConfig::default()
            };
            let ids = generate(&params, &config, &enc, &decode, 3).unwrap();
            assert!(!ids.is_empty());
            assert!(ids.len() <= 5);
            assert!(ids.iter().all(|&id| (id as usize) < config.vocab_size));
        }
    }

    #[test]
    fn invalid_decode_configs_are_rejected() {
        let bad = DecodeConfig { num_beams: 0, ..DecodeConfig::default() };
        assert!(bad.validate().is_err());
        let bad = DecodeConfig { temperature: 0.0, ..DecodeConfig::default() };
        assert!(bad.validate().is_err());
        let bad = DecodeConfig { top_k: 0, ..DecodeConfig::default() };
        assert!(bad.validate().is_err());
        let bad = DecodeConfig { max_length: 0, ..DecodeConfig::default() };
        assert!(bad.validate().is_err());
    }
}

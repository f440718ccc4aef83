//! Seeded training loop: Adam, linear warmup into cosine decay, and
//! gradient accumulation.
//!
//! The loop is deterministic for a fixed seed and input order. Gradients are
//! computed per example and summed in example order, then divided once by
//! the number of examples in the optimizer step, so any `batch_size` /
//! `grad_accum_steps` split of the same example stream produces bitwise
//! identical updates. Each example's dropout draws come from an RNG derived
//! from the global seed and the example's stream index, independent of
//! batching.

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::forward::{build_logits, DropoutState};
use super::params::ParameterSet;
use super::ModelError;
use crate::corrupt::CorruptionExample;
use crate::seed;
use crate::vocab;

/// Optimization hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Peak learning rate reached at the end of warmup.
    pub learning_rate: f64,
    /// Steps of linear warmup from zero.
    pub warmup_steps: usize,
    /// Examples per forward batch.
    pub batch_size: usize,
    /// Batches accumulated into one optimizer step.
    pub grad_accum_steps: usize,
    /// Total optimizer steps to run.
    pub total_steps: usize,
    /// Adam first-moment decay.
    pub adam_beta1: f64,
    /// Adam second-moment decay.
    pub adam_beta2: f64,
    /// Adam denominator epsilon.
    pub adam_eps: f64,
    /// Global seed for dropout streams.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 3e-5,
            warmup_steps: 500,
            batch_size: 16,
            grad_accum_steps: 2,
            total_steps: 1000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Rejects configurations the loop cannot run.
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field: &'static str, detail: String| {
            Err(ModelError::InvalidConfig { field, detail })
        };
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate", format!("must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if self.grad_accum_steps == 0 {
            return bad("grad_accum_steps", "must be at least 1".into());
        }
        if self.total_steps == 0 {
            return bad("total_steps", "must be at least 1".into());
        }
        if self.warmup_steps >= self.total_steps {
            return bad(
                "warmup_steps",
                format!(
                    "warmup ({}) must be below total steps ({})",
                    self.warmup_steps, self.total_steps
                ),
            );
        }
        for (name, value) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&value) {
                return bad(name, format!("must lie in [0, 1), got {value}"));
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return bad("adam_eps", format!("must be positive, got {}", self.adam_eps));
        }
        Ok(())
    }
}

/// Learning rate at a 1-based optimizer step: linear warmup to the peak,
/// then cosine decay to zero at `total_steps`.
pub fn lr_at(step: usize, config: &TrainConfig) -> f64 {
    if config.warmup_steps > 0 && step <= config.warmup_steps {
        return config.learning_rate * step as f64 / config.warmup_steps as f64;
    }
    let progress = (step - config.warmup_steps) as f64
        / (config.total_steps - config.warmup_steps) as f64;
    config.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// One training example: encoder input ids and decoder target ids.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainPair {
    /// Encoder input ids, normally ending in the eos id.
    pub input_ids: Vec<u32>,
    /// Decoder target ids; teacher forcing shifts these right behind pad.
    pub target_ids: Vec<u32>,
}

impl From<CorruptionExample> for TrainPair {
    fn from(example: CorruptionExample) -> Self {
        TrainPair {
            input_ids: example.input_ids,
            target_ids: example.target_ids,
        }
    }
}

/// What the loop did: one mean loss per optimizer step actually run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-example loss of each optimizer step, in step order.
    pub loss_trace: Vec<f64>,
    /// Steps completed; short of `total_steps` when the stream ran dry.
    pub steps_run: usize,
    /// Examples consumed across all steps.
    pub examples_seen: usize,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(len: usize, config: &TrainConfig) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
            beta1: config.adam_beta1,
            beta2: config.adam_beta2,
            eps: config.adam_eps,
        }
    }

    fn update(&mut self, offset: usize, values: &mut [f64], grads: &[f64], lr: f64, t: usize) {
        let bc1 = 1.0 - self.beta1.powi(t as i32);
        let bc2 = 1.0 - self.beta2.powi(t as i32);
        for (i, (value, &g)) in values.iter_mut().zip(grads.iter()).enumerate() {
            let slot = offset + i;
            self.m[slot] = self.beta1 * self.m[slot] + (1.0 - self.beta1) * g;
            self.v[slot] = self.beta2 * self.v[slot] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[slot] / bc1;
            let v_hat = self.v[slot] / bc2;
            *value -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Runs the training loop over a stream of examples, mutating `params` in
/// place and returning the per-step loss trace.
///
/// The stream is consumed in order; when it ends before `total_steps`
/// optimizer steps have run, training stops early and the report's
/// `steps_run` says how far it got. A non-finite loss aborts with
/// [`ModelError::NonFiniteLoss`].
pub fn train<I>(
    params: &mut ParameterSet,
    config: &ModelConfig,
    train_config: &TrainConfig,
    examples: I,
) -> Result<TrainReport, ModelError>
where
    I: IntoIterator<Item = TrainPair>,
{
    config.validate()?;
    train_config.validate()?;

    let shapes: Vec<usize> = params.tensors().iter().map(|t| t.values.len()).collect();
    let offsets: Vec<usize> = shapes
        .iter()
        .scan(0usize, |acc, &len| {
            let here = *acc;
            *acc += len;
            Some(here)
        })
        .collect();
    let total_len: usize = shapes.iter().sum();
    let mut adam = Adam::new(total_len, train_config);
    let mut grad_sums: Vec<Vec<f64>> = shapes.iter().map(|&len| vec![0.0; len]).collect();

    let mut stream = examples.into_iter();
    let mut loss_trace = Vec::new();
    let mut examples_seen = 0usize;
    let per_step = train_config.batch_size * train_config.grad_accum_steps;

    for step in 1..=train_config.total_steps {
        let mut step_examples = 0usize;
        let mut step_loss = 0.0;
        for sums in grad_sums.iter_mut() {
            sums.iter_mut().for_each(|v| *v = 0.0);
        }

        while step_examples < per_step {
            let Some(pair) = stream.next() else { break };
            let example_index = examples_seen as u64;
            examples_seen += 1;
            step_examples += 1;

            let dec_in: Vec<u32> = std::iter::once(vocab::PAD_ID)
                .chain(pair.target_ids.iter().copied())
                .take(pair.target_ids.len())
                .collect();
            let mut rng = seed::rng_for(train_config.seed, example_index);
            let dropout = (config.dropout_rate > 0.0).then_some(DropoutState {
                rng: &mut rng,
                rate: config.dropout_rate,
            });
            let (mut graph, logits) =
                build_logits(params, config, &pair.input_ids, &dec_in, dropout)?;
            let loss_node = graph.cross_entropy(logits, &pair.target_ids, vocab::PAD_ID);
            let loss_value = graph.value(loss_node)[(0, 0)];
            if !loss_value.is_finite() {
                return Err(ModelError::NonFiniteLoss { step });
            }
            step_loss += loss_value;
            graph.backward(loss_node);
            for (param_index, grad) in graph.param_grads() {
                let sums = &mut grad_sums[param_index];
                for (slot, g) in sums.iter_mut().zip(grad.iter()) {
                    *slot += g;
                }
            }
        }

        if step_examples == 0 {
            break;
        }

        let lr = lr_at(step, train_config);
        let scale = 1.0 / step_examples as f64;
        for (tensor_index, sums) in grad_sums.iter_mut().enumerate() {
            sums.iter_mut().for_each(|g| *g *= scale);
            let values = params
                .values_mut(tensor_index)
                .as_slice_mut()
                .expect("parameter tensors are contiguous");
            adam.update(offsets[tensor_index], values, sums, lr, step);
        }
        loss_trace.push(step_loss * scale);

        if step_examples < per_step {
            break;
        }
    }

    Ok(TrainReport {
        steps_run: loss_trace.len(),
        loss_trace,
        examples_seen,
    })
}

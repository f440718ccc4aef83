//! Named parameter tensors, initialization, and closed-form counting.

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use super::config::ModelConfig;

/// One named weight matrix. Vectors (norm scales) are stored as `(1, d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    /// Stable dotted name, e.g. `dec.2.cross_attn.q`.
    pub name: String,
    /// The weights.
    pub values: Array2<f64>,
}

/// Every tensor name and shape for a config, in canonical order.
///
/// The order is the serialization order, the initialization draw order, and
/// the gradient-accumulator layout, so it must stay stable:
/// embedding, encoder layers (attention q/k/v/o, attention norm, FFN
/// wg/wi/wo, FFN norm), encoder relative-bias table, encoder final norm,
/// then the decoder likewise with self- and cross-attention blocks.
pub fn tensor_shapes(config: &ModelConfig) -> Vec<(String, (usize, usize))> {
    let d = config.d_model;
    let inner = config.inner_dim();
    let mut shapes = Vec::new();
    shapes.push(("embedding".to_string(), (config.vocab_size, d)));
    for layer in 0..config.n_encoder_layers {
        shapes.push((format!("enc.{layer}.attn.q"), (d, inner)));
        shapes.push((format!("enc.{layer}.attn.k"), (d, inner)));
        shapes.push((format!("enc.{layer}.attn.v"), (d, inner)));
        shapes.push((format!("enc.{layer}.attn.o"), (inner, d)));
        shapes.push((format!("enc.{layer}.attn_norm"), (1, d)));
        shapes.push((format!("enc.{layer}.ffn.wg"), (d, config.d_ff)));
        shapes.push((format!("enc.{layer}.ffn.wi"), (d, config.d_ff)));
        shapes.push((format!("enc.{layer}.ffn.wo"), (config.d_ff, d)));
        shapes.push((format!("enc.{layer}.ffn_norm"), (1, d)));
    }
    shapes.push((
        "enc.rel_bias".to_string(),
        (config.n_heads, config.relative_attention_buckets),
    ));
    shapes.push(("enc.final_norm".to_string(), (1, d)));
    for layer in 0..config.n_decoder_layers {
        shapes.push((format!("dec.{layer}.self_attn.q"), (d, inner)));
        shapes.push((format!("dec.{layer}.self_attn.k"), (d, inner)));
        shapes.push((format!("dec.{layer}.self_attn.v"), (d, inner)));
        shapes.push((format!("dec.{layer}.self_attn.o"), (inner, d)));
        shapes.push((format!("dec.{layer}.self_norm"), (1, d)));
        shapes.push((format!("dec.{layer}.cross_attn.q"), (d, inner)));
        shapes.push((format!("dec.{layer}.cross_attn.k"), (d, inner)));
        shapes.push((format!("dec.{layer}.cross_attn.v"), (d, inner)));
        shapes.push((format!("dec.{layer}.cross_attn.o"), (inner, d)));
        shapes.push((format!("dec.{layer}.cross_norm"), (1, d)));
        shapes.push((format!("dec.{layer}.ffn.wg"), (d, config.d_ff)));
        shapes.push((format!("dec.{layer}.ffn.wi"), (d, config.d_ff)));
        shapes.push((format!("dec.{layer}.ffn.wo"), (config.d_ff, d)));
        shapes.push((format!("dec.{layer}.ffn_norm"), (1, d)));
    }
    shapes.push((
        "dec.rel_bias".to_string(),
        (config.n_heads, config.relative_attention_buckets),
    ));
    shapes.push(("dec.final_norm".to_string(), (1, d)));
    shapes
}

/// Total parameter count, summed closed-form over [`tensor_shapes`] without
/// allocating anything. The embedding doubles as the output head, so it is
/// counted once.
pub fn count_parameters(config: &ModelConfig) -> u64 {
    tensor_shapes(config)
        .iter()
        .map(|(_, (r, c))| (r * c) as u64)
        .sum()
}

/// The model's weights: the tensors of [`tensor_shapes`] in canonical order
/// plus a name index.
#[derive(Debug, Clone)]
pub struct ParameterSet {
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParameterSet {
    fn from_values(values: Vec<Tensor>) -> Self {
        let index = values
            .iter()
            .enumerate()
            .map(|(i, t)| (t.name.clone(), i))
            .collect();
        ParameterSet { tensors: values, index }
    }

    /// Seeded random initialization.
    ///
    /// Projection weights are normal with variance `1 / fan_in`, the
    /// embedding is normal with variance `1 / d_model`, norm scales start at
    /// 1, and relative-bias tables start at 0. Draws are ChaCha8 in
    /// canonical tensor order, row-major within each tensor.
    pub fn init(config: &ModelConfig, init_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let tensors = tensor_shapes(config)
            .into_iter()
            .map(|(name, (rows, cols))| {
                let values = if name.ends_with("norm") {
                    Array2::ones((rows, cols))
                } else if name.ends_with("rel_bias") {
                    Array2::zeros((rows, cols))
                } else {
                    let std = if name == "embedding" {
                        (config.d_model as f64).powf(-0.5)
                    } else {
                        (rows as f64).powf(-0.5)
                    };
                    let mut m = Array2::zeros((rows, cols));
                    for v in m.iter_mut() {
                        *v = normal_draw(&mut rng) * std;
                    }
                    m
                };
                Tensor { name, values }
            })
            .collect();
        ParameterSet::from_values(tensors)
    }

    /// All-zero parameters; with these, every logit is zero and the loss is
    /// exactly `ln(vocab_size)`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let tensors = tensor_shapes(config)
            .into_iter()
            .map(|(name, (rows, cols))| Tensor {
                name,
                values: Array2::zeros((rows, cols)),
            })
            .collect();
        ParameterSet::from_values(tensors)
    }

    /// Builds a set from pre-loaded tensors, checking names and shapes
    /// against the config's canonical layout.
    pub fn from_tensors(
        config: &ModelConfig,
        tensors: Vec<Tensor>,
    ) -> Result<Self, super::ModelError> {
        let expected = tensor_shapes(config);
        if expected.len() != tensors.len() {
            return Err(super::ModelError::ShapeMismatch {
                detail: format!(
                    "expected {} tensors, got {}",
                    expected.len(),
                    tensors.len()
                ),
            });
        }
        for ((name, shape), tensor) in expected.iter().zip(tensors.iter()) {
            if &tensor.name != name {
                return Err(super::ModelError::ShapeMismatch {
                    detail: format!("expected tensor {name}, got {}", tensor.name),
                });
            }
            if tensor.values.dim() != *shape {
                return Err(super::ModelError::ShapeMismatch {
                    detail: format!(
                        "tensor {name}: expected shape {shape:?}, got {:?}",
                        tensor.values.dim()
                    ),
                });
            }
        }
        Ok(ParameterSet::from_values(tensors))
    }

    /// Index of a named tensor in canonical order.
    pub fn position(&self, name: &str) -> usize {
        *self
            .index
            .get(name)
            .unwrap_or_else(|| panic!("unknown tensor name {name}"))
    }

    /// Values of a named tensor.
    pub fn get(&self, name: &str) -> &Array2<f64> {
        &self.tensors[self.position(name)].values
    }

    /// All tensors in canonical order.
    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// Mutable tensor access by canonical position (optimizer updates).
    pub fn values_mut(&mut self, position: usize) -> &mut Array2<f64> {
        &mut self.tensors[position].values
    }

    /// True when every value in every tensor is finite.
    pub fn all_finite(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.values.iter().all(|v| v.is_finite()))
    }
}

/// One standard normal draw via Box-Muller, consuming exactly two uniforms.
fn normal_draw(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

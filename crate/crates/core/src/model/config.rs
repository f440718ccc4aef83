//! Model architecture configuration and presets.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::vocab;

/// Architecture hyperparameters of the encoder-decoder model.
///
/// The attention inner width is `n_heads * d_kv` and is allowed to differ
/// from `d_model` (the full-size preset uses 384 vs. 1472).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Residual stream width.
    pub d_model: usize,
    /// Feed-forward hidden width (gated GELU uses three projections).
    pub d_ff: usize,
    /// Attention head count.
    pub n_heads: usize,
    /// Per-head key/value width.
    pub d_kv: usize,
    /// Encoder depth.
    pub n_encoder_layers: usize,
    /// Decoder depth.
    pub n_decoder_layers: usize,
    /// Vocabulary size; always 384 for the byte vocabulary.
    pub vocab_size: usize,
    /// Maximum sequence length accepted by either stack.
    pub context_length: usize,
    /// Dropout probability during training; inference always runs at 0.
    pub dropout_rate: f64,
    /// Bucket count for relative-position bias (even, at least 4).
    pub relative_attention_buckets: usize,
    /// Distance at which relative-position buckets saturate.
    pub relative_attention_max_distance: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::banglabyt5_small()
    }
}

impl ModelConfig {
    /// The full-size preset: 1472 hidden, 3584 feed-forward, 6 heads of 64,
    /// 12 encoder and 4 decoder layers, 512 context. Roughly 3x10^8
    /// parameters; intended for counting and shape checks, not desk-scale
    /// training.
    pub fn banglabyt5_small() -> Self {
        ModelConfig {
            d_model: 1472,
            d_ff: 3584,
            n_heads: 6,
            d_kv: 64,
            n_encoder_layers: 12,
            n_decoder_layers: 4,
            vocab_size: vocab::VOCAB_SIZE,
            context_length: 512,
            dropout_rate: 0.1,
            relative_attention_buckets: 32,
            relative_attention_max_distance: 128,
        }
    }

    /// A desk-scale preset that trains in seconds on one CPU core.
    pub fn tiny() -> Self {
        ModelConfig {
            d_model: 32,
            d_ff: 64,
            n_heads: 2,
            d_kv: 8,
            n_encoder_layers: 1,
            n_decoder_layers: 1,
            vocab_size: vocab::VOCAB_SIZE,
            context_length: 64,
            dropout_rate: 0.0,
            relative_attention_buckets: 8,
            relative_attention_max_distance: 32,
        }
    }

    /// Looks up a preset by name: `"banglabyt5-small"` or `"tiny"`.
    pub fn preset(name: &str) -> Option<ModelConfig> {
        match name {
            "banglabyt5-small" => Some(ModelConfig::banglabyt5_small()),
            "tiny" => Some(ModelConfig::tiny()),
            _ => None,
        }
    }

    /// Names accepted by [`ModelConfig::preset`].
    pub fn preset_names() -> &'static [&'static str] {
        &["banglabyt5-small", "tiny"]
    }

    /// Checks dimension and vocabulary invariants.
    pub fn validate(&self) -> Result<(), ModelError> {
        let positive: [(&str, usize); 8] = [
            ("d_model", self.d_model),
            ("d_ff", self.d_ff),
            ("n_heads", self.n_heads),
            ("d_kv", self.d_kv),
            ("n_encoder_layers", self.n_encoder_layers),
            ("n_decoder_layers", self.n_decoder_layers),
            ("context_length", self.context_length),
            ("relative_attention_max_distance", self.relative_attention_max_distance),
        ];
        for (field, value) in positive {
            if value == 0 {
                return Err(ModelError::InvalidConfig {
                    field,
                    detail: "must be at least 1".into(),
                });
            }
        }
        if self.vocab_size != vocab::VOCAB_SIZE {
            return Err(ModelError::InvalidConfig {
                field: "vocab_size",
                detail: format!("must be {}, got {}", vocab::VOCAB_SIZE, self.vocab_size),
            });
        }
        if self.relative_attention_buckets < 4 || self.relative_attention_buckets % 2 != 0 {
            return Err(ModelError::InvalidConfig {
                field: "relative_attention_buckets",
                detail: format!("must be even and at least 4, got {}", self.relative_attention_buckets),
            });
        }
        if !(0.0..1.0).contains(&self.dropout_rate) || !self.dropout_rate.is_finite() {
            return Err(ModelError::InvalidConfig {
                field: "dropout_rate",
                detail: format!("must be in [0, 1), got {}", self.dropout_rate),
            });
        }
        Ok(())
    }

    /// Attention inner width, `n_heads * d_kv`.
    pub fn inner_dim(&self) -> usize {
        self.n_heads * self.d_kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_size_preset_matches_documented_dimensions() {
        let c = ModelConfig::banglabyt5_small();
        assert_eq!(
            (c.d_model, c.d_ff, c.n_heads, c.d_kv, c.n_encoder_layers, c.n_decoder_layers, c.context_length),
            (1472, 3584, 6, 64, 12, 4, 512)
        );
        assert_eq!(c.inner_dim(), 384);
        c.validate().unwrap();
    }

    #[test]
    fn presets_resolve_by_name() {
        assert_eq!(ModelConfig::preset("banglabyt5-small").unwrap(), ModelConfig::banglabyt5_small());
        assert_eq!(ModelConfig::preset("tiny").unwrap(), ModelConfig::tiny());
        assert!(ModelConfig::preset("nonexistent").is_none());
        for name in ModelConfig::preset_names() {
            ModelConfig::preset(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn invalid_configs_are_rejected_with_field_names() {
        let mut c = ModelConfig::tiny();
        c.vocab_size = 256;
        assert!(matches!(c.validate(), Err(ModelError::InvalidConfig { field: "vocab_size", .. })));

        let mut c = ModelConfig::tiny();
        c.d_model = 0;
        assert!(matches!(c.validate(), Err(ModelError::InvalidConfig { field: "d_model", .. })));

        let mut c = ModelConfig::tiny();
        c.relative_attention_buckets = 5;
        assert!(matches!(
            c.validate(),
            Err(ModelError::InvalidConfig { field: "relative_attention_buckets", .. })
        ));
    }
}

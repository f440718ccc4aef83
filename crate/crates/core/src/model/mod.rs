//! The byte-level encoder-decoder transformer.
//!
//! A T5-family stack operating on the 384-id byte vocabulary: pre-sublayer
//! RMS normalization, gated-GELU feed-forward blocks, bucketed relative
//! position bias (bidirectional in the encoder, causal in the decoder, none
//! in cross-attention), attention without `sqrt(d_k)` scaling, and an
//! embedding matrix tied to the output head.
//!
//! Submodules:
//! - [`config`]: [`ModelConfig`] and named presets, including the full-size
//!   `banglabyt5-small` (counting/shape checks only at that scale).
//! - [`params`]: named tensors, seeded initialization, closed-form
//!   [`count_parameters`].
//! - [`graph`]: the reverse-mode autodiff tape the stacks are built on.
//! - [`forward`]: graph construction, logits, and the loss function.
//! - [`train`]: Adam with linear-warmup-then-cosine schedule and gradient
//!   accumulation, bitwise deterministic under a seed.
//! - [`decode`]: greedy, beam, and temperature/top-k sampling decoders over
//!   a step-scorer abstraction.
//! - [`checkpoint`]: the versioned binary container for config + tensors +
//!   RNG state.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod forward;
pub mod graph;
pub mod params;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, RngState, CHECKPOINT_FORMAT_VERSION};
pub use config::ModelConfig;
pub use decode::{generate, DecodeConfig, DecodeMode, StepScorer};
pub use forward::{
    decoder_logits, encode_input, forward, loss, loss_and_gradients, EncodedInput,
};
pub use params::{count_parameters, tensor_shapes, ParameterSet, Tensor};
pub use train::{lr_at, train, TrainConfig, TrainPair, TrainReport};

use thiserror::Error;

/// Model configuration, input, and training errors.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    /// A configuration field is out of range.
    #[error("invalid model config: {field}: {detail}")]
    InvalidConfig {
        /// Offending field name.
        field: &'static str,
        /// What is wrong with it.
        detail: String,
    },
    /// A token id at or above the vocabulary size.
    #[error("id {id} is outside the vocabulary")]
    IdOutOfRange {
        /// The offending id.
        id: u32,
    },
    /// An input sequence longer than the context window.
    #[error("sequence of length {len} exceeds the context window {max}")]
    SequenceTooLong {
        /// Input length.
        len: usize,
        /// Context window.
        max: usize,
    },
    /// An empty input sequence where at least one id is required.
    #[error("input sequence is empty")]
    EmptySequence,
    /// Logits rows and target length differ.
    #[error("logits have {logits_rows} rows but there are {target_len} targets")]
    LengthMismatch {
        /// Logits row count.
        logits_rows: usize,
        /// Target id count.
        target_len: usize,
    },
    /// Every target position is pad, so the loss mean is undefined.
    #[error("all target positions are pad")]
    AllPadTarget,
    /// Tensor layout does not match the config.
    #[error("parameter shape mismatch: {detail}")]
    ShapeMismatch {
        /// What differs from the canonical layout.
        detail: String,
    },
    /// Training hit a NaN or infinite loss.
    #[error("non-finite loss at optimizer step {step}")]
    NonFiniteLoss {
        /// 1-based optimizer step where the loss went non-finite.
        step: usize,
    },
}

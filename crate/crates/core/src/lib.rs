//! Byte-level seq2seq language modeling toolkit.
//!
//! The crate covers the full pipeline for a byte-level encoder-decoder
//! language model over Bangla (or any UTF-8) text:
//!
//! - [`textprep`]: Unicode whitespace/zero-width normalization, punctuation
//!   stripping, and corpus statistics.
//! - [`vocab`]: the fixed 384-entry byte vocabulary (3 special tokens,
//!   256 byte tokens, 100 span sentinels) with encode/decode and fertility.
//! - [`corrupt`]: span-corruption training data generation and exact
//!   reconstruction of the original bytes from an (input, target) pair.
//! - [`model`]: the encoder-decoder transformer itself: configuration and
//!   parameter counting, a reverse-mode autodiff tape, training with Adam and
//!   a warmup+cosine schedule, greedy/beam/sampling decoders, and a versioned
//!   binary checkpoint format.
//! - [`metrics`]: macro-F1, corpus BLEU, and GLEU.
//! - [`judge`]: rubric-based 1..10 scoring of generations through a pluggable
//!   chat-completion transport, with repeat runs and mean/std aggregation.
//! - [`bench`]: latency/throughput/peak-memory benchmarking with injectable
//!   clock and memory probes, plus a carbon-footprint estimator.
//!
//! Everything is deterministic under an explicit seed: the RNG is ChaCha8
//! throughout, and independent streams are derived per work unit (corpus
//! chunk, training step) so results do not depend on scheduling or batching.

#![warn(missing_docs)]

pub mod bench;
pub mod corrupt;
pub mod judge;
pub mod metrics;
pub mod model;
pub mod seed;
pub mod textprep;
pub mod vocab;

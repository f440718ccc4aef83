//! Byte-level span corruption: denoising example generation and packing.
//!
//! Pretraining examples are produced T5-style. A window of source bytes gets
//! a set of disjoint spans masked out; the encoder input is the clean
//! segments with each masked span replaced by the next sentinel id, and the
//! decoder target restates each span prefixed by its sentinel, ends with a
//! closing sentinel, then eos:
//!
//! ```text
//! bytes   a b c d e f g h i j      (span [3,6) masked)
//! input   a b c <s0> g h i j <eos>
//! target  <s0> d e f <s1> <eos>
//! ```
//!
//! Corruption operates under the UTF-8 character level, so spans may split
//! multi-byte characters; [`reconstruct`] still recovers the original bytes
//! exactly, which is the invariant the whole module is built around.
//!
//! Randomness is ChaCha8 with per-chunk derived seeds, so a corpus corrupts
//! identically regardless of batching or parallelism.

use crate::seed;
use crate::vocab;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::ops::Range;
use thiserror::Error;

/// Parameters of the corruption objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorruptionSpec {
    /// Fraction of bytes to mask, in `[0, 1)`.
    pub noise_density: f64,
    /// Mean masked-span length in bytes, at least 1.
    pub mean_span_length: f64,
    /// Context window in ids; a window holds at most `context_length - 1`
    /// source bytes so the corrupted input always has room for eos.
    pub context_length: usize,
    /// Global seed; per-chunk RNG streams are derived from it.
    pub seed: u64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            noise_density: 0.15,
            mean_span_length: 20.0,
            context_length: 512,
            seed: 0,
        }
    }
}

impl CorruptionSpec {
    /// Checks field ranges.
    pub fn validate(&self) -> Result<(), CorruptError> {
        if !self.noise_density.is_finite() || !(0.0..1.0).contains(&self.noise_density) {
            return Err(CorruptError::InvalidSpec {
                field: "noise_density",
                detail: format!("{} is not in [0, 1)", self.noise_density),
            });
        }
        if !self.mean_span_length.is_finite() || self.mean_span_length < 1.0 {
            return Err(CorruptError::InvalidSpec {
                field: "mean_span_length",
                detail: format!("{} is less than 1", self.mean_span_length),
            });
        }
        if self.context_length < 2 {
            return Err(CorruptError::InvalidSpec {
                field: "context_length",
                detail: format!("{} is less than 2", self.context_length),
            });
        }
        Ok(())
    }

    /// Maximum source bytes per window.
    pub fn window_bytes(&self) -> usize {
        self.context_length - 1
    }

    /// RNG stream for one corpus chunk.
    pub fn chunk_rng(&self, chunk_index: u64) -> ChaCha8Rng {
        seed::rng_for(self.seed, chunk_index)
    }

    /// RNG stream for a standalone [`corrupt`] call (chunk 0).
    pub fn rng(&self) -> ChaCha8Rng {
        self.chunk_rng(0)
    }
}

/// One denoising training pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorruptionExample {
    /// Clean byte-id segments interleaved with ascending sentinels, then eos.
    pub input_ids: Vec<u32>,
    /// For each span: its sentinel then its byte ids; then the closing
    /// sentinel and eos. `[eos]` alone when no spans were masked.
    pub target_ids: Vec<u32>,
    /// Byte count of the uncorrupted source window.
    pub source_len: usize,
}

#[derive(Serialize, Deserialize)]
struct WireExample {
    input_ids: Vec<u32>,
    target_ids: Vec<u32>,
}

impl CorruptionExample {
    /// Serializes to the JSONL training-data wire format,
    /// `{"input_ids":[...],"target_ids":[...]}`.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&WireExample {
            input_ids: self.input_ids.clone(),
            target_ids: self.target_ids.clone(),
        })
        .expect("corruption example serializes")
    }

    /// Parses one JSONL line; `source_len` is recovered by counting byte ids
    /// across both sequences.
    pub fn from_json_line(line: &str) -> Result<CorruptionExample, serde_json::Error> {
        let wire: WireExample = serde_json::from_str(line)?;
        let source_len = wire
            .input_ids
            .iter()
            .chain(wire.target_ids.iter())
            .filter(|&&id| vocab::byte_value(id).is_some())
            .count();
        Ok(CorruptionExample {
            input_ids: wire.input_ids,
            target_ids: wire.target_ids,
            source_len,
        })
    }
}

/// Corruption and reconstruction errors.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorruptError {
    /// [`corrupt`] needs at least one byte.
    #[error("input is empty")]
    EmptyInput,
    /// The source window exceeds `context_length - 1` bytes.
    #[error("input is {len} bytes but the context window allows at most {max} source bytes")]
    InputTooLong {
        /// Input byte count.
        len: usize,
        /// Maximum source bytes per window.
        max: usize,
    },
    /// The plan needs more sentinels than the vocabulary holds: a plan of
    /// `spans` spans consumes `spans + 1` sentinels including the closing one.
    #[error("{spans} spans need {} sentinels but only {} exist", spans + 1, vocab::SENTINEL_COUNT)]
    SentinelExhaustion {
        /// Planned span count.
        spans: usize,
    },
    /// A [`CorruptionSpec`] field is out of range.
    #[error("invalid corruption spec: {field}: {detail}")]
    InvalidSpec {
        /// Offending field name.
        field: &'static str,
        /// What is wrong with it.
        detail: String,
    },
    /// An explicit span list is not sorted, disjoint, and in-bounds.
    #[error("invalid span list: {detail}")]
    InvalidSpans {
        /// What is wrong with the list.
        detail: String,
    },
    /// An (input, target) pair violates the example structure.
    #[error("malformed {sequence} sequence at position {position}: {detail}")]
    Malformed {
        /// Which sequence is malformed, "input" or "target".
        sequence: &'static str,
        /// Id position within that sequence.
        position: usize,
        /// What is wrong with it.
        detail: String,
    },
}

/// Bytes to mask for an `n`-byte window: `round(n * density)`, capped at
/// `n - 1` so a span never covers the entire input.
fn covered_bytes(n: usize, noise_density: f64) -> usize {
    (((n as f64) * noise_density).round() as usize).min(n.saturating_sub(1))
}

/// Draws `amount` distinct values from `0..population` by partial
/// Fisher-Yates, consuming one `gen_range` per draw. The draw order is part
/// of the determinism contract.
fn sample_distinct(rng: &mut ChaCha8Rng, population: usize, amount: usize) -> Vec<usize> {
    debug_assert!(amount <= population);
    let mut indices: Vec<usize> = (0..population).collect();
    for i in 0..amount {
        let j = rng.gen_range(i..population);
        indices.swap(i, j);
    }
    indices.truncate(amount);
    indices
}

/// Uniform composition of `total` into `parts` non-negative summands via
/// stars and bars.
fn compose_nonneg(rng: &mut ChaCha8Rng, total: usize, parts: usize) -> Vec<usize> {
    debug_assert!(parts >= 1);
    let bars = parts - 1;
    let mut positions = sample_distinct(rng, total + bars, bars);
    positions.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev: i64 = -1;
    for &b in &positions {
        out.push((b as i64 - prev - 1) as usize);
        prev = b as i64;
    }
    out.push(((total + bars) as i64 - prev - 1) as usize);
    out
}

/// Uniform composition of `total` into `parts` positive summands.
fn compose_positive(rng: &mut ChaCha8Rng, total: usize, parts: usize) -> Vec<usize> {
    debug_assert!(parts >= 1 && total >= parts);
    let mut cuts: Vec<usize> = sample_distinct(rng, total - 1, parts - 1)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(parts);
    let mut prev = 0;
    for &c in &cuts {
        out.push(c - prev);
        prev = c;
    }
    out.push(total - prev);
    out
}

/// Plans the masked spans for an `n`-byte window.
///
/// The mask budget is `round(n * noise_density)` bytes split into
/// `max(1, round(budget / mean_span_length))` spans, reduced if needed so
/// that every span has at least one byte and every pair of spans has at
/// least one clean byte between them (the merge-until-feasible fallback).
/// Span lengths are a uniform positive composition of the budget; the clean
/// bytes around them are a uniform non-negative composition. Deterministic
/// given `(n, spec, rng seed)`; the RNG is consumed in a fixed order (span
/// cuts first, then gap bars).
pub fn plan_spans(n: usize, spec: &CorruptionSpec, rng: &mut ChaCha8Rng) -> Vec<Range<usize>> {
    let covered = covered_bytes(n, spec.noise_density);
    if covered == 0 {
        return Vec::new();
    }
    let clean = n - covered;
    let ideal = (covered as f64 / spec.mean_span_length).round() as usize;
    let k = ideal.max(1).min(covered).min(clean + 1);

    let lengths = compose_positive(rng, covered, k);
    let free = clean - (k - 1);
    let slack = compose_nonneg(rng, free, k + 1);

    let mut spans = Vec::with_capacity(k);
    let mut pos = slack[0];
    for i in 0..k {
        if i > 0 {
            pos += slack[i] + 1;
        }
        spans.push(pos..pos + lengths[i]);
        pos += lengths[i];
    }
    spans
}

fn check_spans(bytes_len: usize, spans: &[Range<usize>]) -> Result<(), CorruptError> {
    let mut prev_end: Option<usize> = None;
    for span in spans {
        if span.start >= span.end {
            return Err(CorruptError::InvalidSpans {
                detail: format!("span {span:?} is empty or reversed"),
            });
        }
        if span.end > bytes_len {
            return Err(CorruptError::InvalidSpans {
                detail: format!("span {span:?} exceeds input length {bytes_len}"),
            });
        }
        if let Some(end) = prev_end {
            if span.start <= end {
                return Err(CorruptError::InvalidSpans {
                    detail: format!("span {span:?} is not past the previous span end {end}"),
                });
            }
        }
        prev_end = Some(span.end);
    }
    Ok(())
}

/// Builds a [`CorruptionExample`] from an explicit span list.
///
/// Spans must be sorted, non-empty, disjoint, non-adjacent, and in-bounds.
/// Exposed so callers and tests can corrupt with hand-chosen spans; the
/// randomized path is [`corrupt`].
pub fn corrupt_with_spans(
    bytes: &[u8],
    spans: &[Range<usize>],
) -> Result<CorruptionExample, CorruptError> {
    if bytes.is_empty() {
        return Err(CorruptError::EmptyInput);
    }
    check_spans(bytes.len(), spans)?;
    if spans.len() + 1 > vocab::SENTINEL_COUNT as usize {
        return Err(CorruptError::SentinelExhaustion { spans: spans.len() });
    }

    let mut input_ids = Vec::with_capacity(bytes.len() + spans.len() + 1);
    let mut target_ids = Vec::with_capacity(bytes.len() + spans.len() + 2);
    let mut cursor = 0;
    for (i, span) in spans.iter().enumerate() {
        let sentinel = vocab::sentinel_id(i as u32).expect("span count checked above");
        input_ids.extend(bytes[cursor..span.start].iter().map(|&b| vocab::byte_id(b)));
        input_ids.push(sentinel);
        target_ids.push(sentinel);
        target_ids.extend(bytes[span.clone()].iter().map(|&b| vocab::byte_id(b)));
        cursor = span.end;
    }
    input_ids.extend(bytes[cursor..].iter().map(|&b| vocab::byte_id(b)));
    input_ids.push(vocab::EOS_ID);
    if !spans.is_empty() {
        let closing = vocab::sentinel_id(spans.len() as u32).expect("span count checked above");
        target_ids.push(closing);
    }
    target_ids.push(vocab::EOS_ID);

    Ok(CorruptionExample {
        input_ids,
        target_ids,
        source_len: bytes.len(),
    })
}

/// Masks randomly planned spans in one source window.
///
/// The window must hold 1 to `context_length - 1` bytes. With zero planned
/// spans (density 0 or a tiny window) the input is the plain byte ids plus
/// eos and the target is `[eos]`.
pub fn corrupt(
    bytes: &[u8],
    spec: &CorruptionSpec,
    rng: &mut ChaCha8Rng,
) -> Result<CorruptionExample, CorruptError> {
    spec.validate()?;
    if bytes.is_empty() {
        return Err(CorruptError::EmptyInput);
    }
    if bytes.len() > spec.window_bytes() {
        return Err(CorruptError::InputTooLong {
            len: bytes.len(),
            max: spec.window_bytes(),
        });
    }
    let spans = plan_spans(bytes.len(), spec, rng);
    corrupt_with_spans(bytes, &spans)
}

fn malformed(sequence: &'static str, position: usize, detail: String) -> CorruptError {
    CorruptError::Malformed {
        sequence,
        position,
        detail,
    }
}

/// Splices the target spans back into the input's sentinel positions and
/// returns the original bytes.
///
/// Both sequences are validated against the [`CorruptionExample`] structure:
/// sentinel indices must ascend from 0 without gaps, the target must carry
/// one more sentinel than the input (the closing one), both must end with a
/// single trailing eos, and no other id roles may appear.
pub fn reconstruct(input_ids: &[u32], target_ids: &[u32]) -> Result<Vec<u8>, CorruptError> {
    let mut clean_segments: Vec<Vec<u8>> = vec![Vec::new()];
    let mut saw_eos = false;
    for (pos, &id) in input_ids.iter().enumerate() {
        if saw_eos {
            return Err(malformed("input", pos, format!("id {id} after eos")));
        }
        if id == vocab::EOS_ID {
            saw_eos = true;
        } else if let Some(b) = vocab::byte_value(id) {
            clean_segments.last_mut().expect("non-empty").push(b);
        } else if let Some(k) = vocab::sentinel_index(id) {
            let expected = (clean_segments.len() - 1) as u32;
            if k != expected {
                return Err(malformed(
                    "input",
                    pos,
                    format!("sentinel {k} where sentinel {expected} was expected"),
                ));
            }
            clean_segments.push(Vec::new());
        } else {
            return Err(malformed("input", pos, format!("unexpected id {id}")));
        }
    }
    if !saw_eos {
        return Err(malformed("input", input_ids.len(), "missing eos".into()));
    }
    let span_count = (clean_segments.len() - 1) as u32;

    let mut spans: Vec<Vec<u8>> = Vec::with_capacity(span_count as usize);
    let mut current: Option<Vec<u8>> = None;
    let mut next_sentinel = 0u32;
    let mut saw_eos = false;
    for (pos, &id) in target_ids.iter().enumerate() {
        if saw_eos {
            return Err(malformed("target", pos, format!("id {id} after eos")));
        }
        if id == vocab::EOS_ID {
            if next_sentinel != span_count + u32::from(span_count > 0) {
                return Err(malformed(
                    "target",
                    pos,
                    format!(
                        "eos after {next_sentinel} sentinels; a {span_count}-span example \
                         needs every span sentinel plus the closing one"
                    ),
                ));
            }
            if let Some(s) = current.take() {
                spans.push(s);
            }
            saw_eos = true;
        } else if let Some(k) = vocab::sentinel_index(id) {
            if k != next_sentinel {
                return Err(malformed(
                    "target",
                    pos,
                    format!("sentinel {k} where sentinel {next_sentinel} was expected"),
                ));
            }
            if k >= span_count {
                if span_count == 0 {
                    return Err(malformed(
                        "target",
                        pos,
                        "sentinel in the target of a zero-span example".into(),
                    ));
                }
                if let Some(s) = current.take() {
                    spans.push(s);
                }
            } else {
                if let Some(s) = current.take() {
                    spans.push(s);
                }
                current = Some(Vec::new());
            }
            next_sentinel += 1;
        } else if let Some(b) = vocab::byte_value(id) {
            match current.as_mut() {
                Some(span) => span.push(b),
                None => {
                    return Err(malformed(
                        "target",
                        pos,
                        "byte id outside any span".into(),
                    ))
                }
            }
        } else {
            return Err(malformed("target", pos, format!("unexpected id {id}")));
        }
    }
    if !saw_eos {
        return Err(malformed("target", target_ids.len(), "missing eos".into()));
    }

    let mut out = Vec::new();
    for (i, segment) in clean_segments.iter().enumerate() {
        out.extend_from_slice(segment);
        if i < spans.len() {
            out.extend_from_slice(&spans[i]);
        }
    }
    Ok(out)
}

/// Streaming iterator over packed, corrupted corpus windows.
///
/// Produced by [`pack_corpus`].
pub struct PackedExamples<I> {
    docs: I,
    buffer: VecDeque<u8>,
    chunk_index: u64,
    spec: CorruptionSpec,
    exhausted: bool,
}

impl<I, S> Iterator for PackedExamples<I>
where
    I: Iterator<Item = S>,
    S: AsRef<str>,
{
    type Item = Result<CorruptionExample, CorruptError>;

    fn next(&mut self) -> Option<Self::Item> {
        if let Err(e) = self.spec.validate() {
            self.exhausted = true;
            self.buffer.clear();
            return Some(Err(e));
        }
        let window = self.spec.window_bytes();
        while self.buffer.len() < window && !self.exhausted {
            match self.docs.next() {
                Some(doc) => self.buffer.extend(doc.as_ref().as_bytes()),
                None => self.exhausted = true,
            }
        }
        if self.buffer.is_empty() {
            return None;
        }
        let take = window.min(self.buffer.len());
        let chunk: Vec<u8> = self.buffer.drain(..take).collect();
        let mut rng = self.spec.chunk_rng(self.chunk_index);
        self.chunk_index += 1;
        Some(corrupt(&chunk, &self.spec, &mut rng))
    }
}

/// Concatenates cleaned documents, chunks the byte stream into windows of at
/// most `context_length - 1` bytes (final short window kept, no padding),
/// and corrupts each window under its own derived seed.
///
/// Deterministic for a fixed (corpus, spec): chunk `i` always draws from the
/// stream `derive(spec.seed, i)` no matter how the documents are iterated or
/// parallelized. An empty corpus yields an empty stream.
pub fn pack_corpus<I>(documents: I, spec: &CorruptionSpec) -> PackedExamples<I::IntoIter>
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    PackedExamples {
        docs: documents.into_iter(),
        buffer: VecDeque::new(),
        chunk_index: 0,
        spec: spec.clone(),
        exhausted: false,
    }
}

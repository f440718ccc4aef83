//! The fixed 384-entry byte-level vocabulary.
//!
//! Tokenization is byte-granular: every UTF-8 byte maps to one id, so the
//! vocabulary covers any text with zero out-of-vocabulary tokens. Layout:
//!
//! | ids      | role     | meaning                                   |
//! |----------|----------|-------------------------------------------|
//! | 0        | special  | pad                                       |
//! | 1        | special  | eos                                       |
//! | 2        | special  | unk (unreachable: byte coverage is total) |
//! | 3..258   | byte     | raw byte value + 3                        |
//! | 259..283 | reserved | unused                                    |
//! | 284..383 | sentinel | `sentinel(k) = 383 - k`, k in 0..100      |
//!
//! The 100 sentinels count down from the top of the vocabulary, so
//! `sentinel(0) = 383`. Encode/decode round-trips exactly at the byte level,
//! including byte strings that are not valid UTF-8.
//!
//! ```
//! use byt5kit::vocab;
//!
//! assert_eq!(vocab::encode("A", false), vec![68]);
//! assert_eq!(vocab::encode("ক", true), vec![227, 169, 152, 1]);
//! assert_eq!(vocab::sentinel_id(0).unwrap(), 383);
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Total number of ids.
pub const VOCAB_SIZE: usize = 384;
/// Padding id (also the decoder start token).
pub const PAD_ID: u32 = 0;
/// End-of-sequence id.
pub const EOS_ID: u32 = 1;
/// Unknown id; present for interface completeness, never produced by
/// [`encode`] because every byte has its own id.
pub const UNK_ID: u32 = 2;
/// A byte `b` encodes as `b + BYTE_ID_BASE`.
pub const BYTE_ID_BASE: u32 = 3;
/// Number of span sentinels.
pub const SENTINEL_COUNT: u32 = 100;
/// Lowest reserved (unused) id.
pub const FIRST_RESERVED_ID: u32 = 259;
/// Highest reserved (unused) id.
pub const LAST_RESERVED_ID: u32 = 283;
/// Lowest sentinel id, `sentinel(99)`.
pub const FIRST_SENTINEL_ID: u32 = 284;
/// Highest sentinel id, `sentinel(0)`.
pub const TOP_SENTINEL_ID: u32 = 383;

/// Token count of the reference pretraining corpus, used for fertility and
/// token-to-parameter reporting.
pub const REFERENCE_TOKEN_COUNT: u64 = 7_533_270_552;
/// Word count of the reference pretraining corpus.
pub const REFERENCE_WORD_COUNT: u64 = 947_041_525;

/// Vocabulary errors.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum VocabError {
    /// An id at or above [`VOCAB_SIZE`].
    #[error("id {id} is out of range (vocabulary size {VOCAB_SIZE})")]
    IdOutOfRange {
        /// The offending id.
        id: u32,
    },
    /// A sentinel index at or above [`SENTINEL_COUNT`].
    #[error("sentinel index {k} is out of range (only {SENTINEL_COUNT} sentinels exist)")]
    SentinelOutOfRange {
        /// The offending sentinel index.
        k: u32,
    },
    /// Zero word count passed to [`fertility`].
    #[error("fertility requires a positive word count")]
    ZeroWordCount,
}

/// Role of an id in the vocabulary layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenRole {
    /// pad, eos, or unk.
    Special,
    /// One of the 256 raw byte ids.
    Byte,
    /// One of the 100 span sentinels.
    Sentinel,
    /// Unused filler id.
    Reserved,
}

/// Returns the id for a raw byte.
pub fn byte_id(b: u8) -> u32 {
    b as u32 + BYTE_ID_BASE
}

/// Returns `Some(byte)` when `id` is a byte id.
pub fn byte_value(id: u32) -> Option<u8> {
    if (BYTE_ID_BASE..BYTE_ID_BASE + 256).contains(&id) {
        Some((id - BYTE_ID_BASE) as u8)
    } else {
        None
    }
}

/// Returns the id of the k-th sentinel, `383 - k`.
pub fn sentinel_id(k: u32) -> Result<u32, VocabError> {
    if k < SENTINEL_COUNT {
        Ok(TOP_SENTINEL_ID - k)
    } else {
        Err(VocabError::SentinelOutOfRange { k })
    }
}

/// Returns `Some(k)` when `id` is `sentinel(k)`.
pub fn sentinel_index(id: u32) -> Option<u32> {
    if (FIRST_SENTINEL_ID..=TOP_SENTINEL_ID).contains(&id) {
        Some(TOP_SENTINEL_ID - id)
    } else {
        None
    }
}

/// Classifies an id by vocabulary region.
pub fn role(id: u32) -> Result<TokenRole, VocabError> {
    match id {
        PAD_ID | EOS_ID | UNK_ID => Ok(TokenRole::Special),
        _ if byte_value(id).is_some() => Ok(TokenRole::Byte),
        FIRST_RESERVED_ID..=LAST_RESERVED_ID => Ok(TokenRole::Reserved),
        FIRST_SENTINEL_ID..=TOP_SENTINEL_ID => Ok(TokenRole::Sentinel),
        _ => Err(VocabError::IdOutOfRange { id }),
    }
}

/// Encodes text as the byte ids of its UTF-8 encoding, appending eos when
/// `add_eos` is set. Never produces unk.
pub fn encode(text: &str, add_eos: bool) -> Vec<u32> {
    encode_bytes(text.as_bytes(), add_eos)
}

/// Encodes a raw byte string, appending eos when `add_eos` is set.
pub fn encode_bytes(bytes: &[u8], add_eos: bool) -> Vec<u32> {
    let mut ids = Vec::with_capacity(bytes.len() + usize::from(add_eos));
    ids.extend(bytes.iter().map(|&b| byte_id(b)));
    if add_eos {
        ids.push(EOS_ID);
    }
    ids
}

/// Byte string recovered by [`decode`], with a lossy Unicode view.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    /// The raw bytes (byte ids only; other roles are skipped).
    pub bytes: Vec<u8>,
    /// UTF-8 view of `bytes` with invalid sequences replaced by U+FFFD.
    pub text: String,
}

/// Maps byte ids back to bytes; pad/eos/unk/sentinel/reserved ids are
/// skipped. Ids at or above the vocabulary size are an error.
pub fn decode(ids: &[u32]) -> Result<Decoded, VocabError> {
    let mut bytes = Vec::with_capacity(ids.len());
    for &id in ids {
        if id as usize >= VOCAB_SIZE {
            return Err(VocabError::IdOutOfRange { id });
        }
        if let Some(b) = byte_value(id) {
            bytes.push(b);
        }
    }
    let text = String::from_utf8_lossy(&bytes).into_owned();
    Ok(Decoded { bytes, text })
}

/// One row of the vocabulary manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// The vocabulary id.
    pub id: u32,
    /// Region the id belongs to.
    pub role: TokenRole,
    /// Human-readable detail: special name, byte value, or sentinel index.
    pub detail: String,
}

/// Emits the full id-to-role table, one entry per id in ascending order.
pub fn manifest() -> Vec<ManifestEntry> {
    (0..VOCAB_SIZE as u32)
        .map(|id| {
            let r = role(id).expect("ids below VOCAB_SIZE always classify");
            let detail = match r {
                TokenRole::Special => match id {
                    PAD_ID => "pad".to_string(),
                    EOS_ID => "eos".to_string(),
                    _ => "unk".to_string(),
                },
                TokenRole::Byte => format!("byte 0x{:02X}", byte_value(id).unwrap()),
                TokenRole::Sentinel => format!("sentinel {}", sentinel_index(id).unwrap()),
                TokenRole::Reserved => "reserved".to_string(),
            };
            ManifestEntry { id, role: r, detail }
        })
        .collect()
}

/// Tokens-per-word analysis of a tokenized corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FertilityReport {
    /// Total token count.
    pub token_count: u64,
    /// Total word count (positive).
    pub word_count: u64,
    /// Exact quotient `token_count / word_count`.
    pub fertility: f64,
    /// `fertility` rounded to two decimals (half away from zero).
    pub fertility_rounded: f64,
    /// Present when the inputs are the reference-corpus counts, where the
    /// commonly quoted rounded figure differs from the exact quotient.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Computes tokens-per-word fertility at full precision plus a two-decimal
/// rounding.
///
/// For the reference corpus the report carries a note: the exact quotient of
/// the published counts is 7.9545 (7.95 at two decimals), while the commonly
/// quoted figure is 7.96.
pub fn fertility(token_count: u64, word_count: u64) -> Result<FertilityReport, VocabError> {
    if word_count == 0 {
        return Err(VocabError::ZeroWordCount);
    }
    let fertility = token_count as f64 / word_count as f64;
    let fertility_rounded = (fertility * 100.0).round() / 100.0;
    let note = if token_count == REFERENCE_TOKEN_COUNT && word_count == REFERENCE_WORD_COUNT {
        Some(format!(
            "reference corpus: exact quotient {fertility:.4} rounds to {fertility_rounded:.2}; \
             the commonly quoted fertility for these counts is 7.96, which is not the \
             two-decimal rounding of the exact quotient"
        ))
    } else {
        None
    };
    Ok(FertilityReport {
        token_count,
        word_count,
        fertility,
        fertility_rounded,
        note,
    })
}

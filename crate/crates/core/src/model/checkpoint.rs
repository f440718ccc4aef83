//! Binary checkpoint format for model weights, config, and RNG state.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic              8 bytes   "BYT5CKPT"
//! format version     u32
//! config             10 x u64 + dropout as f64 bits
//! rng state          32-byte seed + u128 word position + u64 stream
//! tensor count       u64
//! per tensor         name length u32, name bytes, rows u64, cols u64,
//!                    rows*cols f64 values as bits, row-major
//! ```
//!
//! Values round-trip bitwise: loading a checkpoint and saving it again
//! produces identical bytes, and a loaded model's forward pass matches the
//! saved model's exactly. Trailing bytes after the last tensor are an error.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::ModelConfig;
use super::params::{ParameterSet, Tensor};
use super::ModelError;

const MAGIC: &[u8; 8] = b"BYT5CKPT";

/// Version written into new checkpoints and required when loading.
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Why a checkpoint could not be read or written.
#[derive(Debug, Error)]
pub enum CheckpointError {
    /// Underlying file I/O failed.
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    /// The file does not start with the checkpoint magic.
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    /// The file's format version is not supported.
    #[error("unsupported checkpoint format version {found}, expected {CHECKPOINT_FORMAT_VERSION}")]
    UnsupportedVersion {
        /// Version found in the file.
        found: u32,
    },
    /// The file is structurally invalid.
    #[error("corrupt checkpoint: {detail}")]
    Corrupt {
        /// What was wrong.
        detail: String,
    },
    /// The stored tensors do not form a valid parameter set for the config.
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Serializable snapshot of the training RNG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    /// The generator's 32-byte seed.
    pub seed: [u8; 32],
    /// Position within the keystream, in 32-bit words.
    pub word_pos: u128,
    /// Stream id.
    pub stream: u64,
}

impl RngState {
    /// Snapshots a generator so it can be stored and later continued.
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            word_pos: rng.get_word_pos(),
            stream: rng.get_stream(),
        }
    }

    /// Rebuilds the generator at the captured position.
    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }

    /// Fresh state for a 64-bit seed, at the start of the stream.
    pub fn from_seed(seed: u64) -> Self {
        RngState::capture(&ChaCha8Rng::seed_from_u64(seed))
    }
}

/// Everything a checkpoint holds.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    /// Model architecture.
    pub config: ModelConfig,
    /// Model weights.
    pub params: ParameterSet,
    /// Training RNG position.
    pub rng: RngState,
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_u128<R: Read>(r: &mut R) -> std::io::Result<u128> {
    let mut buf = [0u8; 16];
    r.read_exact(&mut buf)?;
    Ok(u128::from_le_bytes(buf))
}

fn usize_field(value: u64, field: &str) -> Result<usize, CheckpointError> {
    usize::try_from(value).map_err(|_| CheckpointError::Corrupt {
        detail: format!("{field} value {value} does not fit in usize"),
    })
}

/// Writes a checkpoint to `path`.
pub fn save_checkpoint(
    path: &Path,
    config: &ModelConfig,
    params: &ParameterSet,
    rng: &RngState,
) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    write_u32(&mut w, CHECKPOINT_FORMAT_VERSION)?;

    for value in [
        config.d_model,
        config.d_ff,
        config.n_heads,
        config.d_kv,
        config.n_encoder_layers,
        config.n_decoder_layers,
        config.vocab_size,
        config.context_length,
        config.relative_attention_buckets,
        config.relative_attention_max_distance,
    ] {
        write_u64(&mut w, value as u64)?;
    }
    write_u64(&mut w, config.dropout_rate.to_bits())?;

    w.write_all(&rng.seed)?;
    w.write_all(&rng.word_pos.to_le_bytes())?;
    write_u64(&mut w, rng.stream)?;

    let tensors = params.tensors();
    write_u64(&mut w, tensors.len() as u64)?;
    for tensor in tensors {
        let name = tensor.name.as_bytes();
        write_u32(&mut w, name.len() as u32)?;
        w.write_all(name)?;
        write_u64(&mut w, tensor.values.nrows() as u64)?;
        write_u64(&mut w, tensor.values.ncols() as u64)?;
        for &v in tensor.values.iter() {
            write_u64(&mut w, v.to_bits())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads and validates a checkpoint from `path`.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedVersion { found: version });
    }

    let config = ModelConfig {
        d_model: usize_field(read_u64(&mut r)?, "d_model")?,
        d_ff: usize_field(read_u64(&mut r)?, "d_ff")?,
        n_heads: usize_field(read_u64(&mut r)?, "n_heads")?,
        d_kv: usize_field(read_u64(&mut r)?, "d_kv")?,
        n_encoder_layers: usize_field(read_u64(&mut r)?, "n_encoder_layers")?,
        n_decoder_layers: usize_field(read_u64(&mut r)?, "n_decoder_layers")?,
        vocab_size: usize_field(read_u64(&mut r)?, "vocab_size")?,
        context_length: usize_field(read_u64(&mut r)?, "context_length")?,
        relative_attention_buckets: usize_field(read_u64(&mut r)?, "relative_attention_buckets")?,
        relative_attention_max_distance: usize_field(
            read_u64(&mut r)?,
            "relative_attention_max_distance",
        )?,
        dropout_rate: f64::from_bits(read_u64(&mut r)?),
    };
    config.validate()?;

    let mut seed = [0u8; 32];
    r.read_exact(&mut seed)?;
    let rng = RngState {
        seed,
        word_pos: read_u128(&mut r)?,
        stream: read_u64(&mut r)?,
    };

    let tensor_count = usize_field(read_u64(&mut r)?, "tensor count")?;
    let mut tensors = Vec::with_capacity(tensor_count);
    for index in 0..tensor_count {
        let name_len = read_u32(&mut r)? as usize;
        let mut name_buf = vec![0u8; name_len];
        r.read_exact(&mut name_buf)?;
        let name = String::from_utf8(name_buf).map_err(|_| CheckpointError::Corrupt {
            detail: format!("tensor {index} name is not UTF-8"),
        })?;
        let rows = usize_field(read_u64(&mut r)?, "rows")?;
        let cols = usize_field(read_u64(&mut r)?, "cols")?;
        let len = rows.checked_mul(cols).ok_or_else(|| CheckpointError::Corrupt {
            detail: format!("tensor {name} shape {rows}x{cols} overflows"),
        })?;
        let mut values = Vec::with_capacity(len);
        for _ in 0..len {
            values.push(f64::from_bits(read_u64(&mut r)?));
        }
        let values = ndarray::Array2::from_shape_vec((rows, cols), values)
            .expect("length was computed from the shape");
        tensors.push(Tensor { name, values });
    }

    let mut trailing = [0u8; 1];
    match r.read(&mut trailing)? {
        0 => {}
        _ => {
            return Err(CheckpointError::Corrupt {
                detail: "trailing bytes after last tensor".into(),
            })
        }
    }

    let params = ParameterSet::from_tensors(&config, tensors)?;
    Ok(Checkpoint { config, params, rng })
}

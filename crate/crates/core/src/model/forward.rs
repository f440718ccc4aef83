//! Graph construction for the encoder-decoder stacks, plus the loss.
//!
//! Conventions, fixed by the model family this architecture belongs to:
//! attention scores are raw dot products (no `sqrt(d_k)` scaling), every
//! sublayer is preceded by RMS normalization and followed by a residual add,
//! relative-position bias comes from one bucketed table per stack shared by
//! all of its layers, cross-attention carries no position bias, the decoder
//! starts from the pad id, and the tied output head scales decoder output by
//! `d_model^-0.5` before the logits product.
//!
//! Masking is additive: masked score entries get [`MASK_VALUE`] before the
//! softmax, which underflows to an exact zero probability. The encoder
//! masks pad keys in self-attention, the decoder masks future keys in
//! self-attention (pad there is the start token, never masked), and
//! cross-attention masks pad encoder keys.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

use super::config::ModelConfig;
use super::graph::{Graph, NodeId};
use super::params::ParameterSet;
use super::ModelError;
use crate::vocab;

/// Additive mask for attention scores; large enough that the softmax
/// probability underflows to exactly 0.
pub const MASK_VALUE: f64 = -1e30;

/// T5-style relative position bucket for `relative_position = key - query`.
///
/// Bidirectional attention splits the buckets between negative and positive
/// offsets; causal attention buckets only non-positive offsets. Half of each
/// side is exact small offsets, the other half is logarithmically spaced up
/// to `max_distance`, saturating beyond it.
fn relative_bucket(
    relative_position: i64,
    bidirectional: bool,
    num_buckets: usize,
    max_distance: usize,
) -> usize {
    let mut buckets = num_buckets;
    let mut offset = 0usize;
    let n: usize;
    if bidirectional {
        buckets /= 2;
        if relative_position > 0 {
            offset = buckets;
        }
        n = relative_position.unsigned_abs() as usize;
    } else {
        n = (-relative_position).max(0) as usize;
    }
    let max_exact = buckets / 2;
    let value = if n < max_exact {
        n
    } else {
        let log_ratio = ((n as f64) / (max_exact as f64)).ln()
            / ((max_distance as f64) / (max_exact as f64)).ln();
        let large = max_exact + (log_ratio * (buckets - max_exact) as f64) as usize;
        large.min(buckets - 1)
    };
    offset + value
}

/// Row-major `(n_q, n_k)` bucket indices for queries at `0..n_q` and keys at
/// `0..n_k`.
pub(crate) fn bucket_matrix(
    n_q: usize,
    n_k: usize,
    bidirectional: bool,
    config: &ModelConfig,
) -> Vec<usize> {
    let mut out = Vec::with_capacity(n_q * n_k);
    for q in 0..n_q {
        for k in 0..n_k {
            out.push(relative_bucket(
                k as i64 - q as i64,
                bidirectional,
                config.relative_attention_buckets,
                config.relative_attention_max_distance,
            ));
        }
    }
    out
}

fn key_pad_mask(n_q: usize, key_ids: &[u32]) -> Array2<f64> {
    let mut mask = Array2::zeros((n_q, key_ids.len()));
    for (j, &id) in key_ids.iter().enumerate() {
        if id == vocab::PAD_ID {
            for i in 0..n_q {
                mask[(i, j)] = MASK_VALUE;
            }
        }
    }
    mask
}

fn causal_mask(n: usize) -> Array2<f64> {
    let mut mask = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            mask[(i, j)] = MASK_VALUE;
        }
    }
    mask
}

fn validate_ids(ids: &[u32], config: &ModelConfig) -> Result<(), ModelError> {
    if ids.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if ids.len() > config.context_length {
        return Err(ModelError::SequenceTooLong {
            len: ids.len(),
            max: config.context_length,
        });
    }
    if let Some(&id) = ids.iter().find(|&&id| id as usize >= config.vocab_size) {
        return Err(ModelError::IdOutOfRange { id });
    }
    Ok(())
}

pub(crate) struct DropoutState<'r> {
    pub rng: &'r mut ChaCha8Rng,
    pub rate: f64,
}

struct Builder<'a, 'r> {
    graph: Graph,
    params: &'a ParameterSet,
    config: &'a ModelConfig,
    loaded: HashMap<usize, NodeId>,
    dropout: Option<DropoutState<'r>>,
}

impl<'a, 'r> Builder<'a, 'r> {
    fn new(
        params: &'a ParameterSet,
        config: &'a ModelConfig,
        dropout: Option<DropoutState<'r>>,
    ) -> Self {
        Builder {
            graph: Graph::new(),
            params,
            config,
            loaded: HashMap::new(),
            dropout,
        }
    }

    /// Loads a parameter tensor onto the tape once; repeated uses (the tied
    /// embedding) share one node so its gradient accumulates in one place.
    fn param_node(&mut self, name: &str) -> NodeId {
        let position = self.params.position(name);
        if let Some(&node) = self.loaded.get(&position) {
            return node;
        }
        let node = self
            .graph
            .param(self.params.tensors()[position].values.clone(), position);
        self.loaded.insert(position, node);
        node
    }

    fn apply_dropout(&mut self, x: NodeId) -> NodeId {
        let Some(state) = self.dropout.as_mut() else {
            return x;
        };
        if state.rate == 0.0 {
            return x;
        }
        let keep = 1.0 - state.rate;
        let dim = self.graph.value(x).raw_dim();
        let mut mask = Array2::zeros(dim);
        for v in mask.iter_mut() {
            *v = if state.rng.gen::<f64>() < state.rate {
                0.0
            } else {
                1.0 / keep
            };
        }
        let mask_node = self.graph.leaf(mask);
        self.graph.mul(x, mask_node)
    }

    fn rms(&mut self, x: NodeId, norm_name: &str) -> NodeId {
        let scale = self.param_node(norm_name);
        self.graph.rms_norm(x, scale)
    }

    /// Multi-head attention. `bias` carries the stack's relative-bias table
    /// node and the precomputed bucket matrix; cross-attention passes none.
    fn attention(
        &mut self,
        q_src: NodeId,
        kv_src: NodeId,
        prefix: &str,
        mask: &Array2<f64>,
        bias: Option<(NodeId, &[usize])>,
    ) -> NodeId {
        let wq = self.param_node(&format!("{prefix}.q"));
        let wk = self.param_node(&format!("{prefix}.k"));
        let wv = self.param_node(&format!("{prefix}.v"));
        let wo = self.param_node(&format!("{prefix}.o"));
        let q = self.graph.matmul(q_src, wq);
        let k = self.graph.matmul(kv_src, wk);
        let v = self.graph.matmul(kv_src, wv);
        let n_k = mask.ncols();
        let mask_node = self.graph.leaf(mask.clone());
        let d_kv = self.config.d_kv;
        let mut heads = Vec::with_capacity(self.config.n_heads);
        for h in 0..self.config.n_heads {
            let qh = self.graph.slice_cols(q, h * d_kv, d_kv);
            let kh = self.graph.slice_cols(k, h * d_kv, d_kv);
            let vh = self.graph.slice_cols(v, h * d_kv, d_kv);
            let mut scores = self.graph.matmul_nt(qh, kh);
            if let Some((table, buckets)) = bias {
                let b = self.graph.bucket_bias(table, h, buckets, n_k);
                scores = self.graph.add(scores, b);
            }
            scores = self.graph.add(scores, mask_node);
            let probs = self.graph.softmax_rows(scores);
            let probs = self.apply_dropout(probs);
            heads.push(self.graph.matmul(probs, vh));
        }
        let merged = self.graph.concat_cols(&heads);
        let out = self.graph.matmul(merged, wo);
        self.apply_dropout(out)
    }

    fn ffn(&mut self, x: NodeId, prefix: &str) -> NodeId {
        let wg = self.param_node(&format!("{prefix}.wg"));
        let wi = self.param_node(&format!("{prefix}.wi"));
        let wo = self.param_node(&format!("{prefix}.wo"));
        let gate_lin = self.graph.matmul(x, wg);
        let gate = self.graph.gelu(gate_lin);
        let lin = self.graph.matmul(x, wi);
        let prod = self.graph.mul(gate, lin);
        let out = self.graph.matmul(prod, wo);
        self.apply_dropout(out)
    }

    fn encoder(&mut self, enc_ids: &[u32]) -> NodeId {
        let embedding = self.param_node("embedding");
        let rows: Vec<usize> = enc_ids.iter().map(|&id| id as usize).collect();
        let mut x = self.graph.gather_rows(embedding, &rows);
        x = self.apply_dropout(x);

        let n = enc_ids.len();
        let mask = key_pad_mask(n, enc_ids);
        let buckets = bucket_matrix(n, n, true, self.config);
        let table = self.param_node("enc.rel_bias");
        for layer in 0..self.config.n_encoder_layers {
            let normed = self.rms(x, &format!("enc.{layer}.attn_norm"));
            let att = self.attention(
                normed,
                normed,
                &format!("enc.{layer}.attn"),
                &mask,
                Some((table, &buckets)),
            );
            x = self.graph.add(x, att);
            let normed = self.rms(x, &format!("enc.{layer}.ffn_norm"));
            let ff = self.ffn(normed, &format!("enc.{layer}.ffn"));
            x = self.graph.add(x, ff);
        }
        let out = self.rms(x, "enc.final_norm");
        self.apply_dropout(out)
    }

    fn decoder(&mut self, dec_ids: &[u32], enc_out: NodeId, enc_ids: &[u32]) -> NodeId {
        let embedding = self.param_node("embedding");
        let rows: Vec<usize> = dec_ids.iter().map(|&id| id as usize).collect();
        let mut x = self.graph.gather_rows(embedding, &rows);
        x = self.apply_dropout(x);

        let n = dec_ids.len();
        let self_mask = causal_mask(n);
        let cross_mask = key_pad_mask(n, enc_ids);
        let buckets = bucket_matrix(n, n, false, self.config);
        let table = self.param_node("dec.rel_bias");
        for layer in 0..self.config.n_decoder_layers {
            let normed = self.rms(x, &format!("dec.{layer}.self_norm"));
            let att = self.attention(
                normed,
                normed,
                &format!("dec.{layer}.self_attn"),
                &self_mask,
                Some((table, &buckets)),
            );
            x = self.graph.add(x, att);
            let normed = self.rms(x, &format!("dec.{layer}.cross_norm"));
            let cross = self.attention(
                normed,
                enc_out,
                &format!("dec.{layer}.cross_attn"),
                &cross_mask,
                None,
            );
            x = self.graph.add(x, cross);
            let normed = self.rms(x, &format!("dec.{layer}.ffn_norm"));
            let ff = self.ffn(normed, &format!("dec.{layer}.ffn"));
            x = self.graph.add(x, ff);
        }
        let out = self.rms(x, "dec.final_norm");
        let out = self.apply_dropout(out);
        let scaled = self
            .graph
            .scale(out, (self.config.d_model as f64).powf(-0.5));
        self.graph.matmul_nt(scaled, embedding)
    }
}

/// Builds the full encoder-decoder tape and returns it with the logits node
/// (`decoder positions x vocab`).
pub(crate) fn build_logits(
    params: &ParameterSet,
    config: &ModelConfig,
    enc_ids: &[u32],
    dec_ids: &[u32],
    dropout: Option<DropoutState<'_>>,
) -> Result<(Graph, NodeId), ModelError> {
    config.validate()?;
    validate_ids(enc_ids, config)?;
    validate_ids(dec_ids, config)?;
    let mut builder = Builder::new(params, config, dropout);
    let enc_out = builder.encoder(enc_ids);
    let logits = builder.decoder(dec_ids, enc_out, enc_ids);
    Ok((builder.graph, logits))
}

/// Inference forward pass: logits of shape `(decoder length, vocab)`.
///
/// Dropout is always off here; the decoder sees positions causally and the
/// encoder output does not depend on `dec_ids`.
pub fn forward(
    params: &ParameterSet,
    config: &ModelConfig,
    enc_ids: &[u32],
    dec_ids: &[u32],
) -> Result<Array2<f64>, ModelError> {
    let (graph, logits) = build_logits(params, config, enc_ids, dec_ids, None)?;
    Ok(graph.value(logits).clone())
}

/// Encoder output cached for repeated decoding steps.
#[derive(Debug, Clone)]
pub struct EncodedInput {
    /// Final encoder hidden states, `(encoder length, d_model)`.
    pub output: Array2<f64>,
    /// The encoder ids, kept for cross-attention pad masking.
    pub enc_ids: Vec<u32>,
}

/// Runs the encoder once so decoding can reuse its output every step.
pub fn encode_input(
    params: &ParameterSet,
    config: &ModelConfig,
    enc_ids: &[u32],
) -> Result<EncodedInput, ModelError> {
    config.validate()?;
    validate_ids(enc_ids, config)?;
    let mut builder = Builder::new(params, config, None);
    let enc_out = builder.encoder(enc_ids);
    Ok(EncodedInput {
        output: builder.graph.value(enc_out).clone(),
        enc_ids: enc_ids.to_vec(),
    })
}

/// Decoder-only forward pass against a cached [`EncodedInput`].
pub fn decoder_logits(
    params: &ParameterSet,
    config: &ModelConfig,
    encoded: &EncodedInput,
    dec_ids: &[u32],
) -> Result<Array2<f64>, ModelError> {
    config.validate()?;
    validate_ids(dec_ids, config)?;
    let mut builder = Builder::new(params, config, None);
    let enc_node = builder.graph.leaf(encoded.output.clone());
    let logits = builder.decoder(dec_ids, enc_node, &encoded.enc_ids);
    Ok(builder.graph.value(logits).clone())
}

/// Mean token-level cross-entropy over non-pad targets.
///
/// `logits` rows pair with `target_ids`; positions whose target is pad are
/// excluded from the mean. Uniform logits give exactly `ln(vocab)`.
pub fn loss(logits: &Array2<f64>, target_ids: &[u32]) -> Result<f64, ModelError> {
    if logits.nrows() != target_ids.len() {
        return Err(ModelError::LengthMismatch {
            logits_rows: logits.nrows(),
            target_len: target_ids.len(),
        });
    }
    if let Some(&id) = target_ids
        .iter()
        .find(|&&id| id as usize >= logits.ncols())
    {
        return Err(ModelError::IdOutOfRange { id });
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (row, &target) in logits.rows().into_iter().zip(target_ids.iter()) {
        if target == vocab::PAD_ID {
            continue;
        }
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        total += max + log_sum - row[target as usize];
        count += 1;
    }
    if count == 0 {
        return Err(ModelError::AllPadTarget);
    }
    Ok(total / count as f64)
}

/// Teacher-forced loss and per-tensor gradients for one example.
///
/// The decoder input is the target sequence shifted right behind a leading
/// pad id. Returns the mean cross-entropy over non-pad target positions and
/// one gradient array per parameter tensor, aligned with
/// [`ParameterSet::tensors`] order.
pub fn loss_and_gradients(
    params: &ParameterSet,
    config: &ModelConfig,
    enc_ids: &[u32],
    target_ids: &[u32],
) -> Result<(f64, Vec<Array2<f64>>), ModelError> {
    if target_ids.is_empty() {
        return Err(ModelError::EmptySequence);
    }
    if target_ids.iter().all(|&id| id == vocab::PAD_ID) {
        return Err(ModelError::AllPadTarget);
    }
    if let Some(&id) = target_ids
        .iter()
        .find(|&&id| id as usize >= config.vocab_size)
    {
        return Err(ModelError::IdOutOfRange { id });
    }
    let dec_in: Vec<u32> = std::iter::once(vocab::PAD_ID)
        .chain(target_ids.iter().copied())
        .take(target_ids.len())
        .collect();
    let (mut graph, logits) = build_logits(params, config, enc_ids, &dec_in, None)?;
    let loss_node = graph.cross_entropy(logits, target_ids, vocab::PAD_ID);
    let value = graph.value(loss_node)[(0, 0)];
    graph.backward(loss_node);
    let mut grads: Vec<Array2<f64>> = params
        .tensors()
        .iter()
        .map(|t| Array2::zeros(t.values.raw_dim()))
        .collect();
    for (position, grad) in graph.param_grads() {
        grads[position] += grad;
    }
    Ok((value, grads))
}

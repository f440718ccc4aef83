//! Reverse-mode autodiff tape over 2-D `f64` tensors.
//!
//! Each forward pass builds a fresh [`Graph`]: operations execute eagerly,
//! push one node onto the tape, and return a [`NodeId`]. Creation order is a
//! topological order, so [`Graph::backward`] walks the tape once in reverse,
//! accumulating gradients into every node. Parameter nodes remember which
//! model tensor they were loaded from so the trainer can drain
//! per-parameter gradients after the walk.
//!
//! The op set is exactly what the encoder-decoder model needs: matrix
//! products (plain and transposed-right), elementwise add/multiply, constant
//! scaling, tanh-approximation GELU, RMS normalization, masked row softmax,
//! column slicing/concatenation for attention heads, row gathering for
//! embeddings, bucketed bias materialization for relative positions, and a
//! mean cross-entropy head. Everything is plain `f64` with no hidden
//! parallelism, so runs are bitwise reproducible.

use ndarray::{Array2, Axis};

/// Handle to a node on the tape.
pub type NodeId = usize;

const GELU_COEF: f64 = 0.044_715;

fn gelu_scalar(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + GELU_COEF * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_deriv(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + GELU_COEF * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * GELU_COEF * x * x)
}

enum Op {
    Leaf,
    MatMul { a: NodeId, b: NodeId },
    MatMulNt { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Mul { a: NodeId, b: NodeId },
    Scale { a: NodeId, factor: f64 },
    Gelu { a: NodeId },
    RmsNorm { a: NodeId, scale: NodeId, inv_rms: Vec<f64> },
    SoftmaxRows { a: NodeId },
    ConcatCols { parts: Vec<NodeId> },
    SliceCols { a: NodeId, start: usize },
    GatherRows { a: NodeId, rows: Vec<usize> },
    BucketBias { table: NodeId, row: usize, buckets: Vec<usize> },
    SumAll { a: NodeId },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        include: Vec<bool>,
        probs: Array2<f64>,
        count: usize,
    },
}

struct Node {
    value: Array2<f64>,
    grad: Array2<f64>,
    op: Op,
}

/// The tape. See the module docs for the op inventory.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: Vec<(NodeId, usize)>,
}

impl Graph {
    /// Creates an empty tape.
    pub fn new() -> Self {
        Graph::default()
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> NodeId {
        let grad = Array2::zeros(value.raw_dim());
        self.nodes.push(Node { value, grad, op });
        self.nodes.len() - 1
    }

    /// Forward value of a node.
    pub fn value(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id].value
    }

    /// Accumulated gradient of a node (zeros before [`Graph::backward`]).
    pub fn grad(&self, id: NodeId) -> &Array2<f64> {
        &self.nodes[id].grad
    }

    /// Constant input.
    pub fn leaf(&mut self, value: Array2<f64>) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Parameter input; `param_index` keys the gradient in
    /// [`Graph::param_grads`].
    pub fn param(&mut self, value: Array2<f64>, param_index: usize) -> NodeId {
        let id = self.push(value, Op::Leaf);
        self.params.push((id, param_index));
        id
    }

    /// `a @ b`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a].value.dot(&self.nodes[b].value);
        self.push(value, Op::MatMul { a, b })
    }

    /// `a @ b.T`.
    pub fn matmul_nt(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.nodes[a].value.dot(&self.nodes[b].value.t());
        self.push(value, Op::MatMulNt { a, b })
    }

    /// Elementwise sum of two same-shape nodes.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = &self.nodes[a].value + &self.nodes[b].value;
        self.push(value, Op::Add { a, b })
    }

    /// Elementwise product of two same-shape nodes.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = &self.nodes[a].value * &self.nodes[b].value;
        self.push(value, Op::Mul { a, b })
    }

    /// Multiplication by a constant.
    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let value = &self.nodes[a].value * factor;
        self.push(value, Op::Scale { a, factor })
    }

    /// Tanh-approximation GELU, applied elementwise.
    pub fn gelu(&mut self, a: NodeId) -> NodeId {
        let value = self.nodes[a].value.mapv(gelu_scalar);
        self.push(value, Op::Gelu { a })
    }

    /// RMS normalization over each row with a learned per-column scale.
    ///
    /// `y[i][j] = x[i][j] / sqrt(mean_j(x[i][j]^2) + 1e-6) * scale[0][j]`,
    /// where `scale` is a `(1, d)` parameter node.
    pub fn rms_norm(&mut self, a: NodeId, scale: NodeId) -> NodeId {
        let x = &self.nodes[a].value;
        let s = &self.nodes[scale].value;
        let d = x.ncols() as f64;
        let inv_rms: Vec<f64> = x
            .rows()
            .into_iter()
            .map(|row| {
                let mean_sq = row.iter().map(|v| v * v).sum::<f64>() / d;
                1.0 / (mean_sq + 1e-6).sqrt()
            })
            .collect();
        let mut value = x.clone();
        for (i, mut row) in value.rows_mut().into_iter().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v *= inv_rms[i] * s[(0, j)];
            }
        }
        self.push(value, Op::RmsNorm { a, scale, inv_rms })
    }

    /// Row-wise softmax with max-subtraction for stability. Masking is done
    /// by adding a large negative constant to masked entries beforehand.
    pub fn softmax_rows(&mut self, a: NodeId) -> NodeId {
        let mut value = self.nodes[a].value.clone();
        for mut row in value.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        self.push(value, Op::SoftmaxRows { a })
    }

    /// Horizontal concatenation of same-height nodes.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        let rows = self.nodes[parts[0]].value.nrows();
        let cols: usize = parts.iter().map(|&p| self.nodes[p].value.ncols()).sum();
        let mut value = Array2::zeros((rows, cols));
        let mut at = 0;
        for &p in parts {
            let v = &self.nodes[p].value;
            value
                .slice_mut(ndarray::s![.., at..at + v.ncols()])
                .assign(v);
            at += v.ncols();
        }
        self.push(value, Op::ConcatCols { parts: parts.to_vec() })
    }

    /// Columns `[start, start + len)` of a node.
    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let value = self.nodes[a]
            .value
            .slice(ndarray::s![.., start..start + len])
            .to_owned();
        self.push(value, Op::SliceCols { a, start })
    }

    /// Row lookup: output row `i` is `a`'s row `rows[i]` (embedding gather).
    pub fn gather_rows(&mut self, a: NodeId, rows: &[usize]) -> NodeId {
        let value = self.nodes[a].value.select(Axis(0), rows);
        self.push(value, Op::GatherRows { a, rows: rows.to_vec() })
    }

    /// Materializes a relative-position bias matrix from one row of a
    /// `(heads, n_buckets)` table: `out[i][j] = table[row][buckets[i*cols+j]]`
    /// for an output of shape `(rows_out, cols)` with
    /// `buckets.len() == rows_out * cols`.
    pub fn bucket_bias(
        &mut self,
        table: NodeId,
        row: usize,
        buckets: &[usize],
        cols: usize,
    ) -> NodeId {
        let t = &self.nodes[table].value;
        let rows_out = buckets.len() / cols;
        let mut value = Array2::zeros((rows_out, cols));
        for i in 0..rows_out {
            for j in 0..cols {
                value[(i, j)] = t[(row, buckets[i * cols + j])];
            }
        }
        self.push(
            value,
            Op::BucketBias { table, row, buckets: buckets.to_vec() },
        )
    }

    /// Sum of all entries, as a `(1, 1)` node.
    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let value = Array2::from_elem((1, 1), self.nodes[a].value.sum());
        self.push(value, Op::SumAll { a })
    }

    /// Mean token cross-entropy of row-wise logits against `targets`,
    /// excluding positions where `targets[i] == ignore_id`, as a `(1, 1)`
    /// node. At least one position must be included.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[u32], ignore_id: u32) -> NodeId {
        let l = &self.nodes[logits].value;
        assert_eq!(l.nrows(), targets.len(), "one target per logits row");
        let mut probs = l.clone();
        for mut row in probs.rows_mut() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        let include: Vec<bool> = targets.iter().map(|&t| t != ignore_id).collect();
        let count = include.iter().filter(|&&x| x).count();
        assert!(count > 0, "cross_entropy needs at least one non-ignored target");
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if include[i] {
                total -= probs[(i, t as usize)].max(f64::MIN_POSITIVE).ln();
            }
        }
        let value = Array2::from_elem((1, 1), total / count as f64);
        self.push(
            value,
            Op::CrossEntropy {
                logits,
                targets: targets.iter().map(|&t| t as usize).collect(),
                include,
                probs,
                count,
            },
        )
    }

    /// Runs the reverse pass from `root`, which is seeded with an all-ones
    /// gradient (use a scalar node for a loss).
    pub fn backward(&mut self, root: NodeId) {
        self.nodes[root].grad.fill(1.0);
        for id in (0..self.nodes.len()).rev() {
            let grad = self.nodes[id].grad.clone();
            if grad.iter().all(|&g| g == 0.0) {
                continue;
            }
            // Ops read parent values immutably and accumulate into parent
            // grads; split_at_mut-style aliasing is avoided by cloning the
            // small pieces each op needs.
            match &self.nodes[id].op {
                Op::Leaf => {}
                Op::MatMul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = grad.dot(&self.nodes[b].value.t());
                    let db = self.nodes[a].value.t().dot(&grad);
                    self.nodes[a].grad += &da;
                    self.nodes[b].grad += &db;
                }
                Op::MatMulNt { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = grad.dot(&self.nodes[b].value);
                    let db = grad.t().dot(&self.nodes[a].value);
                    self.nodes[a].grad += &da;
                    self.nodes[b].grad += &db;
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    self.nodes[a].grad += &grad;
                    self.nodes[b].grad += &grad;
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = &grad * &self.nodes[b].value;
                    let db = &grad * &self.nodes[a].value;
                    self.nodes[a].grad += &da;
                    self.nodes[b].grad += &db;
                }
                Op::Scale { a, factor } => {
                    let (a, factor) = (*a, *factor);
                    self.nodes[a].grad.scaled_add(factor, &grad);
                }
                Op::Gelu { a } => {
                    let a = *a;
                    let da = &grad * &self.nodes[a].value.mapv(gelu_deriv);
                    self.nodes[a].grad += &da;
                }
                Op::RmsNorm { a, scale, inv_rms } => {
                    let (a, scale) = (*a, *scale);
                    let inv_rms = inv_rms.clone();
                    let x = self.nodes[a].value.clone();
                    let s = self.nodes[scale].value.clone();
                    let d = x.ncols() as f64;
                    let mut da = Array2::zeros(x.raw_dim());
                    let mut ds = Array2::zeros(s.raw_dim());
                    for i in 0..x.nrows() {
                        let r = inv_rms[i];
                        let mut dot = 0.0;
                        for j in 0..x.ncols() {
                            dot += grad[(i, j)] * s[(0, j)] * x[(i, j)];
                            ds[(0, j)] += grad[(i, j)] * x[(i, j)] * r;
                        }
                        let correction = r * r * r * dot / d;
                        for j in 0..x.ncols() {
                            da[(i, j)] = grad[(i, j)] * s[(0, j)] * r - x[(i, j)] * correction;
                        }
                    }
                    self.nodes[a].grad += &da;
                    self.nodes[scale].grad += &ds;
                }
                Op::SoftmaxRows { a } => {
                    let a = *a;
                    let y = self.nodes[id].value.clone();
                    let mut da = Array2::zeros(y.raw_dim());
                    for i in 0..y.nrows() {
                        let mut dot = 0.0;
                        for j in 0..y.ncols() {
                            dot += grad[(i, j)] * y[(i, j)];
                        }
                        for j in 0..y.ncols() {
                            da[(i, j)] = y[(i, j)] * (grad[(i, j)] - dot);
                        }
                    }
                    self.nodes[a].grad += &da;
                }
                Op::ConcatCols { parts } => {
                    let parts = parts.clone();
                    let mut at = 0;
                    for p in parts {
                        let w = self.nodes[p].value.ncols();
                        let piece = grad.slice(ndarray::s![.., at..at + w]).to_owned();
                        self.nodes[p].grad += &piece;
                        at += w;
                    }
                }
                Op::SliceCols { a, start } => {
                    let (a, start) = (*a, *start);
                    let w = grad.ncols();
                    let mut target = self.nodes[a]
                        .grad
                        .slice_mut(ndarray::s![.., start..start + w]);
                    target += &grad;
                }
                Op::GatherRows { a, rows } => {
                    let (a, rows) = (*a, rows.clone());
                    for (i, r) in rows.into_iter().enumerate() {
                        let mut target = self.nodes[a].grad.row_mut(r);
                        target += &grad.row(i);
                    }
                }
                Op::BucketBias { table, row, buckets } => {
                    let (table, row) = (*table, *row);
                    let buckets = buckets.clone();
                    let cols = grad.ncols();
                    for i in 0..grad.nrows() {
                        for j in 0..cols {
                            self.nodes[table].grad[(row, buckets[i * cols + j])] +=
                                grad[(i, j)];
                        }
                    }
                }
                Op::SumAll { a } => {
                    let a = *a;
                    let g = grad[(0, 0)];
                    self.nodes[a].grad.mapv_inplace(|v| v + g);
                }
                Op::CrossEntropy {
                    logits,
                    targets,
                    include,
                    probs,
                    count,
                } => {
                    let logits = *logits;
                    let g = grad[(0, 0)] / *count as f64;
                    let mut dl = probs.clone();
                    for (i, (&t, &inc)) in targets.iter().zip(include.iter()).enumerate() {
                        if inc {
                            dl[(i, t)] -= 1.0;
                            let mut row = dl.row_mut(i);
                            row *= g;
                        } else {
                            dl.row_mut(i).fill(0.0);
                        }
                    }
                    self.nodes[logits].grad += &dl;
                }
            }
        }
    }

    /// Parameter gradients accumulated by the last backward pass, keyed by
    /// the `param_index` passed to [`Graph::param`].
    pub fn param_grads(&self) -> impl Iterator<Item = (usize, &Array2<f64>)> {
        self.params.iter().map(|&(node, idx)| (idx, &self.nodes[node].grad))
    }
}

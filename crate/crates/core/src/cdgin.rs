//! Dual-stream GIN message passing, attention readout, the shared projection
//! head and the cross-window / cross-stream contrastive loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{Axis, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Norm floor used before cosine similarity.
pub const NORM_FLOOR: f64 = 1e-12;

/// Which similarity graph a GIN stack runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    /// Pearson correlation graph.
    Correlation,
    /// Negative-distance graph.
    Distance,
}

impl Stream {
    pub fn tag(self) -> &'static str {
        match self {
            Stream::Correlation => "r",
            Stream::Distance => "d",
        }
    }
}

pub fn layer_prefix(layer: usize, stream: Stream) -> String {
    format!("cdgin.layer{layer}.{}", stream.tag())
}

pub fn init_gin_layer<R: Rng>(store: &mut ParamStore, prefix: &str, dim: usize, rng: &mut R) {
    store.insert(format!("{prefix}.eps"), Tensor::zeros(vec![1]));
    store.insert(format!("{prefix}.w"), Tensor::glorot(vec![dim, dim], dim, dim, rng));
    store.insert(format!("{prefix}.mlp.w1"), Tensor::glorot(vec![dim, dim], dim, dim, rng));
    store.insert(format!("{prefix}.mlp.b1"), Tensor::zeros(vec![dim]));
    store.insert(format!("{prefix}.mlp.w2"), Tensor::glorot(vec![dim, dim], dim, dim, rng));
    store.insert(format!("{prefix}.mlp.b2"), Tensor::zeros(vec![dim]));
    store.insert(format!("{prefix}.readout.w_q"), Tensor::glorot(vec![dim, dim], dim, dim, rng));
    store.insert(format!("{prefix}.readout.w_k"), Tensor::glorot(vec![dim, dim], dim, dim, rng));
}

/// `tanh(x W1 + b1) W2 + b2`.
pub fn mlp2(tape: &mut Tape, params: &ParamStore, prefix: &str, x: Var) -> Var {
    let w1 = tape.param(params, &format!("{prefix}.w1"));
    let b1 = tape.param(params, &format!("{prefix}.b1"));
    let w2 = tape.param(params, &format!("{prefix}.w2"));
    let b2 = tape.param(params, &format!("{prefix}.b2"));
    let h = tape.matmul(x, w1);
    let h = tape.add(h, b1);
    let h = tape.tanh(h);
    let out = tape.matmul(h, w2);
    tape.add(out, b2)
}

#[derive(Clone, Copy, Debug)]
pub struct GinOutput {
    /// `M x D` updated node features, input to the next layer.
    pub nodes: Var,
    /// `1 x D` graph readout.
    pub readout: Var,
    /// `1 x M` readout attention over nodes.
    pub attention: Var,
}

/// Node update `MLP((eps * I + A) H W)` followed by the attention readout.
pub fn gin_layer(tape: &mut Tape, params: &ParamStore, prefix: &str, h_in: Var, adjacency: Var) -> Result<GinOutput> {
    let (m, d) = tape.shape(h_in);
    if tape.shape(adjacency) != (m, m) {
        return Err(Error::Shape(format!(
            "`{prefix}`: adjacency {:?} for {m} nodes",
            tape.shape(adjacency)
        )));
    }
    let w = tape.param(params, &format!("{prefix}.w"));
    if tape.shape(w).0 != d {
        return Err(Error::Shape(format!("`{prefix}`: node features have {d} dims, W is {:?}", tape.shape(w))));
    }
    let eps = tape.param(params, &format!("{prefix}.eps"));
    let hw = tape.matmul(h_in, w);
    let own = tape.mul(eps, hw);
    let neighbours = tape.matmul(adjacency, hw);
    let aggregated = tape.add(own, neighbours);
    let nodes = mlp2(tape, params, &format!("{prefix}.mlp"), aggregated);
    let (readout, attention) = attention_readout(tape, params, &format!("{prefix}.readout"), nodes);
    Ok(GinOutput {
        nodes,
        readout,
        attention,
    })
}

/// Query from the node mean, one key per node, scaled dot-product softmax
/// over nodes; returns `(1 x D readout, 1 x M weights)`.
pub fn attention_readout(tape: &mut Tape, params: &ParamStore, prefix: &str, nodes: Var) -> (Var, Var) {
    let d = tape.shape(nodes).1;
    let w_q = tape.param(params, &format!("{prefix}.w_q"));
    let w_k = tape.param(params, &format!("{prefix}.w_k"));
    let mean = tape.mean_axis(nodes, Axis::Rows);
    let query = tape.matmul(mean, w_q);
    let keys = tape.matmul(nodes, w_k);
    let keys_t = tape.transpose(keys);
    let logits = tape.matmul(query, keys_t);
    let logits = tape.scale(logits, 1.0 / (d as f64).sqrt());
    let weights = tape.softmax_rows(logits);
    (tape.matmul(weights, nodes), weights)
}

pub fn init_projection<R: Rng>(store: &mut ParamStore, dim: usize, proj_dim: usize, rng: &mut R) {
    store.insert("projection.w1", Tensor::glorot(vec![dim, proj_dim], dim, proj_dim, rng));
    store.insert("projection.b1", Tensor::zeros(vec![proj_dim]));
    store.insert("projection.w2", Tensor::glorot(vec![proj_dim, proj_dim], proj_dim, proj_dim, rng));
    store.insert("projection.b2", Tensor::zeros(vec![proj_dim]));
}

/// Shared projection head applied to every readout of both streams.
pub fn project(tape: &mut Tape, params: &ParamStore, h: Var) -> Var {
    mlp2(tape, params, "projection", h)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveConfig {
    /// Offset of the positive window.
    pub delta: usize,
    /// Weight of the contrastive term in the total loss.
    pub alpha: f64,
}

impl ContrastiveConfig {
    pub fn validate(&self, windows: usize) -> Result<()> {
        if self.delta < 1 {
            return Err(Error::ContrastiveConfig("delta must be >= 1".into()));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::ContrastiveConfig(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        if windows < self.delta + 1 {
            return Err(Error::ContrastiveConfig(format!(
                "{windows} window(s) cannot form positives at offset {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Rows scaled to unit L2 norm (norm floored at [`NORM_FLOOR`]).
fn unit_rows(tape: &mut Tape, z: Var) -> Var {
    let sq = tape.mul(z, z);
    let norms = tape.sum_axis(sq, Axis::Cols);
    let norms = tape.sqrt(norms);
    let norms = tape.floor_at(norms, NORM_FLOOR);
    tape.div(z, norms)
}

/// Cosine similarity between every row of `a` and every row of `b`.
pub fn cosine_matrix(tape: &mut Tape, a: Var, b: Var) -> Var {
    let ua = unit_rows(tape, a);
    let ub = unit_rows(tape, b);
    let ub_t = tape.transpose(ub);
    tape.matmul(ua, ub_t)
}

/// Same-stream negatives exclude the anchor and its `±delta` neighbours.
fn negative_mask(n: usize, delta: usize) -> Matrix {
    Matrix::from_fn(n, n, |i, j| {
        let near = j == i || j + delta == i || i + delta == j;
        if near {
            0.0
        } else {
            1.0
        }
    })
}

/// `1 / (number of positives of row i)` at each positive `(i, i ± delta)`.
fn positive_weights(n: usize, delta: usize) -> Matrix {
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        let pos: Vec<usize> = [i.checked_sub(delta), Some(i + delta).filter(|&j| j < n)]
            .into_iter()
            .flatten()
            .collect();
        for &p in &pos {
            w[(i, p)] = 1.0 / pos.len() as f64;
        }
    }
    w
}

/// Contrastive loss over per-window projections of each stream (`N x D_p`
/// each, all with the same `N`).
///
/// Each `(stream, window i)` is an anchor. Its positives are windows
/// `i ± delta` of the same stream; each positive's term is
/// `-log(exp(s_pos) / (sum_j exp(s(z_i, other_j)) + sum_{j not in {i, i±delta}}
/// exp(s(z_i, z_j)) + exp(s_pos)))`, averaged over the anchor's positives.
/// The loss is the mean over all anchors of all streams. With a single
/// stream the cross-stream sum is empty.
pub fn contrastive_loss(tape: &mut Tape, streams: &[Var], cfg: &ContrastiveConfig) -> Result<Var> {
    let n = tape.shape(streams[0]).0;
    if streams.iter().any(|&z| tape.shape(z).0 != n) {
        return Err(Error::Shape("streams have different window counts".into()));
    }
    cfg.validate(n)?;
    let neg_mask = tape.constant(negative_mask(n, cfg.delta));
    let pos_weight = tape.constant(positive_weights(n, cfg.delta));
    let mut per_stream = Vec::with_capacity(streams.len());
    for (s, &anchor) in streams.iter().enumerate() {
        let same = cosine_matrix(tape, anchor, anchor);
        let same_exp = tape.exp(same);
        let masked = tape.mul(same_exp, neg_mask);
        let mut base = tape.sum_axis(masked, Axis::Cols);
        for (o, &other) in streams.iter().enumerate() {
            if o == s {
                continue;
            }
            let cross = cosine_matrix(tape, anchor, other);
            let cross_exp = tape.exp(cross);
            let cross_sum = tape.sum_axis(cross_exp, Axis::Cols);
            base = tape.add(base, cross_sum);
        }
        // Entry (i, p) holds the full denominator for positive p of anchor i.
        let denom = tape.add(same_exp, base);
        let log_denom = tape.log(denom);
        let terms = tape.sub(log_denom, same);
        let weighted = tape.mul(terms, pos_weight);
        per_stream.push(tape.sum(weighted));
    }
    let mut total = per_stream[0];
    for &l in &per_stream[1..] {
        total = tape.add(total, l);
    }
    Ok(tape.scale(total, 1.0 / (n * streams.len()) as f64))
}

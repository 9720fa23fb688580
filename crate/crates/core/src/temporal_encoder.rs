//! Single-layer LSTM over the ROI sequence and per-window node features.
//!
//! Node `v` of window `t` gets `W_M [one_hot(v) || h_end(t)]`, where `h_end(t)`
//! is the LSTM hidden state at the window's last timepoint. One LSTM pass
//! serves every window of a subject and both graph streams.

use rand::Rng;

use crate::diffcore::{ParamStore, Tape, Tensor, Var};
use crate::dynamic_fc::Window;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub hidden_dim: usize,
}

pub fn lstm_param_names(prefix: &str) -> [String; 3] {
    [
        format!("{prefix}.w_ih"),
        format!("{prefix}.w_hh"),
        format!("{prefix}.bias"),
    ]
}

/// Gate blocks along the `4D` axis are ordered input, forget, cell, output.
pub fn init_lstm<R: Rng>(store: &mut ParamStore, prefix: &str, inputs: usize, hidden: usize, rng: &mut R) {
    let [w_ih, w_hh, bias] = lstm_param_names(prefix);
    store.insert(w_ih, Tensor::glorot(vec![inputs, 4 * hidden], inputs, 4 * hidden, rng));
    store.insert(w_hh, Tensor::glorot(vec![hidden, 4 * hidden], hidden, 4 * hidden, rng));
    store.insert(bias, Tensor::zeros(vec![4 * hidden]));
}

/// Runs the recurrence over every row of `x` (`T x M`) and returns the
/// `1 x D` hidden state at each timepoint.
pub fn lstm_forward(tape: &mut Tape, params: &ParamStore, prefix: &str, x: &Matrix) -> Result<Vec<Var>> {
    let [w_ih, w_hh, bias] = lstm_param_names(prefix);
    let w_ih = tape.param(params, &w_ih);
    let w_hh = tape.param(params, &w_hh);
    let bias = tape.param(params, &bias);
    let (rows, gates) = tape.shape(w_hh);
    let d = rows;
    if gates != 4 * d || tape.shape(w_ih) != (x.cols(), 4 * d) {
        return Err(Error::Shape(format!(
            "lstm `{prefix}`: input has {} ROIs, weights are {:?} / {:?}",
            x.cols(),
            tape.shape(w_ih),
            tape.shape(w_hh)
        )));
    }
    let xs = tape.constant(x.clone());
    let projected = tape.matmul(xs, w_ih);
    let mut h = tape.constant(Matrix::zeros(1, d));
    let mut c = tape.constant(Matrix::zeros(1, d));
    let mut hidden = Vec::with_capacity(x.rows());
    for t in 0..x.rows() {
        let xt = tape.slice_rows(projected, t, 1);
        let rec = tape.matmul(h, w_hh);
        let pre = tape.add(xt, rec);
        let pre = tape.add(pre, bias);
        let i_gate = tape.slice_cols(pre, 0, d);
        let f_gate = tape.slice_cols(pre, d, d);
        let g_gate = tape.slice_cols(pre, 2 * d, d);
        let o_gate = tape.slice_cols(pre, 3 * d, d);
        let i_gate = tape.sigmoid(i_gate);
        let f_gate = tape.sigmoid(f_gate);
        let g_gate = tape.tanh(g_gate);
        let o_gate = tape.sigmoid(o_gate);
        let keep = tape.mul(f_gate, c);
        let write = tape.mul(i_gate, g_gate);
        c = tape.add(keep, write);
        let squashed = tape.tanh(c);
        h = tape.mul(o_gate, squashed);
        hidden.push(h);
    }
    tape.ensure_finite()?;
    Ok(hidden)
}

/// `M x D` node features for each window from the hidden state at its
/// endpoint. `w_m` is `D x (M + D)`.
pub fn assemble_node_features(tape: &mut Tape, hidden: &[Var], windows: &[Window], w_m: Var, rois: usize) -> Result<Vec<Var>> {
    let (d, width) = tape.shape(w_m);
    if width != rois + d {
        return Err(Error::Shape(format!(
            "W_M is {d}x{width}, expected {d}x{}",
            rois + d
        )));
    }
    let one_hot = tape.constant(Matrix::identity(rois));
    let zeros = tape.constant(Matrix::zeros(rois, d));
    let w_t = tape.transpose(w_m);
    windows
        .iter()
        .map(|w| {
            let end = w.end();
            let &h = hidden.get(end).ok_or_else(|| {
                Error::Shape(format!(
                    "window {} ends at {end}, only {} hidden states",
                    w.index,
                    hidden.len()
                ))
            })?;
            if tape.shape(h) != (1, d) {
                return Err(Error::Shape(format!("hidden state is {:?}, expected (1, {d})", tape.shape(h))));
            }
            let repeated = tape.add(zeros, h);
            let joined = tape.concat_cols(&[one_hot, repeated]);
            Ok(tape.matmul(joined, w_t))
        })
        .collect()
}

//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every primitive as it is evaluated. Values are computed
//! eagerly; [`Tape::backward`] walks the record in reverse and accumulates
//! gradients into the [`ParamStore`] tensors that were read through
//! [`Tape::param`].
//!
//! Binary elementwise primitives broadcast along any dimension of size 1, so a
//! `1 x c` bias can be added to an `r x c` matrix and a `1 x 1` scalar can
//! scale anything.

use std::collections::HashMap;

use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Floor applied inside [`Tape::log`].
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Which axis a reduction collapses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Reduce over rows: `r x c -> 1 x c`.
    Rows,
    /// Reduce over columns: `r x c -> r x 1`.
    Cols,
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param(String),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    FloorAt(Var, f64),
    SoftmaxRows(Var),
    Sum(Var),
    SumAxis(Var),
    MeanAxis(Var, Axis),
    MaxAxis(Var, Axis, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Transpose(Var),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Conv1d {
        input: Var,
        kernel: Var,
        width: usize,
        pad: usize,
    },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Constant => "constant",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Sqrt(_) => "sqrt",
            Op::FloorAt(..) => "floor_at",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::Sum(_) => "sum",
            Op::SumAxis(..) => "sum_axis",
            Op::MeanAxis(..) => "mean_axis",
            Op::MaxAxis(..) => "max_axis",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::Transpose(_) => "transpose",
            Op::SliceRows(..) => "slice_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::Conv1d { .. } => "conv1d",
        }
    }
}

struct Node {
    value: Matrix,
    op: Op,
}

/// Records a computation for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    first_nonfinite: Option<usize>,
}

fn broadcast_shape(a: (usize, usize), b: (usize, usize), op: &str) -> (usize, usize) {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            x
        } else if x == 1 {
            y
        } else {
            panic!("{op}: cannot broadcast {a:?} with {b:?}")
        }
    };
    (dim(a.0, b.0), dim(a.1, b.1))
}

fn broadcast_get(m: &Matrix, i: usize, j: usize) -> f64 {
    let r = if m.rows() == 1 { 0 } else { i };
    let c = if m.cols() == 1 { 0 } else { j };
    m[(r, c)]
}

/// Sums a broadcast gradient back down to `shape`.
fn reduce_to(grad: &Matrix, shape: (usize, usize)) -> Matrix {
    if grad.shape() == shape {
        return grad.clone();
    }
    let mut out = Matrix::zeros(shape.0, shape.1);
    for i in 0..grad.rows() {
        for j in 0..grad.cols() {
            let r = if shape.0 == 1 { 0 } else { i };
            let c = if shape.1 == 1 { 0 } else { j };
            out[(r, c)] += grad[(i, j)];
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "scalar() on non-scalar node");
        m[(0, 0)]
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        if self.first_nonfinite.is_none() && !value.is_finite() {
            self.first_nonfinite = Some(self.nodes.len());
        }
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Fails with the name of the first primitive that produced a NaN or Inf.
    pub fn ensure_finite(&self) -> Result<()> {
        match self.first_nonfinite {
            None => Ok(()),
            Some(idx) => Err(Error::Numerics {
                op: self.nodes[idx].op.name().to_string(),
            }),
        }
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// Reads a trainable tensor. Repeated reads of the same name share one node.
    ///
    /// # Panics
    /// If `name` is not in `store`.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Var {
        if let Some(&v) = self.params.get(name) {
            return v;
        }
        let tensor = store
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
        let v = self.push(tensor.to_matrix(), Op::Param(name.to_string()));
        self.params.insert(name.to_string(), v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    fn broadcast_binary(&self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Matrix {
        let (am, bm) = (self.value(a), self.value(b));
        let (r, c) = broadcast_shape(am.shape(), bm.shape(), name);
        Matrix::from_fn(r, c, |i, j| f(broadcast_get(am, i, j), broadcast_get(bm, i, j)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.broadcast_binary(a, b, "add", |x, y| x + y);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.broadcast_binary(a, b, "sub", |x, y| x - y);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.broadcast_binary(a, b, "mul", |x, y| x * y);
        self.push(value, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let value = self.broadcast_binary(a, b, "div", |x, y| x / y);
        self.push(value, Op::Div(a, b))
    }

    /// Multiplies by a fixed constant.
    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).scale(k);
        self.push(value, Op::Scale(a, k))
    }

    /// Adds a fixed constant.
    pub fn offset(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).map(|v| v + k);
        self.push(value, Op::Offset(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a))
    }

    /// Natural log with the argument floored at [`LOG_FLOOR`].
    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(LOG_FLOOR).ln());
        self.push(value, Op::Log(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        self.push(value, Op::Sqrt(a))
    }

    /// Elementwise `max(a, floor)`; gradient flows only where `a > floor`.
    pub fn floor_at(&mut self, a: Var, floor: f64) -> Var {
        let value = self.value(a).map(|v| v.max(floor));
        self.push(value, Op::FloorAt(a, floor))
    }

    /// Row-wise softmax, max-subtracted.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let row = x.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for (j, &v) in row.iter().enumerate() {
                let e = (v - max).exp();
                out[(i, j)] = e;
                total += e;
            }
            for j in 0..x.cols() {
                out[(i, j)] /= total;
            }
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    /// Sum of all entries, as `1 x 1`.
    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    pub fn sum_axis(&mut self, a: Var, axis: Axis) -> Var {
        let value = sum_along(self.value(a), axis);
        self.push(value, Op::SumAxis(a))
    }

    pub fn mean_axis(&mut self, a: Var, axis: Axis) -> Var {
        let x = self.value(a);
        let n = match axis {
            Axis::Rows => x.rows(),
            Axis::Cols => x.cols(),
        } as f64;
        let value = sum_along(x, axis).scale(1.0 / n);
        self.push(value, Op::MeanAxis(a, axis))
    }

    /// Max reduction. Ties route the gradient to the first maximal entry.
    pub fn max_axis(&mut self, a: Var, axis: Axis) -> Var {
        let x = self.value(a);
        let (value, argmax) = match axis {
            Axis::Rows => {
                let mut vals = Vec::with_capacity(x.cols());
                let mut idx = Vec::with_capacity(x.cols());
                for j in 0..x.cols() {
                    let (best, v) = (0..x.rows())
                        .map(|i| (i, x[(i, j)]))
                        .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
                    vals.push(v);
                    idx.push(best);
                }
                (Matrix::row_vector(vals), idx)
            }
            Axis::Cols => {
                let mut vals = Vec::with_capacity(x.rows());
                let mut idx = Vec::with_capacity(x.rows());
                for i in 0..x.rows() {
                    let (best, v) = x
                        .row(i)
                        .iter()
                        .copied()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
                    vals.push(v);
                    idx.push(best);
                }
                (Matrix::column_vector(vals), idx)
            }
        };
        self.push(value, Op::MaxAxis(a, axis, argmax))
    }

    /// Side-by-side concatenation; all parts share a row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows(), rows, "concat_cols row mismatch");
            for i in 0..rows {
                for j in 0..m.cols() {
                    out[(i, offset + j)] = m[(i, j)];
                }
            }
            offset += m.cols();
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Stacked concatenation; all parts share a column count.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols(), cols, "concat_rows column mismatch");
            data.extend_from_slice(m.as_slice());
            rows += m.rows();
        }
        self.push(Matrix::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let value = self.value(a).row_block(start, len);
        self.push(value, Op::SliceRows(a, start))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        let value = Matrix::from_fn(x.rows(), len, |i, j| x[(i, start + j)]);
        self.push(value, Op::SliceCols(a, start))
    }

    /// 1-D cross-correlation with zero padding `pad` and no bias.
    ///
    /// `input` is `channels x length`; `kernel` is `out_channels x
    /// (channels * width)` with each input channel's taps stored contiguously.
    /// Output is `out_channels x (length + 2*pad - width + 1)`.
    pub fn conv1d(&mut self, input: Var, kernel: Var, width: usize, pad: usize) -> Var {
        let (x, k) = (self.value(input), self.value(kernel));
        let (channels, length) = x.shape();
        assert_eq!(k.cols(), channels * width, "conv1d kernel shape mismatch");
        let out_len = length + 2 * pad + 1 - width;
        let mut out = Matrix::zeros(k.rows(), out_len);
        for o in 0..k.rows() {
            for t in 0..out_len {
                let mut acc = 0.0;
                for c in 0..channels {
                    for tap in 0..width {
                        let pos = t + tap;
                        if pos < pad || pos - pad >= length {
                            continue;
                        }
                        acc += k[(o, c * width + tap)] * x[(c, pos - pad)];
                    }
                }
                out[(o, t)] = acc;
            }
        }
        self.push(
            out,
            Op::Conv1d {
                input,
                kernel,
                width,
                pad,
            },
        )
    }

    /// Back-propagates from the scalar `loss`, adding `seed * dloss/dparam`
    /// into each parameter's gradient buffer. Gradients accumulate: call
    /// [`ParamStore::zero_grad`] between optimizer steps.
    pub fn backward(&self, loss: Var, store: &mut ParamStore, seed: f64) -> Result<()> {
        self.ensure_finite()?;
        let grads = self.gradients(loss, seed);
        for (idx, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(name), Some(g)) = (&node.op, &grads[idx]) {
                store.accumulate_grad(name, g.as_slice())?;
            }
        }
        Ok(())
    }

    /// Gradient of `loss` with respect to every node (None for nodes the loss
    /// does not depend on).
    pub fn gradients(&self, loss: Var, seed: f64) -> Vec<Option<Matrix>> {
        assert_eq!(self.shape(loss), (1, 1), "backward from non-scalar node");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::scalar(seed));

        fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let out = &node.value;
            match &node.op {
                Op::Constant | Op::Param(_) => {
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, g.matmul(&bm.transpose()));
                    acc(&mut grads, *b, am.transpose().matmul(&g));
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, reduce_to(&g, self.shape(*a)));
                    acc(&mut grads, *b, reduce_to(&g, self.shape(*b)));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, reduce_to(&g, self.shape(*a)));
                    acc(&mut grads, *b, reduce_to(&g.scale(-1.0), self.shape(*b)));
                }
                Op::Mul(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    let ga = Matrix::from_fn(g.rows(), g.cols(), |i, j| g[(i, j)] * broadcast_get(bm, i, j));
                    let gb = Matrix::from_fn(g.rows(), g.cols(), |i, j| g[(i, j)] * broadcast_get(am, i, j));
                    acc(&mut grads, *a, reduce_to(&ga, am.shape()));
                    acc(&mut grads, *b, reduce_to(&gb, bm.shape()));
                }
                Op::Div(a, b) => {
                    let (am, bm) = (self.value(*a), self.value(*b));
                    let ga = Matrix::from_fn(g.rows(), g.cols(), |i, j| g[(i, j)] / broadcast_get(bm, i, j));
                    let gb = Matrix::from_fn(g.rows(), g.cols(), |i, j| {
                        let d = broadcast_get(bm, i, j);
                        -g[(i, j)] * broadcast_get(am, i, j) / (d * d)
                    });
                    acc(&mut grads, *a, reduce_to(&ga, am.shape()));
                    acc(&mut grads, *b, reduce_to(&gb, bm.shape()));
                }
                Op::Scale(a, k) => acc(&mut grads, *a, g.scale(*k)),
                Op::Offset(a) => acc(&mut grads, *a, g.clone()),
                Op::Sigmoid(a) => acc(&mut grads, *a, g.zip_map(out, |g, s| g * s * (1.0 - s))),
                Op::Tanh(a) => acc(&mut grads, *a, g.zip_map(out, |g, y| g * (1.0 - y * y))),
                Op::Exp(a) => acc(&mut grads, *a, g.zip_map(out, |g, y| g * y)),
                Op::Log(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, g.zip_map(x, |g, x| if x > LOG_FLOOR { g / x } else { 0.0 }));
                }
                Op::Sqrt(a) => {
                    acc(&mut grads, *a, g.zip_map(out, |g, y| if y > 0.0 { g / (2.0 * y) } else { 0.0 }));
                }
                Op::FloorAt(a, floor) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, g.zip_map(x, |g, x| if x > *floor { g } else { 0.0 }));
                }
                Op::SoftmaxRows(a) => {
                    let mut gx = Matrix::zeros(out.rows(), out.cols());
                    for i in 0..out.rows() {
                        let dot: f64 = (0..out.cols()).map(|j| g[(i, j)] * out[(i, j)]).sum();
                        for j in 0..out.cols() {
                            gx[(i, j)] = out[(i, j)] * (g[(i, j)] - dot);
                        }
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::Sum(a) => {
                    let (r, c) = self.shape(*a);
                    acc(&mut grads, *a, Matrix::filled(r, c, g[(0, 0)]));
                }
                Op::SumAxis(a) => {
                    let (r, c) = self.shape(*a);
                    acc(&mut grads, *a, Matrix::from_fn(r, c, |i, j| broadcast_get(&g, i, j)));
                }
                Op::MeanAxis(a, axis) => {
                    let (r, c) = self.shape(*a);
                    let n = match axis {
                        Axis::Rows => r,
                        Axis::Cols => c,
                    } as f64;
                    acc(&mut grads, *a, Matrix::from_fn(r, c, |i, j| broadcast_get(&g, i, j) / n));
                }
                Op::MaxAxis(a, axis, argmax) => {
                    let (r, c) = self.shape(*a);
                    let mut gx = Matrix::zeros(r, c);
                    match axis {
                        Axis::Rows => {
                            for (j, &i) in argmax.iter().enumerate() {
                                gx[(i, j)] = g[(0, j)];
                            }
                        }
                        Axis::Cols => {
                            for (i, &j) in argmax.iter().enumerate() {
                                gx[(i, j)] = g[(i, 0)];
                            }
                        }
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = self.shape(p);
                        acc(&mut grads, p, Matrix::from_fn(r, c, |i, j| g[(i, offset + j)]));
                        offset += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let r = self.shape(p).0;
                        acc(&mut grads, p, g.row_block(offset, r));
                        offset += r;
                    }
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::SliceRows(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut gx = Matrix::zeros(r, c);
                    for i in 0..g.rows() {
                        for j in 0..c {
                            gx[(start + i, j)] = g[(i, j)];
                        }
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.shape(*a);
                    let mut gx = Matrix::zeros(r, c);
                    for i in 0..r {
                        for j in 0..g.cols() {
                            gx[(i, start + j)] = g[(i, j)];
                        }
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::Conv1d {
                    input,
                    kernel,
                    width,
                    pad,
                } => {
                    let (x, k) = (self.value(*input), self.value(*kernel));
                    let (channels, length) = x.shape();
                    let mut gx = Matrix::zeros(channels, length);
                    let mut gk = Matrix::zeros(k.rows(), k.cols());
                    for o in 0..k.rows() {
                        for t in 0..g.cols() {
                            let go = g[(o, t)];
                            for c in 0..channels {
                                for tap in 0..*width {
                                    let pos = t + tap;
                                    if pos < *pad || pos - pad >= length {
                                        continue;
                                    }
                                    gk[(o, c * width + tap)] += go * x[(c, pos - pad)];
                                    gx[(c, pos - pad)] += go * k[(o, c * width + tap)];
                                }
                            }
                        }
                    }
                    acc(&mut grads, *input, gx);
                    acc(&mut grads, *kernel, gk);
                }
            }
            grads[idx] = Some(g);
        }
        grads
    }
}

fn sum_along(x: &Matrix, axis: Axis) -> Matrix {
    match axis {
        Axis::Rows => {
            let mut out = Matrix::zeros(1, x.cols());
            for i in 0..x.rows() {
                for j in 0..x.cols() {
                    out[(0, j)] += x[(i, j)];
                }
            }
            out
        }
        Axis::Cols => Matrix::column_vector((0..x.rows()).map(|i| x.row(i).iter().sum()).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::params::Tensor;

    #[test]
    fn square_derivative() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::new(vec![1], vec![3.0]));
        let mut tape = Tape::new();
        let w = tape.param(&store, "w");
        let loss = tape.mul(w, w);
        tape.backward(loss, &mut store, 1.0).unwrap();
        assert_eq!(store.grad("w").unwrap(), &[6.0]);
    }

    #[test]
    fn sigmoid_at_zero_has_quarter_slope() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::zeros(vec![5]));
        let mut tape = Tape::new();
        let w = tape.param(&store, "w");
        let s = tape.sigmoid(w);
        let loss = tape.sum(s);
        tape.backward(loss, &mut store, 1.0).unwrap();
        assert!(store.grad("w").unwrap().iter().all(|&g| g == 0.25));
    }

    #[test]
    fn nonfinite_forward_names_the_op() {
        let mut store = ParamStore::new();
        store.insert("w", Tensor::new(vec![1], vec![0.0]));
        let mut tape = Tape::new();
        let w = tape.param(&store, "w");
        let one = tape.constant(Matrix::scalar(1.0));
        let bad = tape.div(one, w);
        let loss = tape.sum(bad);
        match tape.backward(loss, &mut store, 1.0) {
            Err(Error::Numerics { op }) => assert_eq!(op, "div"),
            other => panic!("expected numerics error, got {other:?}"),
        }
    }

    #[test]
    fn unused_params_get_no_gradient() {
        let mut store = ParamStore::new();
        store.insert("a", Tensor::new(vec![1], vec![2.0]));
        store.insert("b", Tensor::new(vec![1], vec![2.0]));
        let mut tape = Tape::new();
        let a = tape.param(&store, "a");
        let _b = tape.param(&store, "b");
        let loss = tape.sum(a);
        tape.backward(loss, &mut store, 1.0).unwrap();
        assert_eq!(store.grad("a").unwrap(), &[1.0]);
        assert!(store.grad("b").is_none());
    }

    #[test]
    fn conv1d_delta_kernel_copies_input() {
        let mut tape = Tape::new();
        let x = tape.constant(Matrix::from_rows(&[[1.0, 2.0, 3.0]]));
        let k = tape.constant(Matrix::from_rows(&[[0.0, 1.0, 0.0]]));
        let y = tape.conv1d(x, k, 3, 1);
        assert_eq!(tape.value(y), &Matrix::from_rows(&[[1.0, 2.0, 3.0]]));
    }
}

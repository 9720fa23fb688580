use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// A named trainable array.
///
/// Tensors of rank 1 read onto the tape as `1 x n`; higher ranks read as
/// `shape[0] x product(shape[1..])`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    /// # Panics
    /// If `values.len()` does not match the product of `shape`.
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Self {
        assert_eq!(
            values.len(),
            shape.iter().product::<usize>(),
            "tensor values do not match shape {shape:?}"
        );
        Tensor {
            shape,
            values,
            grad: None,
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot<R: Rng>(shape: Vec<usize>, fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = shape.iter().product();
        let values = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
        Self::new(shape, values)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn matrix_dims(&self) -> (usize, usize) {
        match self.shape.as_slice() {
            [] => (1, 1),
            [n] => (1, *n),
            [rows, rest @ ..] => (*rows, rest.iter().product()),
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        let (r, c) = self.matrix_dims();
        Matrix::from_vec(r, c, self.values.clone())
    }
}

/// Every trainable tensor of a model, keyed by dotted name. Iteration is in
/// sorted name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tensors.contains_key(name)
    }

    pub fn grad(&self, name: &str) -> Option<&[f64]> {
        self.tensors.get(name).and_then(Tensor::grad)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in self.tensors.values_mut() {
            t.grad = None;
        }
    }

    pub fn has_grad(&self) -> bool {
        self.tensors.values().any(|t| t.grad.is_some())
    }

    pub(crate) fn accumulate_grad(&mut self, name: &str, g: &[f64]) -> Result<()> {
        let t = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::State(format!("gradient for unknown parameter `{name}`")))?;
        if g.len() != t.values.len() {
            return Err(Error::Shape(format!(
                "gradient for `{name}` has {} values, tensor has {}",
                g.len(),
                t.values.len()
            )));
        }
        match &mut t.grad {
            Some(existing) => {
                for (e, v) in existing.iter_mut().zip(g) {
                    *e += v;
                }
            }
            slot @ None => *slot = Some(g.to_vec()),
        }
        Ok(())
    }

    /// Adds `other`'s gradients into this store's gradient buffers.
    pub fn merge_grads_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, t) in &other.tensors {
            if let Some(g) = &t.grad {
                self.accumulate_grad(name, g)?;
            }
        }
        Ok(())
    }
}

use indexmap::IndexMap;
use rand::Rng;

use crate::error::{config, usage, Result};

/// Dense row-major array with an optional gradient slot.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(dims: &[usize], values: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return config(format!("tensor dims must be positive, got {dims:?}"));
        }
        let count: usize = dims.iter().product();
        if count != values.len() {
            return config(format!(
                "tensor dims {dims:?} need {count} values, got {}",
                values.len()
            ));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            values,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let count = dims.iter().product();
        Tensor::new(dims, vec![0.0; count]).expect("positive dims")
    }

    pub fn vector(values: Vec<f64>) -> Self {
        let n = values.len();
        Tensor::new(&[n], values).expect("non-empty vector")
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Tensor::new(&[rows, cols], values)
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::vector(vec![value])
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Rows and columns under the 2-D view used by the tape: a 1-D tensor
    /// of length n is a single row.
    pub fn shape2(&self) -> (usize, usize) {
        match self.dims.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            dims => (dims[..dims.len() - 1].iter().product(), dims[dims.len() - 1]),
        }
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

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if g.len() != self.values.len() {
            return config(format!(
                "gradient of length {} for tensor of {} values",
                g.len(),
                self.values.len()
            ));
        }
        let slot = self.grad.get_or_insert_with(|| vec![0.0; g.len()]);
        for (s, v) in slot.iter_mut().zip(g) {
            *s += v;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }
}

/// Named learnable tensors in stable insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterSet {
    entries: IndexMap<String, Tensor>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, mut tensor: Tensor) -> Result<()> {
        let name = name.into();
        if self.entries.contains_key(&name) {
            return usage(format!("duplicate parameter name {name}"));
        }
        tensor.set_requires_grad(true);
        self.entries.insert(name, tensor);
        Ok(())
    }

    /// Weight matrix `[out, in]` drawn uniformly from ±1/√in.
    pub fn init_weight<R: Rng>(
        &mut self,
        name: impl Into<String>,
        out: usize,
        inp: usize,
        rng: &mut R,
    ) -> Result<()> {
        let bound = 1.0 / (inp as f64).sqrt();
        let values = (0..out * inp)
            .map(|_| rng.gen_range(-bound..=bound))
            .collect();
        self.insert(name, Tensor::matrix(out, inp, values)?)
    }

    pub fn init_bias(&mut self, name: impl Into<String>, out: usize) -> Result<()> {
        self.insert(name, Tensor::zeros(&[out]))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.get_index_of(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn tensor_at(&self, index: usize) -> &Tensor {
        &self.entries[index]
    }

    pub fn tensor_at_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.entries[index]
    }

    pub fn zero_grads(&mut self) {
        self.entries.values_mut().for_each(Tensor::zero_grad);
    }

    /// Euclidean norm over every gradient slot; absent slots count as zero.
    pub fn grad_norm(&self) -> f64 {
        self.entries
            .values()
            .filter_map(Tensor::grad)
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale_grads(&mut self, factor: f64) {
        for t in self.entries.values_mut() {
            if let Some(g) = t.grad.as_mut() {
                g.iter_mut().for_each(|v| *v *= factor);
            }
        }
    }

    /// Overwrite values from another set with the same names and dims.
    pub fn copy_values_from(&mut self, other: &ParameterSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return config("parameter sets differ in size");
        }
        for ((na, a), (nb, b)) in self.entries.iter_mut().zip(other.entries.iter()) {
            if na != nb || a.dims != b.dims {
                return config(format!("parameter mismatch {na} vs {nb}"));
            }
            a.values.copy_from_slice(&b.values);
        }
        Ok(())
    }
}

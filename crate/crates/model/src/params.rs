use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;

/// Named parameter tensors, each with a same-shaped gradient buffer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    grads: Vec<Array2<f64>>,
    index: BTreeMap<String, usize>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a tensor; panics on a duplicate name.
    pub fn add(&mut self, name: &str, value: Array2<f64>) -> usize {
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        let idx = self.values.len();
        self.grads.push(Array2::zeros(value.raw_dim()));
        self.values.push(value);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), idx);
        idx
    }

    /// Uniform in `±sqrt(6 / (rows + cols))`.
    pub fn add_uniform(&mut self, name: &str, rows: usize, cols: usize, rng: &mut impl Rng) -> usize {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        let v = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..a));
        self.add(name, v)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, idx: usize) -> &str {
        &self.names[idx]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn value(&self, idx: usize) -> &Array2<f64> {
        &self.values[idx]
    }

    pub fn value_mut(&mut self, idx: usize) -> &mut Array2<f64> {
        &mut self.values[idx]
    }

    pub fn grad(&self, idx: usize) -> &Array2<f64> {
        &self.grads[idx]
    }

    pub fn grad_mut(&mut self, idx: usize) -> &mut Array2<f64> {
        &mut self.grads[idx]
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.id(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.id(name).map(|i| &mut self.values[i])
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }
}

//! Named learnable tensors with deterministic ordering and seeded init.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Ordered map of all learnable tensors. Iteration order is registration
/// order, which is a deterministic function of the model configuration;
/// optimizer state and checkpoints rely on it.
#[derive(Debug, Clone, Default)]
pub struct ParameterSet {
    entries: Vec<(String, Tensor)>,
}

impl ParameterSet {
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        debug_assert!(
            !self.entries.iter().any(|(n, _)| *n == name),
            "duplicate parameter '{name}'"
        );
        self.entries.push((name, tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total scalar parameter count.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.entries
            .iter()
            .map(|(n, t)| (n.clone(), t.shape().to_vec()))
            .collect()
    }
}

/// Parameters bound into one graph as leaves.
pub struct BoundParams {
    names: Vec<String>,
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn bind(graph: &Graph, params: &ParameterSet, trainable: bool) -> BoundParams {
        let mut names = Vec::with_capacity(params.len());
        let mut vars = Vec::with_capacity(params.len());
        for (name, tensor) in params.entries() {
            names.push(name.clone());
            vars.push(graph.leaf(tensor.clone(), trainable));
        }
        BoundParams { names, vars }
    }

    /// Rebinds from externally created leaves (finite-difference checks).
    /// `vars` must follow the parameter registration order.
    pub fn from_vars(params: &ParameterSet, vars: &[Var]) -> Result<BoundParams> {
        if vars.len() != params.len() {
            return Err(Error::invalid_argument(format!(
                "expected {} parameter vars, got {}",
                params.len(),
                vars.len()
            )));
        }
        Ok(BoundParams {
            names: params.entries().iter().map(|(n, _)| n.clone()).collect(),
            vars: vars.to_vec(),
        })
    }

    pub fn var(&self, name: &str) -> Var {
        match self.names.iter().position(|n| n == name) {
            Some(i) => self.vars[i].clone(),
            None => panic!("unknown parameter '{name}'"),
        }
    }

    /// Gradients in registration order (zeros where a parameter was unused).
    pub fn gradients(&self, params: &ParameterSet) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(params.entries())
            .map(|(v, (_, t))| v.grad().unwrap_or_else(|| Tensor::zeros(t.shape())))
            .collect()
    }
}

/// Registers parameters with seeded initial values.
pub struct ParamInit<'a> {
    pub params: &'a mut ParameterSet,
    pub rng: &'a mut ChaCha8Rng,
}

impl<'a> ParamInit<'a> {
    /// Linear map weights, uniform in +/- 1/sqrt(fan_in).
    pub fn linear(&mut self, name: &str, in_dim: usize, out_dim: usize, bias: bool) {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let w = Tensor::rand_uniform(&[in_dim, out_dim], -bound, bound, self.rng);
        self.params.insert(format!("{name}.w"), w);
        if bias {
            let b = Tensor::rand_uniform(&[out_dim], -bound, bound, self.rng);
            self.params.insert(format!("{name}.b"), b);
        }
    }

    pub fn layer_norm(&mut self, name: &str, dim: usize) {
        self.params.insert(format!("{name}.scale"), Tensor::ones(&[dim]));
        self.params.insert(format!("{name}.shift"), Tensor::zeros(&[dim]));
    }

    /// One LSTM layer; gate order i, f, g, o with the forget-gate bias
    /// lifted to 1.
    pub fn lstm_layer(&mut self, name: &str, in_dim: usize, hidden: usize) {
        let bound = 1.0 / (hidden as f64).sqrt();
        let wx = Tensor::rand_uniform(&[in_dim, 4 * hidden], -bound, bound, self.rng);
        let wh = Tensor::rand_uniform(&[hidden, 4 * hidden], -bound, bound, self.rng);
        let mut b = Tensor::rand_uniform(&[4 * hidden], -bound, bound, self.rng);
        for j in hidden..2 * hidden {
            b.data_mut()[j] += 1.0;
        }
        self.params.insert(format!("{name}.wx"), wx);
        self.params.insert(format!("{name}.wh"), wh);
        self.params.insert(format!("{name}.b"), b);
    }

    pub fn rand_range(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }
}

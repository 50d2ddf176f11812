//! Parameter storage and the multi-layer perceptron blocks used throughout.

use rand::Rng;

use crate::error::Result;

use super::tape::{Tape, ValueId};
use super::tensor::Tensor;

/// Handle to one named parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(&self) -> usize {
        self.0
    }
}

/// Flat registry of all learnable tensors of a model, in creation order.
/// Creation order is part of a model's identity: checkpoints and Adam
/// moments are stored in this order.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(
            !self.names.contains(&name),
            "duplicate parameter name {name}"
        );
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(|s| s.as_str()).zip(self.values.iter())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|t| t.len()).sum()
    }
}

struct Layer {
    weight: ParamId,
    bias: ParamId,
    norm: Option<(ParamId, ParamId)>,
}

/// A block of fully connected layers with ReLU between layers and optional
/// layer normalization before each activation. The final layer is a plain
/// affine map: no activation, no normalization.
pub struct Mlp {
    layers: Vec<Layer>,
    dims: Vec<usize>,
}

impl Mlp {
    /// Build parameters for the given layer widths, e.g. `[6, 16, 16]` for a
    /// two-layer block. Weights are uniform(−s, s) with s = sqrt(2 / fan_in);
    /// biases start at zero; normalization gains/biases at one/zero.
    pub fn new<R: Rng>(
        params: &mut ParamSet,
        prefix: &str,
        dims: &[usize],
        layer_norm: bool,
        rng: &mut R,
    ) -> Self {
        assert!(dims.len() >= 2, "mlp needs at least one layer");
        let mut layers = Vec::new();
        for i in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[i], dims[i + 1]);
            let s = (2.0 / fan_in as f64).sqrt();
            let w: Vec<f64> = (0..fan_in * fan_out).map(|_| rng.gen_range(-s..s)).collect();
            let weight = params.add(
                format!("{prefix}.w{i}"),
                Tensor::new(fan_out, fan_in, w).unwrap(),
            );
            let bias = params.add(format!("{prefix}.b{i}"), Tensor::zeros(1, fan_out));
            let is_final = i == dims.len() - 2;
            let norm = if layer_norm && !is_final {
                let gain = params.add(
                    format!("{prefix}.ln_g{i}"),
                    Tensor::new(1, fan_out, vec![1.0; fan_out]).unwrap(),
                );
                let beta = params.add(format!("{prefix}.ln_b{i}"), Tensor::zeros(1, fan_out));
                Some((gain, beta))
            } else {
                None
            };
            layers.push(Layer { weight, bias, norm });
        }
        Mlp {
            layers,
            dims: dims.to_vec(),
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    /// (weight, bias) of layer `i`.
    pub fn layer_params(&self, i: usize) -> (ParamId, ParamId) {
        (self.layers[i].weight, self.layers[i].bias)
    }

    /// (gain, bias) of layer `i`'s normalization, when present.
    pub fn norm_params(&self, i: usize) -> Option<(ParamId, ParamId)> {
        self.layers[i].norm
    }

    pub fn in_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    /// Record the block on a tape: Lₙ(…ReLU(LN(L₁ x))…).
    pub fn forward_on(&self, tape: &mut Tape, x: ValueId) -> Result<ValueId> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = tape.linear(h, layer.weight, layer.bias)?;
            if i < last {
                if let Some((gain, beta)) = layer.norm {
                    h = tape.layer_norm(h, gain, beta)?;
                }
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}

/// One-shot forward pass of an MLP block outside any training loop.
pub fn forward(params: &ParamSet, mlp: &Mlp, input: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new(params);
    let x = tape.leaf(input.clone());
    let y = mlp.forward_on(&mut tape, x)?;
    Ok(tape.value(y).clone())
}

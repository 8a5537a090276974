use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Swish,
}

impl Activation {
    pub fn id(self) -> u8 {
        match self {
            Activation::Swish => 1,
        }
    }

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(Activation::Swish),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Swish => z / (1.0 + (-z).exp()),
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Swish => {
                let s = 1.0 / (1.0 + (-z).exp());
                s + z * s * (1.0 - s)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    /// Orthogonal hidden layers, orthogonal output layer scaled by 0.01.
    OrthogonalSmallOutput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    pub weight_init: WeightInit,
    pub seed: u64,
}

impl MlpConfig {
    /// Two hidden layers of 64 units with swish activations.
    pub fn small(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        MlpConfig {
            input_dim,
            hidden_layers: vec![64, 64],
            output_dim,
            activation: Activation::Swish,
            weight_init: WeightInit::OrthogonalSmallOutput,
            seed,
        }
    }

    /// Three hidden layers of 128 units, for humanoid-scale agents.
    pub fn large(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        MlpConfig { hidden_layers: vec![128, 128, 128], ..Self::small(input_dim, output_dim, seed) }
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim];
        d.extend(&self.hidden_layers);
        d.push(self.output_dim);
        d
    }
}

/// Dense feed-forward network with a linear output layer.
///
/// All parameters live in one flat vector; layer `k` stores its weights
/// row-major with shape `(out, in)` followed by its biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    dims: Vec<usize>,
    activation: Activation,
    seed: u64,
    params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Activations recorded by [`Mlp::forward_cached`] for backpropagation.
#[derive(Clone, Debug, Default)]
pub struct MlpCache {
    /// Input to each layer (the network input, then post-activations).
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of each hidden layer.
    pre: Vec<Vec<f64>>,
}

fn layer_offsets(dims: &[usize]) -> Vec<usize> {
    let mut offsets = vec![0];
    for w in dims.windows(2) {
        let last = *offsets.last().unwrap();
        offsets.push(last + w[0] * w[1] + w[1]);
    }
    offsets
}

fn orthogonal(rows: usize, cols: usize, gain: f64, rng: &mut rng::Rng) -> Vec<f64> {
    let (r, c) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let a = DMatrix::<f64>::from_fn(r, c, |_, _| StandardNormal.sample(rng));
    let qr = a.qr();
    let mut q = qr.q();
    let rdiag = qr.r().diagonal();
    for j in 0..c {
        if rdiag[j] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let q = if rows >= cols { q } else { q.transpose() };
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(gain * q[(i, j)]);
        }
    }
    out
}

impl Mlp {
    pub fn new(cfg: &MlpConfig) -> Result<Self> {
        let dims = cfg.dims();
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::config("all MLP layer widths must be >= 1"));
        }
        let offsets = layer_offsets(&dims);
        let mut params = vec![0.0; *offsets.last().unwrap()];
        let mut rng = rng::stream(cfg.seed, &[0x11]);
        let n_layers = dims.len() - 1;
        for k in 0..n_layers {
            let gain = if k + 1 == n_layers { 0.01 } else { 1.0 };
            let w = orthogonal(dims[k + 1], dims[k], gain, &mut rng);
            params[offsets[k]..offsets[k] + w.len()].copy_from_slice(&w);
        }
        Ok(Mlp { dims, activation: cfg.activation, seed: cfg.seed, params, offsets })
    }

    pub(crate) fn from_parts(dims: Vec<usize>, activation: Activation, seed: u64, params: Vec<f64>) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::config("invalid layer dims"));
        }
        let offsets = layer_offsets(&dims);
        if params.len() != *offsets.last().unwrap() {
            return Err(Error::config("parameter count does not match layer dims"));
        }
        Ok(Mlp { dims, activation, seed, params, offsets })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn n_layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn layer(&self, k: usize) -> (&[f64], &[f64]) {
        let (i, o) = (self.dims[k], self.dims[k + 1]);
        let start = self.offsets[k];
        let w = &self.params[start..start + i * o];
        let b = &self.params[start + i * o..start + i * o + o];
        (w, b)
    }

    /// Bias vector of the output layer.
    pub fn output_bias(&self) -> &[f64] {
        self.layer(self.n_layers() - 1).1
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let k = self.n_layers() - 1;
        let (i, o) = (self.dims[k], self.dims[k + 1]);
        let start = self.offsets[k] + i * o;
        &mut self.params[start..start + o]
    }

    /// Output-layer weights, row-major `(out, in)`.
    pub fn output_weights_mut(&mut self) -> &mut [f64] {
        let k = self.n_layers() - 1;
        let (i, o) = (self.dims[k], self.dims[k + 1]);
        let start = self.offsets[k];
        &mut self.params[start..start + i * o]
    }

    fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
        let n_in = x.len();
        b.iter()
            .enumerate()
            .map(|(r, &bias)| {
                let row = &w[r * n_in..(r + 1) * n_in];
                bias + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::usage(format!(
                "input has dim {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Panics if `x` has the wrong length.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "MLP input dim mismatch");
        let mut h = x.to_vec();
        let last = self.n_layers() - 1;
        for k in 0..=last {
            let (w, b) = self.layer(k);
            let mut z = Self::affine(w, b, &h);
            if k < last {
                z.iter_mut().for_each(|v| *v = self.activation.apply(*v));
            }
            h = z;
        }
        h
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        assert_eq!(x.len(), self.input_dim(), "MLP input dim mismatch");
        let last = self.n_layers() - 1;
        let mut cache = MlpCache { inputs: Vec::with_capacity(last + 1), pre: Vec::with_capacity(last) };
        let mut h = x.to_vec();
        for k in 0..=last {
            let (w, b) = self.layer(k);
            let z = Self::affine(w, b, &h);
            cache.inputs.push(h);
            if k < last {
                h = z.iter().map(|&v| self.activation.apply(v)).collect();
                cache.pre.push(z);
            } else {
                h = z;
            }
        }
        (h, cache)
    }

    /// Accumulates `d_out^T * d(output)/d(params)` into `grad` and returns
    /// the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.num_params());
        let last = self.n_layers() - 1;
        let mut delta = d_out.to_vec();
        for k in (0..=last).rev() {
            let (n_in, n_out) = (self.dims[k], self.dims[k + 1]);
            if k < last {
                for (d, &z) in delta.iter_mut().zip(&cache.pre[k]) {
                    *d *= self.activation.derivative(z);
                }
            }
            let input = &cache.inputs[k];
            let start = self.offsets[k];
            let (gw, gb) = grad[start..start + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for r in 0..n_out {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                gb[r] += d;
                for (g, &x) in gw[r * n_in..(r + 1) * n_in].iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            let (w, _) = self.layer(k);
            let mut prev = vec![0.0; n_in];
            for r in 0..n_out {
                let d = delta[r];
                if d == 0.0 {
                    continue;
                }
                for (p, &wv) in prev.iter_mut().zip(&w[r * n_in..(r + 1) * n_in]) {
                    *p += d * wv;
                }
            }
            delta = prev;
        }
        delta
    }
}

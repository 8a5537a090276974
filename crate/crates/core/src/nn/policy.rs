use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpConfig};
use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBounds {
    pub fn symmetric(dim: usize, limit: f64) -> Self {
        ActionBounds { low: vec![-limit; dim], high: vec![limit; dim] }
    }

    pub fn clamp(&self, a: &mut [f64]) {
        for ((v, lo), hi) in a.iter_mut().zip(&self.low).zip(&self.high) {
            *v = v.clamp(*lo, *hi);
        }
    }
}

/// Diagonal Gaussian policy: an MLP produces the mean, a state-independent
/// learned vector holds the log standard deviations.
///
/// The policy's flat parameter vector is the MLP parameters followed by
/// `log_std`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    pub mlp: Mlp,
    log_std: Vec<f64>,
    pub action_bounds: Option<ActionBounds>,
}

impl GaussianPolicy {
    pub fn new(cfg: &MlpConfig, init_log_std: f64, action_bounds: Option<ActionBounds>) -> Result<Self> {
        let mlp = Mlp::new(cfg)?;
        let log_std = vec![init_log_std.clamp(LOG_STD_MIN, LOG_STD_MAX); cfg.output_dim];
        Ok(GaussianPolicy { mlp, log_std, action_bounds })
    }

    pub(crate) fn from_parts(mlp: Mlp, log_std: Vec<f64>, action_bounds: Option<ActionBounds>) -> Result<Self> {
        if log_std.len() != mlp.output_dim() || log_std.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("log_std must be finite with one entry per action dim"));
        }
        Ok(GaussianPolicy { mlp, log_std, action_bounds })
    }

    pub fn input_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn set_log_std(&mut self, v: &[f64]) {
        self.log_std.copy_from_slice(v);
        self.clamp_log_std();
    }

    fn clamp_log_std(&mut self) {
        self.log_std.iter_mut().for_each(|v| *v = v.clamp(LOG_STD_MIN, LOG_STD_MAX));
    }

    pub fn num_params(&self) -> usize {
        self.mlp.num_params() + self.log_std.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.mlp.params().to_vec();
        p.extend(&self.log_std);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let n = self.mlp.num_params();
        self.mlp.params_mut().copy_from_slice(&p[..n]);
        self.log_std.copy_from_slice(&p[n..]);
        self.clamp_log_std();
    }

    /// Applies `params += delta` and re-clamps `log_std`.
    pub fn apply_delta(&mut self, delta: &[f64]) {
        let n = self.mlp.num_params();
        for (p, d) in self.mlp.params_mut().iter_mut().zip(&delta[..n]) {
            *p += d;
        }
        for (p, d) in self.log_std.iter_mut().zip(&delta[n..]) {
            *p += d;
        }
        self.clamp_log_std();
    }

    pub fn std(&self) -> Vec<f64> {
        self.log_std.iter().map(|v| v.exp()).collect()
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.mlp.check_input(input)?;
        Ok((self.mlp.forward(input), self.std()))
    }

    /// Deterministic action: the mean, clamped to the bounds.
    pub fn mean_action(&self, input: &[f64]) -> Vec<f64> {
        let mut a = self.mlp.forward(input);
        if let Some(b) = &self.action_bounds {
            b.clamp(&mut a);
        }
        a
    }

    pub fn log_prob(&self, input: &[f64], action: &[f64]) -> f64 {
        let mean = self.mlp.forward(input);
        gaussian_log_prob(&mean, &self.log_std, action)
    }

    /// Returns `log pi(action | input)` and accumulates
    /// `scale * d log pi / d params` into `grad`.
    pub fn log_prob_grad(&self, input: &[f64], action: &[f64], scale: f64, grad: &mut [f64]) -> f64 {
        let n = self.mlp.num_params();
        let (mean, cache) = self.mlp.forward_cached(input);
        let mut d_mean = vec![0.0; mean.len()];
        for k in 0..mean.len() {
            let var = (2.0 * self.log_std[k]).exp();
            let diff = action[k] - mean[k];
            d_mean[k] = scale * diff / var;
            grad[n + k] += scale * (diff * diff / var - 1.0);
        }
        self.mlp.backward(&cache, &d_mean, &mut grad[..n]);
        gaussian_log_prob(&mean, &self.log_std, action)
    }

    /// Differential entropy of the action distribution.
    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|l| l + 0.5 + HALF_LN_2PI).sum()
    }

    /// Accumulates `scale * d entropy / d params` into `grad`.
    pub fn entropy_grad(&self, scale: f64, grad: &mut [f64]) {
        let n = self.mlp.num_params();
        for k in 0..self.log_std.len() {
            grad[n + k] += scale;
        }
    }

    /// `mean + std * eps`, clamped to the bounds when set.
    pub fn sample(&self, input: &[f64], rng: &mut impl rand::Rng) -> Vec<f64> {
        let mean = self.mlp.forward(input);
        let mut a: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, l)| {
                let eps: f64 = StandardNormal.sample(rng);
                m + l.exp() * eps
            })
            .collect();
        if let Some(b) = &self.action_bounds {
            b.clamp(&mut a);
        }
        a
    }
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, l), a)| {
            let z = (a - m) / l.exp();
            -0.5 * z * z - l - HALF_LN_2PI
        })
        .sum()
}

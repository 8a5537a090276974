use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hyperparameters of one clipped first-order update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradStep {
    pub learning_rate: f64,
    /// Global-norm clip; `None` disables clipping.
    pub gradient_clip_norm: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl GradStep {
    pub fn new(learning_rate: f64) -> Self {
        GradStep { learning_rate, gradient_clip_norm: Some(0.5), beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn with_clip(mut self, clip: Option<f64>) -> Self {
        self.gradient_clip_norm = clip;
        self
    }
}

/// Scales `grad` in place so its L2 norm is at most `max_norm`; returns the
/// factor applied.
pub fn clip_global_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
        scale
    } else {
        1.0
    }
}

/// Adam moment estimates for one parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: GradStep,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(config: GradStep, n_params: usize) -> Result<Self> {
        if !(config.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        Ok(Adam { config, m: vec![0.0; n_params], v: vec![0.0; n_params], t: 0 })
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    /// Computes the descent delta for a loss gradient (to be *added* to the
    /// parameters). The gradient is clipped in place.
    pub fn delta(&mut self, grad: &mut [f64]) -> Result<Vec<f64>> {
        if grad.len() != self.m.len() {
            return Err(Error::Training(format!(
                "gradient has {} entries, optimizer tracks {}",
                grad.len(),
                self.m.len()
            )));
        }
        if let Some((i, g)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(Error::Training(format!("non-finite gradient {g} at parameter {i}")));
        }
        if let Some(c) = self.config.gradient_clip_norm {
            clip_global_norm(grad, c);
        }
        let GradStep { learning_rate, beta1, beta2, eps, .. } = self.config;
        self.t += 1;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let mut delta = vec![0.0; grad.len()];
        for i in 0..grad.len() {
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * grad[i];
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            delta[i] = -learning_rate * mhat / (vhat.sqrt() + eps);
        }
        Ok(delta)
    }

    /// One descent step on a raw parameter slice.
    pub fn step(&mut self, params: &mut [f64], grad: &mut [f64]) -> Result<()> {
        let d = self.delta(grad)?;
        params.iter_mut().zip(&d).for_each(|(p, d)| *p += d);
        Ok(())
    }
}

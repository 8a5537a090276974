//! Minimal dense neural networks: MLP forward/backward, a diagonal Gaussian
//! policy head, and an Adam optimizer with global-norm clipping.

mod adam;
pub mod io;
mod mlp;
mod policy;

pub use adam::{clip_global_norm, Adam, GradStep};
pub use mlp::{Activation, Mlp, MlpCache, MlpConfig, WeightInit};
pub use policy::{gaussian_log_prob, ActionBounds, GaussianPolicy, LOG_STD_MAX, LOG_STD_MIN};

use crate::error::Result;

/// Applies one clipped descent step of a loss gradient to a policy.
pub fn update(policy: &mut GaussianPolicy, opt: &mut Adam, loss_gradient: &mut [f64]) -> Result<()> {
    let delta = opt.delta(loss_gradient)?;
    policy.apply_delta(&delta);
    Ok(())
}

/// Accumulates `scale` times the gradient of the negated PPO clipped
/// surrogate `-min(rho A, clip(rho, 1-eps, 1+eps) A)` for one sample.
/// Returns the probability ratio `rho`.
pub fn surrogate_grad(
    policy: &GaussianPolicy,
    input: &[f64],
    action: &[f64],
    old_log_prob: f64,
    advantage: f64,
    clip: f64,
    scale: f64,
    grad: &mut [f64],
) -> f64 {
    let ratio = (policy.log_prob(input, action) - old_log_prob).exp();
    let clipped = (advantage > 0.0 && ratio > 1.0 + clip) || (advantage < 0.0 && ratio < 1.0 - clip);
    if !clipped {
        // d(rho)/d(theta) = rho * d(log pi)/d(theta)
        policy.log_prob_grad(input, action, -scale * advantage * ratio, grad);
    }
    ratio
}

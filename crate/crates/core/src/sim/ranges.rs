use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{wrap_angle, Model, SimMode, SimState};
use crate::error::{Error, Result};
use crate::rng;

/// Per-dimension feasible bounds of the state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRanges {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl StateRanges {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn span(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(lo, hi)| hi - lo).collect()
    }

    /// Spans with degenerate (zero-width) dims replaced by 1.
    pub fn safe_span(&self) -> Vec<f64> {
        self.span().into_iter().map(|s| if s > 0.0 { s } else { 1.0 }).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn sample_uniform(&self, rng: &mut impl rand::Rng) -> SimState {
        SimState(
            self.min
                .iter()
                .zip(&self.max)
                .map(|(&lo, &hi)| if hi > lo { rng.random_range(lo..=hi) } else { lo })
                .collect(),
        )
    }

    pub fn contains(&self, s: &[f64]) -> bool {
        s.iter().zip(self.min.iter().zip(&self.max)).all(|(v, (lo, hi))| v >= lo && v <= hi)
    }
}

/// Measures joint angle and joint speed ranges by actuating the joints with
/// uniform random torques while the root is suspended in the air.
///
/// Root quantities (and any dim not measured) take the environment's
/// declared caps. A wrapped joint that completes a full revolution gets the
/// whole circle.
pub fn calibrate_state_ranges(model: &Model, n_steps: usize, seed: u64) -> Result<StateRanges> {
    if n_steps < 10_000 {
        return Err(Error::config(format!("calibration needs n_steps >= 10000, got {n_steps}")));
    }
    let spec = model.spec();
    let layout = &spec.layout;
    let mut min: Vec<f64> = spec.state_caps.iter().map(|c| c.0).collect();
    let mut max: Vec<f64> = spec.state_caps.iter().map(|c| c.1).collect();

    let measured: Vec<usize> = layout.joint_angles.iter().chain(&layout.joint_vels).copied().collect();
    if measured.is_empty() {
        return Ok(StateRanges { min, max });
    }

    let mut state = spec.default_pose.clone();
    if let Some(iy) = layout.root_height {
        state[iy] += 1.0;
    }
    for &i in &measured {
        min[i] = state[i];
        max[i] = state[i];
    }
    let mut unwrapped: Vec<f64> = layout.joint_angles.iter().map(|&j| state[j]).collect();
    let mut unwrapped_lo = unwrapped.clone();
    let mut unwrapped_hi = unwrapped.clone();

    let mut rng = rng::stream(seed, &[0xCA11]);
    let low = spec.action_low();
    let high = spec.action_high();
    for _ in 0..n_steps {
        let action: Vec<f64> = low.iter().zip(&high).map(|(&l, &h)| rng.random_range(l..=h)).collect();
        let next = model.step_mode(&state, &action, SimMode::Suspended)?;
        for (k, &j) in layout.joint_angles.iter().enumerate() {
            unwrapped[k] += wrap_angle(next[j] - state[j]);
            unwrapped_lo[k] = unwrapped_lo[k].min(unwrapped[k]);
            unwrapped_hi[k] = unwrapped_hi[k].max(unwrapped[k]);
        }
        state = next;
        for &i in &measured {
            min[i] = min[i].min(state[i]);
            max[i] = max[i].max(state[i]);
        }
    }

    for (k, &j) in layout.joint_angles.iter().enumerate() {
        if layout.is_wrapped(j) && unwrapped_hi[k] - unwrapped_lo[k] >= std::f64::consts::TAU {
            min[j] = -std::f64::consts::PI;
            max[j] = std::f64::consts::PI;
        }
    }
    Ok(StateRanges { min, max })
}

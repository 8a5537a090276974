//! Frictionless 2D point mass under direct force control, no gravity.

use super::config::KvConfig;
use super::spec::{EnvId, EnvSpec, StateLayout};
use super::SimState;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct PointMass {
    pub mass: f64,
    pub force_limit: f64,
}

impl PointMass {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        Ok(PointMass {
            mass: cfg.get_or("mass", 1.0)?,
            force_limit: cfg.get_or("force_limit", 1.0)?,
        })
    }

    pub fn spec(&self) -> EnvSpec {
        EnvSpec {
            id: EnvId::PointMass,
            state_dim: 4,
            action_dim: 2,
            sim_dt: 0.01,
            action_repeat: 10,
            torque_bounds: vec![(-self.force_limit, self.force_limit); 2],
            fall_height_threshold: None,
            upright_cone: None,
            default_pose: SimState::zeros(4),
            state_caps: vec![(-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0), (-2.0, 2.0)],
            layout: StateLayout {
                root_pos: vec![0, 1],
                root_height: None,
                root_rot: None,
                root_vel: vec![2, 3],
                root_angvel: None,
                joint_angles: vec![],
                joint_vels: vec![],
                wrapped: vec![],
                translation_invariant: vec![],
                upright_angle: None,
            },
            has_ground: false,
        }
    }

    /// One semi-implicit Euler step: velocity first, then position.
    pub fn substep(&self, s: &mut [f64], force: &[f64], h: f64) {
        for k in 0..2 {
            s[2 + k] += h * force[k] / self.mass;
            s[k] += h * s[2 + k];
        }
    }
}

//! Cart-pole: a pole on a passive revolute joint atop a cart driven by a
//! horizontal force. Pole angle 0 is upright.

use super::config::KvConfig;
use super::spec::{wrap_angle, EnvId, EnvSpec, StateLayout};
use super::SimState;
use crate::error::Result;

pub const X: usize = 0;
pub const XDOT: usize = 1;
pub const THETA: usize = 2;
pub const THETADOT: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct CartPole {
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Distance from the pivot to the pole's centre of mass.
    pub half_length: f64,
    pub gravity: f64,
    pub force_limit: f64,
    pub max_pole_speed: f64,
}

impl CartPole {
    pub fn from_config(cfg: &KvConfig) -> Result<Self> {
        Ok(CartPole {
            cart_mass: cfg.get_or("cart_mass", 1.0)?,
            pole_mass: cfg.get_or("pole_mass", 0.1)?,
            half_length: cfg.get_or("half_length", 0.5)?,
            gravity: cfg.get_or("gravity", 9.81)?,
            force_limit: cfg.get_or("force_limit", 10.0)?,
            max_pole_speed: cfg.get_or("max_joint_speed", 15.0)?,
        })
    }

    pub fn spec(&self) -> EnvSpec {
        use std::f64::consts::PI;
        EnvSpec {
            id: EnvId::PendulumCart,
            state_dim: 4,
            action_dim: 1,
            sim_dt: 0.01,
            action_repeat: 10,
            torque_bounds: vec![(-self.force_limit, self.force_limit)],
            fall_height_threshold: None,
            upright_cone: Some(1.0),
            default_pose: SimState::zeros(4),
            state_caps: vec![
                (-2.4, 2.4),
                (-3.0, 3.0),
                (-PI, PI),
                (-self.max_pole_speed, self.max_pole_speed),
            ],
            layout: StateLayout {
                root_pos: vec![X],
                root_height: None,
                root_rot: None,
                root_vel: vec![XDOT],
                root_angvel: None,
                joint_angles: vec![THETA],
                joint_vels: vec![THETADOT],
                wrapped: vec![THETA],
                translation_invariant: vec![X],
                upright_angle: Some(THETA),
            },
            has_ground: false,
        }
    }

    /// Pole hanging straight down, at rest.
    pub fn hanging_pose(&self) -> SimState {
        SimState(vec![0.0, 0.0, std::f64::consts::PI, 0.0])
    }

    pub fn substep(&self, s: &mut [f64], force: f64, h: f64, gravity_on: bool) {
        let g = if gravity_on { self.gravity } else { 0.0 };
        let total = self.cart_mass + self.pole_mass;
        let l = self.half_length;
        let (sin, cos) = s[THETA].sin_cos();
        let w = s[THETADOT];
        let temp = (force + self.pole_mass * l * w * w * sin) / total;
        let theta_acc =
            (g * sin - cos * temp) / (l * (4.0 / 3.0 - self.pole_mass * cos * cos / total));
        let x_acc = temp - self.pole_mass * l * theta_acc * cos / total;

        s[XDOT] += h * x_acc;
        s[THETADOT] = (s[THETADOT] + h * theta_acc).clamp(-self.max_pole_speed, self.max_pole_speed);
        s[X] += h * s[XDOT];
        s[THETA] = wrap_angle(s[THETA] + h * s[THETADOT]);
    }
}

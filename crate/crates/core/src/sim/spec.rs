use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::SimState;
use crate::error::Error;

/// Fixed action rate shared by every environment.
pub const ACTION_PERIOD: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    PointMass,
    PendulumCart,
    PlanarHopper,
}

impl EnvId {
    pub const ALL: [EnvId; 3] = [EnvId::PointMass, EnvId::PendulumCart, EnvId::PlanarHopper];

    pub fn name(self) -> &'static str {
        match self {
            EnvId::PointMass => "point_mass",
            EnvId::PendulumCart => "pendulum_cart",
            EnvId::PlanarHopper => "planar_hopper",
        }
    }
}

impl fmt::Display for EnvId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EnvId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        EnvId::ALL
            .into_iter()
            .find(|id| id.name() == s)
            .ok_or_else(|| Error::config(format!("unknown env_id `{s}`")))
    }
}

/// Where each physical quantity lives inside a flattened [`SimState`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateLayout {
    pub root_pos: Vec<usize>,
    /// Vertical root coordinate, for agents standing on a ground plane.
    pub root_height: Option<usize>,
    pub root_rot: Option<usize>,
    pub root_vel: Vec<usize>,
    pub root_angvel: Option<usize>,
    pub joint_angles: Vec<usize>,
    pub joint_vels: Vec<usize>,
    /// Angles kept in (-pi, pi]; differences on these dims wrap as well.
    pub wrapped: Vec<usize>,
    /// Dims whose absolute value carries no dynamical information (root x).
    pub translation_invariant: Vec<usize>,
    /// Angle compared against the upright cone for fall detection.
    pub upright_angle: Option<usize>,
}

impl StateLayout {
    /// Indices of the reward subset: root velocity followed by joint angles.
    pub fn reward_subset(&self) -> Vec<usize> {
        self.root_vel.iter().chain(&self.joint_angles).copied().collect()
    }

    pub fn is_wrapped(&self, dim: usize) -> bool {
        self.wrapped.contains(&dim)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub id: EnvId,
    pub state_dim: usize,
    pub action_dim: usize,
    pub sim_dt: f64,
    pub action_repeat: usize,
    /// Per-actuator `[m, M]`.
    pub torque_bounds: Vec<(f64, f64)>,
    pub fall_height_threshold: Option<f64>,
    pub upright_cone: Option<f64>,
    pub default_pose: SimState,
    /// Declared per-dimension envelope used for root quantities and for
    /// dims that calibration does not measure.
    pub state_caps: Vec<(f64, f64)>,
    pub layout: StateLayout,
    pub has_ground: bool,
}

impl EnvSpec {
    pub fn action_period(&self) -> f64 {
        self.sim_dt * self.action_repeat as f64
    }

    pub fn clamp_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(&self.torque_bounds)
            .map(|(a, &(lo, hi))| a.clamp(lo, hi))
            .collect()
    }

    pub fn action_low(&self) -> Vec<f64> {
        self.torque_bounds.iter().map(|b| b.0).collect()
    }

    pub fn action_high(&self) -> Vec<f64> {
        self.torque_bounds.iter().map(|b| b.1).collect()
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    if a > -PI && a <= PI {
        return a;
    }
    let r = (a + PI).rem_euclid(TAU) - PI;
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn env_ids_parse() {
        for id in EnvId::ALL {
            assert_eq!(id.name().parse::<EnvId>().unwrap(), id);
        }
        assert!("walker".parse::<EnvId>().is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(0.5), 0.5);
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(-7.0) - (-7.0 + 2.0 * PI)).abs() < 1e-12);
    }
}

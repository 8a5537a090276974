//! Deterministic fixed-timestep simulation of the built-in planar agents,
//! the task suite, and state-range calibration.

pub mod cart_pole;
pub mod config;
pub mod hopper;
pub mod point_mass;
mod ranges;
mod spec;
mod state;
mod task;

use std::sync::Arc;

pub use config::KvConfig;
pub use ranges::{calibrate_state_ranges, StateRanges};
pub use spec::{wrap_angle, EnvId, EnvSpec, StateLayout, ACTION_PERIOD};
pub use state::SimState;
pub use task::{Objective, TaskId, TaskSpec};

use crate::error::{Error, Result};
use cart_pole::CartPole;
use hopper::Hopper;
use point_mass::PointMass;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimMode {
    Normal,
    /// Root pinned and gravity off, for joint-range calibration.
    Suspended,
}

#[derive(Clone, Debug, PartialEq)]
enum Dynamics {
    PointMass(PointMass),
    PendulumCart(CartPole),
    PlanarHopper(Hopper),
}

/// Immutable physics definition of one environment.
///
/// A `Model` is cheap to share between threads; stepping state lives in
/// [`Env`] handles or is passed explicitly to [`Model::step`].
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    dynamics: Dynamics,
    spec: EnvSpec,
}

impl Model {
    pub fn new(id: EnvId) -> Self {
        Self::with_config(id, &KvConfig::new()).expect("defaults are valid")
    }

    pub fn with_config(id: EnvId, cfg: &KvConfig) -> Result<Self> {
        let dynamics = match id {
            EnvId::PointMass => Dynamics::PointMass(PointMass::from_config(cfg)?),
            EnvId::PendulumCart => Dynamics::PendulumCart(CartPole::from_config(cfg)?),
            EnvId::PlanarHopper => Dynamics::PlanarHopper(Hopper::from_config(cfg)?),
        };
        let spec = match &dynamics {
            Dynamics::PointMass(p) => p.spec(),
            Dynamics::PendulumCart(p) => p.spec(),
            Dynamics::PlanarHopper(p) => p.spec(),
        };
        let model = Model { dynamics, spec };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let s = &self.spec;
        let period = s.sim_dt * s.action_repeat as f64;
        if (period - ACTION_PERIOD).abs() > 1e-12 {
            return Err(Error::config(format!(
                "action_repeat x sim_dt must be {ACTION_PERIOD} s, got {period}"
            )));
        }
        if s.torque_bounds.iter().any(|&(lo, hi)| !(lo < hi)) {
            return Err(Error::config("torque bounds must satisfy m < M"));
        }
        Ok(())
    }

    pub fn id(&self) -> EnvId {
        self.spec.id
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    pub fn hopper(&self) -> Option<&Hopper> {
        match &self.dynamics {
            Dynamics::PlanarHopper(h) => Some(h),
            _ => None,
        }
    }

    /// Advances one action period with the (clamped) action held constant.
    pub fn step(&self, state: &SimState, action: &[f64]) -> Result<SimState> {
        self.step_mode(state, action, SimMode::Normal)
    }

    pub fn step_mode(&self, state: &SimState, action: &[f64], mode: SimMode) -> Result<SimState> {
        if state.len() != self.spec.state_dim {
            return Err(Error::usage(format!(
                "state has dim {}, env expects {}",
                state.len(),
                self.spec.state_dim
            )));
        }
        if action.len() != self.spec.action_dim {
            return Err(Error::usage(format!(
                "action has dim {}, env expects {}",
                action.len(),
                self.spec.action_dim
            )));
        }
        let action = self.spec.clamp_action(action);
        let mut s = state.clone();
        let suspended = mode == SimMode::Suspended;
        for _ in 0..self.spec.action_repeat {
            match &self.dynamics {
                Dynamics::PointMass(p) => p.substep(&mut s, &action, self.spec.sim_dt),
                Dynamics::PendulumCart(p) => p.substep(&mut s, action[0], self.spec.sim_dt, !suspended),
                Dynamics::PlanarHopper(p) => {
                    let n = p.contact_substeps.max(1);
                    let h = self.spec.sim_dt / n as f64;
                    for _ in 0..n {
                        p.substep(&mut s, &action, h, suspended);
                    }
                }
            }
            if !s.is_finite() {
                return Err(Error::Diverged { state: s });
            }
        }
        Ok(s)
    }

    /// Height of the lowest body point above the ground, for grounded agents.
    pub fn lowest_point(&self, state: &SimState) -> Option<f64> {
        self.hopper().map(|h| h.lowest_point(state))
    }

    /// Shifts the root vertically so the lowest body point sits `d` above
    /// the ground. Agents without a ground plane are returned unchanged.
    pub fn place_above_ground(&self, state: &mut SimState, d: f64) {
        if let (Some(low), Some(iy)) = (self.lowest_point(state), self.spec.layout.root_height) {
            state[iy] += d - low;
        }
    }

    pub fn foot_in_contact(&self, state: &SimState) -> bool {
        self.hopper().is_some_and(|h| h.foot_height(state) <= 0.0)
    }

    /// True when the agent counts as fallen: root below the fall height or
    /// outside the upright cone.
    pub fn is_fallen(&self, state: &SimState) -> bool {
        let spec = &self.spec;
        let low = match (spec.fall_height_threshold, spec.layout.root_height) {
            (Some(th), Some(i)) => state[i] < th,
            _ => false,
        };
        let tilted = match (spec.upright_cone, spec.layout.upright_angle) {
            (Some(cone), Some(i)) => state[i].abs() > cone,
            _ => false,
        };
        low || tilted
    }

    /// Pose used as the initial state of the stand-up task.
    pub fn fallen_pose(&self) -> SimState {
        match &self.dynamics {
            Dynamics::PointMass(_) => self.spec.default_pose.clone(),
            Dynamics::PendulumCart(c) => c.hanging_pose(),
            Dynamics::PlanarHopper(h) => h.fallen_pose(),
        }
    }

    /// `b - a` per dimension, taking the short way round on wrapped angles.
    pub fn state_delta(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let wrapped = &self.spec.layout.wrapped;
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| {
                let d = y - x;
                if wrapped.contains(&i) {
                    wrap_angle(d)
                } else {
                    d
                }
            })
            .collect()
    }
}

/// A stepping context: a shared model plus one current state.
#[derive(Clone, Debug)]
pub struct Env {
    model: Arc<Model>,
    state: SimState,
}

impl Env {
    pub fn new(model: Arc<Model>) -> Self {
        let state = model.spec().default_pose.clone();
        Env { model, state }
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn spec(&self) -> &EnvSpec {
        self.model.spec()
    }

    pub fn observe(&self) -> &SimState {
        &self.state
    }

    pub fn set_state(&mut self, state: SimState) -> Result<()> {
        if state.len() != self.spec().state_dim {
            return Err(Error::usage(format!(
                "set_state: dim {} does not match state_dim {}",
                state.len(),
                self.spec().state_dim
            )));
        }
        self.state = state;
        Ok(())
    }

    pub fn step(&mut self, action: &[f64]) -> Result<&SimState> {
        self.state = self.model.step(&self.state, action)?;
        Ok(&self.state)
    }
}

/// Builds a fresh environment handle and its spec.
pub fn make_env(id: EnvId) -> (Env, EnvSpec) {
    let model = Arc::new(Model::new(id));
    let spec = model.spec().clone();
    (Env::new(model), spec)
}

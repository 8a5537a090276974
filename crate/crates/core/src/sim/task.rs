use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EnvId, KvConfig, Model, SimState};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    Default,
    SlowWalk,
    Run,
    BackWalk,
    Balance,
    StandUp,
}

impl TaskId {
    pub const ALL: [TaskId; 6] = [
        TaskId::Default,
        TaskId::SlowWalk,
        TaskId::Run,
        TaskId::BackWalk,
        TaskId::Balance,
        TaskId::StandUp,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::Default => "default",
            TaskId::SlowWalk => "slow_walk",
            TaskId::Run => "run",
            TaskId::BackWalk => "back_walk",
            TaskId::Balance => "balance",
            TaskId::StandUp => "stand_up",
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskId::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::config(format!("unknown task_id `{s}`")))
    }
}

/// Anything an optimizer can score a rollout against.
pub trait Objective: Sync {
    fn initial_state(&self, model: &Model) -> SimState;

    /// Reward for the transition `state -> next` taken at `step`.
    fn reward(&self, model: &Model, step: usize, state: &SimState, next: &SimState, action: &[f64]) -> f64;

    fn is_terminal(&self, model: &Model, state: &SimState) -> bool;

    /// Charged once per remaining step when an episode terminates early.
    fn fall_penalty(&self) -> f64 {
        0.0
    }

    fn episode_steps(&self) -> usize;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub target_velocity: f64,
    pub episode_seconds: f64,
    pub uses_termination: bool,
    pub fall_penalty: f64,
}

impl TaskSpec {
    pub fn new(id: TaskId, env: EnvId) -> Self {
        // Hopper speeds are scaled to what the planar agent can do.
        let (slow, run, back) = match env {
            EnvId::PlanarHopper => (0.5, 1.5, -0.5),
            _ => (1.0, 4.0, -1.0),
        };
        let target_velocity = match id {
            TaskId::SlowWalk => slow,
            TaskId::Run => run,
            TaskId::BackWalk => back,
            TaskId::Default | TaskId::Balance | TaskId::StandUp => 0.0,
        };
        TaskSpec {
            id,
            target_velocity,
            episode_seconds: 10.0,
            uses_termination: id != TaskId::StandUp,
            fall_penalty: 10.0,
        }
    }

    /// Applies `task.<name>.<field>` overrides.
    pub fn with_config(id: TaskId, env: EnvId, cfg: &KvConfig) -> Result<Self> {
        let mut t = Self::new(id, env);
        let key = |f: &str| format!("task.{}.{f}", id.name());
        t.target_velocity = cfg.get_or(&key("target_velocity"), t.target_velocity)?;
        t.episode_seconds = cfg.get_or(&key("episode_seconds"), t.episode_seconds)?;
        t.uses_termination = cfg.get_or(&key("uses_termination"), t.uses_termination)?;
        t.fall_penalty = cfg.get_or(&key("fall_penalty"), t.fall_penalty)?;
        if id == TaskId::StandUp && t.uses_termination {
            return Err(Error::config("stand_up never terminates early"));
        }
        Ok(t)
    }

    /// Target values for the reward subset: task velocity along x, zero for
    /// other root velocity components, default-pose joint angles.
    pub fn reward_target(&self, model: &Model) -> Vec<f64> {
        let spec = model.spec();
        let layout = &spec.layout;
        let mut g = Vec::with_capacity(layout.root_vel.len() + layout.joint_angles.len());
        for (k, _) in layout.root_vel.iter().enumerate() {
            g.push(if k == 0 { self.target_velocity } else { 0.0 });
        }
        g.extend(layout.joint_angles.iter().map(|&j| spec.default_pose[j]));
        g
    }

    pub fn reward_value(&self, model: &Model, next: &SimState, action: &[f64]) -> f64 {
        let spec = model.spec();
        let a2: f64 = action.iter().map(|a| a * a).sum();
        if self.id == TaskId::Default {
            let forward = spec.layout.root_vel.first().map_or(0.0, |&i| next[i]);
            return forward - 0.001 * a2;
        }
        let target = self.reward_target(model);
        let dev: f64 = spec
            .layout
            .reward_subset()
            .iter()
            .zip(&target)
            .map(|(&i, g)| (next[i] - g).powi(2))
            .sum();
        -dev - 0.01 * a2 / spec.action_dim as f64
    }
}

impl Objective for TaskSpec {
    fn initial_state(&self, model: &Model) -> SimState {
        match self.id {
            TaskId::StandUp => model.fallen_pose(),
            _ => model.spec().default_pose.clone(),
        }
    }

    fn reward(&self, model: &Model, _step: usize, _state: &SimState, next: &SimState, action: &[f64]) -> f64 {
        self.reward_value(model, next, action)
    }

    fn is_terminal(&self, model: &Model, state: &SimState) -> bool {
        self.uses_termination && model.is_fallen(state)
    }

    fn fall_penalty(&self) -> f64 {
        self.fall_penalty
    }

    fn episode_steps(&self) -> usize {
        (self.episode_seconds / super::ACTION_PERIOD).round() as usize
    }
}


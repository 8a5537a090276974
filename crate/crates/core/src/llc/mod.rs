//! Goal-conditioned low-level controllers.
//!
//! `pi_H` maps the current state and a trajectory of `H` target states to a
//! torque action. A set holds `pi_1 .. pi_Hmax`; a target trajectory of
//! length `h` is tracked by querying `pi_h` and then the shorter policies
//! on the remaining targets.

mod train;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use train::{
    calc_q, collect_batch, feasible_windows, positive_advantage_update, pretrain, pretrain_pairs,
    sample_target_trajectory, track_rollout, tracking_error, train_llcs, ActionSource, AdvantageBatch, AdvantageGroup, AdvantageNorm,
    CalcQ, IterationLog, LlcTrainConfig, Replay, Sampled, TargetBranch, TrainOutcome,
};

use crate::error::{Error, Result};
use crate::nn::{self, GaussianPolicy, MlpConfig};
use crate::sim::{EnvId, Model, SimState, StateRanges};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// `pi_H` sees all `H` targets.
    Trajectory,
    /// `pi_H` sees only the final target.
    Single,
}

/// How state differences are measured in rewards and tracking errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateMetric {
    /// Each dimension divided by its calibrated span.
    Normalized,
    Raw,
}

/// Desired future states `G_1 .. G_H`.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetTrajectory(pub Vec<SimState>);

impl TargetTrajectory {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Everything an `LlcSet` stores besides the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlcMeta {
    pub env_id: EnvId,
    pub h_max: usize,
    pub target_mode: TargetMode,
    pub metric: StateMetric,
    pub ranges: StateRanges,
    pub buffer_hash: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LlcSet {
    pub meta: LlcMeta,
    /// `policies[h - 1]` is `pi_h`.
    pub policies: Vec<GaussianPolicy>,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
}

pub const META_FILE: &str = "llc.json";

impl LlcSet {
    pub fn new(model: &Model, meta: LlcMeta, hidden: &[usize], init_log_std: f64, seed: u64) -> Result<Self> {
        if meta.h_max == 0 {
            return Err(Error::config("H_max must be at least 1"));
        }
        let spec = model.spec();
        if meta.ranges.dim() != spec.state_dim {
            return Err(Error::config("state ranges do not match the environment"));
        }
        let mut policies = Vec::with_capacity(meta.h_max);
        for h in 1..=meta.h_max {
            let cfg = MlpConfig {
                hidden_layers: hidden.to_vec(),
                ..MlpConfig::small(input_dim(spec.state_dim, h, meta.target_mode), spec.action_dim, seed ^ h as u64)
            };
            policies.push(GaussianPolicy::new(&cfg, init_log_std, None)?);
        }
        Ok(LlcSet { meta, policies, action_low: spec.action_low(), action_high: spec.action_high() })
    }

    pub fn h_max(&self) -> usize {
        self.meta.h_max
    }

    pub fn policy(&self, h: usize) -> &GaussianPolicy {
        &self.policies[h - 1]
    }

    /// Network input for `pi_{len(targets)}`: the normalized state (with
    /// translation-invariant dims zeroed) followed by normalized deltas to
    /// the targets it sees.
    pub fn input(&self, model: &Model, s: &[f64], targets: &[SimState]) -> Vec<f64> {
        let spec = model.spec();
        let span = self.meta.ranges.safe_span();
        let center = self.meta.ranges.center();
        let mut x = Vec::with_capacity(s.len() * (1 + targets.len()));
        for i in 0..s.len() {
            if spec.layout.translation_invariant.contains(&i) {
                x.push(0.0);
            } else {
                x.push(2.0 * (s[i] - center[i]) / span[i]);
            }
        }
        let seen: &[SimState] = match self.meta.target_mode {
            TargetMode::Trajectory => targets,
            TargetMode::Single => &targets[targets.len() - 1..],
        };
        for g in seen {
            let d = model.state_delta(s, g);
            x.extend(d.iter().zip(&span).map(|(d, w)| 2.0 * d / w));
        }
        x
    }

    /// Maps a normalized action in `[-1, 1]` to torques.
    pub fn to_torque(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(u, (lo, hi))| {
                let c = 0.5 * (lo + hi);
                let r = 0.5 * (hi - lo);
                (c + r * u).clamp(*lo, *hi)
            })
            .collect()
    }

    pub fn from_torque(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(self.action_low.iter().zip(&self.action_high))
            .map(|(a, (lo, hi))| (2.0 * a - lo - hi) / (hi - lo))
            .collect()
    }

    /// Squared distance between a reached state and a target, under the
    /// set's metric. Wrapped angles take the short way round.
    pub fn distance(&self, model: &Model, reached: &[f64], target: &[f64]) -> f64 {
        let d = model.state_delta(reached, target);
        match self.meta.metric {
            StateMetric::Raw => d.iter().map(|v| v * v).sum(),
            StateMetric::Normalized => {
                d.iter().zip(self.meta.ranges.safe_span()).map(|(v, w)| (v / w) * (v / w)).sum()
            }
        }
    }

    /// Deterministic torque from `pi_{len(targets)}`.
    pub fn track(&self, model: &Model, s: &[f64], targets: &[SimState]) -> Result<Vec<f64>> {
        if targets.is_empty() {
            return Err(Error::usage("track needs at least one target state"));
        }
        if targets.len() > self.h_max() {
            return Err(Error::usage(format!("{} targets exceed H_max = {}", targets.len(), self.h_max())));
        }
        let x = self.input(model, s, targets);
        Ok(self.to_torque(&self.policy(targets.len()).mlp.forward(&x)))
    }

    pub fn check_env(&self, env: EnvId) -> Result<()> {
        if self.meta.env_id != env {
            return Err(Error::config(format!(
                "controllers were trained on {}, not {env}",
                self.meta.env_id
            )));
        }
        Ok(())
    }

    /// Writes `llc.json` plus `pi_<h>.bin` per policy into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(META_FILE), serde_json::to_string_pretty(&self.meta)? + "\n")?;
        for (i, p) in self.policies.iter().enumerate() {
            nn::io::save_policy(&dir.join(format!("pi_{}.bin", i + 1)), p)?;
        }
        Ok(())
    }

    /// Loads a set saved by `save`, refusing one trained on another env.
    pub fn load(dir: &Path, model: &Model) -> Result<Self> {
        let meta: LlcMeta = serde_json::from_str(&fs::read_to_string(dir.join(META_FILE))?)?;
        if meta.env_id != model.id() {
            return Err(Error::config(format!(
                "controllers in {} were trained on {}, not {}",
                dir.display(),
                meta.env_id,
                model.id()
            )));
        }
        let spec = model.spec();
        let mut policies = Vec::with_capacity(meta.h_max);
        for h in 1..=meta.h_max {
            let p = nn::io::load_policy(&dir.join(format!("pi_{h}.bin")))?;
            if p.input_dim() != input_dim(spec.state_dim, h, meta.target_mode) || p.action_dim() != spec.action_dim {
                return Err(Error::Artifact(format!("pi_{h} has the wrong shape for {}", meta.env_id)));
            }
            policies.push(p);
        }
        Ok(LlcSet { meta, policies, action_low: spec.action_low(), action_high: spec.action_high() })
    }

    /// Digest of policy `h`'s parameters.
    pub fn policy_hash(&self, h: usize) -> String {
        crate::artifact::sha256_hex(&nn::io::encode_policy(self.policy(h)))
    }
}

pub fn input_dim(state_dim: usize, h: usize, mode: TargetMode) -> usize {
    match mode {
        TargetMode::Trajectory => state_dim * (1 + h),
        TargetMode::Single => state_dim * 2,
    }
}

//! Random exploration data for training low-level controllers.
//!
//! Contact-based exploration runs many short random-torque episodes, each
//! starting from a randomized pose dropped at a randomized height so that
//! the data is rich in ground contacts. The naive baseline runs long
//! episodes from the default pose.

mod buffer;
mod coverage;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use buffer::{BufferMeta, Episode, ExplorationBuffer, Transition};
pub use coverage::{coverage_report, CoverageReport, ScatterPoint, GRID_CELLS};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::sim::{Model, SimState, StateRanges};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExploreMode {
    ContactBased,
    Naive,
}

impl std::str::FromStr for ExploreMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "contact" | "contact_based" => Ok(ExploreMode::ContactBased),
            "naive" => Ok(ExploreMode::Naive),
            _ => Err(Error::config(format!("unknown exploration mode `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplorationConfig {
    pub mode: ExploreMode,
    /// Episode length in actions.
    pub k: usize,
    /// Total action budget.
    pub n: usize,
    pub p_free: f64,
    pub p_close: f64,
    pub h_free: f64,
    pub h_close: f64,
    pub upright_bias: bool,
    /// Half-width of the uniform noise added to the default pose (naive).
    pub init_noise: f64,
    pub seed: u64,
}

impl ExplorationConfig {
    pub fn contact_based(n: usize, seed: u64) -> Self {
        ExplorationConfig {
            mode: ExploreMode::ContactBased,
            k: 5,
            n,
            p_free: 0.1,
            p_close: 0.4,
            h_free: 1.0,
            h_close: 0.05,
            upright_bias: true,
            init_noise: 0.005,
            seed,
        }
    }

    pub fn naive(n: usize, seed: u64) -> Self {
        ExplorationConfig {
            mode: ExploreMode::Naive,
            k: 100,
            ..Self::contact_based(n, seed)
        }
    }

    pub fn for_mode(mode: ExploreMode, n: usize, seed: u64) -> Self {
        match mode {
            ExploreMode::ContactBased => Self::contact_based(n, seed),
            ExploreMode::Naive => Self::naive(n, seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let probs_ok = (0.0..=1.0).contains(&self.p_free)
            && (0.0..=1.0).contains(&self.p_close)
            && self.p_free + self.p_close <= 1.0;
        if !probs_ok {
            return Err(Error::config(format!(
                "need p_free, p_close >= 0 and p_free + p_close <= 1, got {} and {}",
                self.p_free, self.p_close
            )));
        }
        if self.k == 0 {
            return Err(Error::config("episode length K must be at least 1"));
        }
        if self.n < self.k {
            return Err(Error::config(format!("budget N = {} is smaller than K = {}", self.n, self.k)));
        }
        if self.h_free < 0.0 || self.h_close < 0.0 || self.init_noise < 0.0 {
            return Err(Error::config("heights and noise must be non-negative"));
        }
        Ok(())
    }

    pub fn num_episodes(&self) -> usize {
        self.n / self.k
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundBranch {
    Free,
    Close,
    Contact,
}

/// Height of the lowest body point above the ground at episode start.
///
/// `r` selects the branch and `u` (in `[0, 1)`) places the height inside it.
pub fn ground_distance_from(r: f64, u: f64, cfg: &ExplorationConfig) -> (GroundBranch, f64) {
    if r < cfg.p_free {
        (GroundBranch::Free, u * cfg.h_free)
    } else if r < cfg.p_free + cfg.p_close {
        (GroundBranch::Close, u * cfg.h_close)
    } else {
        (GroundBranch::Contact, 0.0)
    }
}

pub fn sample_ground_distance(rng: &mut Rng, cfg: &ExplorationConfig) -> (GroundBranch, f64) {
    let r: f64 = rng.random();
    let u: f64 = rng.random();
    ground_distance_from(r, u, cfg)
}

/// Random start state for one contact-based episode, along with the ground
/// distance it was placed at.
pub fn sample_initial_state(
    model: &Model,
    ranges: &StateRanges,
    rng: &mut Rng,
    cfg: &ExplorationConfig,
) -> (SimState, f64) {
    let spec = model.spec();
    let layout = &spec.layout;
    let mut s = ranges.sample_uniform(rng);
    for &i in &layout.translation_invariant {
        s[i] = spec.default_pose[i];
    }
    if cfg.upright_bias {
        bias_toward_default(model, &mut s, rng.random());
    }
    let (_, d) = sample_ground_distance(rng, cfg);
    model.place_above_ground(&mut s, d);
    (s, d)
}

/// Moves root rotation and velocities a fraction `lambda` of the way to the
/// default pose.
pub fn bias_toward_default(model: &Model, s: &mut SimState, lambda: f64) {
    let spec = model.spec();
    let layout = &spec.layout;
    for &i in layout.root_rot.iter().chain(&layout.root_vel).chain(&layout.root_angvel) {
        s[i] += lambda * (spec.default_pose[i] - s[i]);
    }
}

/// Default pose with uniform noise of half-width `cfg.init_noise`.
pub fn sample_naive_state(model: &Model, rng: &mut Rng, cfg: &ExplorationConfig) -> SimState {
    let mut s = model.spec().default_pose.clone();
    if cfg.init_noise > 0.0 {
        for v in s.iter_mut() {
            *v += rng.random_range(-cfg.init_noise..=cfg.init_noise);
        }
    }
    s
}

pub fn random_action(model: &Model, rng: &mut Rng) -> Vec<f64> {
    model
        .spec()
        .torque_bounds
        .iter()
        .map(|&(lo, hi)| rng.random_range(lo..=hi))
        .collect()
}

const EPISODE_STREAM: u64 = 0xE9;

fn run_episode(model: &Model, ranges: &StateRanges, cfg: &ExplorationConfig, index: usize) -> Result<Episode> {
    let mut rng = rng::stream(cfg.seed, &[EPISODE_STREAM, index as u64]);
    let mut s = match cfg.mode {
        ExploreMode::ContactBased => sample_initial_state(model, ranges, &mut rng, cfg).0,
        ExploreMode::Naive => sample_naive_state(model, &mut rng, cfg),
    };
    let mut transitions = Vec::with_capacity(cfg.k);
    for _ in 0..cfg.k {
        let a = random_action(model, &mut rng);
        let next = model.step(&s, &a)?;
        transitions.push(Transition { s, a, next: next.clone() });
        s = next;
    }
    Ok(Episode { index, transitions })
}

/// Runs `floor(N / K)` random-action episodes with termination bypassed.
///
/// Episodes whose simulation diverges are dropped (their budget is still
/// spent) and listed in the buffer metadata.
pub fn run_exploration(model: &Model, ranges: &StateRanges, cfg: &ExplorationConfig) -> Result<ExplorationBuffer> {
    cfg.validate()?;
    if ranges.dim() != model.spec().state_dim {
        return Err(Error::config("state ranges do not match the environment"));
    }
    let results: Vec<Result<Episode>> = (0..cfg.num_episodes())
        .into_par_iter()
        .map(|i| run_episode(model, ranges, cfg, i))
        .collect();
    let mut episodes = Vec::with_capacity(results.len());
    let mut dropped = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(ep) => episodes.push(ep),
            Err(Error::Diverged { .. }) => {
                log::warn!("exploration episode {i} diverged and was dropped");
                dropped.push(i);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(ExplorationBuffer {
        meta: BufferMeta {
            env_id: model.id(),
            config: cfg.clone(),
            ranges: ranges.clone(),
            dropped_episodes: dropped,
        },
        episodes,
    })
}

#[cfg(test)]
mod tests;

//! High-level movement optimizers (offline CMA-ES, online sampling MPC,
//! PPO) acting either on torques directly or on target-state trajectories
//! that a low-level controller set turns into torques.

mod cma;
mod mpc;
mod ppo;
mod record;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cma::{cma_es_offline, Cma, CmaConfig, CmaOutcome, CmaParams};
pub use mpc::{noise_variance, online_mpc_step, run_mpc, MpcConfig, MpcRun, MpcStep};
pub use ppo::{evaluate_policy, gae, policy_action_dim, ppo_hlc, sampled_episode_return, PpoConfig, PpoOutcome};
pub use record::{aggregate_scores, normalized_scores, scores_to_csv, RecordRow, RunRecord, ScoreRow};

use crate::error::{Error, Result};
use crate::llc::LlcSet;
use crate::sim::{wrap_angle, Model, Objective, SimState, ACTION_PERIOD};

/// What one decision slot means.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpace {
    /// One torque vector per slot.
    Torque,
    /// One target state per slot, fed to the controllers `h` at a time.
    Llc { h: usize },
}

impl ActionSpace {
    pub fn h(self) -> usize {
        match self {
            ActionSpace::Torque => 0,
            ActionSpace::Llc { h } => h,
        }
    }

    pub fn kind(self) -> &'static str {
        match self {
            ActionSpace::Torque => "torque",
            ActionSpace::Llc { .. } => "llc",
        }
    }
}

impl fmt::Display for ActionSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActionSpace::Torque => f.write_str("torque"),
            ActionSpace::Llc { h } => write!(f, "llc:{h}"),
        }
    }
}

impl FromStr for ActionSpace {
    type Err = Error;

    /// Accepts `torque`, `llc` (H = 5) and `llc:<H>`.
    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "torque" => Ok(ActionSpace::Torque),
            None if s == "llc" => Ok(ActionSpace::Llc { h: 5 }),
            Some(("llc", h)) => {
                let h: usize = h.parse().map_err(|_| Error::config(format!("bad H in action space `{s}`")))?;
                if h == 0 {
                    return Err(Error::config("H must be at least 1"));
                }
                Ok(ActionSpace::Llc { h })
            }
            _ => Err(Error::config(format!("unknown action space `{s}` (torque, llc, llc:<H>)"))),
        }
    }
}

/// Planning horizon in action periods.
pub fn horizon_steps(seconds: f64) -> usize {
    (seconds / ACTION_PERIOD).round() as usize
}

/// Translates decision slots into torques for one environment.
///
/// Raw slots are torques or absolute target states. Translation-invariant
/// target dims are stored relative to an origin state so that their bounds
/// (the calibrated spans) stay meaningful wherever the agent is.
#[derive(Clone, Debug)]
pub struct Decoder<'a> {
    pub model: &'a Model,
    pub space: ActionSpace,
    pub llc: Option<&'a LlcSet>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    relative: Vec<usize>,
}

impl<'a> Decoder<'a> {
    pub fn new(model: &'a Model, space: ActionSpace, llc: Option<&'a LlcSet>) -> Result<Self> {
        let spec = model.spec();
        match space {
            ActionSpace::Torque => Ok(Decoder {
                model,
                space,
                llc: None,
                lo: spec.action_low(),
                hi: spec.action_high(),
                relative: Vec::new(),
            }),
            ActionSpace::Llc { h } => {
                let llc = llc.ok_or_else(|| Error::usage("the llc action space needs a trained controller set"))?;
                llc.check_env(model.id())?;
                if h == 0 || h > llc.h_max() {
                    return Err(Error::config(format!("H = {h} outside 1..={}", llc.h_max())));
                }
                let r = &llc.meta.ranges;
                Ok(Decoder {
                    model,
                    space,
                    llc: Some(llc),
                    lo: r.min.clone(),
                    hi: r.max.clone(),
                    relative: spec.layout.translation_invariant.clone(),
                })
            }
        }
    }

    pub fn slot_dim(&self) -> usize {
        self.lo.len()
    }

    /// Raw slot bounds around `origin`.
    pub fn bounds(&self, origin: &SimState) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.lo.clone();
        let mut hi = self.hi.clone();
        for &i in &self.relative {
            lo[i] += origin[i];
            hi[i] += origin[i];
        }
        (lo, hi)
    }

    /// Normalized coordinates in `[-1, 1]` to a raw slot.
    pub fn decode_slot(&self, z: &[f64], origin: &SimState) -> Vec<f64> {
        let (lo, hi) = self.bounds(origin);
        z.iter()
            .zip(lo.iter().zip(&hi))
            .map(|(z, (lo, hi))| (0.5 * (lo + hi) + 0.5 * (hi - lo) * z).clamp(*lo, *hi))
            .collect()
    }

    pub fn encode_slot(&self, raw: &[f64], origin: &SimState) -> Vec<f64> {
        let (lo, hi) = self.bounds(origin);
        raw.iter()
            .zip(lo.iter().zip(&hi))
            .map(|(v, (lo, hi))| if hi > lo { (2.0 * v - lo - hi) / (hi - lo) } else { 0.0 })
            .collect()
    }

    /// Zero-motion slot: zero torque, or the state itself as target.
    pub fn rest_slot(&self, s: &SimState) -> Vec<f64> {
        match self.space {
            ActionSpace::Torque => self.model.spec().clamp_action(&vec![0.0; self.slot_dim()]),
            ActionSpace::Llc { .. } => s.to_vec(),
        }
    }

    /// Torque for state `s` given the remaining raw slots, first slot due now.
    pub fn act(&self, s: &SimState, slots: &[Vec<f64>]) -> Result<Vec<f64>> {
        if slots.is_empty() {
            return Err(Error::usage("no decision slots left"));
        }
        match (self.space, self.llc) {
            (ActionSpace::Llc { h }, Some(llc)) => {
                let targets: Vec<SimState> = slots[..h.min(slots.len())].iter().map(|g| SimState(g.clone())).collect();
                llc.track(self.model, s, &targets)
            }
            _ => Ok(self.model.spec().clamp_action(&slots[0])),
        }
    }
}

/// Flat CMA-ES parameter vector: `T` slots of normalized coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionVector(pub Vec<f64>);

impl DecisionVector {
    /// The zero-motion plan of `t` slots from `s0`.
    pub fn rest(dec: &Decoder, s0: &SimState, t: usize) -> Self {
        let z = dec.encode_slot(&dec.rest_slot(s0), s0);
        DecisionVector(z.repeat(t))
    }

    pub fn raw_slots(&self, dec: &Decoder, origin: &SimState) -> Result<Vec<Vec<f64>>> {
        let d = dec.slot_dim();
        if self.0.is_empty() || self.0.len() % d != 0 {
            return Err(Error::usage(format!(
                "decision vector of length {} is not a positive multiple of the slot dim {d}",
                self.0.len()
            )));
        }
        Ok(self.0.chunks(d).map(|z| dec.decode_slot(z, origin)).collect())
    }
}

/// Outcome of one open-loop rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub ret: f64,
    pub steps: usize,
    pub terminated: bool,
    pub diverged: bool,
}

/// Rolls raw slots from `s0`, one slot per action period. Early termination
/// charges the task's fall penalty for each remaining slot; divergence sets
/// the return to `floor`.
pub fn evaluate_plan(
    dec: &Decoder,
    task: &dyn Objective,
    s0: &SimState,
    slots: &[Vec<f64>],
    floor: f64,
) -> Result<Evaluation> {
    let t_total = slots.len();
    let mut s = s0.clone();
    let mut ret = 0.0;
    for t in 0..t_total {
        let a = dec.act(&s, &slots[t..])?;
        let next = match dec.model.step(&s, &a) {
            Ok(n) => n,
            Err(Error::Diverged { .. }) => {
                return Ok(Evaluation { ret: floor, steps: t + 1, terminated: false, diverged: true })
            }
            Err(e) => return Err(e),
        };
        ret += task.reward(dec.model, t, &s, &next, &a);
        s = next;
        if task.is_terminal(dec.model, &s) {
            ret -= task.fall_penalty() * (t_total - t - 1) as f64;
            return Ok(Evaluation { ret, steps: t + 1, terminated: true, diverged: false });
        }
    }
    Ok(Evaluation { ret, steps: t_total, terminated: false, diverged: false })
}

/// Return of a decision vector from the task's initial state.
pub fn evaluate_trajectory(dec: &Decoder, task: &dyn Objective, decision: &DecisionVector, floor: f64) -> Result<Evaluation> {
    let s0 = task.initial_state(dec.model);
    let slots = decision.raw_slots(dec, &s0)?;
    evaluate_plan(dec, task, &s0, &slots, floor)
}

/// Follow a target point around a circle of `radius` that passes through
/// the origin: the target starts at the origin heading along +x and
/// circles counter-clockwise around `(0, radius)` (point-mass agents).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovingTarget {
    pub radius: f64,
    pub period_seconds: f64,
    pub steps: usize,
}

impl Default for MovingTarget {
    fn default() -> Self {
        MovingTarget { radius: 1.0, period_seconds: 8.0, steps: 100 }
    }
}

impl MovingTarget {
    /// Target position after `step` action periods.
    pub fn target(&self, step: usize) -> [f64; 2] {
        let phase = std::f64::consts::TAU * step as f64 * ACTION_PERIOD / self.period_seconds;
        [self.radius * phase.sin(), self.radius * (1.0 - phase.cos())]
    }

    pub fn squared_error(&self, model: &Model, step: usize, s: &SimState) -> f64 {
        let g = self.target(step);
        model.spec().layout.root_pos.iter().zip(g).map(|(&i, g)| (s[i] - g).powi(2)).sum()
    }
}

impl Objective for MovingTarget {
    fn initial_state(&self, model: &Model) -> SimState {
        model.spec().default_pose.clone()
    }

    /// Negative squared distance to where the target is when `next` is reached.
    fn reward(&self, model: &Model, step: usize, _state: &SimState, next: &SimState, _action: &[f64]) -> f64 {
        -self.squared_error(model, step + 1, next)
    }

    fn is_terminal(&self, _model: &Model, _state: &SimState) -> bool {
        false
    }

    fn episode_steps(&self) -> usize {
        self.steps
    }
}

/// Reach and hold a fixed point (point-mass agents).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReachPoint {
    pub goal: [f64; 2],
    pub steps: usize,
}

impl Objective for ReachPoint {
    fn initial_state(&self, model: &Model) -> SimState {
        model.spec().default_pose.clone()
    }

    fn reward(&self, model: &Model, _step: usize, _state: &SimState, next: &SimState, _action: &[f64]) -> f64 {
        -model.spec().layout.root_pos.iter().zip(self.goal).map(|(&i, g)| (next[i] - g).powi(2)).sum::<f64>()
    }

    fn is_terminal(&self, _model: &Model, _state: &SimState) -> bool {
        false
    }

    fn episode_steps(&self) -> usize {
        self.steps
    }
}

/// PPO observation: normalized state with translation-invariant dims
/// zeroed, plus the elapsed fraction of the episode.
pub(crate) fn observation(model: &Model, ranges: &crate::sim::StateRanges, s: &SimState, t: usize, steps: usize) -> Vec<f64> {
    let layout = &model.spec().layout;
    let span = ranges.safe_span();
    let center = ranges.center();
    let mut x: Vec<f64> = (0..s.len())
        .map(|i| {
            if layout.translation_invariant.contains(&i) {
                0.0
            } else if layout.is_wrapped(i) {
                2.0 * wrap_angle(s[i] - center[i]) / span[i]
            } else {
                2.0 * (s[i] - center[i]) / span[i]
            }
        })
        .collect();
    x.push(t as f64 / steps as f64);
    x
}

#[cfg(test)]
mod tests;

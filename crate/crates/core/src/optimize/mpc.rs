use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{horizon_steps, Decoder, RecordRow, RunRecord};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::sim::{Objective, SimState};

const ROLLOUT_STREAM: u64 = 0x3C;
const FORK_STREAM: u64 = 0x3D;
const PRUNE_STREAM: u64 = 0x3E;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub rollouts: usize,
    pub horizon_seconds: f64,
    /// Fraction of alive rollouts replaced by forks after each planning
    /// step; 0 disables pruning.
    pub prune_fraction: f64,
    /// Multiplies every rollout's noise standard deviation.
    pub noise_scale: f64,
    pub divergence_return: f64,
    pub seed: u64,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig {
            rollouts: 250,
            horizon_seconds: 2.0,
            prune_fraction: 0.25,
            noise_scale: 1.0,
            divergence_return: -1e4,
            seed: 0,
        }
    }
}

impl MpcConfig {
    pub fn horizon(&self) -> usize {
        horizon_steps(self.horizon_seconds)
    }

    fn validate(&self) -> Result<()> {
        if self.rollouts == 0 || self.horizon() == 0 {
            return Err(Error::config("MPC needs at least one rollout and one planning step"));
        }
        if !(0.0..1.0).contains(&self.prune_fraction) {
            return Err(Error::config("prune_fraction must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Noise variance of rollout `i` out of `n` for a dim bounded by `[m, M]`:
/// `(i + 1) / n * (M - m)`.
pub fn noise_variance(i: usize, n: usize, m: f64, big_m: f64) -> f64 {
    (big_m - m) * (i + 1) as f64 / n as f64
}

#[derive(Clone, Debug)]
struct Rollout {
    noise_index: usize,
    state: SimState,
    slots: Vec<Vec<f64>>,
    first_action: Vec<f64>,
    ret: f64,
    alive: bool,
    diverged: bool,
    rng: Rng,
}

/// Result of one planning step.
#[derive(Clone, Debug, PartialEq)]
pub struct MpcStep {
    pub action: Vec<f64>,
    /// Raw slots of the best rollout, reused as the next step's mean.
    pub best: Vec<Vec<f64>>,
    pub best_return: f64,
    pub env_steps: usize,
    pub forks: usize,
    /// True when every rollout diverged and the shifted previous plan was used.
    pub fallback: bool,
}

struct Planner<'a> {
    mean: Vec<Vec<f64>>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cfg: &'a MpcConfig,
}

impl Planner<'_> {
    fn sample_slot(&self, t: usize, noise_index: usize, rng: &mut Rng) -> Vec<f64> {
        let last = t + 1 == self.mean.len();
        (0..self.lo.len())
            .map(|d| {
                let (lo, hi) = (self.lo[d], self.hi[d]);
                if last {
                    return if hi > lo { rng.random_range(lo..=hi) } else { lo };
                }
                let sd = self.cfg.noise_scale * noise_variance(noise_index, self.cfg.rollouts, lo, hi).sqrt();
                let v = if sd > 0.0 { Normal::new(self.mean[t][d], sd).expect("finite sd").sample(rng) } else { self.mean[t][d] };
                v.clamp(lo, hi)
            })
            .collect()
    }

    fn resample_from(&self, r: &mut Rollout, start: usize) {
        for t in start..self.mean.len() {
            let slot = self.sample_slot(t, r.noise_index, &mut r.rng);
            r.slots[t] = slot;
        }
    }
}

/// One online planning step from `state` at episode step `step`.
///
/// Rollout `i` perturbs the previous best plan, shifted by one slot, with
/// Gaussian noise of variance `(i + 1) / N * (M - m)` per dim; its final
/// slot is uniform in the bounds. After every simulated step the worst
/// `prune_fraction` of alive rollouts are replaced by forks of random
/// survivors. A fork keeps its parent's noise index and resamples the
/// slots it has not executed yet.
pub fn online_mpc_step(
    dec: &Decoder,
    task: &dyn Objective,
    state: &SimState,
    step: usize,
    prev_best: &[Vec<f64>],
    origin: &SimState,
    cfg: &MpcConfig,
) -> Result<MpcStep> {
    cfg.validate()?;
    let t_total = cfg.horizon();
    if prev_best.len() != t_total {
        return Err(Error::usage(format!("previous plan has {} slots, horizon is {t_total}", prev_best.len())));
    }
    let (lo, hi) = dec.bounds(origin);
    let mut mean: Vec<Vec<f64>> = prev_best[1..].to_vec();
    mean.push(prev_best[t_total - 1].clone());
    let planner = Planner { mean, lo, hi, cfg };

    let mut rollouts: Vec<Rollout> = (0..cfg.rollouts)
        .map(|i| {
            let mut r = Rollout {
                noise_index: i,
                state: state.clone(),
                slots: vec![Vec::new(); t_total],
                first_action: Vec::new(),
                ret: 0.0,
                alive: true,
                diverged: false,
                rng: rng::stream(cfg.seed, &[ROLLOUT_STREAM, step as u64, i as u64]),
            };
            planner.resample_from(&mut r, 0);
            r
        })
        .collect();

    let mut env_steps = 0usize;
    let mut forks = 0usize;
    for t in 0..t_total {
        env_steps += rollouts.iter().filter(|r| r.alive).count();
        rollouts.par_iter_mut().filter(|r| r.alive).try_for_each(|r| -> Result<()> {
            let a = dec.act(&r.state, &r.slots[t..])?;
            match dec.model.step(&r.state, &a) {
                Ok(next) => {
                    r.ret += task.reward(dec.model, step + t, &r.state, &next, &a);
                    if t == 0 {
                        r.first_action = a;
                    }
                    r.state = next;
                    if task.is_terminal(dec.model, &r.state) {
                        r.ret -= task.fall_penalty() * (t_total - t - 1) as f64;
                        r.alive = false;
                    }
                }
                Err(Error::Diverged { .. }) => {
                    r.alive = false;
                    r.diverged = true;
                }
                Err(e) => return Err(e),
            }
            Ok(())
        })?;

        if cfg.prune_fraction > 0.0 && t + 1 < t_total {
            let mut alive: Vec<usize> = (0..rollouts.len()).filter(|&k| rollouts[k].alive).collect();
            let cut = (cfg.prune_fraction * alive.len() as f64).floor() as usize;
            if cut > 0 && cut < alive.len() {
                alive.sort_by(|&a, &b| rollouts[a].ret.total_cmp(&rollouts[b].ret).then(a.cmp(&b)));
                let (worst, survivors) = alive.split_at(cut);
                let mut pick = rng::stream(cfg.seed, &[PRUNE_STREAM, step as u64, t as u64]);
                let parents: Vec<usize> = worst.iter().map(|_| survivors[pick.random_range(0..survivors.len())]).collect();
                for (&dead, parent) in worst.iter().zip(parents) {
                    let mut child = rollouts[parent].clone();
                    child.rng = rng::stream(cfg.seed, &[FORK_STREAM, step as u64, t as u64, dead as u64]);
                    planner.resample_from(&mut child, t + 1);
                    rollouts[dead] = child;
                    forks += 1;
                }
            }
        }
    }

    let best = rollouts
        .iter()
        .filter(|r| !r.diverged)
        .max_by(|a, b| a.ret.total_cmp(&b.ret).then(b.noise_index.cmp(&a.noise_index)));
    match best {
        Some(b) => Ok(MpcStep {
            action: b.first_action.clone(),
            best: b.slots.clone(),
            best_return: b.ret,
            env_steps,
            forks,
            fallback: false,
        }),
        None => {
            log::warn!("MPC step {step}: every rollout diverged, following the previous plan");
            Ok(MpcStep {
                action: dec.act(state, &planner.mean)?,
                best: planner.mean.clone(),
                best_return: cfg.divergence_return,
                env_steps,
                forks,
                fallback: true,
            })
        }
    }
}

/// A closed-loop MPC episode.
#[derive(Clone, Debug, PartialEq)]
pub struct MpcRun {
    pub states: Vec<SimState>,
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub ret: f64,
    pub fallbacks: usize,
    pub record: RunRecord,
}

/// Runs the planner for `steps` action periods from the task's initial
/// state (or until the task terminates). The first plan is the
/// zero-motion plan.
pub fn run_mpc(dec: &Decoder, task: &dyn Objective, steps: usize, cfg: &MpcConfig) -> Result<MpcRun> {
    cfg.validate()?;
    let origin = task.initial_state(dec.model);
    let mut s = origin.clone();
    let mut plan = vec![dec.rest_slot(&s); cfg.horizon()];
    let mut run = MpcRun {
        states: vec![s.clone()],
        actions: Vec::new(),
        rewards: Vec::new(),
        ret: 0.0,
        fallbacks: 0,
        record: RunRecord::new(dec.model.id(), "mpc", dec.space, cfg.seed),
    };
    let mut env_steps = 0usize;
    for step in 0..steps {
        let out = online_mpc_step(dec, task, &s, step, &plan, &origin, cfg)?;
        env_steps += out.env_steps + 1;
        run.fallbacks += usize::from(out.fallback);
        let next = dec.model.step(&s, &out.action)?;
        let r = task.reward(dec.model, step, &s, &next, &out.action);
        run.ret += r;
        run.rewards.push(r);
        run.actions.push(out.action);
        s = next;
        run.states.push(s.clone());
        run.record.push(RecordRow { iteration: step, env_steps, mean_return: run.ret, std_return: 0.0 });
        plan = out.best;
        if task.is_terminal(dec.model, &s) {
            run.ret -= task.fall_penalty() * (steps - step - 1) as f64;
            break;
        }
    }
    Ok(run)
}

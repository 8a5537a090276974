use std::path::PathBuf;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{observation, ActionSpace, Decoder, RecordRow, RunRecord};
use crate::error::{Error, Result};
use crate::nn::{self, Adam, GaussianPolicy, GradStep, Mlp, MlpConfig};
use crate::rng;
use crate::sim::{wrap_angle, Objective, SimState, StateRanges};

const EPISODE_STREAM: u64 = 0x990;
const UPDATE_STREAM: u64 = 0x991;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub minibatches: usize,
    pub epochs: usize,
    pub clip: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub grad_clip: f64,
    /// Simulated steps collected per iteration.
    pub iteration_steps: usize,
    pub total_steps: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub seed: u64,
    /// Where to save the policy if training aborts.
    #[serde(skip)]
    pub checkpoint: Option<PathBuf>,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.99,
            gae_lambda: 0.95,
            learning_rate: 1e-4,
            minibatches: 4,
            epochs: 4,
            clip: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            grad_clip: 0.5,
            iteration_steps: 2_000,
            total_steps: 300_000,
            hidden: vec![64, 64],
            init_log_std: -0.5,
            seed: 0,
            checkpoint: None,
        }
    }
}

impl PpoConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return Err(Error::config("gamma and gae_lambda must lie in [0, 1]"));
        }
        if self.minibatches == 0 || self.epochs == 0 || self.iteration_steps == 0 {
            return Err(Error::config("minibatches, epochs and iteration_steps must be positive"));
        }
        Ok(())
    }
}

/// Size of the policy output for an action space.
pub fn policy_action_dim(dec: &Decoder) -> usize {
    match dec.space {
        ActionSpace::Torque => dec.model.spec().action_dim,
        ActionSpace::Llc { h } => h * dec.model.spec().state_dim,
    }
}

/// Torque for a policy output. In LLC mode the output holds `H` target
/// offsets, each scaled by half the calibrated span: `G_i = s + span/2 * u_i`.
fn act(dec: &Decoder, s: &SimState, u: &[f64]) -> Result<Vec<f64>> {
    let u: Vec<f64> = u.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
    match (dec.space, dec.llc) {
        (ActionSpace::Llc { .. }, Some(llc)) => {
            let layout = &dec.model.spec().layout;
            let span = llc.meta.ranges.safe_span();
            let targets: Vec<SimState> = u
                .chunks(s.len())
                .map(|g| {
                    SimState(
                        (0..s.len())
                            .map(|d| {
                                let v = s[d] + 0.5 * span[d] * g[d];
                                if layout.is_wrapped(d) {
                                    wrap_angle(v)
                                } else {
                                    v
                                }
                            })
                            .collect(),
                    )
                })
                .collect();
            llc.track(dec.model, s, &targets)
        }
        _ => Ok(dec.decode_slot(&u, s)),
    }
}

struct Sample {
    obs: Vec<f64>,
    action: Vec<f64>,
    log_prob: f64,
    reward: f64,
    value: f64,
    done: bool,
}

struct EpisodeData {
    samples: Vec<Sample>,
    ret: f64,
}

fn run_episode(
    dec: &Decoder,
    task: &dyn Objective,
    ranges: &StateRanges,
    policy: &GaussianPolicy,
    value: &Mlp,
    rng: &mut rng::Rng,
) -> Result<Option<EpisodeData>> {
    let steps = task.episode_steps();
    let mut s = task.initial_state(dec.model);
    let mut samples = Vec::with_capacity(steps);
    let mut ret = 0.0;
    for t in 0..steps {
        let obs = observation(dec.model, ranges, &s, t, steps);
        let u = policy.sample(&obs, rng);
        let log_prob = policy.log_prob(&obs, &u);
        let v = value.forward(&obs)[0];
        let a = act(dec, &s, &u)?;
        let next = match dec.model.step(&s, &a) {
            Ok(n) => n,
            Err(Error::Diverged { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let mut r = task.reward(dec.model, t, &s, &next, &a);
        let fell = task.is_terminal(dec.model, &next);
        if fell {
            r -= task.fall_penalty() * (steps - t - 1) as f64;
        }
        ret += r;
        // The elapsed-time input makes the horizon part of the state, so
        // the last step is terminal rather than truncated.
        let done = fell || t + 1 == steps;
        samples.push(Sample { obs, action: u, log_prob, reward: r, value: v, done });
        s = next;
        if fell {
            break;
        }
    }
    Ok(Some(EpisodeData { samples, ret }))
}

/// Generalized advantage estimates and value targets for one episode.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let next_value = if dones[t] || t + 1 == n { 0.0 } else { values[t + 1] };
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * not_done * next_adv;
        adv[t] = next_adv;
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, targets)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PpoOutcome {
    pub policy: GaussianPolicy,
    pub value: Mlp,
    pub record: RunRecord,
}

/// Clipped-surrogate PPO with a separate value network and GAE.
pub fn ppo_hlc(dec: &Decoder, task: &dyn Objective, ranges: &StateRanges, cfg: &PpoConfig) -> Result<PpoOutcome> {
    cfg.validate()?;
    let obs_dim = dec.model.spec().state_dim + 1;
    let act_dim = policy_action_dim(dec);
    let pcfg = MlpConfig { hidden_layers: cfg.hidden.clone(), ..MlpConfig::small(obs_dim, act_dim, cfg.seed) };
    let mut policy = GaussianPolicy::new(&pcfg, cfg.init_log_std, None)?;
    let vcfg = MlpConfig { hidden_layers: cfg.hidden.clone(), ..MlpConfig::small(obs_dim, 1, cfg.seed ^ 0x5eed) };
    let mut value = Mlp::new(&vcfg)?;
    let step = GradStep::new(cfg.learning_rate).with_clip(Some(cfg.grad_clip));
    let mut popt = Adam::new(step.clone(), policy.num_params())?;
    let mut vopt = Adam::new(step, value.num_params())?;
    let mut record = RunRecord::new(dec.model.id(), "ppo", dec.space, cfg.seed);

    let episode_len = task.episode_steps().max(1);
    let n_episodes = cfg.iteration_steps.div_ceil(episode_len);
    let mut env_steps = 0usize;
    let mut iteration = 0usize;
    while env_steps < cfg.total_steps {
        let episodes: Vec<Option<EpisodeData>> = (0..n_episodes)
            .into_par_iter()
            .map(|e| {
                let mut rng = rng::stream(cfg.seed, &[EPISODE_STREAM, iteration as u64, e as u64]);
                run_episode(dec, task, ranges, &policy, &value, &mut rng)
            })
            .collect::<Result<_>>()?;
        let dropped = episodes.iter().filter(|e| e.is_none()).count();
        if dropped > 0 {
            log::warn!("ppo iteration {iteration}: {dropped} episodes diverged and were dropped");
        }
        let episodes: Vec<EpisodeData> = episodes.into_iter().flatten().collect();
        if episodes.is_empty() {
            return Err(Error::Training(format!("every episode of iteration {iteration} diverged")));
        }
        let returns: Vec<f64> = episodes.iter().map(|e| e.ret).collect();

        let mut batch: Vec<(Vec<f64>, Vec<f64>, f64, f64, f64)> = Vec::new();
        for ep in &episodes {
            let r: Vec<f64> = ep.samples.iter().map(|s| s.reward).collect();
            let v: Vec<f64> = ep.samples.iter().map(|s| s.value).collect();
            let d: Vec<bool> = ep.samples.iter().map(|s| s.done).collect();
            let (adv, targets) = gae(&r, &v, &d, cfg.gamma, cfg.gae_lambda);
            for (k, s) in ep.samples.iter().enumerate() {
                batch.push((s.obs.clone(), s.action.clone(), s.log_prob, adv[k], targets[k]));
            }
        }
        env_steps += batch.len();
        record.push(RecordRow::from_returns(iteration, env_steps, &returns));

        let mut rng = rng::stream(cfg.seed, &[UPDATE_STREAM, iteration as u64]);
        let mut order: Vec<usize> = (0..batch.len()).collect();
        let mb = batch.len().div_ceil(cfg.minibatches);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(mb) {
                let n = chunk.len() as f64;
                let mean = chunk.iter().map(|&i| batch[i].3).sum::<f64>() / n;
                let sd = (chunk.iter().map(|&i| (batch[i].3 - mean).powi(2)).sum::<f64>() / n).sqrt();
                let mut pgrad = vec![0.0; policy.num_params()];
                let mut vgrad = vec![0.0; value.num_params()];
                for &i in chunk {
                    let (obs, a, old, adv, target) = &batch[i];
                    let adv = (adv - mean) / (sd + 1e-8);
                    nn::surrogate_grad(&policy, obs, a, *old, adv, cfg.clip, 1.0 / n, &mut pgrad);
                    let (v, cache) = value.forward_cached(obs);
                    value.backward(&cache, &[2.0 * cfg.value_coef * (v[0] - target) / n], &mut vgrad);
                }
                policy.entropy_grad(-cfg.entropy_coef, &mut pgrad);
                let stepped = nn::update(&mut policy, &mut popt, &mut pgrad)
                    .and_then(|_| vopt.step(value.params_mut(), &mut vgrad));
                if let Err(e) = stepped {
                    if let Some(path) = &cfg.checkpoint {
                        nn::io::save_policy(path, &policy)?;
                        log::error!("ppo aborted; last good policy saved to {}", path.display());
                    }
                    return Err(e);
                }
            }
        }
        log::debug!("ppo iteration {iteration}: mean return {:.4}", record.final_return().unwrap_or(0.0));
        iteration += 1;
    }
    Ok(PpoOutcome { policy, value, record })
}

/// Deterministic (policy mean) episode return of a trained HLC.
pub fn evaluate_policy(dec: &Decoder, task: &dyn Objective, ranges: &StateRanges, policy: &GaussianPolicy) -> Result<f64> {
    let steps = task.episode_steps();
    let mut s = task.initial_state(dec.model);
    let mut ret = 0.0;
    for t in 0..steps {
        let u = policy.mlp.forward(&observation(dec.model, ranges, &s, t, steps));
        let a = act(dec, &s, &u)?;
        let next = dec.model.step(&s, &a)?;
        ret += task.reward(dec.model, t, &s, &next, &a);
        s = next;
        if task.is_terminal(dec.model, &s) {
            ret -= task.fall_penalty() * (steps - t - 1) as f64;
            break;
        }
    }
    Ok(ret)
}

/// Return of one episode with sampled actions; `None` if it diverged.
pub fn sampled_episode_return(
    dec: &Decoder,
    task: &dyn Objective,
    ranges: &StateRanges,
    policy: &GaussianPolicy,
    rng: &mut rng::Rng,
) -> Result<Option<f64>> {
    let steps = task.episode_steps();
    let mut s = task.initial_state(dec.model);
    let mut ret = 0.0;
    for t in 0..steps {
        let u = policy.sample(&observation(dec.model, ranges, &s, t, steps), rng);
        let a = act(dec, &s, &u)?;
        let next = match dec.model.step(&s, &a) {
            Ok(n) => n,
            Err(Error::Diverged { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        ret += task.reward(dec.model, t, &s, &next, &a);
        s = next;
        if task.is_terminal(dec.model, &s) {
            ret -= task.fall_penalty() * (steps - t - 1) as f64;
            break;
        }
    }
    Ok(Some(ret))
}

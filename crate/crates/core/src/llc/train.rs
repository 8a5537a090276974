use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LlcMeta, LlcSet, StateMetric, TargetMode, TargetTrajectory};
use crate::error::{Error, Result};
use crate::explore::ExplorationBuffer;
use crate::nn::{self, Adam, GaussianPolicy, GradStep};
use crate::rng::{self, Rng};
use crate::sim::{wrap_angle, Model, SimState, StateRanges};

/// How advantages are scaled before the update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageNorm {
    /// Each start state's advantages divided by their own RMS, so feasible
    /// targets (small return spread) weigh as much as unreachable ones.
    PerState,
    /// One RMS over the whole batch.
    Batch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LlcTrainConfig {
    pub h_max: usize,
    /// PPO iterations per horizon.
    pub m: usize,
    /// Simulated actions per iteration.
    pub n: usize,
    pub n_adv: usize,
    pub p_e: f64,
    pub p_l: f64,
    pub feasible_only: bool,
    pub target_mode: TargetMode,
    pub metric: StateMetric,
    pub ppo_clip: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub entropy_coef: f64,
    pub advantage_norm: AdvantageNorm,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch: usize,
    pub hidden: Vec<usize>,
    pub init_log_std: f64,
    pub seed: u64,
    /// Where to save the partially trained set if training aborts.
    #[serde(skip)]
    pub checkpoint: Option<PathBuf>,
}

impl Default for LlcTrainConfig {
    fn default() -> Self {
        LlcTrainConfig {
            h_max: 5,
            m: 500,
            n: 15_000,
            n_adv: 4,
            p_e: 0.8,
            p_l: 0.1,
            feasible_only: false,
            target_mode: TargetMode::Trajectory,
            metric: StateMetric::Normalized,
            ppo_clip: 0.2,
            learning_rate: 3e-3,
            epochs: 4,
            minibatches: 4,
            entropy_coef: 0.0,
            advantage_norm: AdvantageNorm::PerState,
            pretrain_epochs: 20,
            pretrain_lr: 1e-3,
            pretrain_batch: 256,
            hidden: vec![64, 64],
            init_log_std: -1.0,
            seed: 0,
            checkpoint: None,
        }
    }
}

impl LlcTrainConfig {
    /// Reduced budget for single-core runs.
    pub fn desk() -> Self {
        LlcTrainConfig { m: 50, n: 1_500, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h_max == 0 {
            return Err(Error::config("H_max must be at least 1"));
        }
        if self.n_adv < 2 {
            return Err(Error::config("N_adv must be at least 2 for a mean baseline"));
        }
        if self.p_e < 0.0 || self.p_l < 0.0 || self.p_e + self.p_l > 1.0 {
            return Err(Error::config(format!("need p_e + p_l <= 1, got {} + {}", self.p_e, self.p_l)));
        }
        if self.epochs == 0 || self.minibatches == 0 || self.pretrain_batch == 0 {
            return Err(Error::config("epochs, minibatches and batch size must be positive"));
        }
        Ok(())
    }
}

/// `(episode, step)` starts with at least `h` stored successors.
fn windows(buffer: &ExplorationBuffer, h: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for (e, ep) in buffer.episodes.iter().enumerate() {
        for t in 0..ep.len().saturating_sub(h - 1) {
            out.push((e, t));
        }
    }
    out
}

fn window_states(buffer: &ExplorationBuffer, (e, t): (usize, usize), h: usize) -> (SimState, Vec<SimState>) {
    let tr = &buffer.episodes[e].transitions;
    (tr[t].s.clone(), (t..t + h).map(|k| tr[k].next.clone()).collect())
}

/// Supervised pairs `(input, normalized first action)` from every run of
/// `h + 1` consecutive states.
pub fn pretrain_pairs(llc: &LlcSet, model: &Model, buffer: &ExplorationBuffer, h: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    windows(buffer, h)
        .into_iter()
        .map(|w| {
            let (s, targets) = window_states(buffer, w, h);
            let a = &buffer.episodes[w.0].transitions[w.1].a;
            (llc.input(model, &s, &targets), llc.from_torque(a))
        })
        .collect()
}

/// Fits `pi_h` to the recorded actions by maximum likelihood. Returns the
/// final mean negative log-likelihood.
pub fn pretrain(
    llc: &mut LlcSet,
    model: &Model,
    buffer: &ExplorationBuffer,
    h: usize,
    cfg: &LlcTrainConfig,
    rng: &mut Rng,
) -> Result<f64> {
    let pairs = pretrain_pairs(llc, model, buffer, h);
    if pairs.is_empty() {
        return Err(Error::config(format!("no exploration window has {} states for H = {h}", h + 1)));
    }
    let policy = &mut llc.policies[h - 1];
    let mut opt = Adam::new(GradStep::new(cfg.pretrain_lr).with_clip(None), policy.num_params())?;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut nll = f64::NAN;
    for _ in 0..cfg.pretrain_epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.pretrain_batch) {
            let mut grad = vec![0.0; policy.num_params()];
            let scale = -1.0 / chunk.len() as f64;
            for &i in chunk {
                total -= policy.log_prob_grad(&pairs[i].0, &pairs[i].1, scale, &mut grad);
            }
            nn::update(policy, &mut opt, &mut grad)?;
        }
        nll = total / pairs.len() as f64;
    }
    Ok(nll)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetBranch {
    Exploration,
    Linear,
    Constant,
}

fn random_target(model: &Model, s: &[f64], bounds: &StateRanges, rng: &mut Rng) -> SimState {
    let mut g = bounds.sample_uniform(rng);
    for &i in &model.spec().layout.translation_invariant {
        g[i] += s[i];
    }
    g
}

/// Draws targets for a start state at `window` of the buffer.
///
/// `bounds` are the state ranges seen in the exploration data.
pub fn sample_target_trajectory(
    model: &Model,
    buffer: &ExplorationBuffer,
    window: (usize, usize),
    h: usize,
    bounds: &StateRanges,
    rng: &mut Rng,
    cfg: &LlcTrainConfig,
) -> (SimState, TargetTrajectory, TargetBranch) {
    let (s, successors) = window_states(buffer, window, h);
    let r: f64 = rng.random();
    if cfg.feasible_only || r < cfg.p_e {
        return (s, TargetTrajectory(successors), TargetBranch::Exploration);
    }
    let g = random_target(model, &s, bounds, rng);
    if r < cfg.p_e + cfg.p_l {
        let d = model.state_delta(&s, &g);
        let wrapped = &model.spec().layout.wrapped;
        let targets = (1..=h)
            .map(|i| {
                let f = i as f64 / h as f64;
                SimState(
                    s.iter()
                        .zip(&d)
                        .enumerate()
                        .map(|(k, (x, dx))| {
                            let v = x + f * dx;
                            if wrapped.contains(&k) {
                                wrap_angle(v)
                            } else {
                                v
                            }
                        })
                        .collect(),
                )
            })
            .collect();
        (s, TargetTrajectory(targets), TargetBranch::Linear)
    } else {
        (s, TargetTrajectory(vec![g; h]), TargetBranch::Constant)
    }
}

/// Where `calc_q` gets its normalized actions from.
pub trait ActionSource {
    fn action(&mut self, policy: &GaussianPolicy, input: &[f64]) -> Vec<f64>;
}

/// Samples from each policy.
pub struct Sampled<'a>(pub &'a mut Rng);

impl ActionSource for Sampled<'_> {
    fn action(&mut self, policy: &GaussianPolicy, input: &[f64]) -> Vec<f64> {
        policy.sample(input, self.0)
    }
}

/// Plays back a fixed action sequence.
pub struct Replay {
    actions: std::vec::IntoIter<Vec<f64>>,
}

impl Replay {
    pub fn new(actions: Vec<Vec<f64>>) -> Self {
        Replay { actions: actions.into_iter() }
    }
}

impl ActionSource for Replay {
    fn action(&mut self, _: &GaussianPolicy, _: &[f64]) -> Vec<f64> {
        self.actions.next().expect("replay sequence is long enough")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalcQ {
    /// Normalized actions, first one from `pi_H`.
    pub actions: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    pub q: f64,
}

impl CalcQ {
    pub fn first_action(&self) -> &[f64] {
        &self.actions[0]
    }
}

/// Undiscounted return of following `pi_H, pi_{H-1}, .., pi_1` toward the
/// targets, with reward `-distance(s', G_1)` at every step.
pub fn calc_q(
    llc: &LlcSet,
    model: &Model,
    s: &SimState,
    targets: &[SimState],
    source: &mut dyn ActionSource,
) -> Result<CalcQ> {
    if targets.is_empty() || targets.len() > llc.h_max() {
        return Err(Error::usage(format!("calc_q needs 1..={} targets", llc.h_max())));
    }
    let mut out = CalcQ { actions: Vec::new(), rewards: Vec::new(), q: 0.0 };
    out.q = calc_q_step(llc, model, s, targets, source, &mut out)?;
    Ok(out)
}

fn calc_q_step(
    llc: &LlcSet,
    model: &Model,
    s: &SimState,
    targets: &[SimState],
    source: &mut dyn ActionSource,
    out: &mut CalcQ,
) -> Result<f64> {
    let x = llc.input(model, s, targets);
    let u = source.action(llc.policy(targets.len()), &x);
    let next = model.step(s, &llc.to_torque(&u))?;
    let r = -llc.distance(model, &next, &targets[0]);
    out.actions.push(u);
    out.rewards.push(r);
    if targets.len() > 1 {
        Ok(r + calc_q_step(llc, model, &next, &targets[1..], source, out)?)
    } else {
        Ok(r)
    }
}

/// One start state with its `N_adv` sampled first actions.
#[derive(Clone, Debug, PartialEq)]
pub struct AdvantageGroup {
    pub input: Vec<f64>,
    pub actions: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub v: f64,
    pub advantages: Vec<f64>,
}

impl AdvantageGroup {
    /// Mean-baseline advantages `A_i = Q_i - mean(Q)`.
    pub fn new(input: Vec<f64>, actions: Vec<Vec<f64>>, q: Vec<f64>) -> Self {
        let v = q.iter().sum::<f64>() / q.len() as f64;
        let advantages = q.iter().map(|qi| qi - v).collect();
        AdvantageGroup { input, actions, q, v, advantages }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdvantageBatch {
    pub groups: Vec<AdvantageGroup>,
    pub env_steps: usize,
    pub diverged: usize,
}

impl AdvantageBatch {
    pub fn mean_q(&self) -> f64 {
        let (sum, n) = self.groups.iter().fold((0.0, 0usize), |(s, n), g| (s + g.q.iter().sum::<f64>(), n + g.q.len()));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }
}

const COLLECT_STREAM: u64 = 0xC0;
const PRETRAIN_STREAM: u64 = 0xF1;
const UPDATE_STREAM: u64 = 0xD5;

/// Runs CalcQ `N_adv` times from each of about `N / (N_adv H)` start states.
#[allow(clippy::too_many_arguments)]
pub fn collect_batch(
    llc: &LlcSet,
    model: &Model,
    buffer: &ExplorationBuffer,
    bounds: &StateRanges,
    h: usize,
    iteration: usize,
    cfg: &LlcTrainConfig,
) -> Result<AdvantageBatch> {
    let eligible = windows(buffer, h);
    if eligible.is_empty() {
        return Err(Error::config(format!("no exploration window has {} states for H = {h}", h + 1)));
    }
    let n_states = (cfg.n / (cfg.n_adv * h)).max(1);
    let results: Vec<Result<Option<AdvantageGroup>>> = (0..n_states)
        .into_par_iter()
        .map(|j| {
            let mut rng = rng::stream(cfg.seed, &[COLLECT_STREAM, h as u64, iteration as u64, j as u64]);
            let w = eligible[rng.random_range(0..eligible.len())];
            let (s, targets, _) = sample_target_trajectory(model, buffer, w, h, bounds, &mut rng, cfg);
            let mut actions = Vec::with_capacity(cfg.n_adv);
            let mut q = Vec::with_capacity(cfg.n_adv);
            for _ in 0..cfg.n_adv {
                match calc_q(llc, model, &s, &targets.0, &mut Sampled(&mut rng)) {
                    Ok(c) => {
                        q.push(c.q);
                        actions.push(c.actions.into_iter().next().expect("one action per step"));
                    }
                    Err(Error::Diverged { .. }) => return Ok(None),
                    Err(e) => return Err(e),
                }
            }
            Ok(Some(AdvantageGroup::new(llc.input(model, &s, &targets.0), actions, q)))
        })
        .collect();
    let mut batch = AdvantageBatch { env_steps: n_states * cfg.n_adv * h, ..Default::default() };
    for r in results {
        match r? {
            Some(g) => batch.groups.push(g),
            None => batch.diverged += 1,
        }
    }
    if batch.diverged > 0 {
        log::warn!("H = {h}, iteration {iteration}: {} start states diverged", batch.diverged);
    }
    Ok(batch)
}

/// Clipped-surrogate PPO on the first actions with positive advantage.
/// Returns the number of samples used; with none the policy is untouched.
pub fn positive_advantage_update(
    policy: &mut GaussianPolicy,
    opt: &mut Adam,
    batch: &AdvantageBatch,
    cfg: &LlcTrainConfig,
    rng: &mut Rng,
) -> Result<usize> {
    let all: Vec<f64> = batch.groups.iter().flat_map(|g| g.advantages.iter().copied()).collect();
    let mut samples: Vec<(&[f64], &[f64], f64)> = Vec::new();
    let per_state = cfg.advantage_norm == AdvantageNorm::PerState;
    for g in &batch.groups {
        let rms = (g.advantages.iter().map(|a| a * a).sum::<f64>() / g.advantages.len() as f64).sqrt();
        for (a, &adv) in g.actions.iter().zip(&g.advantages) {
            if adv > 0.0 {
                samples.push((&g.input, a, if per_state { adv / rms } else { adv }));
            }
        }
    }
    if samples.is_empty() {
        return Ok(0);
    }
    let rms = (all.iter().map(|a| a * a).sum::<f64>() / all.len() as f64).sqrt();
    let scale = if per_state || rms == 0.0 { 1.0 } else { 1.0 / rms };
    let old: Vec<f64> = samples.iter().map(|(x, a, _)| policy.log_prob(x, a)).collect();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mb_size = samples.len().div_ceil(cfg.minibatches);
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(mb_size) {
            let mut grad = vec![0.0; policy.num_params()];
            let w = 1.0 / chunk.len() as f64;
            for &i in chunk {
                let (x, a, adv) = samples[i];
                nn::surrogate_grad(policy, x, a, old[i], adv * scale, cfg.ppo_clip, w, &mut grad);
            }
            if cfg.entropy_coef != 0.0 {
                policy.entropy_grad(-cfg.entropy_coef, &mut grad);
            }
            nn::update(policy, opt, &mut grad)?;
        }
    }
    Ok(samples.len())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub h: usize,
    pub iteration: usize,
    pub env_steps: usize,
    pub mean_q: f64,
    pub positive_samples: usize,
    pub diverged: usize,
}

pub struct TrainOutcome {
    pub llc: LlcSet,
    /// Every policy as it was right after its pretraining.
    pub pretrain_only: LlcSet,
    pub log: Vec<IterationLog>,
}

/// Pretrains and then PPO-trains `pi_1 .. pi_Hmax` in order. While `pi_H`
/// trains, the shorter policies are only read.
pub fn train_llcs(model: &Model, buffer: &ExplorationBuffer, cfg: &LlcTrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if buffer.meta.env_id != model.id() {
        return Err(Error::config(format!(
            "buffer was recorded on {}, not {}",
            buffer.meta.env_id,
            model.id()
        )));
    }
    let bounds = buffer.observed_ranges().ok_or_else(|| Error::config("exploration buffer is empty"))?;
    let meta = LlcMeta {
        env_id: model.id(),
        h_max: cfg.h_max,
        target_mode: cfg.target_mode,
        metric: cfg.metric,
        ranges: buffer.meta.ranges.clone(),
        buffer_hash: buffer.content_hash(),
    };
    let mut llc = LlcSet::new(model, meta, &cfg.hidden, cfg.init_log_std, cfg.seed)?;
    let mut pretrain_only = llc.clone();
    let mut log = Vec::new();
    for h in 1..=cfg.h_max {
        let mut rng = rng::stream(cfg.seed, &[PRETRAIN_STREAM, h as u64]);
        let nll = pretrain(&mut llc, model, buffer, h, cfg, &mut rng)?;
        log::info!("H = {h}: pretrained, negative log-likelihood {nll:.4}");
        pretrain_only.policies[h - 1] = llc.policies[h - 1].clone();

        let mut opt = Adam::new(GradStep::new(cfg.learning_rate), llc.policies[h - 1].num_params())?;
        let mut env_steps = 0;
        for it in 0..cfg.m {
            let batch = collect_batch(&llc, model, buffer, &bounds, h, it, cfg)?;
            env_steps += batch.env_steps;
            let mut rng = rng::stream(cfg.seed, &[UPDATE_STREAM, h as u64, it as u64]);
            let used = match positive_advantage_update(&mut llc.policies[h - 1], &mut opt, &batch, cfg, &mut rng) {
                Ok(n) => n,
                Err(e) => {
                    if let Some(dir) = &cfg.checkpoint {
                        llc.save(dir)?;
                    }
                    return Err(e);
                }
            };
            log::debug!("H = {h}, iteration {it}: mean Q {:.4}, {used} positive samples", batch.mean_q());
            log.push(IterationLog {
                h,
                iteration: it,
                env_steps,
                mean_q: batch.mean_q(),
                positive_samples: used,
                diverged: batch.diverged,
            });
        }
    }
    Ok(TrainOutcome { llc, pretrain_only, log })
}

/// Follows `targets` with the policy means, routing each step to the
/// policy matching the number of remaining targets. Returns the visited
/// states and the per-step distances to the current first target.
pub fn track_rollout(
    llc: &LlcSet,
    model: &Model,
    s: &SimState,
    targets: &[SimState],
) -> Result<(Vec<SimState>, Vec<f64>)> {
    let mut s = s.clone();
    let mut states = Vec::with_capacity(targets.len());
    let mut dist = Vec::with_capacity(targets.len());
    for k in 0..targets.len() {
        let a = llc.track(model, &s, &targets[k..])?;
        s = model.step(&s, &a)?;
        dist.push(llc.distance(model, &s, &targets[k]));
        states.push(s.clone());
    }
    Ok((states, dist))
}

/// Random feasible target trajectories of length `h` taken from a buffer.
pub fn feasible_windows(
    buffer: &ExplorationBuffer,
    h: usize,
    count: usize,
    rng: &mut Rng,
) -> Vec<(SimState, TargetTrajectory)> {
    let eligible = windows(buffer, h);
    if eligible.is_empty() {
        return Vec::new();
    }
    (0..count)
        .map(|_| {
            let (s, g) = window_states(buffer, eligible[rng.random_range(0..eligible.len())], h);
            (s, TargetTrajectory(g))
        })
        .collect()
}

/// Mean per-step distance between reached states and targets.
pub fn tracking_error(llc: &LlcSet, model: &Model, cases: &[(SimState, TargetTrajectory)]) -> Result<f64> {
    if cases.is_empty() {
        return Err(Error::config("tracking error needs at least one case"));
    }
    let mut total = 0.0;
    let mut steps = 0usize;
    for (s, g) in cases {
        let (_, d) = track_rollout(llc, model, s, &g.0)?;
        total += d.iter().sum::<f64>();
        steps += d.len();
    }
    Ok(total / steps as f64)
}

use proptest::prelude::*;

use super::*;
use crate::llc::{LlcMeta, StateMetric, TargetMode};
use crate::rng;
use crate::sim::{calibrate_state_ranges, EnvId, TaskId, TaskSpec};

fn untrained_llc(model: &Model, h_max: usize) -> LlcSet {
    let meta = LlcMeta {
        env_id: model.id(),
        h_max,
        target_mode: TargetMode::Trajectory,
        metric: StateMetric::Normalized,
        ranges: calibrate_state_ranges(model, 10_000, 0).unwrap(),
        buffer_hash: String::new(),
    };
    LlcSet::new(model, meta, &[16], -1.0, 1).unwrap()
}

#[test]
fn action_space_names() {
    assert_eq!("torque".parse::<ActionSpace>().unwrap(), ActionSpace::Torque);
    assert_eq!("llc:4".parse::<ActionSpace>().unwrap(), ActionSpace::Llc { h: 4 });
    assert_eq!("llc".parse::<ActionSpace>().unwrap(), ActionSpace::Llc { h: 5 });
    assert!("llc:0".parse::<ActionSpace>().is_err());
    assert!("joint".parse::<ActionSpace>().is_err());
    assert_eq!(ActionSpace::Llc { h: 3 }.to_string(), "llc:3");
}

#[test]
fn zero_torque_plan_matches_hand_stepped_oracle() {
    let m = Model::new(EnvId::PlanarHopper);
    let task = TaskSpec::new(TaskId::Balance, EnvId::PlanarHopper);
    let dec = Decoder::new(&m, ActionSpace::Torque, None).unwrap();
    let zero = DecisionVector(vec![0.0; 40 * 2]);
    let got = evaluate_trajectory(&dec, &task, &zero, -1e4).unwrap();

    let mut s = m.spec().default_pose.clone();
    let mut want = 0.0;
    for _ in 0..40 {
        let next = m.step(&s, &[0.0, 0.0]).unwrap();
        want += task.reward_value(&m, &next, &[0.0, 0.0]);
        s = next;
    }
    assert!(!got.terminated);
    assert_eq!(got.ret, want);
    assert_eq!(evaluate_trajectory(&dec, &task, &zero, -1e4).unwrap(), got);
}

#[test]
fn decision_length_is_checked() {
    let m = Model::new(EnvId::PlanarHopper);
    let task = TaskSpec::new(TaskId::Balance, EnvId::PlanarHopper);
    let dec = Decoder::new(&m, ActionSpace::Torque, None).unwrap();
    for bad in [vec![], vec![0.0; 3]] {
        assert!(evaluate_trajectory(&dec, &task, &DecisionVector(bad), 0.0).unwrap_err().is_usage());
    }
    assert!(Decoder::new(&m, ActionSpace::Llc { h: 2 }, None).unwrap_err().is_usage());
}

#[test]
fn termination_charges_remaining_slots() {
    let m = Model::new(EnvId::PendulumCart);
    let task = TaskSpec::new(TaskId::Balance, EnvId::PendulumCart);
    let dec = Decoder::new(&m, ActionSpace::Torque, None).unwrap();
    // Full force one way tips the pole over well within 40 slots.
    let e = evaluate_trajectory(&dec, &task, &DecisionVector(vec![1.0; 40]), 0.0).unwrap();
    assert!(e.terminated);
    let mut s = m.spec().default_pose.clone();
    let mut want = 0.0;
    for _ in 0..e.steps {
        let next = m.step(&s, &[10.0]).unwrap();
        want += task.reward_value(&m, &next, &[10.0]);
        s = next;
    }
    want -= task.fall_penalty * (40 - e.steps) as f64;
    assert!((e.ret - want).abs() < 1e-12);
}

#[test]
fn llc_rest_plan_targets_the_initial_state() {
    let m = Model::new(EnvId::PlanarHopper);
    let llc = untrained_llc(&m, 4);
    let dec = Decoder::new(&m, ActionSpace::Llc { h: 4 }, Some(&llc)).unwrap();
    let task = TaskSpec::new(TaskId::Balance, EnvId::PlanarHopper);
    let s0 = task.initial_state(&m);
    let rest = DecisionVector::rest(&dec, &s0, 40);
    assert_eq!(rest.0.len(), 400);
    for slot in rest.raw_slots(&dec, &s0).unwrap() {
        for (a, b) in slot.iter().zip(s0.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert!(Decoder::new(&m, ActionSpace::Llc { h: 5 }, Some(&llc)).is_err());
    assert!(Decoder::new(&Model::new(EnvId::PointMass), ActionSpace::Llc { h: 1 }, Some(&llc)).is_err());
}

#[test]
fn cma_minimizes_sphere() {
    let mut cma = Cma::new(vec![1.0; 10], 0.5, 16).unwrap();
    let sphere = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
    let (_, best) = cma.minimize(150, 3, sphere).unwrap();
    assert!(best < 1e-8, "best {best}");
}

#[test]
fn cma_covariance_stays_positive_definite() {
    let mut cma = Cma::new(vec![-1.0; 6], 0.3, 8).unwrap();
    let rosen = |x: &[f64]| x.windows(2).map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2)).sum();
    for it in 0..300u64 {
        let xs = cma.ask(&mut rng::stream(1, &[it]));
        let fs: Vec<f64> = xs.iter().map(|x| rosen(x)).collect();
        cma.tell(&xs, &fs).unwrap();
        assert!(cma.cov.clone().cholesky().is_some());
    }
}

#[test]
fn cma_offline_bookkeeping() {
    let m = Model::new(EnvId::PendulumCart);
    let task = TaskSpec::new(TaskId::Balance, EnvId::PendulumCart);
    let dec = Decoder::new(&m, ActionSpace::Torque, None).unwrap();
    let cfg = CmaConfig { iterations: 15, horizon_seconds: 2.0, seed: 4, ..CmaConfig::default() };
    let out = cma_es_offline(&dec, &task, &cfg).unwrap();
    assert!(out.best_history.windows(2).all(|w| w[1] >= w[0]));
    assert!(out.record.rows.windows(2).all(|w| w[1].env_steps > w[0].env_steps));
    let again = evaluate_trajectory(&dec, &task, &out.best, cfg.divergence_return).unwrap();
    assert_eq!(again.ret, out.best_return);
    assert_eq!(cma_es_offline(&dec, &task, &cfg).unwrap(), out);
}

#[test]
fn noise_schedule_endpoints() {
    for &(n, lo, hi) in &[(250usize, -10.0, 10.0), (250, -20.0, 20.0), (7, -1.0, 3.0)] {
        assert_eq!(noise_variance(n - 1, n, lo, hi), hi - lo);
        assert_eq!(noise_variance(0, n, lo, hi), (hi - lo) / n as f64);
    }
}

#[test]
fn degenerate_mpc_follows_the_shifted_plan() {
    let m = Model::new(EnvId::PointMass);
    let task = MovingTarget::default();
    let dec = Decoder::new(&m, ActionSpace::Torque, None).unwrap();
    let cfg = MpcConfig { rollouts: 1, prune_fraction: 0.0, noise_scale: 0.0, ..MpcConfig::default() };
    let prev: Vec<Vec<f64>> = (0..20).map(|t| vec![t as f64 * 0.05, -0.3]).collect();
    let s0 = m.spec().default_pose.clone();
    let out = online_mpc_step(&dec, &task, &s0, 0, &prev, &s0, &cfg).unwrap();
    assert_eq!(out.action, prev[1]);
    assert_eq!(&out.best[..19], &prev[1..]);
    assert_eq!(out.env_steps, 20);
}

#[test]
fn mpc_budget_accounting() {
    let m = Model::new(EnvId::PendulumCart);
    let task = TaskSpec::new(TaskId::Balance, EnvId::PendulumCart);
    let dec = Decoder::new(&m, ActionSpace::Torque, None).unwrap();
    let cfg = MpcConfig { rollouts: 40, ..MpcConfig::default() };
    let s0 = m.spec().default_pose.clone();
    let prev = vec![vec![0.0]; 20];
    let out = online_mpc_step(&dec, &task, &s0, 0, &prev, &s0, &cfg).unwrap();
    assert!(out.env_steps <= 40 * 20);
    assert!(out.forks > 0);
    assert_eq!(online_mpc_step(&dec, &task, &s0, 0, &prev, &s0, &cfg).unwrap(), out);
}

#[test]
fn mpc_tracks_a_moving_point() {
    let m = Model::new(EnvId::PointMass);
    let task = MovingTarget { steps: 40, ..MovingTarget::default() };
    let dec = Decoder::new(&m, ActionSpace::Torque, None).unwrap();
    let cfg = MpcConfig { rollouts: 60, horizon_seconds: 1.0, ..MpcConfig::default() };
    let run = run_mpc(&dec, &task, 40, &cfg).unwrap();
    let mse = |states: &[SimState]| {
        states[1..].iter().enumerate().map(|(k, s)| task.squared_error(&m, k + 1, s)).sum::<f64>() / 40.0
    };
    let still = vec![m.spec().default_pose.clone(); 41];
    assert!(mse(&run.states) * 10.0 < mse(&still), "{} vs {}", mse(&run.states), mse(&still));
}

#[test]
fn llc_mode_mpc_runs() {
    let m = Model::new(EnvId::PendulumCart);
    let llc = untrained_llc(&m, 2);
    let dec = Decoder::new(&m, ActionSpace::Llc { h: 2 }, Some(&llc)).unwrap();
    let task = TaskSpec::new(TaskId::Balance, EnvId::PendulumCart);
    let cfg = MpcConfig { rollouts: 8, horizon_seconds: 0.5, ..MpcConfig::default() };
    let run = run_mpc(&dec, &task, 3, &cfg).unwrap();
    assert_eq!(run.actions.len(), 3);
    assert!(run.actions.iter().all(|a| a[0].abs() <= 10.0));
}

fn record(env: EnvId, task: &str, space: ActionSpace, final_return: f64) -> RunRecord {
    let mut r = RunRecord::new(env, "cma_es", space, 0).with_task(task);
    r.push(RecordRow { iteration: 0, env_steps: 10, mean_return: final_return - 1.0, std_return: 0.0 });
    r.push(RecordRow { iteration: 1, env_steps: 20, mean_return: final_return, std_return: 0.0 });
    r
}

#[test]
fn score_normalization() {
    let recs = [record(EnvId::PointMass, "run", ActionSpace::Torque, 10.0), record(EnvId::PointMass, "run", ActionSpace::Llc { h: 2 }, 20.0)];
    assert_eq!(normalized_scores(&recs).unwrap(), vec![0.0, 1.0]);
    let tie = [record(EnvId::PointMass, "run", ActionSpace::Torque, 5.0), record(EnvId::PointMass, "run", ActionSpace::Torque, 5.0)];
    assert_eq!(normalized_scores(&tie).unwrap(), vec![0.0, 0.0]);
    assert!(normalized_scores(&recs[..1]).unwrap_err().is_usage());

    let rows = aggregate_scores(&recs).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].action_space.as_str(), rows[0].h, rows[0].score), ("llc", 2, 1.0));
    assert_eq!(rows[0].budget, 20.0);
    assert!(scores_to_csv(&rows).starts_with("optimizer,action_space,h,score,runs,budget\n"));
}

#[test]
fn run_record_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv");
    let r = record(EnvId::PlanarHopper, "balance", ActionSpace::Llc { h: 4 }, -3.25);
    r.save(&path).unwrap();
    assert_eq!(RunRecord::load(&path).unwrap(), r);
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("iteration,env_steps,mean_return,std_return\n"));
}

#[test]
fn gae_matches_hand_computation() {
    let (adv, targets) = gae(&[1.0, 2.0, 3.0], &[0.5, 0.25, 1.0], &[false, false, true], 0.9, 0.5);
    let d2 = 3.0 - 1.0;
    let d1 = 2.0 + 0.9 * 1.0 - 0.25;
    let d0 = 1.0 + 0.9 * 0.25 - 0.5;
    let a2 = d2;
    let a1 = d1 + 0.45 * a2;
    let a0 = d0 + 0.45 * a1;
    for (got, want) in adv.iter().zip([a0, a1, a2]) {
        assert!((got - want).abs() < 1e-12);
    }
    assert!((targets[0] - (a0 + 0.5)).abs() < 1e-12);
}

#[test]
fn ppo_action_dims_and_defaults() {
    let m = Model::new(EnvId::PlanarHopper);
    let llc = untrained_llc(&m, 5);
    let dec = Decoder::new(&m, ActionSpace::Llc { h: 5 }, Some(&llc)).unwrap();
    assert_eq!(policy_action_dim(&dec), 50);
    let torque = Decoder::new(&m, ActionSpace::Torque, None).unwrap();
    assert_eq!(policy_action_dim(&torque), 2);
    let cfg = PpoConfig::default();
    assert_eq!((cfg.gamma, cfg.clip, cfg.gae_lambda, cfg.learning_rate), (0.99, 0.2, 0.95, 1e-4));
    assert_eq!((cfg.minibatches, cfg.epochs, cfg.iteration_steps), (4, 4, 2_000));
}

#[test]
fn ppo_improves_point_mass_reaching() {
    let m = Model::new(EnvId::PointMass);
    let ranges = calibrate_state_ranges(&m, 10_000, 0).unwrap();
    let task = ReachPoint { goal: [1.0, -0.5], steps: 50 };
    let dec = Decoder::new(&m, ActionSpace::Torque, None).unwrap();
    let cfg = PpoConfig { total_steps: 60_000, learning_rate: 1e-3, seed: 2, ..PpoConfig::default() };
    let out = ppo_hlc(&dec, &task, &ranges, &cfg).unwrap();
    let curve: Vec<f64> = out.record.rows.iter().map(|r| r.mean_return).collect();
    let smooth: Vec<f64> = curve.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    let up = smooth.windows(2).filter(|w| w[1] >= w[0]).count();
    eprintln!("{curve:?}");
    assert!(up as f64 >= 0.9 * (smooth.len() - 1) as f64, "{up} of {}", smooth.len() - 1);
    assert!(curve.last().unwrap() > &(curve[0] * 0.5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scores_lie_in_unit_interval(finals in prop::collection::vec(-1e3f64..1e3, 2..10)) {
        let recs: Vec<RunRecord> = finals.iter().map(|&f| record(EnvId::PendulumCart, "balance", ActionSpace::Torque, f)).collect();
        for s in normalized_scores(&recs).unwrap() {
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn slot_coding_round_trips(z in prop::collection::vec(-1.0f64..1.0, 2)) {
        let m = Model::new(EnvId::PointMass);
        let dec = Decoder::new(&m, ActionSpace::Torque, None).unwrap();
        let s0 = m.spec().default_pose.clone();
        let back = dec.encode_slot(&dec.decode_slot(&z, &s0), &s0);
        for (a, b) in z.iter().zip(back) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

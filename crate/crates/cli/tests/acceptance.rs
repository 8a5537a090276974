//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`cargo test -p tasa-cli --test acceptance`).
//! By default a failing criterion is reported but the process exits 0 so
//! that the regular test run stays green; set `ACCEPTANCE_STRICT=1` to turn
//! any FAIL into a nonzero exit. Pass criterion numbers as arguments to run
//! a subset, e.g. `-- 3 9`.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng as _;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use tasa_core::artifact::{self, ArtifactManifest};
use tasa_core::explore::{
    coverage_report, run_exploration, sample_ground_distance, sample_initial_state, ExplorationBuffer,
    ExplorationConfig, GroundBranch,
};
use tasa_core::landscape::{basin_width, evaluate_slice, make_slice_spec, trajectory_objective, SliceConfig};
use tasa_core::llc::{
    calc_q, feasible_windows, positive_advantage_update, tracking_error, train_llcs, AdvantageBatch, AdvantageGroup,
    LlcMeta, LlcSet, LlcTrainConfig, Replay, StateMetric, TargetMode,
};
use tasa_core::nn::{self, Activation, Adam, GaussianPolicy, GradStep, MlpConfig, WeightInit};
use tasa_core::optimize::{
    cma_es_offline, noise_variance, run_mpc, ActionSpace, CmaConfig, Decoder, DecisionVector, MovingTarget, MpcConfig,
};
use tasa_core::rng;
use tasa_core::sim::{calibrate_state_ranges, EnvId, Model, SimState, StateRanges, TaskId, TaskSpec};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Hopper artifacts shared by the coverage, action-space and landscape
/// criteria.
struct Hopper {
    model: Model,
    ranges: StateRanges,
    contact: ExplorationBuffer,
    llc: Option<LlcSet>,
    optima: Option<(Vec<f64>, Vec<f64>)>,
}

impl Hopper {
    fn new() -> Self {
        let model = Model::new(EnvId::PlanarHopper);
        let ranges = calibrate_state_ranges(&model, 10_000, 0).unwrap();
        let contact = run_exploration(&model, &ranges, &ExplorationConfig::contact_based(100_000, 1)).unwrap();
        Hopper { model, ranges, contact, llc: None, optima: None }
    }

    fn llc(&mut self) -> &LlcSet {
        if self.llc.is_none() {
            let cfg = LlcTrainConfig { h_max: 4, ..LlcTrainConfig::desk() };
            self.llc = Some(train_llcs(&self.model, &self.contact, &cfg).unwrap().llc);
        }
        self.llc.as_ref().unwrap()
    }
}

struct Shared {
    hopper: Option<Hopper>,
}

impl Shared {
    fn hopper(&mut self) -> &mut Hopper {
        self.hopper.get_or_insert_with(Hopper::new)
    }
}

/// Asymptotic Kolmogorov p-value with the small-sample correction.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    p.clamp(0.0, 1.0)
}

/// KS statistic of `xs` against the uniform distribution on `[0, hi]`.
fn ks_uniform(mut xs: Vec<f64>, hi: f64) -> (f64, f64) {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    let d = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let f = (x / hi).clamp(0.0, 1.0);
            (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
        })
        .fold(0.0, f64::max);
    (d, ks_p_value(d, n))
}

fn c1_exploration_mixture(_: &mut Shared) -> Outcome {
    let model = Model::new(EnvId::PlanarHopper);
    let ranges = calibrate_state_ranges(&model, 10_000, 0).unwrap();
    let cfg = ExplorationConfig::contact_based(100, 0);
    let n = 10_000;
    let mut rng = rng::stream(2024, &[]);
    let (mut free, mut close, mut contact) = (Vec::new(), Vec::new(), 0usize);
    for _ in 0..n {
        match sample_ground_distance(&mut rng, &cfg) {
            (GroundBranch::Free, d) => free.push(d),
            (GroundBranch::Close, d) => close.push(d),
            (GroundBranch::Contact, d) => {
                assert_eq!(d, 0.0);
                contact += 1;
            }
        }
    }
    let observed = [free.len() as f64, close.len() as f64, contact as f64];
    let expected = [0.1, 0.4, 0.5].map(|p| p * n as f64);
    let chi2: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e).powi(2) / e).sum();
    let p_chi = ChiSquared::new(2.0).unwrap().sf(chi2);
    let (_, p_free) = ks_uniform(free, 1.0);
    let (_, p_close) = ks_uniform(close, 0.05);

    // Placed states really sit at the sampled distance.
    let mut placed_ok = true;
    for _ in 0..1_000 {
        let (s, d) = sample_initial_state(&model, &ranges, &mut rng, &cfg);
        placed_ok &= (model.lowest_point(&s).unwrap() - d).abs() < 1e-9;
    }
    let pass = p_chi > 0.01 && p_free > 0.01 && p_close > 0.01 && placed_ok;
    outcome(
        pass,
        format!(
            "counts {observed:?}, chi2 p={p_chi:.3}, KS p free={p_free:.3} close={p_close:.3}, placement exact={placed_ok}"
        ),
    )
}

/// Ratio observed on the first reference run (hopper, N = 1e5, seed 1).
const PINNED_OCCUPANCY_RATIO: f64 = 3.06;

fn c2_coverage(sh: &mut Shared) -> Outcome {
    let hop = sh.hopper();
    let naive = run_exploration(&hop.model, &hop.ranges, &ExplorationConfig::naive(100_000, 1)).unwrap();
    let c = coverage_report(&hop.model, &hop.contact).unwrap().occupied_cells;
    let n = coverage_report(&hop.model, &naive).unwrap().occupied_cells;
    let ratio = c as f64 / n as f64;
    let within = (ratio / PINNED_OCCUPANCY_RATIO - 1.0).abs() <= 0.15;
    outcome(
        c > n && within,
        format!("occupied cells contact={c} naive={n}, ratio {ratio:.3} (pinned {PINNED_OCCUPANCY_RATIO} +-15%)"),
    )
}

fn cart_llc(h_max: usize) -> (Model, ExplorationBuffer, LlcSet) {
    let m = Model::new(EnvId::PendulumCart);
    let r = calibrate_state_ranges(&m, 10_000, 0).unwrap();
    let buf = run_exploration(&m, &r, &ExplorationConfig::contact_based(500, 3)).unwrap();
    let meta = LlcMeta {
        env_id: m.id(),
        h_max,
        target_mode: TargetMode::Trajectory,
        metric: StateMetric::Normalized,
        ranges: buf.meta.ranges.clone(),
        buffer_hash: String::new(),
    };
    let llc = LlcSet::new(&m, meta, &[32, 32], -1.0, 5).unwrap();
    (m, buf, llc)
}

/// Squared normalized distance, written out independently of the library.
fn oracle_distance(m: &Model, ranges: &StateRanges, s: &SimState, g: &SimState) -> f64 {
    m.state_delta(s, g).iter().zip(ranges.safe_span()).map(|(v, w)| (v / w) * (v / w)).sum()
}

fn c3_calc_q_oracle(_: &mut Shared) -> Outcome {
    let (m, buf, llc) = cart_llc(5);
    let bounds = buf.observed_ranges().unwrap();
    let mut rng = rng::stream(33, &[]);
    let (mut exact, mut base_exact, mut base_cases) = (0usize, true, 0usize);
    for _ in 0..1_000 {
        let h = rng.random_range(1..=5);
        let s = bounds.sample_uniform(&mut rng);
        let targets: Vec<SimState> = (0..h).map(|_| bounds.sample_uniform(&mut rng)).collect();
        let actions: Vec<Vec<f64>> = (0..h).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
        let rec = calc_q(&llc, &m, &s, &targets, &mut Replay::new(actions.clone())).unwrap();

        let mut state = s.clone();
        let mut rewards = Vec::new();
        for (k, u) in actions.iter().enumerate() {
            state = m.step(&state, &llc.to_torque(u)).unwrap();
            rewards.push(-oracle_distance(&m, &bounds_of(&llc), &state, &targets[k]));
        }
        // Sum from the last reward back, as the recursion associates.
        let mut flat = *rewards.last().unwrap();
        for r in rewards.iter().rev().skip(1) {
            flat = r + flat;
        }
        exact += usize::from(rec.q.to_bits() == flat.to_bits());
        if h == 1 {
            base_cases += 1;
            base_exact &= rec.q == rewards[0];
        }
    }
    outcome(
        exact == 1_000 && base_exact,
        format!("{exact}/1000 bit-exact, H=1 base case exact over {base_cases} cases: {base_exact}"),
    )
}

fn bounds_of(llc: &LlcSet) -> StateRanges {
    llc.meta.ranges.clone()
}

fn c4_advantages(_: &mut Shared) -> Outcome {
    let mut rng = rng::stream(44, &[]);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let k = rng.random_range(2..9);
        let q: Vec<f64> = (0..k).map(|_| rng.random_range(-500.0..0.0)).collect();
        let g = AdvantageGroup::new(vec![0.0], vec![vec![0.0]; k], q);
        worst = worst.max(g.advantages.iter().sum::<f64>().abs());
    }

    let (_, _, llc) = cart_llc(1);
    let mut policy = llc.policy(1).clone();
    let before = artifact::sha256_hex(&nn::io::encode_policy(&policy));
    let mut opt = Adam::new(GradStep::new(1e-2), policy.num_params()).unwrap();
    let input = vec![0.1; policy.input_dim()];
    let batch = AdvantageBatch {
        groups: vec![
            AdvantageGroup::new(input.clone(), vec![vec![0.3], vec![-0.2]], vec![-2.0, -2.0]),
            AdvantageGroup::new(input, vec![vec![0.1]; 3], vec![0.0; 3]),
        ],
        ..Default::default()
    };
    let used =
        positive_advantage_update(&mut policy, &mut opt, &batch, &LlcTrainConfig::desk(), &mut rng::stream(0, &[]))
            .unwrap();
    let after = artifact::sha256_hex(&nn::io::encode_policy(&policy));
    outcome(
        worst < 1e-9 && used == 0 && before == after,
        format!("max |sum A| = {worst:.2e} over 10000 groups; all-nonpositive update used {used} samples, hash unchanged: {}", before == after),
    )
}

fn numeric_grad(params: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let h = 1e-5;
    let mut p = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + h;
            let up = f(&p);
            p[i] = orig - h;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale < 1e-12 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

fn c5_gradients(_: &mut Shared) -> Outcome {
    let mut rng = rng::stream(55, &[]);
    let (mut worst_mlp, mut worst_lp) = (0.0f64, 0.0f64);
    let configs = 60;
    for _ in 0..configs {
        let input_dim = rng.random_range(1..7);
        let output_dim = rng.random_range(1..4);
        let hidden: Vec<usize> = (0..rng.random_range(0..3)).map(|_| rng.random_range(1..9)).collect();
        let cfg = MlpConfig {
            input_dim,
            hidden_layers: hidden,
            output_dim,
            activation: Activation::Swish,
            weight_init: WeightInit::OrthogonalSmallOutput,
            seed: rng.random(),
        };
        let mut p = GaussianPolicy::new(&cfg, rng.random_range(-1.0..0.5), None).unwrap();
        let params: Vec<f64> = p.params().iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        p.set_params(&params);
        let x: Vec<f64> = (0..input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a: Vec<f64> = (0..output_dim).map(|_| rng.random_range(-2.0..2.0)).collect();

        let mlp = p.mlp.clone();
        let cot: Vec<f64> = (0..output_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, cache) = mlp.forward_cached(&x);
        let mut g = vec![0.0; mlp.num_params()];
        mlp.backward(&cache, &cot, &mut g);
        let mut probe = mlp.clone();
        let num = numeric_grad(mlp.params(), |w| {
            probe.params_mut().copy_from_slice(w);
            probe.forward(&x).iter().zip(&cot).map(|(o, c)| o * c).sum()
        });
        worst_mlp = worst_mlp.max(rel_err(&g, &num));

        let mut g = vec![0.0; p.num_params()];
        p.log_prob_grad(&x, &a, 1.0, &mut g);
        let mut probe = p.clone();
        let num = numeric_grad(&p.params(), |w| {
            probe.set_params(w);
            probe.log_prob(&x, &a)
        });
        worst_lp = worst_lp.max(rel_err(&g, &num));
    }
    outcome(
        worst_mlp < 1e-4 && worst_lp < 1e-4,
        format!("{configs} configs; worst relative error MLP {worst_mlp:.2e}, log-prob {worst_lp:.2e}"),
    )
}

fn c6_llc_usefulness(_: &mut Shared) -> Outcome {
    let m = Model::new(EnvId::PendulumCart);
    let r = calibrate_state_ranges(&m, 10_000, 0).unwrap();
    let buf = run_exploration(&m, &r, &ExplorationConfig::contact_based(20_000, 1)).unwrap();
    let held = run_exploration(&m, &r, &ExplorationConfig::contact_based(5_000, 99)).unwrap();
    let cfg = LlcTrainConfig::desk();
    let out = train_llcs(&m, &buf, &cfg).unwrap();
    let mut rg = rng::stream(7, &[]);
    let (mut pre_sum, mut post_sum) = (0.0, 0.0);
    let mut per_h = Vec::new();
    for h in 1..=cfg.h_max {
        let cases = feasible_windows(&held, h, 300, &mut rg);
        let a = tracking_error(&out.pretrain_only, &m, &cases).unwrap();
        let b = tracking_error(&out.llc, &m, &cases).unwrap();
        pre_sum += a;
        post_sum += b;
        per_h.push(format!("H{h} {:.0}%", 100.0 * (1.0 - b / a)));
    }
    let gain = 1.0 - post_sum / pre_sum;
    outcome(
        gain >= 0.30,
        format!(
            "pooled held-out error pretrain {pre_sum:.5} -> trained {post_sum:.5}, reduction {:.1}% (need 30%); {}",
            100.0 * gain,
            per_h.join(", ")
        ),
    )
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn c7_action_space(sh: &mut Shared) -> Outcome {
    let hop = sh.hopper();
    hop.llc();
    let (model, llc) = (&hop.model, hop.llc.as_ref().unwrap());
    let task = TaskSpec::new(TaskId::Balance, EnvId::PlanarHopper);
    let run = |space: ActionSpace, set: Option<&LlcSet>| {
        let dec = Decoder::new(model, space, set).unwrap();
        let outs: Vec<_> = (0..5u64)
            .map(|seed| cma_es_offline(&dec, &task, &CmaConfig { population: 16, iterations: 100, seed, ..CmaConfig::default() }).unwrap())
            .collect();
        let finals: Vec<f64> = outs.iter().map(|o| o.best_return).collect();
        (finals, outs[0].best.0.clone())
    };
    let (torque, z_torque) = run(ActionSpace::Torque, None);
    let (learned, z_llc) = run(ActionSpace::Llc { h: 4 }, Some(llc));
    hop.optima = Some((z_torque, z_llc));
    let (mt, ml) = (median(torque.clone()), median(learned.clone()));
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ");
    outcome(
        ml >= mt,
        format!("seeds 0-4 median LLC(H=4) {ml:.3} vs torque {mt:.3}; llc [{}] torque [{}]", fmt(&learned), fmt(&torque)),
    )
}

fn c8_landscape(sh: &mut Shared) -> Outcome {
    if sh.hopper().optima.is_none() {
        c7_action_space(sh);
    }
    let hop = sh.hopper.as_mut().unwrap();
    let (z_torque, z_llc) = hop.optima.clone().unwrap();
    let llc = hop.llc.as_ref().unwrap();
    let task = TaskSpec::new(TaskId::Balance, EnvId::PlanarHopper);
    let width = |space: ActionSpace, set: Option<&LlcSet>, center: Vec<f64>| {
        let dec = Decoder::new(&hop.model, space, set).unwrap();
        let spec = make_slice_spec(center, SliceConfig { resolution: 41, seed: 0, ..SliceConfig::default() }).unwrap();
        let grid = evaluate_slice(&spec, trajectory_objective(&dec, &task, -1e4)).unwrap();
        let direct = tasa_core::optimize::evaluate_trajectory(&dec, &task, &DecisionVector(spec.center.clone()), -1e4)
            .unwrap()
            .ret;
        assert_eq!(grid.center().value.to_bits(), direct.to_bits());
        basin_width(&grid, 0.9)
    };
    let t = width(ActionSpace::Torque, None, z_torque);
    let l = width(ActionSpace::Llc { h: 4 }, Some(llc), z_llc);
    outcome(
        l.0 + l.1 >= t.0 + t.1,
        format!("41x41 slices, basin width at 0.9 of center: LLC {l:?} vs torque {t:?} cells"),
    )
}

fn c9_mpc(_: &mut Shared) -> Outcome {
    let n = 250;
    let (m, big_m) = (-1.0, 1.0);
    let lo = noise_variance(0, n, m, big_m);
    let hi = noise_variance(n - 1, n, m, big_m);
    let endpoints = lo == (big_m - m) / n as f64 && hi == big_m - m;

    let model = Model::new(EnvId::PointMass);
    let task = MovingTarget::default();
    let dec = Decoder::new(&model, ActionSpace::Torque, None).unwrap();
    let run = run_mpc(&dec, &task, task.steps, &MpcConfig::default()).unwrap();
    let mse = |states: &[SimState]| {
        states[1..].iter().enumerate().map(|(k, s)| task.squared_error(&model, k + 1, s)).sum::<f64>()
            / (states.len() - 1) as f64
    };
    let zero = vec![0.0; model.spec().action_dim];
    let mut open = vec![tasa_core::sim::Objective::initial_state(&task, &model)];
    for _ in 0..task.steps {
        let next = model.step(open.last().unwrap(), &zero).unwrap();
        open.push(next);
    }
    let (closed, baseline) = (mse(&run.states), mse(&open));
    outcome(
        endpoints && closed * 10.0 <= baseline,
        format!(
            "sigma^2 endpoints {lo} and {hi} exact={endpoints}; moving-target MSE {closed:.5} vs zero-action {baseline:.5} ({:.1}x)",
            baseline / closed
        ),
    )
}

fn tasa(root: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tasa"))
        .args(args)
        .current_dir(root)
        .env("TASA_ARTIFACT_ROOT", root.join("artifacts"))
        .env("TASA_WORKERS", "1")
        .env("RUST_LOG", "error")
        .output()
        .expect("tasa binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn pipeline(root: &Path) -> Vec<(String, String)> {
    let steps: [&[&str]; 5] = [
        &["calibrate", "--env", "point_mass", "--out", "ranges.json"],
        &["explore", "--env", "point_mass", "--budget", "3000", "--seed", "4", "--ranges", "ranges.json", "--out", "buf.txt"],
        &["train-llc", "--buffer", "buf.txt", "--hmax", "2", "--m", "2", "--n", "60", "--pretrain-epochs", "2", "--out", "llc"],
        &["optimize", "--env", "point_mass", "--task", "default", "--mode", "llc_contact", "--H", "2", "--llc", "llc", "--iterations", "3", "--seeds", "0,1", "--out-dir", "runs"],
        &["report", "--runs", "runs", "--out", "scores.csv"],
    ];
    for s in steps {
        let (code, err) = tasa(root, s);
        assert_eq!(code, 0, "{s:?} failed: {err}");
    }
    let mut hashes = Vec::new();
    for name in ["ranges.json", "buf.txt", "llc", "scores.csv"] {
        let p = root.join(name);
        hashes.push((name.to_string(), ArtifactManifest::read(&p).unwrap().content_hash));
    }
    let mut runs: Vec<PathBuf> =
        std::fs::read_dir(root.join("runs")).unwrap().map(|e| e.unwrap().path()).filter(|p| !p.to_string_lossy().ends_with(".manifest.json")).collect();
    runs.sort();
    for p in runs {
        hashes.push((p.file_name().unwrap().to_string_lossy().into_owned(), artifact::content_hash(&p).unwrap()));
    }
    hashes
}

fn c10_determinism(_: &mut Shared) -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ha = pipeline(a.path());
    let hb = pipeline(b.path());
    let identical = ha == hb;
    let (verify_code, _) = tasa(a.path(), &["verify", "scores.csv"]);
    std::fs::write(a.path().join("buf.txt"), "tampered\n").unwrap();
    let (tamper_code, tamper_err) = tasa(a.path(), &["verify", "scores.csv"]);
    let pass = identical && verify_code == 0 && tamper_code == 1;
    outcome(
        pass,
        format!(
            "{} artifacts identical across reruns: {identical}; chain verify exit {verify_code}; after tampering exit {tamper_code} ({})",
            ha.len(),
            tamper_err.trim()
        ),
    )
}

type Criterion = (u32, &'static str, Duration, fn(&mut Shared) -> Outcome);

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let min = |m: u64| Duration::from_secs(60 * m);
    let criteria: [Criterion; 10] = [
        (1, "exploration mixture", Duration::from_secs(10), c1_exploration_mixture),
        (2, "coverage contact vs naive", min(2), c2_coverage),
        (3, "CalcQ oracle", min(1), c3_calc_q_oracle),
        (4, "advantage math", min(1), c4_advantages),
        (5, "gradient checks", Duration::from_secs(30), c5_gradients),
        (6, "LLC usefulness", min(15), c6_llc_usefulness),
        (7, "action-space benefit", min(30), c7_action_space),
        (8, "landscape basin width", min(20), c8_landscape),
        (9, "MPC schedule and tracking", min(5), c9_mpc),
        (10, "determinism and provenance", min(5), c10_determinism),
    ];
    let mut shared = Shared { hopper: None };
    let mut failed = 0;
    for (n, name, limit, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = f(&mut shared);
        let secs = t.elapsed();
        let pass = o.pass && secs <= limit;
        failed += usize::from(!pass);
        println!(
            "criterion {n:>2} ({name}): {} - {} [{:.1}s, limit {}s]",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            secs.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {failed} criteria failed");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tasa_core::artifact::{self, ArtifactManifest};
use tasa_core::explore::{coverage_report, run_exploration, ExplorationBuffer, ExplorationConfig, ExploreMode};
use tasa_core::landscape::{
    basin_width, evaluate_slice, make_slice_spec, policy_objective, trajectory_objective, SliceConfig,
};
use tasa_core::llc::{train_llcs, LlcSet, LlcTrainConfig, TargetMode};
use tasa_core::nn::{self, GaussianPolicy};
use tasa_core::optimize::{
    aggregate_scores, cma_es_offline, evaluate_policy, ppo_hlc, run_mpc, scores_to_csv, ActionSpace, CmaConfig,
    Decoder, MpcConfig, PpoConfig, RunRecord,
};
use tasa_core::sim::{calibrate_state_ranges, EnvId, Model, Objective, StateRanges, TaskId, TaskSpec};
use tasa_core::{Error, Result};

use crate::settings::Settings;
use crate::{CalibrateArgs, ExploreArgs, LandscapeArgs, OptimizeArgs, ReportArgs, TrainLlcArgs, VerifyArgs};

const CALIBRATION_STEPS: usize = 10_000;
const DIVERGENCE_RETURN: f64 = -1e4;

pub struct Ctx {
    pub root: PathBuf,
    pub argv: Vec<String>,
}

impl Ctx {
    fn manifest(&self, kind: &str, path: &Path, st: &Settings, upstream: &[(&str, &Path)]) -> Result<()> {
        ArtifactManifest::build(kind, path, self.argv.clone(), st.effective.clone(), upstream)?.write(path)
    }
}

fn path_opt(st: &mut Settings, key: &str, flag: Option<PathBuf>) -> Result<Option<PathBuf>> {
    Ok(st.opt(key, flag.map(|p| p.to_string_lossy().into_owned()))?.map(PathBuf::from))
}

fn out_path(st: &mut Settings, flag: Option<PathBuf>, key: &str, default: PathBuf) -> Result<PathBuf> {
    let p = path_opt(st, key, flag)?.unwrap_or(default);
    if let Some(parent) = p.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(p)
}

fn stem(p: &Path) -> String {
    p.file_stem().map_or_else(|| "artifact".into(), |s| s.to_string_lossy().into_owned())
}

fn mode_name(mode: ExploreMode) -> &'static str {
    match mode {
        ExploreMode::ContactBased => "contact",
        ExploreMode::Naive => "naive",
    }
}

fn load_ranges(path: &Path, model: &Model) -> Result<StateRanges> {
    let r: StateRanges = serde_json::from_str(&fs::read_to_string(path)?)?;
    if r.dim() != model.spec().state_dim {
        return Err(Error::config(format!(
            "ranges in {} have {} dims, {} has {}",
            path.display(),
            r.dim(),
            model.id(),
            model.spec().state_dim
        )));
    }
    Ok(r)
}

/// Ranges from a file, or calibrated in-process with the default budget.
fn ranges_or_calibrate(st: &mut Settings, path: Option<&Path>, model: &Model) -> Result<StateRanges> {
    match path {
        Some(p) => load_ranges(p, model),
        None => {
            st.record("ranges", format!("calibrated:{CALIBRATION_STEPS}:0"));
            calibrate_state_ranges(model, CALIBRATION_STEPS, 0)
        }
    }
}

pub fn calibrate(ctx: &Ctx, st: &mut Settings, a: CalibrateArgs) -> Result<()> {
    let env: EnvId = st.require::<String>("env", a.env)?.parse()?;
    let steps = st.get("steps", a.steps, CALIBRATION_STEPS)?;
    let seed = st.get("seed", a.seed, 0u64)?;
    let out = out_path(st, a.out, "out", ctx.root.join("ranges").join(format!("{env}-s{seed}.json")))?;
    st.finish()?;

    let model = Model::new(env);
    let ranges = calibrate_state_ranges(&model, steps, seed)?;
    fs::write(&out, serde_json::to_string_pretty(&ranges)? + "\n")?;
    ctx.manifest("ranges", &out, st, &[])?;
    for (i, (lo, hi)) in ranges.min.iter().zip(&ranges.max).enumerate() {
        println!("dim {i}: [{lo:.4}, {hi:.4}]");
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn explore(ctx: &Ctx, st: &mut Settings, a: ExploreArgs) -> Result<()> {
    let env: EnvId = st.require::<String>("env", a.env)?.parse()?;
    let mode: ExploreMode = st.get("mode", a.mode, "contact".to_string())?.parse()?;
    st.record("mode", mode_name(mode));
    let budget = st.get("budget", a.budget, 100_000usize)?;
    let seed = st.get("seed", a.seed, 0u64)?;
    let mut cfg = ExplorationConfig::for_mode(mode, budget, seed);
    cfg.k = st.get("k", a.k, cfg.k)?;
    let ranges_path = path_opt(st, "ranges", a.ranges)?;
    let scatter = path_opt(st, "scatter", a.scatter)?;
    let default = ctx.root.join("buffers").join(format!("{env}-{}-n{budget}-s{seed}.buf", mode_name(mode)));
    let out = out_path(st, a.out, "out", default)?;
    st.finish()?;
    cfg.validate()?;

    let model = Model::new(env);
    let ranges = ranges_or_calibrate(st, ranges_path.as_deref(), &model)?;
    let buffer = run_exploration(&model, &ranges, &cfg)?;
    buffer.save(&out)?;
    let upstream: Vec<(&str, &Path)> = ranges_path.iter().map(|p| ("ranges", p.as_path())).collect();
    ctx.manifest("buffer", &out, st, &upstream)?;

    let cov = coverage_report(&model, &buffer)?;
    println!(
        "{} transitions in {} episodes ({} dropped); {} occupied cells, upright {:.3}, foot contact {:.3}",
        buffer.num_transitions(),
        buffer.episodes.len(),
        buffer.meta.dropped_episodes.len(),
        cov.occupied_cells,
        cov.upright_fraction,
        cov.contact_fraction
    );
    if let Some(p) = scatter {
        let mut f = std::io::BufWriter::new(fs::File::create(&p)?);
        cov.write_scatter(&mut f)?;
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn train_llc(ctx: &Ctx, st: &mut Settings, a: TrainLlcArgs) -> Result<()> {
    let buffer_path = path_opt(st, "buffer", a.buffer)?.ok_or_else(|| Error::usage("missing required option --buffer"))?;
    let want_env = st.opt::<String>("env", a.env)?;
    let preset = st.get("preset", a.preset, "desk".to_string())?;
    let mut cfg = match preset.as_str() {
        "desk" => LlcTrainConfig::desk(),
        "paper" => LlcTrainConfig::default(),
        other => return Err(Error::config(format!("unknown preset `{other}` (desk or paper)"))),
    };
    cfg.h_max = st.get("hmax", a.hmax, cfg.h_max)?;
    cfg.m = st.get("m", a.m, cfg.m)?;
    cfg.n = st.get("n", a.n, cfg.n)?;
    cfg.pretrain_epochs = st.get("pretrain_epochs", a.pretrain_epochs, cfg.pretrain_epochs)?;
    cfg.epochs = st.get("epochs", a.epochs, cfg.epochs)?;
    cfg.seed = st.get("seed", a.seed, 0u64)?;
    if st.switch("single_target", a.single_target)? {
        cfg.target_mode = TargetMode::Single;
    }
    cfg.feasible_only = st.switch("feasible_only", a.feasible_only)?;
    let mut name = format!("{}-h{}", stem(&buffer_path), cfg.h_max);
    if cfg.target_mode == TargetMode::Single {
        name.push_str("-single");
    }
    if cfg.feasible_only {
        name.push_str("-feasible");
    }
    name.push_str(&format!("-s{}", cfg.seed));
    let out = out_path(st, a.out, "out", ctx.root.join("llc").join(name))?;
    st.finish()?;
    cfg.validate()?;

    let buffer = ExplorationBuffer::load(&buffer_path)?;
    let env = buffer.meta.env_id;
    if let Some(w) = want_env {
        let w: EnvId = w.parse()?;
        if w != env {
            return Err(Error::config(format!("buffer {} was recorded on {env}, not {w}", buffer_path.display())));
        }
    }
    st.record("env", env);
    st.record("explore_mode", mode_name(buffer.meta.config.mode));
    let model = Model::new(env);
    fs::create_dir_all(&out)?;
    cfg.checkpoint = Some(out.join("checkpoint"));
    let outcome = train_llcs(&model, &buffer, &cfg)?;
    outcome.llc.save(&out)?;

    let mut log = String::from("h,iteration,env_steps,mean_q,positive_samples,diverged\n");
    for l in &outcome.log {
        log.push_str(&format!(
            "{},{},{},{:?},{},{}\n",
            l.h, l.iteration, l.env_steps, l.mean_q, l.positive_samples, l.diverged
        ));
    }
    fs::write(out.join("train_log.csv"), log)?;
    ctx.manifest("llc", &out, st, &[("buffer", &buffer_path)])?;
    for h in 1..=cfg.h_max {
        if let Some(last) = outcome.log.iter().rfind(|l| l.h == h) {
            println!("pi_{h}: final mean tracking return {:.5}", last.mean_q);
        }
    }
    println!("wrote {}", out.display());
    Ok(())
}

/// Best solution of an optimizer run, enough to re-evaluate it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Solution {
    pub env_id: EnvId,
    pub task_id: TaskId,
    pub optimizer: String,
    pub mode: String,
    pub action_space: ActionSpace,
    pub seed: u64,
    #[serde(rename = "return")]
    pub ret: f64,
    /// Open-loop decision vector (trajectory optimizers).
    pub decision: Option<Vec<f64>>,
    /// Policy weights file next to this one (policy optimizers).
    pub policy_file: Option<String>,
    /// Observation ranges of the policy.
    pub ranges: Option<StateRanges>,
    /// Content hash of the controllers the solution was optimized with.
    pub llc_hash: Option<String>,
}

fn load_llc_for(dir: Option<&Path>, model: &Model) -> Result<Option<(LlcSet, PathBuf)>> {
    match dir {
        None => Ok(None),
        Some(d) => Ok(Some((LlcSet::load(d, model)?, d.to_path_buf()))),
    }
}

pub fn optimize(ctx: &Ctx, st: &mut Settings, a: OptimizeArgs) -> Result<()> {
    let env: EnvId = st.require::<String>("env", a.env)?.parse()?;
    let task_id: TaskId = st.require::<String>("task", a.task)?.parse()?;
    let optimizer = st.get("optimizer", a.optimizer, "cma".to_string())?;
    if !matches!(optimizer.as_str(), "cma" | "mpc" | "ppo") {
        return Err(Error::config(format!("unknown optimizer `{optimizer}` (cma, mpc or ppo)")));
    }
    let mode = st.get("mode", a.mode, "baseline".to_string())?;
    let expected_explore = match mode.as_str() {
        "baseline" => None,
        "llc_naive" => Some("naive"),
        "llc_contact" => Some("contact"),
        other => return Err(Error::config(format!("unknown mode `{other}` (baseline, llc_naive or llc_contact)"))),
    };
    let h_flag = st.opt("H", a.h)?;
    let llc_dir = path_opt(st, "llc", a.llc)?;
    let seeds: Vec<u64> = st
        .get("seeds", a.seeds, "0".to_string())?
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::config(format!("bad seed `{s}`"))))
        .collect::<Result<_>>()?;
    let mut cma = CmaConfig::default();
    cma.iterations = st.get("iterations", a.iterations, cma.iterations)?;
    cma.population = st.get("population", a.population, cma.population)?;
    let mut mpc = MpcConfig::default();
    mpc.rollouts = st.get("rollouts", a.rollouts, mpc.rollouts)?;
    let horizon = st.opt("horizon", a.horizon)?;
    if let Some(hz) = horizon {
        cma.horizon_seconds = hz;
        mpc.horizon_seconds = hz;
    }
    let mpc_steps = st.opt("steps", a.steps)?;
    let mut ppo = PpoConfig::default();
    ppo.total_steps = st.get("total_steps", a.total_steps, ppo.total_steps)?;
    let ranges_path = path_opt(st, "ranges", a.ranges)?;
    let out_dir = path_opt(st, "out_dir", a.out_dir)?.unwrap_or_else(|| ctx.root.join("runs"));
    st.finish()?;
    fs::create_dir_all(&out_dir)?;

    let model = Model::new(env);
    let task = TaskSpec::new(task_id, env);
    let llc = match expected_explore {
        None => {
            if h_flag.is_some() {
                return Err(Error::usage("--H only applies to llc_naive and llc_contact modes"));
            }
            if llc_dir.is_some() {
                return Err(Error::usage("--llc is not used in baseline mode"));
            }
            None
        }
        Some(want) => {
            let dir = llc_dir.as_deref().ok_or_else(|| Error::usage(format!("mode {mode} needs --llc")))?;
            let m = ArtifactManifest::read(dir)?;
            let got = m.config.get("explore_mode").map(String::as_str).unwrap_or("unknown");
            if got != want {
                return Err(Error::config(format!(
                    "mode {mode} needs controllers trained on {want} exploration, {} used {got}",
                    dir.display()
                )));
            }
            load_llc_for(Some(dir), &model)?
        }
    };
    let space = match &llc {
        None => ActionSpace::Torque,
        Some((set, _)) => {
            let h = h_flag.unwrap_or(if optimizer == "ppo" { 5 } else { 4 });
            if h == 0 || h > set.h_max() {
                return Err(Error::config(format!("H = {h} is outside the controllers' range 1..={}", set.h_max())));
            }
            ActionSpace::Llc { h }
        }
    };
    st.record("action_space", space);
    let llc_hash = llc.as_ref().map(|(_, d)| artifact::content_hash(d)).transpose()?;
    let dec = Decoder::new(&model, space, llc.as_ref().map(|(s, _)| s))?;
    let upstream: Vec<(&str, &Path)> = llc.iter().map(|(_, d)| ("llc", d.as_path())).collect();
    let h_part = match space {
        ActionSpace::Llc { h } => format!("-h{h}"),
        ActionSpace::Torque => String::new(),
    };

    for &seed in &seeds {
        let name = format!("{env}-{task_id}-{optimizer}-{mode}{h_part}-s{seed}");
        let record_path = out_dir.join(format!("{name}.csv"));
        let mut solution = Solution {
            env_id: env,
            task_id,
            optimizer: optimizer.clone(),
            mode: mode.clone(),
            action_space: space,
            seed,
            ret: 0.0,
            decision: None,
            policy_file: None,
            ranges: None,
            llc_hash: llc_hash.clone(),
        };
        let record: RunRecord = match optimizer.as_str() {
            "cma" => {
                let out = cma_es_offline(&dec, &task, &CmaConfig { seed, ..cma.clone() })?;
                solution.ret = out.best_return;
                solution.decision = Some(out.best.0);
                out.record
            }
            "mpc" => {
                let steps = mpc_steps.unwrap_or_else(|| task.episode_steps());
                let run = run_mpc(&dec, &task, steps, &MpcConfig { seed, ..mpc.clone() })?;
                solution.ret = run.ret;
                run.record
            }
            _ => {
                let ranges = match &llc {
                    Some((set, _)) => set.meta.ranges.clone(),
                    None => ranges_or_calibrate(st, ranges_path.as_deref(), &model)?,
                };
                let cfg = PpoConfig { seed, checkpoint: Some(out_dir.join(format!("{name}.checkpoint.bin"))), ..ppo.clone() };
                let out = ppo_hlc(&dec, &task, &ranges, &cfg)?;
                let policy_file = format!("{name}.policy.bin");
                nn::io::save_policy(&out_dir.join(&policy_file), &out.policy)?;
                solution.ret = evaluate_policy(&dec, &task, &ranges, &out.policy).unwrap_or(DIVERGENCE_RETURN);
                solution.policy_file = Some(policy_file);
                solution.ranges = Some(ranges);
                out.record
            }
        };
        let record = record.with_task(task_id.name()).with_mode(mode.clone());
        record.save(&record_path)?;
        st.record("seed", seed);
        ctx.manifest("run", &record_path, st, &upstream)?;
        if optimizer != "mpc" {
            let sol_path = out_dir.join(format!("{name}.solution.json"));
            fs::write(&sol_path, serde_json::to_string_pretty(&solution)? + "\n")?;
            let mut up = upstream.clone();
            let policy_path = solution.policy_file.as_ref().map(|f| out_dir.join(f));
            if let Some(p) = &policy_path {
                up.push(("policy", p));
            }
            ctx.manifest("solution", &sol_path, st, &up)?;
        }
        println!(
            "{name}: return {:.4}, final curve value {:.4}, {} simulated steps",
            solution.ret,
            record.final_return().unwrap_or(f64::NAN),
            record.budget()
        );
    }
    Ok(())
}

pub fn landscape(ctx: &Ctx, st: &mut Settings, a: LandscapeArgs) -> Result<()> {
    let sol_path =
        path_opt(st, "solution", a.solution)?.ok_or_else(|| Error::usage("missing required option --solution"))?;
    let llc_dir = path_opt(st, "llc", a.llc)?;
    let d = SliceConfig::default();
    let cfg = SliceConfig {
        resolution: st.get("resolution", a.resolution, d.resolution)?,
        extent: st.get("extent", a.extent, d.extent)?,
        episodes_per_point: st.get("episodes", a.episodes, d.episodes_per_point)?,
        floor: DIVERGENCE_RETURN,
        seed: st.get("seed", a.seed, 0u64)?,
    };
    let fraction = st.get("fraction", a.fraction, 0.9)?;
    let default = ctx.root.join("landscape").join(format!("{}-r{}-s{}.csv", stem(&sol_path), cfg.resolution, cfg.seed));
    let out = out_path(st, a.out, "out", default)?;
    st.finish()?;

    let sol: Solution = serde_json::from_str(&fs::read_to_string(&sol_path)?)?;
    let model = Model::new(sol.env_id);
    let task = TaskSpec::new(sol.task_id, sol.env_id);
    let llc = match sol.action_space {
        ActionSpace::Torque => None,
        ActionSpace::Llc { .. } => {
            let dir = llc_dir.as_deref().ok_or_else(|| Error::usage("this solution needs --llc"))?;
            if sol.llc_hash.as_deref() != Some(artifact::content_hash(dir)?.as_str()) {
                return Err(Error::config(format!("{} is not the controller set this solution was optimized with", dir.display())));
            }
            load_llc_for(Some(dir), &model)?
        }
    };
    let dec = Decoder::new(&model, sol.action_space, llc.as_ref().map(|(s, _)| s))?;
    let mut upstream: Vec<(&str, &Path)> = vec![("solution", sol_path.as_path())];
    if let Some((_, d)) = &llc {
        upstream.push(("llc", d.as_path()));
    }

    let grid = match (&sol.decision, &sol.policy_file) {
        (Some(z), _) => {
            let spec = make_slice_spec(z.clone(), cfg)?;
            let g = evaluate_slice(&spec, trajectory_objective(&dec, &task, DIVERGENCE_RETURN))?;
            g.save(&out, &spec, serde_json::json!({ "kind": "trajectory", "solution": stem(&sol_path) }))?;
            g
        }
        (None, Some(f)) => {
            let dir = sol_path.parent().unwrap_or(Path::new("."));
            let policy: GaussianPolicy = nn::io::load_policy(&dir.join(f))?;
            let ranges = sol.ranges.as_ref().ok_or_else(|| Error::Artifact("policy solution without ranges".into()))?;
            let spec = make_slice_spec(policy.params(), cfg)?;
            let g = evaluate_slice(&spec, policy_objective(&dec, &task, ranges, &policy, spec.config.episodes_per_point))?;
            g.save(&out, &spec, serde_json::json!({ "kind": "policy", "solution": stem(&sol_path) }))?;
            g
        }
        (None, None) => return Err(Error::config("solution has neither a decision vector nor a policy")),
    };
    ctx.manifest("landscape", &out, st, &upstream)?;
    let (w1, w2) = basin_width(&grid, fraction);
    let diverged = grid.cells.iter().flatten().filter(|c| c.diverged).count();
    println!(
        "center return {:.4}; basin width at {fraction}: {w1} x {w2} cells; {diverged} diverged cells",
        grid.center().value
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn collect_runs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|e| e == "csv") && artifact::meta_path(f).is_file())
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            return Err(Error::usage(format!("{} does not exist", p.display())));
        }
    }
    if out.is_empty() {
        return Err(Error::usage("no run records found"));
    }
    Ok(out)
}

pub fn report(ctx: &Ctx, st: &mut Settings, a: ReportArgs) -> Result<()> {
    let out = out_path(st, a.out, "out", ctx.root.join("report").join("scores.csv"))?;
    st.finish()?;
    let paths = collect_runs(&a.runs)?;
    let records: Vec<RunRecord> = paths.iter().map(|p| RunRecord::load(p)).collect::<Result<_>>()?;
    let rows = aggregate_scores(&records)?;
    fs::write(&out, scores_to_csv(&rows))?;
    let upstream: Vec<(&str, &Path)> = paths.iter().map(|p| ("run", p.as_path())).collect();
    st.record("runs", records.len());
    ctx.manifest("report", &out, st, &upstream)?;
    println!("{:<8} {:<12} {:>2} {:>7} {:>5} {:>12}", "opt", "mode", "H", "score", "runs", "budget");
    for r in &rows {
        println!(
            "{:<8} {:<12} {:>2} {:>7.4} {:>5} {:>12.0}",
            r.optimizer, r.action_space, r.h, r.score, r.runs, r.budget
        );
    }

    for b in &a.coverage {
        let buffer = ExplorationBuffer::load(b)?;
        let model = Model::new(buffer.meta.env_id);
        let cov = coverage_report(&model, &buffer)?;
        let dir = out.parent().unwrap_or(Path::new("."));
        let scatter = dir.join(format!("{}.scatter.csv", stem(b)));
        let mut f = std::io::BufWriter::new(fs::File::create(&scatter)?);
        cov.write_scatter(&mut f)?;
        drop(f);
        ctx.manifest("scatter", &scatter, st, &[("buffer", b)])?;
        println!("{}: {} occupied cells, upright {:.3}", b.display(), cov.occupied_cells, cov.upright_fraction);
    }
    println!("wrote {}", out.display());
    Ok(())
}

pub fn verify(a: VerifyArgs) -> Result<()> {
    for p in &a.artifacts {
        for v in artifact::verify_chain(p)? {
            println!("ok {}", v.display());
        }
    }
    Ok(())
}

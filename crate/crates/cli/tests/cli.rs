use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tasa_core::artifact::{self, ArtifactManifest};

fn tasa(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tasa"))
        .args(args)
        .current_dir(dir)
        .env("TASA_ARTIFACT_ROOT", dir.join("artifacts"))
        .env("RUST_LOG", "error")
        .env_remove("TASA_WORKERS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn usage_errors_exit_2() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(code(&tasa(p, &["explore", "--budget", "100"])), 2);
    assert_eq!(code(&tasa(p, &["explore", "--env", "walker"])), 2);
    assert_eq!(code(&tasa(p, &["explore", "--env", "point_mass", "--mode", "sideways"])), 2);
    assert_eq!(code(&tasa(p, &["frobnicate"])), 2);
    assert_eq!(code(&tasa(p, &["calibrate", "--env", "point_mass", "--steps", "5"])), 2);
    assert_eq!(code(&tasa(p, &["--workers", "0", "calibrate", "--env", "point_mass"])), 2);
    assert_eq!(code(&tasa(p, &["--help"])), 0);
    let o = tasa(p, &["optimize", "--env", "point_mass", "--task", "default", "--H", "3"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--H only applies"));
    let o = tasa(p, &["optimize", "--env", "point_mass", "--task", "default", "--mode", "llc_contact"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("needs --llc"));
}

#[test]
fn config_file_sits_between_flags_and_defaults() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    fs::write(p.join("run.cfg"), "env = point_mass\nbudget = 400\nseed = 9\n").unwrap();
    let o = tasa(p, &["--config", "run.cfg", "explore", "--seed", "2", "--out", "b.buf"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = ArtifactManifest::read(&p.join("b.buf")).unwrap();
    assert_eq!(m.config["seed"], "2");
    assert_eq!(m.config["budget"], "400");
    assert_eq!(m.config["k"], "5");
    assert_eq!(m.config["mode"], "contact");
    assert!(m.command_line.iter().any(|a| a == "--config"));

    fs::write(p.join("bad.cfg"), "env = point_mass\nbudjet = 400\n").unwrap();
    let o = tasa(p, &["--config", "bad.cfg", "explore"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("budjet"));
}

#[test]
fn default_paths_follow_the_artifact_root_and_are_idempotent() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let args = ["explore", "--env", "pendulum_cart", "--mode", "naive", "--budget", "300", "--seed", "1"];
    assert_eq!(code(&tasa(p, &args)), 0);
    let buf = p.join("artifacts/buffers/pendulum_cart-naive-n300-s1.buf");
    let first = artifact::content_hash(&buf).unwrap();
    assert_eq!(ArtifactManifest::read(&buf).unwrap().config["k"], "100");
    assert_eq!(code(&tasa(p, &args)), 0);
    assert_eq!(artifact::content_hash(&buf).unwrap(), first);
}

#[test]
fn train_llc_refuses_other_env_and_optimize_checks_h() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    assert_eq!(code(&tasa(p, &["explore", "--env", "point_mass", "--budget", "500", "--out", "b.buf"])), 0);
    let o = tasa(p, &["train-llc", "--buffer", "b.buf", "--env", "planar_hopper"]);
    assert_eq!(code(&o), 2);
    let o = tasa(
        p,
        &["train-llc", "--buffer", "b.buf", "--hmax", "2", "--m", "1", "--n", "20", "--pretrain-epochs", "1", "--out", "llc"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(p.join("llc/pi_1.bin").is_file() && p.join("llc/pi_2.bin").is_file());
    assert!(p.join("llc/train_log.csv").is_file());

    let o = tasa(p, &["optimize", "--env", "point_mass", "--task", "default", "--mode", "llc_contact", "--H", "3", "--llc", "llc"]);
    assert_eq!(code(&o), 2);
    let o = tasa(p, &["optimize", "--env", "point_mass", "--task", "default", "--mode", "llc_naive", "--H", "2", "--llc", "llc"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("naive exploration"));
    let o = tasa(p, &["optimize", "--env", "pendulum_cart", "--task", "default", "--mode", "llc_contact", "--H", "2", "--llc", "llc"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn report_needs_two_runs_per_group() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let base = ["optimize", "--env", "point_mass", "--task", "default", "--iterations", "2", "--population", "6"];
    let o = tasa(p, &[&base[..], &["--seeds", "0", "--out-dir", "one"]].concat());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = tasa(p, &["report", "--runs", "one"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("point_mass/default"));

    assert_eq!(code(&tasa(p, &[&base[..], &["--seeds", "0,1", "--out-dir", "two"]].concat())), 0);
    let o = tasa(p, &["report", "--runs", "two", "--out", "scores.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(p.join("scores.csv")).unwrap();
    assert!(text.starts_with("optimizer,action_space,h,score,runs,budget\n"));
    assert!(text.contains(",baseline,0,0.5,2,"));
    assert_eq!(code(&tasa(p, &["verify", "scores.csv"])), 0);
}

#[test]
fn landscape_from_a_cma_solution() {
    let d = tempfile::tempdir().unwrap();
    let p = d.path();
    let o = tasa(p, &["optimize", "--env", "point_mass", "--task", "default", "--iterations", "2", "--out-dir", "runs"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let sol = "runs/point_mass-default-cma-baseline-s0.solution.json";
    let o = tasa(p, &["landscape", "--solution", sol, "--resolution", "5", "--out", "slice.csv"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(p.join("slice.csv")).unwrap();
    assert_eq!(text.lines().count(), 26);
    assert!(p.join("slice.csv.meta.json").is_file());
    assert_eq!(code(&tasa(p, &["verify", "slice.csv"])), 0);
}

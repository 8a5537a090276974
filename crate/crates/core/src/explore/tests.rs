use super::*;
use crate::sim::{calibrate_state_ranges, hopper, EnvId};
use proptest::prelude::*;

fn hopper_setup() -> (Model, StateRanges) {
    let m = Model::new(EnvId::PlanarHopper);
    let r = calibrate_state_ranges(&m, 10_000, 0).unwrap();
    (m, r)
}

#[test]
fn branch_examples() {
    let cfg = ExplorationConfig::contact_based(100, 0);
    let (b, d) = ground_distance_from(0.05, 0.7, &cfg);
    assert_eq!(b, GroundBranch::Free);
    assert!((0.0..=1.0).contains(&d));
    let (b, d) = ground_distance_from(0.3, 0.7, &cfg);
    assert_eq!(b, GroundBranch::Close);
    assert!((0.0..=0.05).contains(&d));
    assert_eq!(ground_distance_from(0.9, 0.7, &cfg), (GroundBranch::Contact, 0.0));
}

#[test]
fn config_validation() {
    let mut cfg = ExplorationConfig::contact_based(100, 0);
    cfg.p_close = 0.95;
    assert!(cfg.validate().is_err());
    let mut cfg = ExplorationConfig::contact_based(3, 0);
    assert!(cfg.validate().is_err());
    cfg.n = 5;
    cfg.k = 0;
    assert!(cfg.validate().is_err());
    assert_eq!(ExplorationConfig::naive(10, 0).k, 100);
    assert_eq!(ExplorationConfig::contact_based(10, 0).k, 5);
}

#[test]
fn initial_state_sits_at_ground_distance() {
    let (m, r) = hopper_setup();
    let cfg = ExplorationConfig::contact_based(100, 0);
    let mut rng = rng::stream(5, &[]);
    let mut zeros = 0;
    for _ in 0..2000 {
        let (s, d) = sample_initial_state(&m, &r, &mut rng, &cfg);
        assert!((m.lowest_point(&s).unwrap() - d).abs() < 1e-9);
        zeros += usize::from(d == 0.0);
    }
    // 1 - p_free - p_close = 0.5; 2000 draws give a standard error near 0.011.
    assert!((zeros as f64 / 2000.0 - 0.5).abs() < 0.05);
}

#[test]
fn full_upright_bias_restores_root() {
    let (m, r) = hopper_setup();
    let spec = m.spec();
    let raw = r.sample_uniform(&mut rng::stream(1, &[]));
    let mut s = raw.clone();
    bias_toward_default(&m, &mut s, 1.0);
    for &i in &[hopper::ROT, hopper::VX, hopper::VY, hopper::OMEGA] {
        assert_eq!(s[i], spec.default_pose[i]);
    }
    assert_eq!(s[hopper::HIP], raw[hopper::HIP]);
    let mut t = raw.clone();
    bias_toward_default(&m, &mut t, 0.0);
    assert_eq!(t, raw);
}

#[test]
fn budget_arithmetic_and_chaining() {
    let (m, r) = hopper_setup();
    let buf = run_exploration(&m, &r, &ExplorationConfig::contact_based(50, 1)).unwrap();
    assert_eq!(buf.episodes.len(), 10);
    assert_eq!(buf.num_transitions(), 50);
    buf.check_chaining().unwrap();

    let buf = run_exploration(&m, &r, &ExplorationConfig::contact_based(53, 1)).unwrap();
    assert_eq!(buf.num_transitions(), 50);
}

#[test]
fn naive_starts_near_default_pose() {
    let (m, r) = hopper_setup();
    let buf = run_exploration(&m, &r, &ExplorationConfig::naive(200, 2)).unwrap();
    assert_eq!(buf.episodes.len(), 2);
    for ep in &buf.episodes {
        assert_eq!(ep.len(), 100);
        let s0 = &ep.transitions[0].s;
        for (v, d) in s0.iter().zip(m.spec().default_pose.iter()) {
            assert!((v - d).abs() <= 0.005);
        }
    }
}

#[test]
fn exploration_is_reproducible_and_prefix_stable() {
    let (m, r) = hopper_setup();
    let a = run_exploration(&m, &r, &ExplorationConfig::contact_based(100, 9)).unwrap();
    let b = run_exploration(&m, &r, &ExplorationConfig::contact_based(100, 9)).unwrap();
    assert_eq!(a.content_hash(), b.content_hash());
    let c = run_exploration(&m, &r, &ExplorationConfig::contact_based(200, 9)).unwrap();
    assert_eq!(a.episodes[..], c.episodes[..20]);
}

#[test]
fn buffer_round_trip_and_file_hash() {
    let (m, r) = hopper_setup();
    let buf = run_exploration(&m, &r, &ExplorationConfig::contact_based(40, 3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("buf.txt");
    buf.save(&path).unwrap();
    let back = ExplorationBuffer::load(&path).unwrap();
    assert_eq!(back, buf);
    assert_eq!(crate::artifact::content_hash(&path).unwrap(), buf.content_hash());
}

#[test]
fn broken_chain_is_rejected() {
    let (m, r) = hopper_setup();
    let mut buf = run_exploration(&m, &r, &ExplorationConfig::contact_based(10, 3)).unwrap();
    buf.episodes[0].transitions[1].s[0] += 1.0;
    assert!(buf.check_chaining().is_err());
}

#[test]
fn coverage_of_repeated_state_is_one_cell() {
    let (m, r) = hopper_setup();
    let mut buf = run_exploration(&m, &r, &ExplorationConfig::contact_based(10, 3)).unwrap();
    let s = m.spec().default_pose.clone();
    for ep in &mut buf.episodes {
        for tr in &mut ep.transitions {
            tr.s = s.clone();
            tr.next = s.clone();
        }
    }
    let rep = coverage_report(&m, &buf).unwrap();
    assert_eq!(rep.occupied_cells, 1);
    assert_eq!(rep.visited, 10);
    assert_eq!(rep.upright_fraction, 1.0);
}

#[test]
fn upright_flag_matches_fall_rule() {
    let (m, r) = hopper_setup();
    let buf = run_exploration(&m, &r, &ExplorationConfig::contact_based(500, 4)).unwrap();
    let rep = coverage_report(&m, &buf).unwrap();
    let th = m.spec().fall_height_threshold.unwrap();
    for p in &rep.points {
        if p.y < th {
            assert!(!p.upright);
        }
    }
    let mut csv = Vec::new();
    rep.write_scatter(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("vx,rot,y,upright\n"));
    assert_eq!(text.lines().count(), 501);
}

#[test]
fn occupancy_grows_with_budget() {
    let (m, r) = hopper_setup();
    let mut last = 0;
    for n in [50, 200, 800] {
        let buf = run_exploration(&m, &r, &ExplorationConfig::contact_based(n, 6)).unwrap();
        let occ = coverage_report(&m, &buf).unwrap().occupied_cells;
        assert!(occ >= last);
        last = occ;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ground_distance_stays_in_branch(r in 0.0f64..1.0, u in 0.0f64..1.0) {
        let cfg = ExplorationConfig::contact_based(10, 0);
        let (b, d) = ground_distance_from(r, u, &cfg);
        match b {
            GroundBranch::Free => prop_assert!(r < 0.1 && (0.0..=1.0).contains(&d)),
            GroundBranch::Close => prop_assert!((0.1..0.5).contains(&r) && (0.0..=0.05).contains(&d)),
            GroundBranch::Contact => prop_assert!(r >= 0.5 && d == 0.0),
        }
    }
}

use rfast::harness::checks::oracle_check;
use rfast::harness::{preset, run_experiment, ExperimentConfig, Gamma, PRESET_NAMES};

fn cfg(text: &str) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.apply_text(text).unwrap();
    c.validate().unwrap();
    c
}

#[test]
fn two_node_replay_matches_to_machine_precision() {
    let c = cfg("[topology]\npreset = directed_ring\nn = 2\n[problem]\nkind = quadratic\ndim = 3\n[noise]\nmode = gaussian\nsigma = 0.3\n[delay]\nd_max = 2\n[run]\ngamma = 0.1\n");
    let rep = oracle_check(&c, 10, 1e-12, 1e-12).unwrap();
    assert_eq!(rep.steps, 10);
    assert!(
        rep.max_x_diff <= 1e-12 && rep.max_z_diff <= 1e-12,
        "{rep:?}"
    );
}

#[test]
fn lossy_run_still_conserves_tracking_mass() {
    let mut c = preset("losses").unwrap();
    c.k_max = 2000;
    c.sigma = 0.4;
    let rep = oracle_check(&c, 2000, 1e-10, 1e-9).unwrap();
    assert!(rep.max_conservation <= 1e-9, "{rep:?}");
}

#[test]
fn same_seed_same_trajectory() {
    let mut c = preset("noise_plateau").unwrap();
    c.sweep_param = None;
    c.k_max = 500;
    let a = run_experiment(&c).unwrap();
    let b = run_experiment(&c).unwrap();
    assert_eq!(a.traj.rows, b.traj.rows);
    c.seed += 1;
    let d = run_experiment(&c).unwrap();
    assert_ne!(a.traj.rows, d.traj.rows);
}

#[test]
fn auto_step_is_resolved_in_the_echo() {
    let out = run_experiment(&preset("strongly_convex_exact").unwrap()).unwrap();
    let Gamma::Fixed(g) = out.config.gamma else {
        panic!("gamma left unresolved");
    };
    assert!(g > 0.0 && g == out.summary.gamma);
    assert!(out.summary.hits.gap.is_some());
}

#[test]
fn merit_column_is_the_sum_of_its_parts() {
    let mut c = preset("heterogeneity_contrast").unwrap();
    c.sweep_param = None;
    c.k_max = 400;
    let out = run_experiment(&c).unwrap();
    for r in &out.traj.rows {
        assert_eq!(r.merit, r.gradnorm + r.consensus);
    }
}

#[test]
fn every_preset_round_trips_through_text() {
    for name in PRESET_NAMES {
        let c = preset(name).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c, "{name}");
    }
}

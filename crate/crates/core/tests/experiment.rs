mod common;

use proptest::prelude::*;

use pairloc::experiment::{
    default_omega_grid, run_field_sweep, run_relaxation, worker_pool, Engine, ExperimentConfig,
};

use common::preset_config;

fn diagonal_sweep(realizations: usize) -> ExperimentConfig {
    let mut cfg = preset_config(Engine::PairGge, "strong", 40, realizations);
    cfg.fields.values_mhz = Some(vec![-1.0, 0.5, 2.0]);
    cfg
}

#[test]
fn stderr_shrinks_with_realizations() {
    let few = run_field_sweep(&diagonal_sweep(10)).unwrap();
    let many = run_field_sweep(&diagonal_sweep(160)).unwrap();
    for (a, b) in few.rows.iter().zip(&many.rows) {
        assert_eq!(a.omega_mhz, b.omega_mhz);
        // 16x the realizations: expect a ratio of 4
        let ratio = a.m_stderr / b.m_stderr;
        assert!((2.0..8.0).contains(&ratio), "omega {}: ratio {ratio}", a.omega_mhz);
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let mut cfg = preset_config(Engine::Dtwa, "strong", 8, 3);
    cfg.n_traj = 100;
    cfg.t_late_us = 1.0;
    cfg.times.stop_us = Some(1.0);
    cfg.times.points = 11;
    cfg.fields.values_mhz = Some(vec![0.0, 1.0]);
    let run = |w| {
        worker_pool(Some(w))
            .unwrap()
            .install(|| run_relaxation(&cfg).unwrap())
    };
    let one = run(1);
    let three = run(3);
    assert_eq!(one.times, three.times);
    for (a, b) in one.traces.iter().zip(&three.traces) {
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.stderr, b.stderr);
    }
}

#[test]
fn unknown_keys_are_rejected_by_name() {
    let err = ExperimentConfig::from_toml_str("engine = \"ed\"\nn_traj = 10\nbogus = 1\n")
        .unwrap_err()
        .to_string();
    assert!(err.contains("bogus"), "{err}");
}

#[test]
fn oversized_exact_run_is_rejected() {
    let text = "engine = \"ed\"\n[cloud]\npreset = \"strong\"\nn = 40\n";
    assert!(ExperimentConfig::from_toml_str(text).is_err());
}

proptest! {
    #[test]
    fn default_grid_is_symmetric_sorted_and_contains_zero(
        inner in 0.1..5.0f64,
        factor in 1.0..10.0f64,
        inner_points in 1usize..20,
        outer_points in 0usize..20,
    ) {
        let g = default_omega_grid(inner, inner * factor, inner_points, outer_points);
        prop_assert!(g.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(g.contains(&0.0));
        let n = g.len();
        for k in 0..n {
            prop_assert_eq!(g[k], -g[n - 1 - k]);
        }
        prop_assert!(g.iter().filter(|w| w.abs() <= inner * (1.0 + 1e-12)).count() >= 2 * inner_points + 1);
    }
}

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pairloc::couplings::CouplingMatrix;
use pairloc::dtwa::{
    classical_energy, dtwa_magnetization, evolve_trajectory, sample_trajectory_spins, DtwaSettings,
};

fn random_couplings(n: usize, delta: f64, seed: u64) -> CouplingMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rng.random_range(-2.0..2.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    CouplingMatrix::from_matrix(m, delta).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trajectories_conserve_spin_length_and_energy(
        n in 2usize..12,
        seed in any::<u64>(),
        index in 0u64..1000,
        delta in -1.0..1.0f64,
        omega in -3.0..3.0f64,
    ) {
        let c = random_couplings(n, delta, seed);
        let s0 = sample_trajectory_spins(n, seed, index).unwrap();
        let times = [0.0, 1.0, 2.5, 5.0];
        let path = evolve_trajectory(&c, omega, &s0, &times, 1e-10).unwrap();
        let e0 = classical_energy(&c, omega, &s0);
        let scale = e0.abs().max(c.as_matrix().abs().sum() / 8.0);
        let norm0 = s0.norms();
        for s in &path {
            prop_assert!((classical_energy(&c, omega, s) - e0).abs() < 1e-7 * scale);
            for (a, b) in s.norms().iter().zip(&norm0) {
                prop_assert!((a - b).abs() < 1e-7 * b);
            }
        }
    }

    #[test]
    fn zero_field_conserves_total_sz(
        n in 2usize..12,
        seed in any::<u64>(),
        delta in -1.0..1.0f64,
    ) {
        let c = random_couplings(n, delta, seed);
        let s0 = sample_trajectory_spins(n, seed, 7).unwrap();
        let path = evolve_trajectory(&c, 0.0, &s0, &[0.0, 3.0], 1e-10).unwrap();
        prop_assert!((path[1].total(2) - s0.total(2)).abs() < 1e-7);
    }
}

#[test]
fn initial_samples_are_x_polarized() {
    let s = sample_trajectory_spins(50, 3, 11).unwrap();
    assert!(s.spins().iter().all(|v| v[0] == 0.5 && v[1].abs() == 0.5 && v[2].abs() == 0.5));
    assert_eq!(s.sx_mean(), 0.5);
}

#[test]
fn trajectory_stderr_shrinks_as_inverse_sqrt() {
    let c = random_couplings(8, 0.0, 5);
    let times = [0.0, 0.5, 1.0, 2.0];
    let settings = DtwaSettings::with_rtol(1e-6);
    let few = dtwa_magnetization(&c, 0.3, 200, &times, 9, &settings).unwrap();
    let many = dtwa_magnetization(&c, 0.3, 3200, &times, 9, &settings).unwrap();
    assert_eq!(few.stderr[0], 0.0);
    for k in 1..times.len() {
        // 16x the trajectories: expect a ratio of 4
        let ratio = few.stderr[k] / many.stderr[k];
        assert!((3.0..5.3).contains(&ratio), "t = {}: ratio {ratio}", times[k]);
        assert!((few.mean[k] - many.mean[k]).abs() < 4.0 * few.stderr[k]);
    }
}

#[test]
fn same_seed_same_trace() {
    let c = random_couplings(6, -0.7, 1);
    let times = [0.0, 1.0, 2.0];
    let settings = DtwaSettings::default();
    let a = dtwa_magnetization(&c, 0.5, 130, &times, 4, &settings).unwrap();
    let b = dtwa_magnetization(&c, 0.5, 130, &times, 4, &settings).unwrap();
    assert_eq!(a, b);
    let other = dtwa_magnetization(&c, 0.5, 130, &times, 5, &settings).unwrap();
    assert_ne!(a.mean, other.mean);
}

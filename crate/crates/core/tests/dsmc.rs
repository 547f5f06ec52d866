//! Particle solver and entropy estimator runs.

use grazing_lab::densities::{DensityModel, ParticleEnsemble};
use grazing_lab::dsmc::{run, SolverConfig};
use grazing_lab::kernels::KernelSet;
use grazing_lab::knn::entropy_knn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `∫ f log f` of the standard Gaussian on `R⁴`: `-2(1 + log 2π)`.
const STANDARD_ENTROPY_D2: f64 = -5.675754132818691;

fn gaussian_points(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let f = DensityModel::standard(2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ParticleEnsemble::sample(&f, n, &mut rng).unwrap().points()
}

#[test]
fn knn_entropy_of_standard_gaussian() {
    assert!((DensityModel::standard(2).unwrap().entropy().value - STANDARD_ENTROPY_D2).abs() < 1e-12);
    let e = entropy_knn(&gaussian_points(100_000, 1), 1, false).unwrap();
    assert!((e.value - STANDARD_ENTROPY_D2).abs() < 0.05, "{e:?}");
}

#[test]
fn knn_entropy_of_unit_cube_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let pts: Vec<Vec<f64>> = (0..100_000).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
    let e = entropy_knn(&pts, 1, false).unwrap();
    // the faces bias the estimate downward by O(N^{-1/4})
    assert!(e.value.abs() < 0.06, "{e:?}");
}

#[test]
fn knn_bias_shrinks_with_sample_size() {
    let (mut small, mut large) = (0.0, 0.0);
    for seed in 0..20 {
        small += entropy_knn(&gaussian_points(1_000, 100 + seed), 1, false).unwrap().value - STANDARD_ENTROPY_D2;
        large += entropy_knn(&gaussian_points(100_000, 200 + seed), 1, false).unwrap().value - STANDARD_ENTROPY_D2;
    }
    assert!((large / 20.0).abs() < (small / 20.0).abs(), "{} vs {}", large / 20.0, small / 20.0);
}

#[test]
fn maxwellian_run_keeps_energy_and_entropy() {
    let f = DensityModel::maxwellian(2, 1.0, &[0.0, 0.0], 1.0).unwrap();
    let ks = KernelSet::standard(2, 0.0, 1.0, 1.0, 1.0).unwrap();
    let mut cfg = SolverConfig::new(2_000, 0.01, 0.2, 3);
    cfg.entropy_every = 5;
    let out = run(&cfg, &f, &ks).unwrap();
    let (dp, de) = out.max_relative_drift();
    assert!(dp < 1e-10 && de < 1e-10, "{dp} {de}");
    let h = out.entropy_series();
    assert!(h.len() >= 3);
    let (_, h0, s0) = h[0];
    for &(t, hv, s) in &h[1..] {
        assert!((hv - h0).abs() <= 3.0 * s.hypot(s0), "t={t}: {hv} vs {h0}");
    }
}

#[test]
fn hard_potential_moment_stays_bounded() {
    let f = DensityModel::anisotropic();
    let ks = KernelSet::standard(2, 1.0, 1.0, 1.0, 1.0).unwrap();
    let mut cfg = SolverConfig::new(1_000, 0.01, 0.2, 4);
    cfg.entropy_every = 0;
    let out = run(&cfg, &f, &ks).unwrap();
    let m0 = out.trace[0].v_moment;
    assert!(out.trace.iter().all(|r| r.v_moment.is_finite() && r.v_moment <= 2.0 * m0));
}

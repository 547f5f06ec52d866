//! Estimator-level checks: exact same-seed identities, equilibria and
//! Monte Carlo against the tensor grid.

use grazing_lab::densities::DensityModel;
use grazing_lab::dualpairs::{make_cosh_pair, make_quadratic_pair};
use grazing_lab::functionals::{
    action_landau, action_r, boltzmann_suite, dissipation_boltzmann, dissipation_landau, dl_density, landau_optimal_flux, run_frames,
    run_phase, weak_q_landau, Route,
};
use grazing_lab::geometry::{QuadraticTest, VecD};
use grazing_lab::grazing::sweep_dissipation;
use grazing_lab::kernels::KernelSet;
use grazing_lab::quadrature::{FrameSample, GridConfig, PhaseSample, SamplerConfig};

fn mc(n: usize, seed: u64) -> Route {
    Route::MonteCarlo(SamplerConfig::with_samples(n, seed))
}

fn grid() -> Route {
    Route::Grid(GridConfig::default())
}

fn maxwellian() -> DensityModel {
    DensityModel::maxwellian(2, 1.0, &[0.3, -0.2], 1.5).unwrap()
}

#[test]
fn factorised_maxwellian_does_not_dissipate() {
    let f = maxwellian();
    let ks = KernelSet::standard(2, 0.0, 1.0, 1.0, 0.5).unwrap();
    let s = boltzmann_suite(&f, &ks, &make_cosh_pair(), &mc(20_000, 1)).unwrap();
    for e in [s.d_b, s.d_psi, s.d_cosh] {
        assert!(e.value.abs() < 1e-10, "{e:?}");
    }
    assert!(dissipation_landau(&f, &ks, &mc(20_000, 1)).unwrap().value.abs() < 1e-10);
    let phi = QuadraticTest::mixed(2, 0, 0);
    assert!(weak_q_landau(&f, &phi, &ks, &grid()).unwrap().value.abs() < 1e-10);
}

#[test]
fn maxwellian_sweep_is_zero_at_every_epsilon() {
    let f = maxwellian();
    let ks = KernelSet::standard(2, 0.0, 1.0, 1.0, 1.0).unwrap();
    let sw = sweep_dissipation(&f, &make_cosh_pair(), &ks, &[0.4, 0.2, 0.1], &mc(5_000, 2), None).unwrap();
    assert!(sw.boltzmann_values.iter().all(|e| e.value.abs() < 1e-10));
    assert!(sw.landau_target.value.abs() < 1e-10);
}

#[test]
fn boltzmann_dissipation_matches_grid() {
    let f = DensityModel::anisotropic();
    let ks = KernelSet::standard(2, 0.0, 1.0, 1.0, 1.0).unwrap();
    let m = dissipation_boltzmann(&f, &ks, &mc(400_000, 3)).unwrap();
    let g = dissipation_boltzmann(&f, &ks, &grid()).unwrap();
    assert!(m.value > 0.0);
    assert!(m.agrees_with(&g, 3.0), "mc {m:?} grid {g:?}");
}

#[test]
fn dissipation_is_linear_in_kappa() {
    let f = DensityModel::anisotropic();
    let one = KernelSet::standard(2, 0.0, 1.0, 1.0, 0.3).unwrap();
    let two = KernelSet::standard(2, 0.0, 1.0, 2.0, 0.3).unwrap();
    let a = dissipation_boltzmann(&f, &one, &mc(20_000, 4)).unwrap();
    let b = dissipation_boltzmann(&f, &two, &mc(20_000, 4)).unwrap();
    assert!((b.value - 2.0 * a.value).abs() <= 1e-12 * b.value);
}

#[test]
fn same_seed_pair_identities() {
    let f = DensityModel::anisotropic();
    let ks = KernelSet::standard(2, 0.0, 1.0, 1.0, 0.3).unwrap();
    let route = mc(50_000, 5);
    let q = boltzmann_suite(&f, &ks, &make_quadratic_pair(), &route).unwrap();
    assert!((q.d_psi.value - 0.5 * q.d_b.value).abs() <= 1e-12 * q.d_b.value);
    let c = boltzmann_suite(&f, &ks, &make_cosh_pair(), &route).unwrap();
    assert!(c.d_psi.value <= c.d_b.value);
    // ½∫|√(f'f*') - √(ff*)|² Bκ, written out per frame
    let direct = |s: &FrameSample, j: usize| {
        let r = (0.5 * s.delta(j)).exp() - 1.0;
        0.5 * s.kb() * r * r
    };
    let d = run_frames(&f, &ks, &route, true, &[&direct]).unwrap().remove(0);
    assert!((d.value - c.d_cosh.value).abs() <= 1e-10 * d.value);
    assert!((c.d_psi.value - c.d_cosh.value).abs() <= 1e-10 * d.value);
}

#[test]
fn hard_potential_reweights_landau_integrand() {
    let f = DensityModel::anisotropic();
    let maxwell = KernelSet::standard(2, 0.0, 1.0, 1.0, 1.0).unwrap();
    let hard = KernelSet::standard(2, 1.0, 1.0, 1.0, 1.0).unwrap();
    let route = mc(50_000, 6);
    let h = dissipation_landau(&f, &hard, &route).unwrap();
    let g = |s: &PhaseSample| s.w_eta * dl_density(s) * s.rel_speed();
    let m = run_phase(&f, &maxwell, &route, &[&g]).unwrap().remove(0);
    assert!((h.value - m.value).abs() <= 1e-12 * h.value);
}

#[test]
fn landau_action_at_optimal_flux_equals_dissipation() {
    let f = DensityModel::anisotropic();
    let ks = KernelSet::standard(2, 0.0, 1.0, 1.0, 1.0).unwrap();
    let route = mc(50_000, 7);
    let dl = dissipation_landau(&f, &ks, &route).unwrap();
    let u = landau_optimal_flux(&f, &ks);
    let al = action_landau(&f, &u, &ks, &route).unwrap();
    assert!((al.value - dl.value).abs() <= 1e-10 * dl.value);
    let u3 = |x: &VecD, xs: &VecD, v: &VecD, vs: &VecD| u(x, xs, v, vs) * 3.0;
    let a3 = action_landau(&f, &u3, &ks, &route).unwrap();
    assert!((a3.value - 9.0 * al.value).abs() <= 1e-12 * a3.value);
    let zero = |_: &VecD, _: &VecD, _: &VecD, _: &VecD| VecD::zeros(2);
    assert_eq!(action_landau(&f, &zero, &ks, &route).unwrap().value, 0.0);
}

#[test]
fn zero_flux_has_zero_action() {
    let f = DensityModel::anisotropic();
    let ks = KernelSet::standard(2, 0.0, 1.0, 1.0, 0.5).unwrap();
    let r = action_r(&f, &|_| 0.0, &ks, &make_cosh_pair(), &mc(5_000, 8)).unwrap();
    assert_eq!(r.value, 0.0);
}

#[test]
fn grid_product_mass_is_one() {
    let f = DensityModel::anisotropic();
    let ks = KernelSet::standard(2, 0.0, 1.0, 1.0, 1.0).unwrap();
    let g = |s: &PhaseSample| s.w_eta;
    let mass = run_phase(&f, &ks, &grid(), &[&g]).unwrap().remove(0);
    assert!((mass.value - 1.0).abs() < 1e-4, "{mass:?}");
    let m = run_phase(&f, &ks, &mc(10_000, 9), &[&g]).unwrap().remove(0);
    assert!((m.value - 1.0).abs() < 1e-12 && m.std_error < 1e-12);
}

#[test]
fn landau_dissipation_grid_is_resolution_stable() {
    let f = DensityModel::anisotropic();
    let ks = KernelSet::standard(2, 0.0, 1.0, 1.0, 1.0).unwrap();
    let g = GridConfig::default();
    let a = dissipation_landau(&f, &ks, &Route::Grid(g)).unwrap();
    let b = dissipation_landau(&f, &ks, &Route::Grid(g.refined())).unwrap();
    assert!((a.value - b.value).abs() < 1e-3 * b.value);
}

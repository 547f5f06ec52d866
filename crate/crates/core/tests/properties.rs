//! Property tests for the invariants of the building blocks.

use grazing_lab::densities::DensityModel;
use grazing_lab::dualpairs::{log_mean, make_cosh_pair, make_quadratic_pair, DualPair};
use grazing_lab::estimate::Accumulator;
use grazing_lab::functionals::{db_density, dcosh_density, dpsi_density, r_optimal_density};
use grazing_lab::geometry::{deviation_angle, post_collision, projection, VecD};
use grazing_lab::kernels::AngularKernel;
use proptest::prelude::*;

fn vec_d(d: usize) -> impl Strategy<Value = VecD> {
    prop::collection::vec(-5.0..5.0f64, d).prop_map(|c| VecD::from_slice(&c))
}

/// Uniform unit vector: angle in d=2, (azimuth, cos polar) in d=3.
fn unit(d: usize) -> impl Strategy<Value = VecD> {
    (0.0..std::f64::consts::TAU, -1.0..1.0f64).prop_map(move |(phi, c)| {
        if d == 2 {
            VecD::from_slice(&[phi.cos(), phi.sin()])
        } else {
            let s = (1.0 - c * c).sqrt();
            VecD::from_slice(&[s * phi.cos(), s * phi.sin(), c])
        }
    })
}

fn frame_inputs() -> impl Strategy<Value = (VecD, VecD, VecD)> {
    prop_oneof![Just(2usize), Just(3usize)].prop_flat_map(|d| (vec_d(d), vec_d(d), unit(d)))
}

fn pairs() -> [DualPair; 2] {
    [make_quadratic_pair(), make_cosh_pair()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn collisions_conserve_momentum_and_energy((v, vs, sigma) in frame_inputs()) {
        prop_assume!((v - vs).norm() > 1e-6);
        let (vp, vsp) = post_collision(&v, &vs, &sigma).unwrap();
        let scale = v.norm_sq() + vs.norm_sq();
        prop_assert!(((vp + vsp) - (v + vs)).norm() <= 1e-12 * scale.sqrt().max(1.0));
        prop_assert!((vp.norm_sq() + vsp.norm_sq() - scale).abs() <= 1e-12 * scale.max(1.0));
        // relative speed is preserved
        let z = vp - vsp;
        prop_assert!((z.norm() - (v - vs).norm()).abs() <= 1e-12 * scale.sqrt().max(1.0));
    }

    #[test]
    fn sigma_stays_within_twice_the_angle((v, vs, sigma) in frame_inputs()) {
        prop_assume!((v - vs).norm() > 1e-6);
        let k = (v - vs) * (1.0 / (v - vs).norm());
        let theta = deviation_angle(&v, &vs, &sigma).unwrap();
        prop_assert!((sigma - k).norm() <= 2.0 * theta + 1e-12);
    }

    #[test]
    fn swapping_partners_swaps_outputs((v, vs, sigma) in frame_inputs()) {
        prop_assume!((v - vs).norm() > 1e-6);
        let (a, b) = post_collision(&v, &vs, &sigma).unwrap();
        let (c, e) = post_collision(&vs, &v, &(-sigma)).unwrap();
        prop_assert!((a - e).norm() <= 1e-12 * (1.0 + a.norm()));
        prop_assert!((b - c).norm() <= 1e-12 * (1.0 + b.norm()));
    }

    #[test]
    fn projection_is_idempotent_and_kills_the_relative_velocity((v, vs, _s) in frame_inputs()) {
        prop_assume!((v - vs).norm() > 1e-6);
        let p = projection(&v, &vs).unwrap();
        prop_assert!(p.matmul(&p).sub(&p).max_abs() <= 1e-12);
        prop_assert!(p.mul_vec(&(v - vs)).norm() <= 1e-12 * (v - vs).norm());
    }

    #[test]
    fn compatibility_on_random_pairs(s in 1e-3..10.0f64, t in 1e-3..10.0f64) {
        for pair in pairs() {
            let lhs = pair.psi_star_prime(s.ln() - t.ln()) * pair.theta(s, t);
            prop_assert!((lhs - (s - t)).abs() <= 1e-10 * (s - t).abs().max(1e-12), "{} {s} {t}", pair.name);
        }
    }

    #[test]
    fn theta_axioms(s in 1e-3..10.0f64, t in 1e-3..10.0f64, lambda in 0.1..10.0f64) {
        for pair in pairs() {
            let th = pair.theta(s, t);
            prop_assert!((th - pair.theta(t, s)).abs() <= 1e-12 * th);
            prop_assert!((pair.theta(lambda * s, lambda * t) - lambda * th).abs() <= 1e-10 * lambda * th);
            // positive and below the arithmetic mean
            prop_assert!(th > 0.0 && th <= 0.5 * (s + t) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn log_mean_sits_between_geometric_and_arithmetic(s in 1e-6..1e6f64, t in 1e-6..1e6f64) {
        let l = log_mean(s, t);
        let (g, a) = ((s * t).sqrt(), 0.5 * (s + t));
        prop_assert!(l >= g * (1.0 - 1e-12) && l <= a * (1.0 + 1e-12), "{s} {t} {l}");
    }

    #[test]
    fn fenchel_inequality(a in -20.0..20.0f64, r in -6.0..6.0f64) {
        for pair in pairs() {
            let lhs = pair.psi(a).unwrap() + pair.psi_star(r);
            prop_assert!(lhs >= a * r - 1e-8 * (1.0 + (a * r).abs()), "{} a={a} r={r}", pair.name);
        }
    }

    #[test]
    fn per_frame_dissipation_orderings(delta in -30.0..30.0f64) {
        let b = db_density(delta);
        prop_assert!(b >= 0.0);
        prop_assert!(dcosh_density(delta) <= 0.5 * b * (1.0 + 1e-12));
        for pair in pairs() {
            let (p, r) = (dpsi_density(&pair, delta), r_optimal_density(&pair, delta));
            prop_assert!(p >= 0.0 && p <= b * (1.0 + 1e-12));
            prop_assert!((r + p - b).abs() <= 1e-12 * b.max(1e-300));
        }
    }

    #[test]
    fn mixture_gradient_matches_differences(x in vec_d(2), v in vec_d(2)) {
        let f = DensityModel::correlated_mixture();
        let g = f.grad_v_log(&x, &v);
        let h = 1e-5;
        for i in 0..2 {
            let e = VecD::unit(2, i) * h;
            let fd = (f.log_eval(&x, &(v + e)) - f.log_eval(&x, &(v - e))) / (2.0 * h);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "{fd} vs {}", g[i]);
        }
    }

    #[test]
    fn scaled_kernel_vanishes_beyond_half_epsilon(eps in 0.01..1.0f64, u in 0.0..1.0f64, nu in 0.2..1.8f64) {
        let beta = AngularKernel::power_law(nu, 2).unwrap();
        let theta = eps / 2.0 + u * (std::f64::consts::FRAC_PI_2 - eps / 2.0) + 1e-12;
        prop_assert_eq!(beta.beta_scaled(eps, theta), 0.0);
        prop_assert!(beta.beta_scaled(eps, 0.25 * eps) > 0.0);
    }

    #[test]
    fn merged_accumulators_match_one_stream(xs in prop::collection::vec(-1e3..1e3f64, 2..200), cut in 0usize..200) {
        let cut = cut.min(xs.len());
        let (mut one, mut a, mut b) = (Accumulator::new(), Accumulator::new(), Accumulator::new());
        for (i, &x) in xs.iter().enumerate() {
            one.push(x);
            if i < cut { a.push(x) } else { b.push(x) }
        }
        a.merge(&b);
        prop_assert_eq!(a.n, one.n);
        prop_assert!((a.mean() - one.mean()).abs() <= 1e-9);
        prop_assert!((a.variance() - one.variance()).abs() <= 1e-7 * one.variance().max(1.0));
    }
}

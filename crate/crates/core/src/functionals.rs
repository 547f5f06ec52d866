//! Entropy dissipations, actions and weak collision pairings.
//!
//! Every Boltzmann-side functional is an integral over the same frame
//! stream, so two estimates with the same [`Route`] see identical frames and
//! per-frame inequalities carry over to the estimates exactly.

use serde::Serialize;

use crate::densities::DensityModel;
use crate::dualpairs::DualPair;
use crate::error::Result;
use crate::estimate::Estimate;
use crate::geometry::{boltzmann_gradient, landau_divergence, CollisionFrame, TestFunction, VecD};
use crate::kernels::KernelSet;
use crate::quadrature::{
    estimate_frames, estimate_phase, tensor_grid_d2_frames, tensor_grid_d2_phase, FrameContext, FrameIntegrand, FrameSample,
    GridConfig, PhaseIntegrand, PhaseSample, SamplerConfig,
};

/// How an integral is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Route {
    MonteCarlo(SamplerConfig),
    /// Deterministic oracle, `d = 2` only.
    Grid(GridConfig),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FunctionalKind {
    DB,
    DPsiStar,
    DCosh,
    DL,
    ActionR,
    ActionL,
    JBoltzmann,
    JLandau,
    WeakQB,
    WeakQL,
}

impl FunctionalKind {
    pub fn label(&self) -> &'static str {
        match self {
            Self::DB => "D_B",
            Self::DPsiStar => "D_psi_star",
            Self::DCosh => "D_cosh",
            Self::DL => "D_L",
            Self::ActionR => "R",
            Self::ActionL => "A_L",
            Self::JBoltzmann => "J_B",
            Self::JLandau => "J_L",
            Self::WeakQB => "weak_Q_B",
            Self::WeakQL => "weak_Q_L",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FunctionalResult {
    pub kind: FunctionalKind,
    pub estimate: Estimate,
    pub epsilon: f64,
    pub pair: Option<String>,
}

pub fn run_frames(
    f: &DensityModel,
    ks: &KernelSet,
    route: &Route,
    need_post: bool,
    integrands: &[&FrameIntegrand<'_>],
) -> Result<Vec<Estimate>> {
    match route {
        Route::MonteCarlo(cfg) => estimate_frames(&FrameContext::new(f, ks, *cfg)?, need_post, integrands),
        Route::Grid(g) => tensor_grid_d2_frames(f, ks, g, need_post, integrands),
    }
}

pub fn run_phase(f: &DensityModel, ks: &KernelSet, route: &Route, integrands: &[&PhaseIntegrand<'_>]) -> Result<Vec<Estimate>> {
    match route {
        Route::MonteCarlo(cfg) => estimate_phase(&FrameContext::new(f, ks, *cfg)?, integrands),
        Route::Grid(g) => tensor_grid_d2_phase(f, ks, g, integrands),
    }
}

/// `¼(e^Δ - 1)Δ`, the `D_B` integrand over `F`.
pub fn db_density(delta: f64) -> f64 {
    0.25 * delta.exp_m1() * delta
}

/// `¼Ψ*(Δ)Θ(e^Δ, 1)`, the `D_Ψ*` integrand over `F` (`Ψ*` is even).
pub fn dpsi_density(pair: &DualPair, delta: f64) -> f64 {
    0.25 * pair.psi_star(delta) * pair.theta_exp(delta)
}

/// `½(e^{Δ/2} - 1)²`, the `D_cosh` integrand `½|√(F') - √F|²` over `F`.
pub fn dcosh_density(delta: f64) -> f64 {
    let a = (0.5 * delta).exp_m1();
    0.5 * a * a
}

/// `¼Ψ(U/(ΘBκ))Θ/F` at the optimal `U_B = κB(F' - F)`.
pub fn r_optimal_density(pair: &DualPair, delta: f64) -> f64 {
    let th = pair.theta_exp(delta);
    match pair.psi(delta.exp_m1() / th) {
        Ok(p) => 0.25 * p * th,
        Err(_) => f64::NAN,
    }
}

fn db_term(s: &FrameSample, j: usize) -> f64 {
    s.kb() * db_density(s.delta(j))
}

pub fn dissipation_boltzmann(f: &DensityModel, ks: &KernelSet, route: &Route) -> Result<Estimate> {
    Ok(run_frames(f, ks, route, true, &[&db_term])?.remove(0))
}

pub fn dissipation_psi(f: &DensityModel, ks: &KernelSet, pair: &DualPair, route: &Route) -> Result<Estimate> {
    let g = |s: &FrameSample, j: usize| s.kb() * dpsi_density(pair, s.delta(j));
    Ok(run_frames(f, ks, route, true, &[&g])?.remove(0))
}

pub fn dissipation_cosh(f: &DensityModel, ks: &KernelSet, route: &Route) -> Result<Estimate> {
    let g = |s: &FrameSample, j: usize| s.kb() * dcosh_density(s.delta(j));
    Ok(run_frames(f, ks, route, true, &[&g])?.remove(0))
}

/// The Boltzmann functionals on one frame stream.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoltzmannSuite {
    pub d_b: Estimate,
    pub d_psi: Estimate,
    pub d_cosh: Estimate,
    /// `R(f, U_B)` at the optimal flux.
    pub r_opt: Estimate,
}

pub fn boltzmann_suite(f: &DensityModel, ks: &KernelSet, pair: &DualPair, route: &Route) -> Result<BoltzmannSuite> {
    let g_psi = |s: &FrameSample, j: usize| s.kb() * dpsi_density(pair, s.delta(j));
    let g_cosh = |s: &FrameSample, j: usize| s.kb() * dcosh_density(s.delta(j));
    let g_r = |s: &FrameSample, j: usize| s.kb() * r_optimal_density(pair, s.delta(j));
    let e = run_frames(f, ks, route, true, &[&db_term, &g_psi, &g_cosh, &g_r])?;
    Ok(BoltzmannSuite { d_b: e[0], d_psi: e[1], d_cosh: e[2], r_opt: e[3] })
}

/// The optimal flux `U_B = κ B^ε (f'f*' - ff*)` as a function of the frame.
pub fn optimal_flux<'a>(f: &'a DensityModel, ks: &'a KernelSet) -> impl Fn(&CollisionFrame) -> f64 + Sync + 'a {
    move |fr: &CollisionFrame| {
        let log_f = f.log_eval(&fr.x, &fr.v) + f.log_eval(&fr.xs, &fr.vs);
        let log_fp = f.log_eval(&fr.x, &fr.v_prime) + f.log_eval(&fr.xs, &fr.vs_prime);
        let b = ks.collision_kernel(fr).unwrap_or(f64::NAN);
        ks.kappa.eval(&fr.x, &fr.xs) * b * log_f.exp() * (log_fp - log_f).exp_m1()
    }
}

/// Per-frame `R` integrand over the sample weight: `¼Ψ(U/den)·den/(F β^ε dθ dp)`.
///
/// Returns NaN (counted as rejected) when the denominator vanishes under a
/// non-zero `U`.
pub fn action_r_term(pair: &DualPair, ks: &KernelSet, s: &FrameSample, j: usize, u: f64) -> f64 {
    let fr = &s.frames[j];
    let th = pair.theta_exp(s.delta(j));
    let log_f = s.eta.log_f + s.eta.log_fs;
    let b = ks.collision_kernel(fr).unwrap_or(f64::NAN);
    let den = s.eta.kappa * b * log_f.exp() * th;
    if den == 0.0 {
        return if u == 0.0 { 0.0 } else { f64::NAN };
    }
    match pair.psi(u / den) {
        Ok(p) => 0.25 * s.kb() * th * p,
        Err(_) => f64::NAN,
    }
}

/// `R(f, U) = ¼∫ Ψ(U/(Θ(f)B^εκ)) Θ(f)B^εκ dσ dη`.
pub fn action_r(
    f: &DensityModel,
    u: &(dyn Fn(&CollisionFrame) -> f64 + Sync),
    ks: &KernelSet,
    pair: &DualPair,
    route: &Route,
) -> Result<Estimate> {
    let g = |s: &FrameSample, j: usize| action_r_term(pair, ks, s, j, u(&s.frames[j]));
    Ok(run_frames(f, ks, route, true, &[&g])?.remove(0))
}

/// `½κA₀(|z|²|w|² - (z·w)²)` with `w` the gradient difference: the `D_L`
/// integrand over `F`, without weights.
pub fn dl_density(s: &PhaseSample) -> f64 {
    let z = s.v - s.vs;
    let w = s.grad - s.grad_s;
    let zw = z.dot(&w);
    0.5 * s.kappa * s.a0 * (z.norm_sq() * w.norm_sq() - zw * zw)
}

/// `D_L(f) = ½∫ κ ff* |√A Π(∇_v log f - (∇_v log f)*)|² dη`.
pub fn dissipation_landau(f: &DensityModel, ks: &KernelSet, route: &Route) -> Result<Estimate> {
    let g = |s: &PhaseSample| s.w_eta * dl_density(s);
    Ok(run_phase(f, ks, route, &[&g])?.remove(0))
}

/// `A_L(f, U) = ½∫ |U|²/(ff*κ) dη`.
pub fn action_landau(
    f: &DensityModel,
    u: &(dyn Fn(&VecD, &VecD, &VecD, &VecD) -> VecD + Sync),
    ks: &KernelSet,
    route: &Route,
) -> Result<Estimate> {
    let g = |s: &PhaseSample| {
        let uu = u(&s.x, &s.xs, &s.v, &s.vs).norm_sq();
        let den = s.kappa * (s.log_f + s.log_fs).exp();
        if den == 0.0 {
            return if uu == 0.0 { 0.0 } else { f64::NAN };
        }
        // relative to F
        s.w_eta * 0.5 * uu / (den * (s.log_f + s.log_fs).exp())
    };
    Ok(run_phase(f, ks, route, &[&g])?.remove(0))
}

/// The Landau flux `-κ ff* √A Π(∇ log f - (∇ log f)*)`, which makes `A_L = D_L`.
pub fn landau_optimal_flux<'a>(f: &'a DensityModel, ks: &'a KernelSet) -> impl Fn(&VecD, &VecD, &VecD, &VecD) -> VecD + Sync + 'a {
    move |x, xs, v, vs| {
        let z = *v - *vs;
        let r = z.norm();
        let w = f.grad_v_log(x, v) - f.grad_v_log(xs, vs);
        let pw = w - z * (z.dot(&w) / (r * r));
        let sqrt_a = (ks.a0.eval(r).unwrap_or(f64::NAN) * r * r).sqrt();
        let ff = (f.log_eval(x, v) + f.log_eval(xs, vs)).exp();
        pw * (-ks.kappa.eval(x, xs) * ff * sqrt_a)
    }
}

/// `⟨Q_B^ε(f,f), φ⟩ = ½∫ κ ff* ∫ ∇̄φ B^ε dσ dη`.
pub fn weak_q_boltzmann<T: TestFunction + ?Sized>(f: &DensityModel, phi: &T, ks: &KernelSet, route: &Route) -> Result<Estimate> {
    let g = |s: &FrameSample, j: usize| 0.5 * s.kb() * boltzmann_gradient(phi, &s.frames[j]);
    Ok(run_frames(f, ks, route, false, &[&g])?.remove(0))
}

/// `⟨Q_L(f,f), φ⟩ = ½∫ κA₀ ff* (∇_v - ∇_{v*})·(|v-v*|²Π(∇φ - ∇φ*)) dη`.
pub fn weak_q_landau<T: TestFunction + ?Sized>(f: &DensityModel, phi: &T, ks: &KernelSet, route: &Route) -> Result<Estimate> {
    if phi.hess_v(&VecD::zeros(ks.dim), &VecD::zeros(ks.dim)).is_none() {
        log::warn!("weak_q_landau: no analytic Hessian, using finite differences");
    }
    let g = |s: &PhaseSample| match landau_divergence(phi, &s.x, &s.xs, &s.v, &s.vs) {
        Ok(div) => s.w_eta * 0.5 * s.kappa * s.a0 * div,
        Err(_) => f64::NAN,
    };
    Ok(run_phase(f, ks, route, &[&g])?.remove(0))
}

/// `H(f_T) - H(f_0) + ∫D + ∫A`; time integrals are supplied by the caller.
pub fn assemble_j(entropy_t: f64, entropy_0: f64, dissipation_integral: f64, action_integral: f64) -> f64 {
    entropy_t - entropy_0 + dissipation_integral + action_integral
}

//! Monte Carlo and tensor-grid integration over collision space.
//!
//! Both routes produce the same sample types. A [`FrameSample`] carries the
//! weights `w_eta` (for `F dη`, `F = f(x,v) f(x*,v*)`) and `w_angle` (for
//! `β^ε(θ) dθ dp`). An integrand returns its weighted contribution, e.g.
//! `s.kb() * h` for `∫∫ κ B^ε F h dσ dη`; Monte Carlo averages these and the
//! grid sums them. Integrands are written relative to `F`, so `F` itself
//! never appears. [`PhaseSample`] plays the same role for `∫ F h dη`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::densities::DensityModel;
use crate::error::{input, LabError, Result};
use crate::estimate::{Accumulator, Estimate, Method};
use crate::geometry::{tangent_frame, CollisionFrame, VecD};
use crate::kernels::{AngularProfile, KernelSet};
use crate::numerics::{gauss_hermite, gauss_jacobi};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaStrategy {
    /// `θ ~ θ²β^ε`, which cancels the angular singularity.
    WeightTimesThetaSq,
    /// `θ ~ U[0, ε/2]`; only finite-variance for regular integrands.
    UniformOnSupport,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PairProposal {
    /// `(x,v), (x*,v*) ~ f` independently.
    ProductOfDensity,
    /// Each particle from a Gaussian with the density's mean and
    /// `factor ×` its covariance.
    GaussianOverdispersed { factor: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub seed: u64,
    /// Independent random streams; results depend on this number.
    pub workers: usize,
    pub theta_strategy: ThetaStrategy,
    pub pair_proposal: PairProposal,
    /// Evaluate every draw at `p` and `-p`.
    pub antithetic: bool,
    /// Draws with `|v - v*|` below this are redrawn.
    pub rel_speed_floor: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            seed: 0,
            workers: 4,
            theta_strategy: ThetaStrategy::WeightTimesThetaSq,
            pair_proposal: PairProposal::ProductOfDensity,
            antithetic: true,
            rel_speed_floor: 1e-8,
        }
    }
}

impl SamplerConfig {
    pub fn with_samples(n_samples: usize, seed: u64) -> Self {
        Self { n_samples, seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.workers == 0 {
            return input("sampler needs n_samples ≥ 1 and workers ≥ 1");
        }
        if let PairProposal::GaussianOverdispersed { factor } = self.pair_proposal {
            if !(factor >= 1.0 && factor.is_finite()) {
                return input(format!("overdispersion factor {factor} must be ≥ 1"));
            }
        }
        Ok(())
    }

    fn split(&self) -> Vec<usize> {
        let base = self.n_samples / self.workers;
        let extra = self.n_samples % self.workers;
        (0..self.workers).map(|w| base + usize::from(w < extra)).collect()
    }
}

/// Random stream for `worker`, derived from the master seed.
pub fn worker_rng(seed: u64, worker: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(worker as u64);
    rng
}

/// Pre-collision data shared by Boltzmann and Landau integrands.
#[derive(Clone, Copy, Debug)]
pub struct PhaseSample {
    pub x: VecD,
    pub xs: VecD,
    pub v: VecD,
    pub vs: VecD,
    /// `F(η)/g(η)` for the proposal `g` (quadrature weight times `F` on a grid).
    pub w_eta: f64,
    pub kappa: f64,
    pub a0: f64,
    pub log_f: f64,
    pub log_fs: f64,
    /// `∇_v log f` at `(x,v)` and `(x*,v*)`.
    pub grad: VecD,
    pub grad_s: VecD,
}

impl PhaseSample {
    /// `|v - v*|`.
    pub fn rel_speed(&self) -> f64 {
        (self.v - self.vs).norm()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FrameSample {
    pub eta: PhaseSample,
    /// The draw at `p` and, if used, at `-p`.
    pub frames: [CollisionFrame; 2],
    pub n_p: usize,
    /// `|S^{d-2}| β^ε(θ)/q(θ)` (or the θ-quadrature weight on a grid).
    pub w_angle: f64,
    /// `log f` at `(x, v')` and `(x*, v*')` per frame; NaN unless requested.
    pub log_post: [(f64, f64); 2],
}

impl FrameSample {
    /// `log(f'f*') - log(ff*)` at frame `j`.
    pub fn delta(&self, j: usize) -> f64 {
        let (a, b) = self.log_post[j];
        (a - self.eta.log_f) + (b - self.eta.log_fs)
    }

    /// Weight of `κ B^ε dσ dη` relative to `F` for this draw.
    pub fn kb(&self) -> f64 {
        self.eta.kappa * self.eta.a0 * self.w_angle * self.eta.w_eta
    }
}

pub type FrameIntegrand<'a> = dyn Fn(&FrameSample, usize) -> f64 + Sync + 'a;
pub type PhaseIntegrand<'a> = dyn Fn(&PhaseSample) -> f64 + Sync + 'a;

/// Everything a draw needs, built once per estimate.
pub struct FrameContext<'a> {
    pub f: &'a DensityModel,
    pub fs: &'a DensityModel,
    pub ks: &'a KernelSet,
    pub cfg: SamplerConfig,
    proposal: Option<DensityModel>,
}

impl<'a> FrameContext<'a> {
    pub fn new(f: &'a DensityModel, ks: &'a KernelSet, cfg: SamplerConfig) -> Result<Self> {
        Self::with_pair(f, f, ks, cfg)
    }

    /// `(x,v)` from `f`, `(x*,v*)` from `fs`.
    pub fn with_pair(f: &'a DensityModel, fs: &'a DensityModel, ks: &'a KernelSet, cfg: SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        if f.dim != ks.dim || fs.dim != ks.dim {
            return input("density and kernel dimensions differ");
        }
        let proposal = match cfg.pair_proposal {
            PairProposal::ProductOfDensity => None,
            PairProposal::GaussianOverdispersed { factor } => {
                if !std::ptr::eq(f, fs) {
                    return input("overdispersed proposal needs a single density");
                }
                let cov = f.covariance().into_iter().map(|c| c * factor).collect();
                Some(DensityModel::gaussian(f.dim, f.mean(), cov)?)
            }
        };
        Ok(Self { f, fs, ks, cfg, proposal })
    }

    fn draw_eta<R: Rng + ?Sized>(&self, rng: &mut R, resampled: &mut u64) -> Result<PhaseSample> {
        let mut tries = 0;
        loop {
            let ((x, v), (xs, vs)) = match &self.proposal {
                None => (self.f.sample(rng), self.fs.sample(rng)),
                Some(g) => (g.sample(rng), g.sample(rng)),
            };
            if (v - vs).norm() < self.cfg.rel_speed_floor {
                *resampled += 1;
                tries += 1;
                if tries > 1000 {
                    return Err(LabError::DegenerateFrame);
                }
                continue;
            }
            let log_f = self.f.log_eval(&x, &v);
            let log_fs = self.fs.log_eval(&xs, &vs);
            let w_eta = match &self.proposal {
                None => 1.0,
                Some(g) => (log_f + log_fs - g.log_eval(&x, &v) - g.log_eval(&xs, &vs)).exp(),
            };
            return Ok(phase_sample(self.f, self.fs, self.ks, x, xs, v, vs, w_eta, log_f, log_fs));
        }
    }

    /// One weighted draw of collision space.
    pub fn sample_frame<R: Rng + ?Sized>(&self, rng: &mut R, need_post: bool, resampled: &mut u64) -> Result<FrameSample> {
        let eta = self.draw_eta(rng, resampled)?;
        let eps = self.ks.epsilon;
        let d = self.ks.dim;
        let u: f64 = rng.random();
        let (theta, w_angle) = match self.cfg.theta_strategy {
            ThetaStrategy::WeightTimesThetaSq => {
                let t = self.ks.beta.sample_theta_sq(eps, u);
                (t, self.ks.perp_measure() * self.ks.beta.beta_over_theta_sq_pdf(eps, t))
            }
            ThetaStrategy::UniformOnSupport => {
                let t = 0.5 * eps * u;
                (t, self.ks.perp_measure() * self.ks.beta_scaled(t) * 0.5 * eps)
            }
        };
        let k = (eta.v - eta.vs) * (1.0 / (eta.v - eta.vs).norm());
        let p = if d == 2 {
            tangent_frame(&k, if rng.random::<bool>() { 1.0 } else { -1.0 })?
        } else {
            tangent_frame(&k, 2.0 * PI * rng.random::<f64>())?
        };
        let f0 = CollisionFrame::from_angles(eta.x, eta.xs, eta.v, eta.vs, theta, p)?;
        let (frames, n_p) = if self.cfg.antithetic { ([f0, f0.with_p(-p)], 2) } else { ([f0, f0], 1) };
        let mut s = FrameSample { eta, frames, n_p, w_angle, log_post: [(f64::NAN, f64::NAN); 2] };
        if need_post {
            fill_post(self.f, self.fs, &mut s);
        }
        Ok(s)
    }
}

#[allow(clippy::too_many_arguments)]
fn phase_sample(
    f: &DensityModel,
    fs: &DensityModel,
    ks: &KernelSet,
    x: VecD,
    xs: VecD,
    v: VecD,
    vs: VecD,
    w_eta: f64,
    log_f: f64,
    log_fs: f64,
) -> PhaseSample {
    let r = (v - vs).norm();
    PhaseSample {
        x,
        xs,
        v,
        vs,
        w_eta,
        kappa: ks.kappa.eval(&x, &xs),
        a0: ks.a0.eval(r).unwrap_or(f64::INFINITY),
        log_f,
        log_fs,
        grad: f.grad_v_log(&x, &v),
        grad_s: fs.grad_v_log(&xs, &vs),
    }
}

fn fill_post(f: &DensityModel, fs: &DensityModel, s: &mut FrameSample) {
    for j in 0..s.n_p {
        let fr = &s.frames[j];
        s.log_post[j] = (f.log_eval(&fr.x, &fr.v_prime), fs.log_eval(&fr.xs, &fr.vs_prime));
    }
}

fn frame_contribution(s: &FrameSample, g: &FrameIntegrand<'_>) -> f64 {
    let mut sum = 0.0;
    for j in 0..s.n_p {
        sum += g(s, j);
    }
    sum / s.n_p as f64
}

fn finish_all(accs: Vec<Accumulator>, resampled: u64) -> Result<Vec<Estimate>> {
    accs.into_iter()
        .map(|a| {
            if a.n == 0 {
                return Err(LabError::Numerical { what: "estimate", detail: "every draw was rejected".into() });
            }
            let mut e = a.finish();
            e.resampled = resampled;
            Ok(e)
        })
        .collect()
}

/// Monte Carlo estimates of `∫∫ F h_i dσ dη` for several integrands on one
/// shared frame stream. `h_i(s, j)` is evaluated per `p`-frame and averaged.
pub fn estimate_frames(ctx: &FrameContext<'_>, need_post: bool, integrands: &[&FrameIntegrand<'_>]) -> Result<Vec<Estimate>> {
    let counts = ctx.cfg.split();
    let parts: Vec<Result<(Vec<Accumulator>, u64)>> = counts
        .par_iter()
        .enumerate()
        .map(|(w, &n)| {
            let mut rng = worker_rng(ctx.cfg.seed, w);
            let mut accs = vec![Accumulator::new(); integrands.len()];
            let mut resampled = 0;
            for _ in 0..n {
                let s = ctx.sample_frame(&mut rng, need_post, &mut resampled)?;
                for (acc, g) in accs.iter_mut().zip(integrands) {
                    acc.push_checked(frame_contribution(&s, *g));
                }
            }
            Ok((accs, resampled))
        })
        .collect();
    merge_parts(parts, integrands.len())
}

fn merge_parts(parts: Vec<Result<(Vec<Accumulator>, u64)>>, m: usize) -> Result<Vec<Estimate>> {
    let mut total = vec![Accumulator::new(); m];
    let mut resampled = 0;
    for p in parts {
        let (accs, r) = p?;
        resampled += r;
        for (t, a) in total.iter_mut().zip(&accs) {
            t.merge(a);
        }
    }
    finish_all(total, resampled)
}

/// Single-integrand form of [`estimate_frames`].
pub fn estimate(ctx: &FrameContext<'_>, need_post: bool, integrand: &FrameIntegrand<'_>) -> Result<Estimate> {
    Ok(estimate_frames(ctx, need_post, &[integrand])?.remove(0))
}

/// Monte Carlo estimates of `∫ F h_i dη`.
pub fn estimate_phase(ctx: &FrameContext<'_>, integrands: &[&PhaseIntegrand<'_>]) -> Result<Vec<Estimate>> {
    let counts = ctx.cfg.split();
    let parts: Vec<Result<(Vec<Accumulator>, u64)>> = counts
        .par_iter()
        .enumerate()
        .map(|(w, &n)| {
            let mut rng = worker_rng(ctx.cfg.seed, w);
            let mut accs = vec![Accumulator::new(); integrands.len()];
            let mut resampled = 0;
            for _ in 0..n {
                let s = ctx.draw_eta(&mut rng, &mut resampled)?;
                for (acc, g) in accs.iter_mut().zip(integrands) {
                    acc.push_checked(g(&s));
                }
            }
            Ok((accs, resampled))
        })
        .collect();
    merge_parts(parts, integrands.len())
}

/// Node rule along each phase-space axis of the `d = 2` oracle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridRule {
    /// Gauss–Hermite nodes per mixture component. Exact for polynomial
    /// integrands of moderate degree.
    GaussHermite,
    /// Midpoint cells on `mean ± L·sd`.
    Midpoint,
}

/// Resolution of the deterministic `d = 2` oracle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub rule: GridRule,
    /// Half-width of each axis box in standard deviations (midpoint rule).
    pub l: f64,
    /// Nodes per position axis.
    pub n_x: usize,
    /// Nodes per velocity axis.
    pub n_v: usize,
    /// Gauss–Jacobi nodes in `θ`.
    pub n_theta: usize,
    /// Guard on the total number of evaluation nodes.
    pub max_nodes: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { rule: GridRule::GaussHermite, l: 6.0, n_x: 3, n_v: 8, n_theta: 6, max_nodes: 1_000_000_000 }
    }
}

impl GridConfig {
    /// Same box with `n_x`, `n_v`, `n_theta` doubled.
    pub fn refined(&self) -> Self {
        Self { n_x: 2 * self.n_x, n_v: 2 * self.n_v, n_theta: 2 * self.n_theta, ..*self }
    }
}

/// Nodes of the 4-D single-particle grid with their share of the measure
/// `f dx dv`.
///
/// Gauss–Hermite: per mixture component, nodes `μ + Lξ` on the tensor rule
/// in `ξ` (Cholesky factor `L`), mass = component weight × rule weight, so
/// the node set integrates `f` exactly without reweighting. Midpoint: cells
/// on `mean ± L·sd` with mass `f·volume`.
fn node_cache(f: &DensityModel, g: &GridConfig) -> Vec<NodeCache> {
    let mut raw: Vec<(VecD, VecD, f64)> = Vec::new();
    match g.rule {
        GridRule::GaussHermite => {
            let (zx, wx) = gauss_hermite(g.n_x);
            let (zv, wv) = gauss_hermite(g.n_v);
            for c in &f.components {
                let l = &c.chol;
                for (i0, j0) in zx.iter().zip(&wx) {
                    for (i1, j1) in zx.iter().zip(&wx) {
                        for (i2, j2) in zv.iter().zip(&wv) {
                            for (i3, j3) in zv.iter().zip(&wv) {
                                let xi = [*i0, *i1, *i2, *i3];
                                let mut z = [0.0; 4];
                                for r in 0..4 {
                                    z[r] = c.mean[r] + (0..=r).map(|k| l[r * 4 + k] * xi[k]).sum::<f64>();
                                }
                                let m = c.weight * j0 * j1 * j2 * j3;
                                raw.push((VecD::from_slice(&z[..2]), VecD::from_slice(&z[2..]), m));
                            }
                        }
                    }
                }
            }
        }
        GridRule::Midpoint => {
            let mean = f.mean();
            let cov = f.covariance();
            let axis = |i: usize, n: usize| -> Vec<(f64, f64)> {
                let sd = cov[i * 4 + i].sqrt();
                let (lo, h) = (mean[i] - g.l * sd, 2.0 * g.l * sd / n as f64);
                (0..n).map(|j| (lo + (j as f64 + 0.5) * h, h)).collect()
            };
            let (a0, a1, a2, a3) = (axis(0, g.n_x), axis(1, g.n_x), axis(2, g.n_v), axis(3, g.n_v));
            for &(x0, w0) in &a0 {
                for &(x1, w1) in &a1 {
                    for &(v0, w2) in &a2 {
                        for &(v1, w3) in &a3 {
                            let (x, v) = (VecD::from_slice(&[x0, x1]), VecD::from_slice(&[v0, v1]));
                            raw.push((x, v, f.eval(&x, &v) * w0 * w1 * w2 * w3));
                        }
                    }
                }
            }
        }
    }
    raw.into_iter()
        .filter(|n| n.2 > 0.0)
        .map(|(x, v, mass)| NodeCache { x, v, log_f: f.log_eval(&x, &v), grad: f.grad_v_log(&x, &v), mass })
        .collect()
}

struct NodeCache {
    x: VecD,
    v: VecD,
    log_f: f64,
    grad: VecD,
    /// Share of `f dx dv` carried by the node.
    mass: f64,
}

fn check_d2(f: &DensityModel, ks: &KernelSet, g: &GridConfig) -> Result<()> {
    if f.dim != 2 || ks.dim != 2 {
        return input("tensor_grid_d2 needs d = 2");
    }
    if g.n_x == 0 || g.n_v == 0 || !(g.l > 0.0) {
        return input("grid needs positive resolution and box size");
    }
    Ok(())
}

/// Deterministic `∫ F h_i dη` at `d = 2`: product rule on the 8-D phase space.
pub fn tensor_grid_d2_phase(f: &DensityModel, ks: &KernelSet, g: &GridConfig, integrands: &[&PhaseIntegrand<'_>]) -> Result<Vec<Estimate>> {
    check_d2(f, ks, g)?;
    let cache = node_cache(f, g);
    let total = (cache.len() as u64).pow(2);
    if total > g.max_nodes {
        return input(format!("grid has {total} nodes, above the guard {}", g.max_nodes));
    }
    let m = integrands.len();
    let rows: Vec<Vec<f64>> = cache
        .par_iter()
        .map(|a| {
            let mut sums = vec![0.0; m];
            for b in &cache {
                // coincident velocity nodes carry mass under a Gauss rule, so they stay in
                let r = (a.v - b.v).norm();
                let s = PhaseSample {
                    x: a.x,
                    xs: b.x,
                    v: a.v,
                    vs: b.v,
                    w_eta: a.mass * b.mass,
                    kappa: ks.kappa.eval(&a.x, &b.x),
                    a0: ks.a0.eval(r).unwrap_or(f64::INFINITY),
                    log_f: a.log_f,
                    log_fs: b.log_f,
                    grad: a.grad,
                    grad_s: b.grad,
                };
                for (acc, h) in sums.iter_mut().zip(integrands) {
                    let c = h(&s);
                    if c.is_finite() {
                        *acc += c;
                    }
                }
            }
            sums
        })
        .collect();
    Ok(grid_result(rows, m, total))
}

fn grid_result(rows: Vec<Vec<f64>>, m: usize, nodes: u64) -> Vec<Estimate> {
    (0..m)
        .map(|i| {
            let v: f64 = rows.iter().map(|r| r[i]).sum();
            Estimate { value: v, std_error: 0.0, n_samples: nodes, method: Method::TensorGrid, rejected: 0, unreliable: false, resampled: 0 }
        })
        .collect()
}

/// Nodes and weights in `θ` on `[0, ε/2]` for `∫ β^ε(θ) g(θ) dθ`, with the
/// weights already multiplied by `β^ε`. Gauss–Jacobi with weight `θ^{1-ν}`
/// integrates `β^ε g` exactly when `g θ^{-2}` is a low-degree polynomial.
pub fn theta_rule(ks: &KernelSet, n: usize) -> Result<Vec<(f64, f64)>> {
    let eps = ks.epsilon;
    let b = 1.0 - ks.beta.nu;
    let (t, w) = gauss_jacobi(n, 0.0, b)?;
    let lo = match ks.beta.profile {
        AngularProfile::Truncated { delta } => eps * delta / PI,
        _ => 0.0,
    };
    if lo > 0.0 {
        // the truncated kernel vanishes on [0, εδ/π]; plain Gauss–Jacobi would straddle the jump
        return Err(LabError::Input("theta_rule does not support truncated profiles".into()));
    }
    Ok(t.iter()
        .zip(&w)
        .map(|(&ti, &wi)| {
            let theta = 0.25 * eps * (1.0 + ti);
            let weight = 0.25 * eps * wi / (1.0 + ti).powf(b) * ks.beta_scaled(theta);
            (theta, weight)
        })
        .collect())
}

/// Deterministic `∫∫ F h_i dσ dη` at `d = 2`: product rule in `η`,
/// Gauss–Jacobi in `θ`, the exact two-point set in `p`.
pub fn tensor_grid_d2_frames(
    f: &DensityModel,
    ks: &KernelSet,
    g: &GridConfig,
    need_post: bool,
    integrands: &[&FrameIntegrand<'_>],
) -> Result<Vec<Estimate>> {
    check_d2(f, ks, g)?;
    let cache = node_cache(f, g);
    let rule = theta_rule(ks, g.n_theta)?;
    let total = (cache.len() as u64).pow(2) * rule.len() as u64 * 2;
    if total > g.max_nodes {
        return input(format!("grid has {total} nodes, above the guard {}", g.max_nodes));
    }
    let m = integrands.len();
    let perp = ks.perp_measure();
    let rows: Vec<Result<Vec<f64>>> = cache
        .par_iter()
        .map(|a| {
            let mut sums = vec![0.0; m];
            for b in &cache {
                let z = a.v - b.v;
                let r = z.norm();
                if r == 0.0 {
                    continue;
                }
                let eta = PhaseSample {
                    x: a.x,
                    xs: b.x,
                    v: a.v,
                    vs: b.v,
                    w_eta: a.mass * b.mass,
                    kappa: ks.kappa.eval(&a.x, &b.x),
                    a0: ks.a0.eval(r).unwrap_or(f64::INFINITY),
                    log_f: a.log_f,
                    log_fs: b.log_f,
                    grad: a.grad,
                    grad_s: b.grad,
                };
                let k = z * (1.0 / r);
                let p = tangent_frame(&k, 1.0)?;
                for &(theta, wt) in &rule {
                    let f0 = CollisionFrame::from_angles(a.x, b.x, a.v, b.v, theta, p)?;
                    let mut s = FrameSample {
                        eta,
                        frames: [f0, f0.with_p(-p)],
                        n_p: 2,
                        w_angle: perp * wt,
                        log_post: [(f64::NAN, f64::NAN); 2],
                    };
                    if need_post {
                        fill_post(f, f, &mut s);
                    }
                    for (acc, h) in sums.iter_mut().zip(integrands) {
                        *acc += frame_contribution(&s, *h);
                    }
                }
            }
            Ok(sums)
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(grid_result(rows, m, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::angular_momentum_target;

    fn ks(eps: f64) -> KernelSet {
        KernelSet::standard(2, 0.0, 1.0, 1.0, eps).unwrap()
    }

    #[test]
    fn theta_rule_reproduces_angular_momentum() {
        for eps in [1.0, 0.1] {
            let k = ks(eps);
            let m: f64 = theta_rule(&k, 4).unwrap().iter().map(|(t, w)| t * t * w).sum();
            assert!((m - angular_momentum_target(2)).abs() < 1e-12 * m);
        }
    }

    #[test]
    fn seed_determinism() {
        let f = DensityModel::anisotropic();
        let k = ks(0.5);
        let cfg = SamplerConfig::with_samples(2000, 11);
        let ctx = FrameContext::new(&f, &k, cfg).unwrap();
        let g = |s: &FrameSample, j: usize| s.kb() * s.delta(j).powi(2);
        let a = estimate(&ctx, true, &g).unwrap();
        let b = estimate(&ctx, true, &g).unwrap();
        assert_eq!(a, b);
    }
}

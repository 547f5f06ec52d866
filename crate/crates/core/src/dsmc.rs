//! Particle solver for the scaled delocalised Boltzmann equation: free
//! transport followed by a Nanbu-type collision stage over all pairs, with
//! `κ(x - x*)`-weighted acceptance and `β^ε` angular sampling above a cutoff.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::densities::{DensityModel, ParticleEnsemble};
use crate::error::{input, LabError, Result};
use crate::estimate::Estimate;
use crate::functionals::{dissipation_boltzmann, Route};
use crate::geometry::{post_collision, tangent_frame, VecD};
use crate::kernels::KernelSet;
use crate::numerics::InverseCdf;
use crate::quadrature::SamplerConfig;

/// Default neglected angular-momentum fraction below the cutoff.
pub const DEFAULT_NEGLECTED: f64 = 5e-4;
/// Largest accepted neglected fraction.
pub const MAX_NEGLECTED: f64 = 1e-3;

fn default_neglected() -> f64 {
    DEFAULT_NEGLECTED
}
fn default_cap() -> f64 {
    1e6
}
fn default_trace_every() -> usize {
    1
}
fn default_entropy_every() -> usize {
    10
}
fn default_k() -> usize {
    4
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub n: usize,
    pub dt: f64,
    pub horizon: f64,
    /// Angular cutoff; chosen from `neglected_fraction` when absent.
    #[serde(default)]
    pub theta_min: Option<f64>,
    #[serde(default = "default_neglected")]
    pub neglected_fraction: f64,
    /// Initial `Â₀`; derived from the initial velocities when absent.
    #[serde(default)]
    pub majorant_a0: Option<f64>,
    /// Pairs with `A₀` above this are rejected and counted (soft potentials).
    #[serde(default = "default_cap")]
    pub a0_cap: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trace_every")]
    pub trace_every: usize,
    /// Steps between kNN entropy estimates; `0` disables them.
    #[serde(default = "default_entropy_every")]
    pub entropy_every: usize,
    #[serde(default = "default_k")]
    pub knn_k: usize,
    #[serde(default = "default_true")]
    pub whiten: bool,
    /// Monte Carlo samples for `D_B` on the Gaussian refit at entropy
    /// snapshots; `0` skips it.
    #[serde(default)]
    pub dissipation_samples: usize,
}

impl SolverConfig {
    pub fn new(n: usize, dt: f64, horizon: f64, seed: u64) -> Self {
        Self {
            n,
            dt,
            horizon,
            theta_min: None,
            neglected_fraction: DEFAULT_NEGLECTED,
            majorant_a0: None,
            a0_cap: default_cap(),
            seed,
            trace_every: 1,
            entropy_every: 10,
            knn_k: 4,
            whiten: true,
            dissipation_samples: 0,
        }
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self, ks: &KernelSet) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return input("dt must be positive");
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return input("horizon must be nonnegative");
        }
        if self.n < 100 {
            return input(format!("N = {} below the minimum of 100", self.n));
        }
        if let Some(t) = self.theta_min {
            if !(t > 0.0 && t < 0.5 * ks.epsilon) {
                return input(format!("theta_min = {t} must lie in (0, ε/2)"));
            }
        }
        if !(self.neglected_fraction > 0.0 && self.neglected_fraction < MAX_NEGLECTED) {
            return input(format!("neglected_fraction must lie in (0, {MAX_NEGLECTED})"));
        }
        if self.knn_k == 0 || self.trace_every == 0 {
            return input("knn_k and trace_every must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    /// `(1/N) Σ v_i`.
    pub momentum: VecD,
    /// `(1/2N) Σ |v_i|²`.
    pub energy: f64,
    /// `(1/N) Σ ⟨v_i⟩^{2+γ₊}`.
    pub v_moment: f64,
    pub entropy: Option<f64>,
    pub entropy_stderr: Option<f64>,
    /// `D_B` of the moment-matched Gaussian, where computed.
    pub dissipation_refit: Option<Estimate>,
    /// Accepted collisions during the step that ended at `t`.
    pub collisions_accepted: u64,
    pub candidates: u64,
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct StepStats {
    pub candidates: u64,
    pub accepted: u64,
    pub cap_rejections: u64,
    pub majorant_doublings: u32,
}

/// Cutoff actually used and its neglected angular momentum.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Cutoff {
    pub theta_min: f64,
    pub neglected_fraction: f64,
    /// `|S^{d-2}| ∫_{θ_min}^{ε/2} β^ε dθ`.
    pub angular_rate: f64,
}

/// Time-stepping state: ensemble, kernels, running majorant and RNG.
pub struct Solver {
    pub config: SolverConfig,
    pub ks: KernelSet,
    pub ensemble: ParticleEnsemble,
    pub cutoff: Cutoff,
    pub majorant_a0: f64,
    pub step_index: usize,
    table: Option<InverseCdf>,
    rng: ChaCha8Rng,
}

impl Solver {
    pub fn new(config: SolverConfig, ks: KernelSet, ensemble: ParticleEnsemble, rng: ChaCha8Rng) -> Result<Self> {
        config.validate(&ks)?;
        if ensemble.dim != ks.dim {
            return input("ensemble and kernel dimensions differ");
        }
        let eps = ks.epsilon;
        let theta_min = match config.theta_min {
            Some(t) => t,
            None => ks.beta.cutoff_for_fraction(eps, config.neglected_fraction)?,
        };
        let neglected = ks.beta.neglected_fraction(eps, theta_min)?;
        if neglected >= MAX_NEGLECTED {
            return input(format!("cutoff {theta_min} neglects {neglected:.3e} of the angular momentum (limit {MAX_NEGLECTED})"));
        }
        let angular_rate = ks.perp_measure() * ks.beta.rate_above(eps, theta_min)?;
        let table = match ks.beta.sample_above(eps, theta_min, 0.5) {
            Some(_) => None,
            None => Some(ks.beta.above_cutoff_table(eps, theta_min)?),
        };
        let majorant_a0 = match config.majorant_a0 {
            Some(m) if m > 0.0 => m,
            Some(m) => return input(format!("majorant_a0 = {m} must be positive")),
            None => initial_majorant(&ks, &ensemble, config.a0_cap)?,
        };
        Ok(Self {
            config,
            ks,
            ensemble,
            cutoff: Cutoff { theta_min, neglected_fraction: neglected, angular_rate },
            majorant_a0,
            step_index: 0,
            table,
            rng,
        })
    }

    fn sample_theta(&mut self) -> f64 {
        let u: f64 = self.rng.random();
        match &self.table {
            Some(t) => t.sample(u),
            None => self.ks.beta.sample_above(self.ks.epsilon, self.cutoff.theta_min, u).expect("closed-form profile"),
        }
    }

    fn sample_p(&mut self, k: &VecD) -> Result<VecD> {
        let a = if self.ks.dim == 2 {
            if self.rng.random::<bool>() {
                1.0
            } else {
                -1.0
            }
        } else {
            self.rng.random::<f64>() * std::f64::consts::TAU
        };
        tangent_frame(k, a)
    }

    /// Transport then collide; retries the collision stage after doubling
    /// `Â₀` whenever an observed `A₀` exceeds it.
    pub fn step(&mut self) -> Result<StepStats> {
        let dt = self.config.dt;
        for (x, v) in self.ensemble.x.iter_mut().zip(&self.ensemble.v) {
            *x += *v * dt;
        }
        let saved = self.ensemble.v.clone();
        let mut doublings = 0;
        let stats = loop {
            match self.collide()? {
                Some(mut s) => {
                    s.majorant_doublings = doublings;
                    break s;
                }
                None => {
                    doublings += 1;
                    self.majorant_a0 *= 2.0;
                    log::warn!("step {}: A0 above majorant, doubled to {}", self.step_index, self.majorant_a0);
                    self.ensemble.v.clone_from(&saved);
                    if doublings > 60 {
                        return Err(LabError::Numerical { what: "dsmc majorant", detail: "no finite majorant".into() });
                    }
                }
            }
        };
        self.step_index += 1;
        self.ensemble.t += dt;
        Ok(stats)
    }

    /// One collision stage; `None` on a majorant violation.
    fn collide(&mut self) -> Result<Option<StepStats>> {
        let n = self.ensemble.len();
        let c_kappa = self.ks.kappa.c_kappa();
        let bound = c_kappa * self.majorant_a0;
        let mut st = StepStats::default();
        if bound == 0.0 {
            return Ok(Some(st));
        }
        let expected = bound * self.cutoff.angular_rate * n as f64 * self.config.dt / 2.0;
        let u: f64 = self.rng.random();
        let m = (expected + u).floor() as u64;
        for _ in 0..m {
            let i = self.rng.random_range(0..n);
            let mut j = self.rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            st.candidates += 1;
            let (v, vs) = (self.ensemble.v[i], self.ensemble.v[j]);
            let r = (v - vs).norm();
            let accept_u: f64 = self.rng.random();
            if r == 0.0 {
                continue;
            }
            let a0 = self.ks.a0.eval(r)?;
            if a0 > self.config.a0_cap {
                st.cap_rejections += 1;
                continue;
            }
            if a0 > self.majorant_a0 {
                return Ok(None);
            }
            let w = self.ks.kappa.eval(&self.ensemble.x[i], &self.ensemble.x[j]) * a0 / bound;
            if accept_u >= w {
                continue;
            }
            let theta = self.sample_theta();
            let k = (v - vs) * (1.0 / r);
            let p = self.sample_p(&k)?;
            let sigma = k * theta.cos() + p * theta.sin();
            let (vp, vsp) = post_collision(&v, &vs, &sigma)?;
            self.ensemble.v[i] = vp;
            self.ensemble.v[j] = vsp;
            st.accepted += 1;
        }
        Ok(Some(st))
    }

    pub fn trace_row(&self, stats: &StepStats, with_entropy: bool) -> Result<TraceRow> {
        let (mut entropy, mut entropy_stderr, mut dissipation_refit) = (None, None, None);
        if with_entropy {
            let h = self.ensemble.entropy_knn(self.config.knn_k, self.config.whiten)?;
            entropy = Some(h.value);
            entropy_stderr = Some(h.std_error);
        }
        if self.config.dissipation_samples > 0 {
            let refit = DensityModel::fit_gaussian(self.ks.dim, &self.ensemble.points())?;
            let cfg = SamplerConfig::with_samples(self.config.dissipation_samples, self.config.seed ^ self.step_index as u64);
            dissipation_refit = Some(dissipation_boltzmann(&refit, &self.ks, &Route::MonteCarlo(cfg))?);
        }
        Ok(TraceRow {
            step: self.step_index,
            t: self.ensemble.t,
            mass: 1.0,
            momentum: self.ensemble.momentum(),
            energy: self.ensemble.energy(),
            v_moment: self.ensemble.moment_l1(0.0, 2.0 + self.ks.a0.gamma().max(0.0)) - 1.0,
            entropy,
            entropy_stderr,
            dissipation_refit,
            collisions_accepted: stats.accepted,
            candidates: stats.candidates,
        })
    }
}

/// `sup A₀` over relative speeds up to twice the largest initial speed,
/// clipped at `cap`.
fn initial_majorant(ks: &KernelSet, ens: &ParticleEnsemble, cap: f64) -> Result<f64> {
    let vmax = ens.v.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let rmax = 2.0 * vmax;
    let mut m = 0.0f64;
    for i in 0..=256 {
        let r = rmax * i as f64 / 256.0;
        let a = ks.a0.eval(r)?;
        m = m.max(a.min(cap));
    }
    Ok(if m > 0.0 { m } else { 1.0 })
}

/// `H(f_T) - H(f_0) + Σ D̂_B dt` from the entropy snapshots.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EntropyBalance {
    pub h_initial: f64,
    pub h_final: f64,
    /// Trapezoid sum of the refit dissipation over the trace rows.
    pub dissipation_integral: f64,
    pub balance: f64,
    pub std_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunOutput {
    pub trace: Vec<TraceRow>,
    #[serde(skip)]
    pub ensemble: ParticleEnsemble,
    pub cutoff: Cutoff,
    pub majorant_a0: f64,
    pub majorant_doublings: u32,
    pub cap_rejections: u64,
    pub entropy_balance: Option<EntropyBalance>,
}

impl RunOutput {
    /// Largest `|ΔP|/√(2E)` and `|ΔE|/E` between consecutive trace rows.
    pub fn max_relative_drift(&self) -> (f64, f64) {
        let (mut dp, mut de) = (0.0f64, 0.0f64);
        for w in self.trace.windows(2) {
            let scale = (2.0 * w[0].energy).sqrt();
            dp = dp.max((w[1].momentum - w[0].momentum).norm() / scale);
            de = de.max((w[1].energy - w[0].energy).abs() / w[0].energy);
        }
        (dp, de)
    }

    /// Entropy snapshots `(t, H, se)`.
    pub fn entropy_series(&self) -> Vec<(f64, f64, f64)> {
        self.trace.iter().filter_map(|r| Some((r.t, r.entropy?, r.entropy_stderr?))).collect()
    }

    /// `true` if no snapshot exceeds any earlier one by more than `k`
    /// combined standard errors.
    pub fn entropy_non_increasing(&self, k: f64) -> bool {
        let s = self.entropy_series();
        s.iter()
            .enumerate()
            .all(|(j, b)| s[..j].iter().all(|a| b.1 - a.1 <= k * a.2.hypot(b.2)))
    }
}

/// Samples `N` particles from `initial` and integrates to the horizon.
pub fn run(config: &SolverConfig, initial: &DensityModel, ks: &KernelSet) -> Result<RunOutput> {
    if initial.dim != ks.dim {
        return input("initial density and kernel dimensions differ");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ens = ParticleEnsemble::sample(initial, config.n, &mut rng)?;
    run_from(config, ens, ks, rng)
}

pub fn run_from(config: &SolverConfig, ensemble: ParticleEnsemble, ks: &KernelSet, rng: ChaCha8Rng) -> Result<RunOutput> {
    let mut solver = Solver::new(config.clone(), ks.clone(), ensemble, rng)?;
    let steps = config.steps();
    let entropy_at = |s: usize| config.entropy_every > 0 && (s % config.entropy_every == 0 || s == steps);
    let mut trace = vec![solver.trace_row(&StepStats::default(), entropy_at(0))?];
    let (mut doublings, mut cap) = (0, 0);
    for s in 1..=steps {
        let st = solver.step()?;
        doublings += st.majorant_doublings;
        cap += st.cap_rejections;
        if s % config.trace_every == 0 || s == steps || entropy_at(s) {
            trace.push(solver.trace_row(&st, entropy_at(s))?);
        }
    }
    if cap > 0 {
        log::warn!("{cap} candidate pairs rejected above the A0 cap {}", config.a0_cap);
    }
    let entropy_balance = balance(&trace);
    Ok(RunOutput {
        trace,
        ensemble: solver.ensemble,
        cutoff: solver.cutoff,
        majorant_a0: solver.majorant_a0,
        majorant_doublings: doublings,
        cap_rejections: cap,
        entropy_balance,
    })
}

fn balance(trace: &[TraceRow]) -> Option<EntropyBalance> {
    let hs: Vec<(f64, f64, f64)> = trace.iter().filter_map(|r| Some((r.t, r.entropy?, r.entropy_stderr?))).collect();
    let ds: Vec<(f64, Estimate)> = trace.iter().filter_map(|r| Some((r.t, r.dissipation_refit?))).collect();
    if hs.len() < 2 || ds.len() < 2 {
        return None;
    }
    let (first, last) = (&hs[0], &hs[hs.len() - 1]);
    let mut integral = 0.0;
    let mut var = 0.0;
    for w in ds.windows(2) {
        if w[0].0 < first.0 || w[1].0 > last.0 {
            continue;
        }
        let h = w[1].0 - w[0].0;
        integral += 0.5 * h * (w[0].1.value + w[1].1.value);
        var += (0.5 * h).powi(2) * (w[0].1.std_error.powi(2) + w[1].1.std_error.powi(2));
    }
    let balance = last.1 - first.1 + integral;
    let std_error = (first.2.powi(2) + last.2.powi(2) + var).sqrt();
    Some(EntropyBalance { h_initial: first.1, h_final: last.1, dissipation_integral: integral, balance, std_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::SpatialKernel;

    #[test]
    fn zero_kappa_is_free_streaming() {
        let ks = KernelSet::standard(2, 0.0, 1.0, 0.0, 0.5).unwrap();
        let f = DensityModel::standard(2).unwrap();
        let mut cfg = SolverConfig::new(200, 0.1, 1.0, 4);
        cfg.entropy_every = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ens = ParticleEnsemble::sample(&f, 200, &mut rng).unwrap();
        let out = run_from(&cfg, ens.clone(), &ks, rng).unwrap();
        assert_eq!(out.ensemble.v, ens.v);
        for i in 0..ens.len() {
            assert!((out.ensemble.x[i] - (ens.x[i] + ens.v[i] * 1.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn cutoff_respects_limit() {
        let ks = KernelSet::standard(2, 0.0, 1.0, 1.0, 0.5).unwrap();
        let mut cfg = SolverConfig::new(200, 0.01, 0.0, 1);
        cfg.theta_min = Some(0.2);
        let f = DensityModel::standard(2).unwrap();
        assert!(run(&cfg, &f, &ks).is_err());
        cfg.theta_min = None;
        let out = run(&cfg, &f, &ks).unwrap();
        assert!(out.cutoff.neglected_fraction < MAX_NEGLECTED);
    }

    #[test]
    fn hard_potential_majorant_grows_when_too_small() {
        let ks = KernelSet::standard(2, 1.0, 1.0, 1.0, 1.0).unwrap().with_kappa(SpatialKernel::Constant { c: 1.0 }).unwrap();
        let mut cfg = SolverConfig::new(200, 0.001, 0.005, 2);
        cfg.majorant_a0 = Some(0.01);
        cfg.entropy_every = 0;
        let out = run(&cfg, &DensityModel::standard(2).unwrap(), &ks).unwrap();
        assert!(out.majorant_doublings > 0 && out.majorant_a0 > 0.01);
    }

    #[test]
    fn same_seed_same_trace() {
        let ks = KernelSet::standard(2, 0.0, 1.0, 1.0, 1.0).unwrap();
        let mut cfg = SolverConfig::new(300, 0.01, 0.05, 9);
        cfg.entropy_every = 0;
        let f = DensityModel::anisotropic();
        let a = run(&cfg, &f, &ks).unwrap();
        let b = run(&cfg, &f, &ks).unwrap();
        assert_eq!(a.ensemble.v, b.ensemble.v);
        assert!(a.trace.iter().map(|r| r.collisions_accepted).sum::<u64>() > 0);
    }
}

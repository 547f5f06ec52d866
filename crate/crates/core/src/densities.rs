//! Gaussian-mixture phase-space densities on `R^{2d}` and particle ensembles.
//!
//! Phase-space points are ordered `(x₁..x_d, v₁..v_d)`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{input, Result};
use crate::estimate::{Accumulator, Estimate, Method};
use crate::geometry::VecD;
use crate::knn::{entropy_knn, KnnEntropy};
use crate::numerics::{cholesky, cholesky_inverse};

const N_MAX: usize = 6;

/// One weighted Gaussian on `R^{2d}`.
#[derive(Clone, Debug)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    /// Row-major `2d × 2d` covariance.
    pub cov: Vec<f64>,
    /// Row-major lower Cholesky factor of `cov`.
    pub chol: Vec<f64>,
    prec: [[f64; N_MAX]; N_MAX],
    log_norm: f64,
}

impl GaussianComponent {
    fn new(weight: f64, mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.len() != n * n {
            return input(format!("covariance needs {} entries, got {}", n * n, cov.len()));
        }
        if mean.iter().chain(&cov).any(|c| !c.is_finite()) {
            return input("component mean and covariance must be finite");
        }
        for i in 0..n {
            for j in 0..i {
                if (cov[i * n + j] - cov[j * n + i]).abs() > 1e-12 * (cov[i * n + j].abs() + 1.0) {
                    return input("covariance must be symmetric");
                }
            }
        }
        let chol = match cholesky(&cov, n) {
            Some(l) => l,
            None => return input("covariance must be positive definite"),
        };
        let inv = cholesky_inverse(&chol, n);
        let mut prec = [[0.0; N_MAX]; N_MAX];
        for i in 0..n {
            for j in 0..n {
                prec[i][j] = inv[i * n + j];
            }
        }
        let log_det: f64 = (0..n).map(|i| 2.0 * chol[i * n + i].ln()).sum();
        let log_norm = -0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * log_det;
        Ok(Self { weight, mean, cov, chol, prec, log_norm })
    }

    fn n(&self) -> usize {
        self.mean.len()
    }

    fn diff(&self, z: &[f64; N_MAX]) -> [f64; N_MAX] {
        let mut y = [0.0; N_MAX];
        for i in 0..self.n() {
            y[i] = z[i] - self.mean[i];
        }
        y
    }

    fn log_pdf(&self, z: &[f64; N_MAX]) -> f64 {
        let n = self.n();
        let y = self.diff(z);
        let mut q = 0.0;
        for i in 0..n {
            let mut s = 0.0;
            for j in 0..n {
                s += self.prec[i][j] * y[j];
            }
            q += y[i] * s;
        }
        self.log_norm - 0.5 * q
    }

    /// `-Σ⁻¹(z - μ)` restricted to the velocity rows.
    fn grad_v_log(&self, z: &[f64; N_MAX], d: usize) -> VecD {
        let y = self.diff(z);
        let mut g = VecD::zeros(d);
        for a in 0..d {
            let row = &self.prec[d + a];
            g[a] = -(0..2 * d).map(|j| row[j] * y[j]).sum::<f64>();
        }
        g
    }

    pub fn log_det(&self) -> f64 {
        let n = self.n();
        (0..n).map(|i| 2.0 * self.chol[i * n + i].ln()).sum()
    }

    /// Mean and covariance of one block (`0` = x, `1` = v).
    fn block(&self, b: usize, d: usize) -> (Vec<f64>, Vec<f64>) {
        let n = 2 * d;
        let off = b * d;
        let m = self.mean[off..off + d].to_vec();
        let mut s = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                s[i * d + j] = self.cov[(off + i) * n + off + j];
            }
        }
        (m, s)
    }
}

/// A Gaussian mixture on `R^{2d}`.
#[derive(Clone, Debug)]
pub struct DensityModel {
    pub dim: usize,
    pub components: Vec<GaussianComponent>,
}

fn pack(x: &VecD, v: &VecD) -> [f64; N_MAX] {
    let d = x.dim();
    let mut z = [0.0; N_MAX];
    z[..d].copy_from_slice(x.as_slice());
    z[d..2 * d].copy_from_slice(v.as_slice());
    z
}

fn diag_matrix(diag: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = diag[i];
    }
    m
}

impl DensityModel {
    /// Mixture from `(weight, mean, covariance)` triples; weights are
    /// required to be non-negative and sum to one within 1e-12.
    pub fn mixture(d: usize, parts: Vec<(f64, Vec<f64>, Vec<f64>)>) -> Result<Self> {
        if !(2..=3).contains(&d) {
            return input(format!("d = {d} not supported"));
        }
        if parts.is_empty() {
            return input("density needs at least one component");
        }
        let total: f64 = parts.iter().map(|p| p.0).sum();
        if parts.iter().any(|p| !(p.0 >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return input(format!("weights must be non-negative and sum to 1 (sum = {total})"));
        }
        let mut components = Vec::with_capacity(parts.len());
        for (w, m, c) in parts {
            if m.len() != 2 * d {
                return input(format!("component mean must have {} entries", 2 * d));
            }
            components.push(GaussianComponent::new(w, m, c)?);
        }
        Ok(Self { dim: d, components })
    }

    pub fn gaussian(d: usize, mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        Self::mixture(d, vec![(1.0, mean, cov)])
    }

    pub fn gaussian_diag(d: usize, mean: Vec<f64>, diag: Vec<f64>) -> Result<Self> {
        let cov = diag_matrix(&diag);
        Self::gaussian(d, mean, cov)
    }

    /// Standard normal on `R^{2d}`.
    pub fn standard(d: usize) -> Result<Self> {
        Self::gaussian_diag(d, vec![0.0; 2 * d], vec![1.0; 2 * d])
    }

    /// `ρ(x)M(v)` with `ρ = N(0, s_x I)` and Maxwellian `M = N(u, T I)`.
    pub fn maxwellian(d: usize, x_var: f64, drift: &[f64], temperature: f64) -> Result<Self> {
        if drift.len() != d {
            return input("drift must have d entries");
        }
        let mut mean = vec![0.0; d];
        mean.extend_from_slice(drift);
        let mut diag = vec![x_var; d];
        diag.extend(std::iter::repeat(temperature).take(d));
        Self::gaussian_diag(d, mean, diag)
    }

    /// `d = 2`, `x ~ N(0, I)`, `v ~ N(0, diag(1, 4))`.
    pub fn anisotropic() -> Self {
        Self::gaussian_diag(2, vec![0.0; 4], vec![1.0, 1.0, 1.0, 4.0]).expect("fixed parameters")
    }

    /// Two-component `d = 2` mixture with `x₁`–`v₁` correlation, used where
    /// pairings such as `⟨Q, x₁v₁⟩` must not vanish by symmetry.
    pub fn correlated_mixture() -> Self {
        let mut cov = diag_matrix(&[1.0, 1.0, 1.0, 4.0]);
        cov[2] = 0.4; // (x₁, v₁)
        cov[2 * 4] = 0.4;
        Self::mixture(
            2,
            vec![
                (0.5, vec![0.5, 0.0, 0.3, 0.0], cov.clone()),
                (0.5, vec![-0.5, 0.0, -0.3, 0.0], cov),
            ],
        )
        .expect("fixed parameters")
    }

    pub fn phase_dim(&self) -> usize {
        2 * self.dim
    }

    pub fn is_single(&self) -> bool {
        self.components.len() == 1
    }

    fn check_point(&self, x: &VecD, v: &VecD) {
        debug_assert!(x.dim() == self.dim && v.dim() == self.dim, "point dimension mismatch");
    }

    /// `log f(x,v)`, `-∞` where the density underflows.
    pub fn log_eval(&self, x: &VecD, v: &VecD) -> f64 {
        self.check_point(x, v);
        let z = pack(x, v);
        if let [c] = self.components.as_slice() {
            return c.log_pdf(&z);
        }
        let mut buf = [0.0; 16];
        let terms: Vec<f64>;
        let ls: &[f64] = if self.components.len() <= 16 {
            for (b, c) in buf.iter_mut().zip(&self.components) {
                *b = c.weight.ln() + c.log_pdf(&z);
            }
            &buf[..self.components.len()]
        } else {
            terms = self.components.iter().map(|c| c.weight.ln() + c.log_pdf(&z)).collect();
            &terms
        };
        log_sum_exp(ls)
    }

    pub fn eval(&self, x: &VecD, v: &VecD) -> f64 {
        self.log_eval(x, v).exp()
    }

    /// `∇_v log f(x,v)`.
    pub fn grad_v_log(&self, x: &VecD, v: &VecD) -> VecD {
        self.check_point(x, v);
        let z = pack(x, v);
        let d = self.dim;
        if let [c] = self.components.as_slice() {
            return c.grad_v_log(&z, d);
        }
        let ls: Vec<f64> = self.components.iter().map(|c| c.weight.ln() + c.log_pdf(&z)).collect();
        let lf = log_sum_exp(&ls);
        let mut g = VecD::zeros(d);
        if !lf.is_finite() {
            return g;
        }
        for (c, l) in self.components.iter().zip(&ls) {
            let r = (l - lf).exp();
            if r > 0.0 {
                g += c.grad_v_log(&z, d) * r;
            }
        }
        g
    }

    /// One draw `(x, v)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (VecD, VecD) {
        let c = if self.components.len() == 1 {
            &self.components[0]
        } else {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = self.components.last().unwrap();
            for c in &self.components {
                acc += c.weight;
                if u < acc {
                    pick = c;
                    break;
                }
            }
            pick
        };
        let n = 2 * self.dim;
        let mut xi = [0.0; N_MAX];
        for e in xi.iter_mut().take(n) {
            *e = rng.sample(StandardNormal);
        }
        let mut z = [0.0; N_MAX];
        for i in 0..n {
            let mut s = c.mean[i];
            for j in 0..=i {
                s += c.chol[i * n + j] * xi[j];
            }
            z[i] = s;
        }
        (VecD::from_slice(&z[..self.dim]), VecD::from_slice(&z[self.dim..n]))
    }

    /// `∫ f log f`: closed form for one component, otherwise Monte Carlo
    /// with `10⁵` draws from seed 0.
    pub fn entropy(&self) -> Estimate {
        if let [c] = self.components.as_slice() {
            let n = self.phase_dim() as f64;
            return Estimate::exact(-0.5 * n * (1.0 + (2.0 * PI).ln()) - 0.5 * c.log_det(), Method::ClosedForm);
        }
        self.entropy_mc(100_000, 0)
    }

    pub fn entropy_mc(&self, n: usize, seed: u64) -> Estimate {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = Accumulator::new();
        for _ in 0..n {
            let (x, v) = self.sample(&mut rng);
            acc.push_checked(self.log_eval(&x, &v));
        }
        acc.finish()
    }

    /// Mixture mean on `R^{2d}`.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.phase_dim();
        let mut m = vec![0.0; n];
        for c in &self.components {
            for i in 0..n {
                m[i] += c.weight * c.mean[i];
            }
        }
        m
    }

    /// Mixture covariance on `R^{2d}`, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let n = self.phase_dim();
        let m = self.mean();
        let mut s = vec![0.0; n * n];
        for c in &self.components {
            for i in 0..n {
                for j in 0..n {
                    s[i * n + j] += c.weight * (c.cov[i * n + j] + (c.mean[i] - m[i]) * (c.mean[j] - m[j]));
                }
            }
        }
        s
    }

    /// `E(f) = ½ ∫ |v|² f`.
    pub fn energy(&self) -> f64 {
        0.5 * self
            .components
            .iter()
            .map(|c| {
                let (m, s) = c.block(1, self.dim);
                c.weight * (block_moments(&m, &s).0)
            })
            .sum::<f64>()
    }

    /// `(∫⟨x⟩^a f, ∫⟨v⟩^b f)`. Exact for `a, b ∈ {0, 2, 4}`, otherwise Monte
    /// Carlo with `10⁵` draws from seed 0.
    pub fn moment_parts(&self, a: f64, b: f64) -> Result<(Estimate, Estimate)> {
        if !(a >= 0.0 && b >= 0.0) {
            return input(format!("moment exponents must be ≥ 0 (a = {a}, b = {b})"));
        }
        let part = |e: f64, blk: usize| -> Estimate {
            if e == 0.0 || e == 2.0 || e == 4.0 {
                let v = self
                    .components
                    .iter()
                    .map(|c| {
                        let (m, s) = c.block(blk, self.dim);
                        let (m2, m4) = block_moments(&m, &s);
                        c.weight
                            * match e as u32 {
                                0 => 1.0,
                                2 => 1.0 + m2,
                                _ => 1.0 + 2.0 * m2 + m4,
                            }
                    })
                    .sum();
                Estimate::exact(v, Method::ClosedForm)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                let mut acc = Accumulator::new();
                for _ in 0..100_000 {
                    let (x, v) = self.sample(&mut rng);
                    let y = if blk == 0 { x } else { v };
                    acc.push((1.0 + y.norm_sq()).powf(0.5 * e));
                }
                acc.finish()
            }
        };
        Ok((part(a, 0), part(b, 1)))
    }

    /// `‖f‖_{L¹_{a,b}} = ∫ (⟨x⟩^a + ⟨v⟩^b) f`.
    pub fn moment_l1(&self, a: f64, b: f64) -> Result<Estimate> {
        let (x, v) = self.moment_parts(a, b)?;
        let method = if x.method == Method::ClosedForm && v.method == Method::ClosedForm {
            Method::ClosedForm
        } else {
            Method::MonteCarlo
        };
        Ok(Estimate { value: x.value + v.value, std_error: x.std_error.hypot(v.std_error), method, ..x })
    }

    /// Single Gaussian with the mean and covariance of the sample points.
    pub fn fit_gaussian(d: usize, points: &[Vec<f64>]) -> Result<Self> {
        let n = 2 * d;
        if points.len() < n + 1 || points.iter().any(|p| p.len() != n) {
            return input(format!("fit_gaussian needs at least {} points of dimension {n}", n + 1));
        }
        let m = points.len() as f64;
        let mut mean = vec![0.0; n];
        for p in points {
            for i in 0..n {
                mean[i] += p[i] / m;
            }
        }
        let mut cov = vec![0.0; n * n];
        for p in points {
            for i in 0..n {
                for j in 0..n {
                    cov[i * n + j] += (p[i] - mean[i]) * (p[j] - mean[j]) / (m - 1.0);
                }
            }
        }
        Self::gaussian(d, mean, cov)
    }
}

/// `(E|y|², E|y|⁴)` for `y ~ N(m, S)`.
fn block_moments(m: &[f64], s: &[f64]) -> (f64, f64) {
    let d = m.len();
    let tr: f64 = (0..d).map(|i| s[i * d + i]).sum();
    let mm: f64 = m.iter().map(|a| a * a).sum();
    let tr_s2: f64 = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| s[i * d + j] * s[j * d + i]).sum();
    let msm: f64 = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| m[i] * s[i * d + j] * m[j]).sum();
    let e2 = tr + mm;
    (e2, e2 * e2 + 2.0 * tr_s2 + 4.0 * msm)
}

pub fn log_sum_exp(ls: &[f64]) -> f64 {
    let mx = ls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + ls.iter().map(|l| (l - mx).exp()).sum::<f64>().ln()
}

/// `N` particles with equal weights `1/N`.
#[derive(Clone, Debug)]
pub struct ParticleEnsemble {
    pub x: Vec<VecD>,
    pub v: Vec<VecD>,
    pub t: f64,
    pub dim: usize,
}

impl ParticleEnsemble {
    pub fn new(x: Vec<VecD>, v: Vec<VecD>, t: f64) -> Result<Self> {
        if x.len() != v.len() || x.len() < 2 {
            return input("ensemble needs N ≥ 2 matching positions and velocities");
        }
        let dim = x[0].dim();
        if x.iter().chain(&v).any(|p| p.dim() != dim || !p.is_finite()) {
            return input("ensemble coordinates must be finite with a common dimension");
        }
        Ok(Self { x, v, t, dim })
    }

    pub fn sample<R: Rng + ?Sized>(model: &DensityModel, n: usize, rng: &mut R) -> Result<Self> {
        let (x, v) = (0..n).map(|_| model.sample(rng)).unzip();
        Self::new(x, v, 0.0)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// `(1/N) Σ v_i`.
    pub fn momentum(&self) -> VecD {
        let mut m = VecD::zeros(self.dim);
        for v in &self.v {
            m += *v;
        }
        m * (1.0 / self.len() as f64)
    }

    /// `(1/2N) Σ |v_i|²`.
    pub fn energy(&self) -> f64 {
        0.5 * self.v.iter().map(|v| v.norm_sq()).sum::<f64>() / self.len() as f64
    }

    /// Unbiased velocity covariance, row-major `d × d`.
    pub fn velocity_covariance(&self) -> Vec<f64> {
        let d = self.dim;
        let m = self.momentum();
        let n = self.len() as f64;
        let mut s = vec![0.0; d * d];
        for v in &self.v {
            for i in 0..d {
                for j in 0..d {
                    s[i * d + j] += (v[i] - m[i]) * (v[j] - m[j]) / (n - 1.0);
                }
            }
        }
        s
    }

    /// Empirical `∫ (⟨x⟩^a + ⟨v⟩^b) f`.
    pub fn moment_l1(&self, a: f64, b: f64) -> f64 {
        let n = self.len() as f64;
        self.x.iter().zip(&self.v).map(|(x, v)| (1.0 + x.norm_sq()).powf(0.5 * a) + (1.0 + v.norm_sq()).powf(0.5 * b)).sum::<f64>() / n
    }

    /// Rows `(x, v)` of length `2d`.
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.x
            .iter()
            .zip(&self.v)
            .map(|(x, v)| x.as_slice().iter().chain(v.as_slice()).copied().collect())
            .collect()
    }

    pub fn entropy_knn(&self, k: usize, whiten: bool) -> Result<KnnEntropy> {
        entropy_knn(&self.points(), k, whiten)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_gaussian_examples() {
        let f = DensityModel::standard(2).unwrap();
        let o = VecD::zeros(2);
        assert!((f.eval(&o, &o) - 0.025_330_295_910_584_444).abs() < 1e-15);
        assert!((f.entropy().value + 5.675_754_132_818_691).abs() < 1e-12);
        assert_eq!(f.moment_l1(0.0, 0.0).unwrap().value, 2.0);
        let (_, v) = f.moment_parts(0.0, 2.0).unwrap();
        assert_eq!(v.value, 3.0);
        assert_eq!(f.moment_l1(0.0, 2.0).unwrap().value, 4.0);
        assert_eq!(f.energy(), 1.0);
    }

    #[test]
    fn entropy_shift_under_scaling() {
        let c = 3.0;
        let f = DensityModel::gaussian_diag(2, vec![0.0; 4], vec![c; 4]).unwrap();
        let g = DensityModel::standard(2).unwrap();
        assert!((f.entropy().value - g.entropy().value + 2.0 * c.ln()).abs() < 1e-12);
    }

    #[test]
    fn gaussian_gradient_identity() {
        let f = DensityModel::anisotropic();
        let x = VecD::from_slice(&[0.3, -0.2]);
        let v = VecD::from_slice(&[1.0, 2.0]);
        let g = f.grad_v_log(&x, &v);
        assert!((g[0] + 1.0).abs() < 1e-15 && (g[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn quartic_moment_matches_mc() {
        let f = DensityModel::correlated_mixture();
        let exact = f.moment_parts(4.0, 4.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut ax, mut av) = (Accumulator::new(), Accumulator::new());
        for _ in 0..200_000 {
            let (x, v) = f.sample(&mut rng);
            ax.push((1.0 + x.norm_sq()).powi(2));
            av.push((1.0 + v.norm_sq()).powi(2));
        }
        assert!(exact.0.agrees_with(&ax.finish(), 4.0));
        assert!(exact.1.agrees_with(&av.finish(), 4.0));
    }

    #[test]
    fn mixture_moments() {
        let f = DensityModel::correlated_mixture();
        let s = f.covariance();
        // within-component 0.4 plus between-component 0.5·0.3
        assert!((s[2] - 0.55).abs() < 1e-15);
        assert_eq!(f.mean(), vec![0.0; 4]);
    }
}

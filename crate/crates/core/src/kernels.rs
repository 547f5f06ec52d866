//! Collision kernels `B^ε = A₀(|v-v*|) b^ε(θ)` and spatial weights `κ`.
//!
//! The angular family is handled through `β(θ) = sin^{d-2}θ b(θ)`, normalised
//! so that `∫₀^{π/2} θ²β = 8(d-1)/|S^{d-2}|`, and scaled as
//! `β^ε(θ) = (π³/ε³) β(πθ/ε)` with support `[0, ε/2]`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{input, LabError, Result};
use crate::geometry::{sphere_measure, CollisionFrame, VecD};
use crate::numerics::{integrate, InverseCdf};

pub const QUAD_ABS_TOL: f64 = 1e-10;
const QUAD_REL_TOL: f64 = 1e-12;
/// Relative step for the central difference defining `Λ'`.
pub const LAMBDA_PRIME_REL_STEP: f64 = 1e-6;
const TABLE_PANELS: usize = 2048;

/// `8(d-1)/|S^{d-2}|`, the normalised angular momentum.
pub fn angular_momentum_target(d: usize) -> f64 {
    8.0 * (d as f64 - 1.0) / sphere_measure(d - 2)
}

/// `⟨z⟩ = √(1 + z²)`.
pub fn bracket(z: f64) -> f64 {
    (1.0 + z * z).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KineticKernel {
    PowerLaw { gamma: f64 },
    /// `A₀(r) = (c_low + (c_high - c_low) r²/(1+r²)) ⟨r⟩^γ`.
    Bracket { gamma: f64, c_low: f64, c_high: f64 },
}

impl KineticKernel {
    pub fn power_law(gamma: f64, d: usize) -> Result<Self> {
        let k = Self::PowerLaw { gamma };
        k.validate(d)?;
        Ok(k)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match *self {
            Self::PowerLaw { gamma } => {
                let ok = if d == 2 { gamma > -2.0 && gamma <= 1.0 } else { (-2.0..=1.0).contains(&gamma) };
                if !ok {
                    return input(format!("power-law gamma = {gamma} outside the admissible range for d = {d}"));
                }
            }
            Self::Bracket { gamma, c_low, c_high } => {
                if !(gamma <= 1.0) || !(c_low > 0.0) || !(c_low <= c_high) {
                    return input(format!(
                        "bracket kernel needs gamma <= 1 and 0 < c_low <= c_high (got {gamma}, {c_low}, {c_high})"
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn gamma(&self) -> f64 {
        match *self {
            Self::PowerLaw { gamma } | Self::Bracket { gamma, .. } => gamma,
        }
    }

    /// `A₀(r)`; `+∞` at `r = 0` for singular power laws.
    pub fn eval(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return input(format!("relative speed must be >= 0, got {r}"));
        }
        Ok(match *self {
            Self::PowerLaw { gamma } => {
                if r == 0.0 {
                    if gamma < 0.0 {
                        f64::INFINITY
                    } else if gamma == 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    r.powf(gamma)
                }
            }
            Self::Bracket { gamma, c_low, c_high } => {
                let s = r * r / (1.0 + r * r);
                (c_low + (c_high - c_low) * s) * bracket(r).powf(gamma)
            }
        })
    }
}

pub fn a0_eval(kernel: &KineticKernel, r: f64) -> Result<f64> {
    kernel.eval(r)
}

#[derive(Clone)]
pub enum AngularProfile {
    /// `θ^{-1-ν}` on `(0, π/2]`.
    PowerLaw,
    /// `θ^{-1-ν}` on `[δ, π/2]`.
    Truncated { delta: f64 },
    /// User profile on `(0, π/2]`.
    Custom { name: String, f: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for AngularProfile {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PowerLaw => write!(fm, "PowerLaw"),
            Self::Truncated { delta } => write!(fm, "Truncated {{ delta: {delta} }}"),
            Self::Custom { name, .. } => write!(fm, "Custom({name})"),
        }
    }
}

impl AngularProfile {
    fn raw(&self, nu: f64, theta: f64) -> f64 {
        if !(theta > 0.0 && theta <= PI / 2.0) {
            return 0.0;
        }
        match self {
            Self::PowerLaw => theta.powf(-1.0 - nu),
            Self::Truncated { delta } => {
                if theta >= *delta {
                    theta.powf(-1.0 - nu)
                } else {
                    0.0
                }
            }
            Self::Custom { f, .. } => f(theta),
        }
    }
}

/// A normalised angular kernel `β`.
#[derive(Clone, Debug)]
pub struct AngularKernel {
    pub profile: AngularProfile,
    pub nu: f64,
    pub norm_const: f64,
    /// Lower-bound constant in `β(θ) ≥ C₀ θ^{-1-ν}`; zero when it fails.
    pub c0: f64,
    pub dim: usize,
    table: Option<Arc<InverseCdf>>,
}

/// Computes `norm_const` so that `∫₀^{π/2} θ² β = 8(d-1)/|S^{d-2}|`.
pub fn normalize_beta(profile: AngularProfile, nu: f64, d: usize) -> Result<AngularKernel> {
    if !(nu > 0.0 && nu < 2.0) {
        return input(format!("nu = {nu} outside (0, 2)"));
    }
    if !(2..=3).contains(&d) {
        return input(format!("d = {d} not supported"));
    }
    let target = angular_momentum_target(d);
    let moment = match &profile {
        AngularProfile::PowerLaw => (PI / 2.0).powf(2.0 - nu) / (2.0 - nu),
        AngularProfile::Truncated { delta } => {
            if !(*delta > 0.0 && *delta < PI / 2.0) {
                return input(format!("truncation delta = {delta} outside (0, π/2)"));
            }
            integrate(|t| t * t * profile.raw(nu, t), *delta, PI / 2.0, 1e-13, 1e-13)?.value
        }
        AngularProfile::Custom { .. } => {
            integrate(|t| t * t * profile.raw(nu, t), 0.0, PI / 2.0, 1e-13, 1e-13)
                .map_err(|e| LabError::Input(format!("profile not integrable against θ²: {e}")))?
                .value
        }
    };
    if !(moment > 0.0 && moment.is_finite()) {
        return input("profile has no finite positive angular momentum");
    }
    let norm_const = target / moment;
    let c0 = match &profile {
        AngularProfile::PowerLaw => norm_const,
        AngularProfile::Truncated { .. } => 0.0,
        AngularProfile::Custom { .. } => {
            // grid estimate of inf β θ^{1+ν}
            (1..=2000)
                .map(|i| {
                    let t = PI / 2.0 * i as f64 / 2000.0;
                    norm_const * profile.raw(nu, t) * t.powf(1.0 + nu)
                })
                .fold(f64::INFINITY, f64::min)
                .max(0.0)
        }
    };
    let table = match &profile {
        AngularProfile::PowerLaw => None,
        _ => {
            let p = profile.clone();
            Some(Arc::new(InverseCdf::new(
                move |t| norm_const * t * t * p.raw(nu, t),
                0.0,
                PI / 2.0,
                TABLE_PANELS,
            )?))
        }
    };
    Ok(AngularKernel { profile, nu, norm_const, c0, dim: d, table })
}

impl AngularKernel {
    /// Built-in power-law kernel.
    pub fn power_law(nu: f64, d: usize) -> Result<Self> {
        normalize_beta(AngularProfile::PowerLaw, nu, d)
    }

    /// `β(θ)` on `(0, π/2]`, zero outside.
    pub fn beta(&self, theta: f64) -> f64 {
        self.norm_const * self.profile.raw(self.nu, theta)
    }

    /// `β^ε(θ) = (π³/ε³) β(πθ/ε)` for `θ ≤ ε/2`, else 0.
    pub fn beta_scaled(&self, eps: f64, theta: f64) -> f64 {
        if theta > 0.5 * eps || theta < 0.0 {
            return 0.0;
        }
        (PI / eps).powi(3) * self.beta(PI * theta / eps)
    }

    /// `b(θ) = β(θ)/sin^{d-2}θ`, scaled.
    pub fn b_scaled(&self, eps: f64, theta: f64) -> f64 {
        let beta = self.beta_scaled(eps, theta);
        if self.dim == 2 {
            beta
        } else {
            beta / theta.sin().powi(self.dim as i32 - 2)
        }
    }

    /// `∫₀^{ε/2} g(θ) β^ε(θ) dθ` by adaptive quadrature.
    pub fn integrate_scaled(&self, eps: f64, g: impl Fn(f64) -> f64) -> Result<f64> {
        Ok(integrate(|t| g(t) * self.beta_scaled(eps, t), 0.0, 0.5 * eps, QUAD_ABS_TOL, QUAD_REL_TOL)?.value)
    }

    /// `∫ θ² β^ε dθ` by quadrature (independent of the closed-form constant).
    pub fn angular_momentum(&self, eps: f64) -> Result<f64> {
        self.integrate_scaled(eps, |t| t * t)
    }

    /// Draws `θ` from the density `θ²β^ε(θ)/(8(d-1)/|S^{d-2}|)` on `[0, ε/2]`.
    pub fn sample_theta_sq(&self, eps: f64, u: f64) -> f64 {
        match &self.table {
            None => 0.5 * eps * u.powf(1.0 / (2.0 - self.nu)),
            Some(t) => eps / PI * t.sample(u),
        }
    }

    /// Density of [`AngularKernel::sample_theta_sq`].
    pub fn theta_sq_pdf(&self, eps: f64, theta: f64) -> f64 {
        match &self.table {
            None => {
                if theta < 0.0 || theta > 0.5 * eps {
                    0.0
                } else {
                    let a = 2.0 - self.nu;
                    a / (0.5 * eps) * (theta / (0.5 * eps)).powf(a - 1.0)
                }
            }
            Some(t) => PI / eps * t.pdf(PI * theta / eps),
        }
    }

    /// `β^ε(θ)/q(θ)` for the θ²-weighted proposal, computed without
    /// evaluating the singular factors separately when possible.
    pub fn beta_over_theta_sq_pdf(&self, eps: f64, theta: f64) -> f64 {
        match &self.table {
            None => angular_momentum_target(self.dim) / (theta * theta),
            Some(_) => self.beta_scaled(eps, theta) / self.theta_sq_pdf(eps, theta),
        }
    }

    /// `∫_{θ_min}^{ε/2} β^ε dθ`, the angular rate above a cutoff.
    pub fn rate_above(&self, eps: f64, theta_min: f64) -> Result<f64> {
        if !(theta_min > 0.0 && theta_min < 0.5 * eps) {
            return input(format!("theta_min = {theta_min} must lie in (0, ε/2)"));
        }
        Ok(match self.profile {
            AngularProfile::PowerLaw => {
                let nu = self.nu;
                let lo = PI * theta_min / eps;
                (PI / eps).powi(2) * self.norm_const * (lo.powf(-nu) - (PI / 2.0).powf(-nu)) / nu
            }
            _ => integrate(|t| self.beta_scaled(eps, t), theta_min, 0.5 * eps, 1e-12, 1e-12)?.value,
        })
    }

    /// Fraction of angular momentum below `θ_min`.
    pub fn neglected_fraction(&self, eps: f64, theta_min: f64) -> Result<f64> {
        let m = angular_momentum_target(self.dim);
        Ok(match self.profile {
            AngularProfile::PowerLaw => (theta_min / (0.5 * eps)).powf(2.0 - self.nu),
            _ => integrate(|t| t * t * self.beta_scaled(eps, t), 0.0, theta_min, 1e-14, 1e-12)?.value / m,
        })
    }

    /// Largest cutoff with neglected angular-momentum fraction `frac`.
    pub fn cutoff_for_fraction(&self, eps: f64, frac: f64) -> Result<f64> {
        match self.profile {
            AngularProfile::PowerLaw => Ok(0.5 * eps * frac.powf(1.0 / (2.0 - self.nu))),
            _ => {
                let (mut lo, mut hi) = (0.0, 0.5 * eps);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if self.neglected_fraction(eps, mid)? > frac {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                Ok(lo)
            }
        }
    }

    /// Draws `θ` with density `∝ β^ε` on `[θ_min, ε/2]` in closed form;
    /// `None` for profiles without one (use [`AngularKernel::above_cutoff_table`]).
    pub fn sample_above(&self, eps: f64, theta_min: f64, u: f64) -> Option<f64> {
        let nu = self.nu;
        match self.profile {
            AngularProfile::PowerLaw => {
                let a = theta_min.powf(-nu);
                let b = (0.5 * eps).powf(-nu);
                Some((a - u * (a - b)).powf(-1.0 / nu))
            }
            _ => None,
        }
    }

    /// Tabulated inverse CDF of `β^ε` on `[θ_min, ε/2]`.
    pub fn above_cutoff_table(&self, eps: f64, theta_min: f64) -> Result<InverseCdf> {
        InverseCdf::new(|t| self.beta_scaled(eps, t), theta_min, 0.5 * eps, TABLE_PANELS)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SpatialKernel {
    Constant { c: f64 },
    /// `c exp(-⟨x - x*⟩)`.
    ExpBracket { c: f64 },
    /// `c ⟨x - x*⟩^{-α}`.
    PowerBracket { c: f64, alpha: f64 },
}

impl SpatialKernel {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { c } | Self::ExpBracket { c } => c >= 0.0 && c.is_finite(),
            Self::PowerBracket { c, alpha } => c >= 0.0 && c.is_finite() && alpha >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            input(format!("invalid spatial kernel {self:?}"))
        }
    }

    pub fn eval(&self, x: &VecD, xs: &VecD) -> f64 {
        let r = (*x - *xs).norm();
        match *self {
            Self::Constant { c } => c,
            Self::ExpBracket { c } => c * (-bracket(r)).exp(),
            Self::PowerBracket { c, alpha } => c * bracket(r).powf(-alpha),
        }
    }

    /// Global upper bound `C_κ`.
    pub fn c_kappa(&self) -> f64 {
        match *self {
            Self::Constant { c } => c,
            Self::ExpBracket { c } => c * (-1f64).exp(),
            Self::PowerBracket { c, .. } => c,
        }
    }

    /// The same form with its constant multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        match *self {
            Self::Constant { c } => Self::Constant { c: c * s },
            Self::ExpBracket { c } => Self::ExpBracket { c: c * s },
            Self::PowerBracket { c, alpha } => Self::PowerBracket { c: c * s, alpha },
        }
    }
}

pub fn kappa_eval(kernel: &SpatialKernel, x: &VecD, xs: &VecD) -> f64 {
    kernel.eval(x, xs)
}

/// Everything needed to evaluate `κ B^ε`.
#[derive(Clone, Debug)]
pub struct KernelSet {
    pub a0: KineticKernel,
    pub beta: AngularKernel,
    pub kappa: SpatialKernel,
    pub epsilon: f64,
    pub dim: usize,
}

impl KernelSet {
    pub fn new(a0: KineticKernel, beta: AngularKernel, kappa: SpatialKernel, epsilon: f64) -> Result<Self> {
        let dim = beta.dim;
        a0.validate(dim)?;
        kappa.validate()?;
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return input(format!("epsilon = {epsilon} outside (0, 1]"));
        }
        Ok(Self { a0, beta, kappa, epsilon, dim })
    }

    /// Power-law `A₀`, power-law `β`, constant `κ`.
    pub fn standard(d: usize, gamma: f64, nu: f64, kappa: f64, epsilon: f64) -> Result<Self> {
        Self::new(
            KineticKernel::power_law(gamma, d)?,
            AngularKernel::power_law(nu, d)?,
            SpatialKernel::Constant { c: kappa },
            epsilon,
        )
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        Self::new(self.a0, self.beta.clone(), self.kappa, epsilon)
    }

    pub fn with_kappa(&self, kappa: SpatialKernel) -> Result<Self> {
        Self::new(self.a0, self.beta.clone(), kappa, self.epsilon)
    }

    pub fn beta_scaled(&self, theta: f64) -> f64 {
        self.beta.beta_scaled(self.epsilon, theta)
    }

    /// `|S^{d-2}|`.
    pub fn perp_measure(&self) -> f64 {
        sphere_measure(self.dim - 2)
    }

    /// `∫ θ²β^ε dθ` by quadrature.
    pub fn angular_momentum(&self) -> Result<f64> {
        self.beta.angular_momentum(self.epsilon)
    }

    /// Pointwise `B^ε = A₀ β^ε / sin^{d-2}θ`.
    pub fn collision_kernel(&self, frame: &CollisionFrame) -> Result<f64> {
        let a = self.a0.eval(frame.rel_speed)?;
        let b = self.beta.b_scaled(self.epsilon, frame.theta);
        if b == 0.0 {
            return Ok(0.0);
        }
        if !a.is_finite() {
            return Err(LabError::DegenerateFrame);
        }
        Ok(a * b)
    }

    /// `∫ β^ε(θ)(1 - cos θ) dθ`.
    pub fn momentum_transfer_moment(&self) -> Result<f64> {
        self.beta.integrate_scaled(self.epsilon, |t| {
            let h = (0.5 * t).sin();
            2.0 * h * h
        })
    }

    /// `Λ(r) = |S^{d-2}| A₀(r) ∫ β^ε (1 - cos θ) dθ`.
    pub fn cross_section_lambda(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return input(format!("cross section needs r > 0, got {r}"));
        }
        Ok(self.perp_measure() * self.a0.eval(r)? * self.momentum_transfer_moment()?)
    }

    /// `Λ'(r)` by central differences with relative step 1e-6.
    pub fn cross_section_lambda_prime(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return input(format!("cross section needs r > 0, got {r}"));
        }
        let h = LAMBDA_PRIME_REL_STEP * r;
        let m = self.perp_measure() * self.momentum_transfer_moment()?;
        Ok(m * (self.a0.eval(r + h)? - self.a0.eval(r - h)?) / (2.0 * h))
    }

    /// `S(z) = |S^{d-2}| ∫ β^ε(θ)(A₀(z/cos(θ/2))/cos^d(θ/2) - A₀(z)) dθ`.
    pub fn cancellation_s(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return input(format!("cancellation function needs z > 0, got {z}"));
        }
        let d = self.dim as i32;
        let a_z = self.a0.eval(z)?;
        let bad = std::cell::RefCell::new(None);
        let val = self
            .beta
            .integrate_scaled(self.epsilon, |t| {
                let c = (0.5 * t).cos();
                match self.a0.eval(z / c) {
                    Ok(a) => a / c.powi(d) - a_z,
                    Err(e) => {
                        *bad.borrow_mut() = Some(e);
                        0.0
                    }
                }
            })
            .map_err(|e| LabError::Numerical { what: "cancellation S", detail: format!("z = {z}: {e}") })?;
        if let Some(e) = bad.into_inner() {
            return Err(e);
        }
        Ok(self.perp_measure() * val)
    }

    /// `2^{(d-4)/2} cos^{-2}(π/8) (dΛ(z) + z|Λ'(z)|)`.
    pub fn cancellation_bound(&self, z: f64) -> Result<f64> {
        let d = self.dim as f64;
        let c = (PI / 8.0).cos();
        Ok(2f64.powf((d - 4.0) / 2.0) / (c * c)
            * (d * self.cross_section_lambda(z)? + z * self.cross_section_lambda_prime(z)?.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a0_examples() {
        let k = |g| KineticKernel::PowerLaw { gamma: g };
        assert_eq!(k(1.0).eval(2.0).unwrap(), 2.0);
        assert_eq!(k(-2.0).eval(0.5).unwrap(), 4.0);
        assert_eq!(k(-2.0).eval(0.0).unwrap(), f64::INFINITY);
        assert!(k(0.0).eval(-1.0).is_err());
        assert!(KineticKernel::power_law(-2.0, 2).is_err());
        assert!(KineticKernel::power_law(-2.0, 3).is_ok());
        assert!(KineticKernel::power_law(1.5, 3).is_err());
    }

    #[test]
    fn bracket_stays_within_bounds() {
        let k = KineticKernel::Bracket { gamma: -1.0, c_low: 0.5, c_high: 2.0 };
        for i in 0..100 {
            let r = 0.1 * i as f64;
            let a = k.eval(r).unwrap() / bracket(r).powf(-1.0);
            assert!((0.5..=2.0).contains(&a));
        }
        assert!(KineticKernel::Bracket { gamma: 0.0, c_low: 2.0, c_high: 1.0 }.validate(3).is_err());
    }

    #[test]
    fn power_law_normalisation_closed_form() {
        let b = AngularKernel::power_law(1.0, 3).unwrap();
        assert!((b.norm_const - 16.0 / (PI * PI)).abs() < 1e-14);
    }

    #[test]
    fn normalised_custom_profile_has_unit_constant() {
        let b = AngularKernel::power_law(0.5, 2).unwrap();
        let c = b.norm_const;
        let prof = AngularProfile::Custom { name: "pre".into(), f: Arc::new(move |t: f64| c * t.powf(-1.5)) };
        let k = normalize_beta(prof, 0.5, 2).unwrap();
        assert!((k.norm_const - 1.0).abs() < 1e-8);
    }

    #[test]
    fn truncated_profile_normalises() {
        let k = normalize_beta(AngularProfile::Truncated { delta: 0.1 }, 0.5, 2).unwrap();
        let m = integrate(|t| t * t * k.beta(t), 0.1, PI / 2.0, 1e-13, 1e-13).unwrap().value;
        assert!((m - 4.0).abs() < 1e-8);
        assert_eq!(k.c0, 0.0);
    }

    #[test]
    fn scaled_support_and_substitution() {
        let b = AngularKernel::power_law(0.5, 2).unwrap();
        assert_eq!(b.beta_scaled(0.3, 0.151), 0.0);
        let t0 = 0.7;
        assert!((b.beta_scaled(1.0, t0 / PI) - PI.powi(3) * b.beta(t0)).abs() < 1e-9);
    }

    #[test]
    fn theta_sq_sampler_density_matches() {
        for d in [2, 3] {
            let b = AngularKernel::power_law(0.7, d).unwrap();
            let m = integrate(|t| b.theta_sq_pdf(0.2, t), 0.0, 0.1, 1e-12, 1e-12).unwrap().value;
            assert!((m - 1.0).abs() < 1e-9);
            let t = b.sample_theta_sq(0.2, 0.3);
            let cdf = integrate(|s| b.theta_sq_pdf(0.2, s), 0.0, t, 1e-13, 1e-13).unwrap().value;
            assert!((cdf - 0.3).abs() < 1e-9);
        }
    }

    #[test]
    fn kappa_examples() {
        let x = VecD::from_slice(&[0.3, 1.0]);
        let y = VecD::from_slice(&[-1.0, 2.0]);
        assert_eq!(SpatialKernel::Constant { c: 1.0 }.eval(&x, &y), 1.0);
        assert!((SpatialKernel::ExpBracket { c: 1.0 }.eval(&x, &x) - (-1f64).exp()).abs() < 1e-16);
        let k = SpatialKernel::PowerBracket { c: 2.0, alpha: 1.5 };
        assert_eq!(k.eval(&x, &y), k.eval(&y, &x));
    }

    #[test]
    fn maxwellian_cross_section_is_constant() {
        let ks = KernelSet::standard(2, 0.0, 0.5, 1.0, 0.5).unwrap();
        let a = ks.cross_section_lambda(0.3).unwrap();
        let b = ks.cross_section_lambda(7.0).unwrap();
        assert!((a - b).abs() < 1e-14 * a);
        assert!(ks.cross_section_lambda_prime(2.0).unwrap().abs() < 1e-6);
    }

    #[test]
    fn cutoff_fraction_roundtrip() {
        let b = AngularKernel::power_law(0.5, 2).unwrap();
        let t = b.cutoff_for_fraction(0.5, 1e-3).unwrap();
        assert!((b.neglected_fraction(0.5, t).unwrap() - 1e-3).abs() < 1e-15);
        let r = b.rate_above(0.5, t).unwrap();
        let q = integrate(|s| b.beta_scaled(0.5, s), t, 0.25, 1e-12, 1e-13).unwrap().value;
        assert!((r - q).abs() < 1e-9 * r);
    }
}

//! Collision geometry on `S^{d-1}`.
//!
//! A collision frame is parametrised by the relative direction
//! `k = (v - v*)/|v - v*|`, the deviation angle `θ ∈ [0, π/2]` and a unit
//! vector `p ⊥ k`, so that `σ = k cos θ + p sin θ`. The post-collision
//! velocities are `v' = (v+v*)/2 + |v-v*|/2 σ` and `v*' = (v+v*)/2 - |v-v*|/2 σ`.
//!
//! Test functions on `R^{2d}` ([`TestFunction`]) and on `R^{4d}`
//! ([`PairTestFunction`]) supply values and velocity gradients; the
//! Boltzmann gradient is a four-point difference along a frame and the
//! Landau gradient is the projected gradient difference scaled by `√A`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub, SubAssign};

use crate::error::{input, LabError, Result};
use crate::kernels::KineticKernel;
use crate::numerics::gauss_legendre;

/// Central finite-difference step for oracle derivatives.
pub const FD_STEP: f64 = 1e-5;

/// Number of trapezoid nodes on `S^1_{k⊥}` in three dimensions.
pub const CIRCLE_NODES: usize = 64;

/// A vector in `R^d`, `d ∈ {1, 2, 3}`, stored inline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VecD {
    c: [f64; 3],
    d: usize,
}

impl serde::Serialize for VecD {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_slice().serialize(s)
    }
}

impl VecD {
    pub fn new(components: &[f64]) -> Result<Self> {
        let d = components.len();
        if !(1..=3).contains(&d) {
            return input(format!("dimension {d} not supported (need 1..=3)"));
        }
        if components.iter().any(|c| !c.is_finite()) {
            return input("non-finite vector component");
        }
        let mut c = [0.0; 3];
        c[..d].copy_from_slice(components);
        Ok(Self { c, d })
    }

    /// Builds a vector without validation; panics on unsupported dimension.
    pub fn from_slice(components: &[f64]) -> Self {
        let d = components.len();
        assert!((1..=3).contains(&d), "dimension {d} not supported");
        let mut c = [0.0; 3];
        c[..d].copy_from_slice(components);
        Self { c, d }
    }

    pub fn zeros(d: usize) -> Self {
        assert!((1..=3).contains(&d), "dimension {d} not supported");
        Self { c: [0.0; 3], d }
    }

    pub fn unit(d: usize, i: usize) -> Self {
        let mut v = Self::zeros(d);
        v.c[i] = 1.0;
        v
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.d]
    }

    pub fn dot(&self, o: &Self) -> f64 {
        debug_assert_eq!(self.d, o.d);
        self.c[0] * o.c[0] + self.c[1] * o.c[1] + self.c[2] * o.c[2]
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.c.iter().all(|c| c.is_finite())
    }

    pub fn outer(&self, o: &Self) -> MatD {
        let mut m = MatD::zeros(self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                m.m[i][j] = self.c[i] * o.c[j];
            }
        }
        m
    }

    pub fn cross(&self, o: &Self) -> Self {
        assert_eq!(self.d, 3);
        Self {
            c: [
                self.c[1] * o.c[2] - self.c[2] * o.c[1],
                self.c[2] * o.c[0] - self.c[0] * o.c[2],
                self.c[0] * o.c[1] - self.c[1] * o.c[0],
            ],
            d: 3,
        }
    }
}

impl Index<usize> for VecD {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.c[..self.d][i]
    }
}

impl IndexMut<usize> for VecD {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.c[..self.d][i]
    }
}

impl Add for VecD {
    type Output = VecD;
    fn add(mut self, o: VecD) -> VecD {
        for i in 0..3 {
            self.c[i] += o.c[i];
        }
        self
    }
}

impl Sub for VecD {
    type Output = VecD;
    fn sub(mut self, o: VecD) -> VecD {
        for i in 0..3 {
            self.c[i] -= o.c[i];
        }
        self
    }
}

impl AddAssign for VecD {
    fn add_assign(&mut self, o: VecD) {
        *self = *self + o;
    }
}

impl SubAssign for VecD {
    fn sub_assign(&mut self, o: VecD) {
        *self = *self - o;
    }
}

impl Mul<f64> for VecD {
    type Output = VecD;
    fn mul(mut self, s: f64) -> VecD {
        for c in self.c.iter_mut() {
            *c *= s;
        }
        self
    }
}

impl Mul<VecD> for f64 {
    type Output = VecD;
    fn mul(self, v: VecD) -> VecD {
        v * self
    }
}

impl Neg for VecD {
    type Output = VecD;
    fn neg(self) -> VecD {
        self * -1.0
    }
}

/// A `d×d` matrix stored inline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatD {
    pub m: [[f64; 3]; 3],
    d: usize,
}

impl MatD {
    pub fn zeros(d: usize) -> Self {
        Self { m: [[0.0; 3]; 3], d }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.m[i][i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let d = rows.len();
        let mut m = Self::zeros(d);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), d);
            m.m[i][..d].copy_from_slice(r);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.d && j < self.d);
        self.m[i][j]
    }

    pub fn mul_vec(&self, v: &VecD) -> VecD {
        let mut out = VecD::zeros(self.d);
        for i in 0..self.d {
            out.c[i] = (0..self.d).map(|j| self.m[i][j] * v.c[j]).sum();
        }
        out
    }

    pub fn matmul(&self, o: &Self) -> Self {
        let mut out = Self::zeros(self.d);
        for i in 0..self.d {
            for j in 0..self.d {
                out.m[i][j] = (0..self.d).map(|k| self.m[i][k] * o.m[k][j]).sum();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = *self;
        for i in 0..self.d {
            for j in 0..self.d {
                out.m[i][j] = self.m[j][i];
            }
        }
        out
    }

    /// Frobenius contraction `A : B`.
    pub fn contract(&self, o: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.d {
            for j in 0..self.d {
                s += self.m[i][j] * o.m[i][j];
            }
        }
        s
    }

    pub fn scale(mut self, s: f64) -> Self {
        for r in self.m.iter_mut() {
            for c in r.iter_mut() {
                *c *= s;
            }
        }
        self
    }

    pub fn add(mut self, o: &Self) -> Self {
        for i in 0..3 {
            for j in 0..3 {
                self.m[i][j] += o.m[i][j];
            }
        }
        self
    }

    pub fn sub(self, o: &Self) -> Self {
        self.add(&o.scale(-1.0))
    }

    pub fn max_abs(&self) -> f64 {
        self.m.iter().flatten().fold(0.0, |a, b| a.max(b.abs()))
    }
}

/// Surface measure of the unit sphere `S^n ⊂ R^{n+1}` (`|S^0| = 2`).
pub fn sphere_measure(n: usize) -> f64 {
    match n {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI / (n as f64 - 1.0) * sphere_measure(n - 2),
    }
}

fn check_unit(v: &VecD, what: &str, tol: f64) -> Result<()> {
    if (v.norm() - 1.0).abs() > tol {
        return input(format!("{what} must be a unit vector (|{what}| = {})", v.norm()));
    }
    Ok(())
}

/// `v' = (v+v*)/2 + |v-v*|/2 σ`, `v*' = (v+v*)/2 - |v-v*|/2 σ`.
pub fn post_collision(v: &VecD, vs: &VecD, sigma: &VecD) -> Result<(VecD, VecD)> {
    check_unit(sigma, "sigma", 1e-10)?;
    let mid = (*v + *vs) * 0.5;
    let half = 0.5 * (*v - *vs).norm();
    Ok((mid + *sigma * half, mid - *sigma * half))
}

/// `arccos(k·σ)`, clamped to `[0, π]`.
pub fn deviation_angle(v: &VecD, vs: &VecD, sigma: &VecD) -> Result<f64> {
    let z = *v - *vs;
    let r = z.norm();
    if r == 0.0 {
        return Err(LabError::DegenerateFrame);
    }
    check_unit(sigma, "sigma", 1e-10)?;
    Ok((z.dot(sigma) / r).clamp(-1.0, 1.0).acos())
}

/// Orthonormal basis of `k⊥` in three dimensions, with `k = e_z ↦ (e_x, e_y)`.
fn perp_basis3(k: &VecD) -> (VecD, VecD) {
    let a = if k[0].abs() < 0.9 { VecD::unit(3, 0) } else { VecD::unit(3, 1) };
    let e1 = a - *k * a.dot(k);
    let e1 = e1 * (1.0 / e1.norm());
    let e2 = k.cross(&e1);
    (e1, e2)
}

/// A point of `S^{d-2}_{k⊥}`: for `d = 2` the sign selects `(k₂,-k₁)`
/// (nonnegative) or `(-k₂,k₁)`; for `d = 3` the parameter is an angle on
/// the circle `k⊥`.
pub fn tangent_frame(k: &VecD, angle_or_sign: f64) -> Result<VecD> {
    check_unit(k, "k", 1e-10)?;
    match k.dim() {
        2 => {
            let p = VecD::from_slice(&[k[1], -k[0]]);
            Ok(if angle_or_sign >= 0.0 { p } else { -p })
        }
        3 => {
            let (e1, e2) = perp_basis3(k);
            Ok(e1 * angle_or_sign.cos() + e2 * angle_or_sign.sin())
        }
        d => input(format!("tangent_frame needs d in {{2,3}}, got {d}")),
    }
}

/// Deterministic quadrature on `S^{d-2}_{k⊥}` with weights summing to
/// `|S^{d-2}|`: the two-point set for `d = 2` and a 64-point trapezoid rule
/// for `d = 3`. The node set is symmetric under `p ↦ -p`.
pub fn sphere_perp_rule(k: &VecD) -> Result<Vec<(VecD, f64)>> {
    match k.dim() {
        2 => Ok(vec![(tangent_frame(k, 1.0)?, 1.0), (tangent_frame(k, -1.0)?, 1.0)]),
        3 => {
            check_unit(k, "k", 1e-10)?;
            let (e1, e2) = perp_basis3(k);
            let w = 2.0 * PI / CIRCLE_NODES as f64;
            Ok((0..CIRCLE_NODES)
                .map(|j| {
                    let a = w * j as f64;
                    (e1 * a.cos() + e2 * a.sin(), w)
                })
                .collect())
        }
        d => input(format!("sphere_perp_rule needs d in {{2,3}}, got {d}")),
    }
}

/// `Id - (v-v*)⊗(v-v*)/|v-v*|²`.
pub fn projection(v: &VecD, vs: &VecD) -> Result<MatD> {
    let z = *v - *vs;
    let r2 = z.norm_sq();
    if r2 == 0.0 {
        return Err(LabError::DegenerateFrame);
    }
    Ok(MatD::identity(z.dim()).sub(&z.outer(&z).scale(1.0 / r2)))
}

/// One sample point of collision space with its derived quantities.
#[derive(Clone, Copy, Debug)]
pub struct CollisionFrame {
    pub x: VecD,
    pub xs: VecD,
    pub v: VecD,
    pub vs: VecD,
    pub sigma: VecD,
    pub v_prime: VecD,
    pub vs_prime: VecD,
    pub theta: f64,
    pub k: VecD,
    pub p: VecD,
    /// `|v - v*|`.
    pub rel_speed: f64,
    /// `v' - v = -(v*' - v*)`, computed without cancellation.
    pub jump: VecD,
}

impl CollisionFrame {
    /// Frame from `(θ, p)`; `p` must be a unit vector orthogonal to `k`.
    pub fn from_angles(x: VecD, xs: VecD, v: VecD, vs: VecD, theta: f64, p: VecD) -> Result<Self> {
        let z = v - vs;
        let r = z.norm();
        if r == 0.0 {
            return Err(LabError::DegenerateFrame);
        }
        if !(0.0..=PI).contains(&theta) {
            return input(format!("theta = {theta} outside [0, π]"));
        }
        let k = z * (1.0 / r);
        check_unit(&p, "p", 1e-10)?;
        if p.dot(&k).abs() > 1e-10 {
            return input("p must be orthogonal to k");
        }
        Ok(Self::build(x, xs, v, vs, r, k, theta, p))
    }

    /// Frame from a scattering direction `σ`.
    pub fn from_sigma(x: VecD, xs: VecD, v: VecD, vs: VecD, sigma: VecD) -> Result<Self> {
        let theta = deviation_angle(&v, &vs, &sigma)?;
        let z = v - vs;
        let r = z.norm();
        let k = z * (1.0 / r);
        let perp = sigma - k * sigma.dot(&k);
        let p = if perp.norm() > 1e-300 {
            perp * (1.0 / perp.norm())
        } else {
            tangent_frame(&k, 1.0)?
        };
        let mut fr = Self::build(x, xs, v, vs, r, k, theta, p);
        fr.sigma = sigma;
        Ok(fr)
    }

    #[allow(clippy::too_many_arguments)]
    fn build(x: VecD, xs: VecD, v: VecD, vs: VecD, r: f64, k: VecD, theta: f64, p: VecD) -> Self {
        let (s, c) = theta.sin_cos();
        let sigma = k * c + p * s;
        // σ - k = p sin θ - 2 sin²(θ/2) k keeps small-angle jumps accurate
        let h = (0.5 * theta).sin();
        let jump = (p * s - k * (2.0 * h * h)) * (0.5 * r);
        Self {
            x,
            xs,
            v,
            vs,
            sigma,
            v_prime: v + jump,
            vs_prime: vs - jump,
            theta,
            k,
            p,
            rel_speed: r,
            jump,
        }
    }

    pub fn dim(&self) -> usize {
        self.v.dim()
    }

    /// Same pre-collision data and θ with `p` replaced.
    pub fn with_p(&self, p: VecD) -> Self {
        Self::build(self.x, self.xs, self.v, self.vs, self.rel_speed, self.k, self.theta, p)
    }
}

/// A test function on `R^{2d}` with an analytic velocity gradient.
pub trait TestFunction: Sync {
    fn value(&self, x: &VecD, v: &VecD) -> f64;

    fn grad_v(&self, x: &VecD, v: &VecD) -> VecD {
        fd_grad_v(self, x, v, FD_STEP)
    }

    /// Velocity Hessian if available analytically.
    fn hess_v(&self, _x: &VecD, _v: &VecD) -> Option<MatD> {
        None
    }
}

/// Central-difference velocity gradient.
pub fn fd_grad_v<T: TestFunction + ?Sized>(phi: &T, x: &VecD, v: &VecD, h: f64) -> VecD {
    let mut g = VecD::zeros(v.dim());
    for i in 0..v.dim() {
        let e = VecD::unit(v.dim(), i) * h;
        g[i] = (phi.value(x, &(*v + e)) - phi.value(x, &(*v - e))) / (2.0 * h);
    }
    g
}

/// Central-difference velocity Hessian from the gradient callback.
pub fn fd_hess_v<T: TestFunction + ?Sized>(phi: &T, x: &VecD, v: &VecD, h: f64) -> MatD {
    let d = v.dim();
    let mut m = MatD::zeros(d);
    for j in 0..d {
        let e = VecD::unit(d, j) * h;
        let gp = phi.grad_v(x, &(*v + e));
        let gm = phi.grad_v(x, &(*v - e));
        for i in 0..d {
            m.m[i][j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    // symmetrise
    let t = m.transpose();
    m.add(&t).scale(0.5)
}

/// `φ(x,v) = c₀ + b·v + vᵀQv + xᵀMv`, covering the collision invariants
/// and the mixed monomials used in the weak-form checks.
#[derive(Clone, Debug)]
pub struct QuadraticTest {
    pub c0: f64,
    pub b: VecD,
    pub q: MatD,
    pub xv: MatD,
}

impl QuadraticTest {
    pub fn zero(d: usize) -> Self {
        Self { c0: 0.0, b: VecD::zeros(d), q: MatD::zeros(d), xv: MatD::zeros(d) }
    }

    /// `φ ≡ 1`.
    pub fn constant(d: usize) -> Self {
        Self { c0: 1.0, ..Self::zero(d) }
    }

    /// `φ = v_i`.
    pub fn velocity(d: usize, i: usize) -> Self {
        Self { b: VecD::unit(d, i), ..Self::zero(d) }
    }

    /// `φ = |v|²`.
    pub fn energy(d: usize) -> Self {
        Self { q: MatD::identity(d), ..Self::zero(d) }
    }

    /// `φ = x_i v_j`.
    pub fn mixed(d: usize, i: usize, j: usize) -> Self {
        let mut xv = MatD::zeros(d);
        xv.m[i][j] = 1.0;
        Self { xv, ..Self::zero(d) }
    }
}

impl TestFunction for QuadraticTest {
    fn value(&self, x: &VecD, v: &VecD) -> f64 {
        self.c0 + self.b.dot(v) + v.dot(&self.q.mul_vec(v)) + x.dot(&self.xv.mul_vec(v))
    }

    fn grad_v(&self, x: &VecD, v: &VecD) -> VecD {
        let qs = self.q.add(&self.q.transpose());
        self.b + qs.mul_vec(v) + self.xv.transpose().mul_vec(x)
    }

    fn hess_v(&self, _x: &VecD, _v: &VecD) -> Option<MatD> {
        Some(self.q.add(&self.q.transpose()))
    }
}

/// A test function `Φ(x, x*, v, v*)` on `R^{4d}`.
pub trait PairTestFunction: Sync {
    fn value(&self, x: &VecD, xs: &VecD, v: &VecD, vs: &VecD) -> f64;

    /// Gradient in the third slot.
    fn grad_v(&self, x: &VecD, xs: &VecD, v: &VecD, vs: &VecD) -> VecD {
        let mut g = VecD::zeros(v.dim());
        let h = FD_STEP;
        for i in 0..v.dim() {
            let e = VecD::unit(v.dim(), i) * h;
            g[i] = (self.value(x, xs, &(*v + e), vs) - self.value(x, xs, &(*v - e), vs)) / (2.0 * h);
        }
        g
    }

    /// Gradient in the fourth slot.
    fn grad_vs(&self, x: &VecD, xs: &VecD, v: &VecD, vs: &VecD) -> VecD {
        let mut g = VecD::zeros(v.dim());
        let h = FD_STEP;
        for i in 0..v.dim() {
            let e = VecD::unit(v.dim(), i) * h;
            g[i] = (self.value(x, xs, v, &(*vs + e)) - self.value(x, xs, v, &(*vs - e))) / (2.0 * h);
        }
        g
    }
}

/// `φ(x,v') + φ(x*,v*') - φ(x,v) - φ(x*,v*)`.
pub fn boltzmann_gradient<T: TestFunction + ?Sized>(phi: &T, f: &CollisionFrame) -> f64 {
    phi.value(&f.x, &f.v_prime) + phi.value(&f.xs, &f.vs_prime) - phi.value(&f.x, &f.v) - phi.value(&f.xs, &f.vs)
}

const PATH_NODES: usize = 12;

fn path_rule() -> &'static (Vec<f64>, Vec<f64>) {
    use std::sync::OnceLock;
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let (x, w) = gauss_legendre(PATH_NODES);
        (x.iter().map(|t| 0.5 * (t + 1.0)).collect(), w.iter().map(|w| 0.5 * w).collect())
    })
}

/// The Boltzmann gradient written as a line integral of `∇_v φ` along the
/// straight paths `v → v'` and `v* → v*'` (Gauss–Legendre in the path
/// parameter). Agrees with [`boltzmann_gradient`] for smooth `φ` and avoids
/// the cancellation of the four-point difference at small `θ`.
pub fn boltzmann_gradient_path<T: TestFunction + ?Sized>(phi: &T, f: &CollisionFrame) -> f64 {
    let (ts, ws) = path_rule();
    let mut s = 0.0;
    for (t, w) in ts.iter().zip(ws) {
        let a = phi.grad_v(&f.x, &(f.v + f.jump * *t));
        let b = phi.grad_v(&f.xs, &(f.vs - f.jump * *t));
        s += w * (a - b).dot(&f.jump);
    }
    s
}

/// `Φ' + Φ*' - Φ - Φ*` with `Φ* = Φ(x*, x, v*, v)`.
pub fn boltzmann_gradient_ext<T: PairTestFunction + ?Sized>(phi: &T, f: &CollisionFrame) -> f64 {
    phi.value(&f.x, &f.xs, &f.v_prime, &f.vs_prime) + phi.value(&f.xs, &f.x, &f.vs_prime, &f.v_prime)
        - phi.value(&f.x, &f.xs, &f.v, &f.vs)
        - phi.value(&f.xs, &f.x, &f.vs, &f.v)
}

/// Line-integral form of [`boltzmann_gradient_ext`].
pub fn boltzmann_gradient_ext_path<T: PairTestFunction + ?Sized>(phi: &T, f: &CollisionFrame) -> f64 {
    let (ts, ws) = path_rule();
    let mut s = 0.0;
    for (t, w) in ts.iter().zip(ws) {
        let v = f.v + f.jump * *t;
        let vs = f.vs - f.jump * *t;
        let g0 = phi.grad_v(&f.x, &f.xs, &v, &vs) - phi.grad_vs(&f.x, &f.xs, &v, &vs);
        let g1 = phi.grad_vs(&f.xs, &f.x, &vs, &v) - phi.grad_v(&f.xs, &f.x, &vs, &v);
        s += w * (g0 + g1).dot(&f.jump);
    }
    s
}

fn sqrt_a(a0: &KineticKernel, r: f64) -> Result<f64> {
    let a = a0.eval(r)? * r * r;
    if !a.is_finite() {
        return Err(LabError::DegenerateFrame);
    }
    Ok(a.sqrt())
}

/// `√A Π (∇_v φ(x,v) - ∇_v φ(x*,v*))` with `A = A₀(|v-v*|)|v-v*|²`.
pub fn landau_gradient<T: TestFunction + ?Sized>(
    phi: &T,
    x: &VecD,
    xs: &VecD,
    v: &VecD,
    vs: &VecD,
    a0: &KineticKernel,
) -> Result<VecD> {
    let pi = projection(v, vs)?;
    let g = phi.grad_v(x, v) - phi.grad_v(xs, vs);
    Ok(pi.mul_vec(&g) * sqrt_a(a0, (*v - *vs).norm())?)
}

/// `(∇_v - ∇_{v*})(Φ + Φ*)` at `(x, x*, v, v*)`.
pub fn relative_gradient_sym<T: PairTestFunction + ?Sized>(phi: &T, x: &VecD, xs: &VecD, v: &VecD, vs: &VecD) -> VecD {
    // Φ*(x,x*,v,v*) = Φ(x*,x,v*,v): ∂_v Φ* = (∂_4 Φ)(x*,x,v*,v), ∂_{v*} Φ* = (∂_3 Φ)(x*,x,v*,v)
    let d_phi = phi.grad_v(x, xs, v, vs) - phi.grad_vs(x, xs, v, vs);
    let d_star = phi.grad_vs(xs, x, vs, v) - phi.grad_v(xs, x, vs, v);
    d_phi + d_star
}

/// `(√A/2) Π (∇_v - ∇_{v*})(Φ + Φ*)`.
pub fn landau_gradient_ext<T: PairTestFunction + ?Sized>(
    phi: &T,
    x: &VecD,
    xs: &VecD,
    v: &VecD,
    vs: &VecD,
    a0: &KineticKernel,
) -> Result<VecD> {
    let pi = projection(v, vs)?;
    let g = relative_gradient_sym(phi, x, xs, v, vs);
    Ok(pi.mul_vec(&g) * (0.5 * sqrt_a(a0, (*v - *vs).norm())?))
}

/// `(∇_v - ∇_{v*})·(|v-v*|² Π (∇_v φ - (∇_v φ)*))`, expanded as
/// `-2(d-1)(v-v*)·(∇φ - ∇φ*) + |v-v*|² Π : (D²φ + D²φ*)`.
///
/// Falls back to finite-difference Hessians when `φ` has none.
pub fn landau_divergence<T: TestFunction + ?Sized>(phi: &T, x: &VecD, xs: &VecD, v: &VecD, vs: &VecD) -> Result<f64> {
    let z = *v - *vs;
    let pi = projection(v, vs)?;
    let d = v.dim() as f64;
    let g = phi.grad_v(x, v) - phi.grad_v(xs, vs);
    let h1 = phi.hess_v(x, v).unwrap_or_else(|| fd_hess_v(phi, x, v, FD_STEP));
    let h2 = phi.hess_v(xs, vs).unwrap_or_else(|| fd_hess_v(phi, xs, vs, FD_STEP));
    Ok(-2.0 * (d - 1.0) * z.dot(&g) + z.norm_sq() * pi.contract(&h1.add(&h2)))
}

/// Outcome of [`check_geometry`].
#[derive(Clone, Debug, serde::Serialize)]
pub struct GeometryReport {
    pub dim: usize,
    pub frames: usize,
    /// Largest `|Δ(v+v*)| / (|v|+|v*|)` over the frames.
    pub momentum_residual: f64,
    /// Largest `|Δ(|v|²+|v*|²)| / (|v|²+|v*|²)`.
    pub energy_residual: f64,
    /// Largest `|σ-k| / (2θ)`; at most 1 when the bound holds.
    pub sigma_ratio: f64,
    /// Largest `|mean|/stderr` over the entries of
    /// `|S^{d-2}| p⊗p - |S^{d-2}|/(d-1) Π_{k⊥}`.
    pub second_moment_z: f64,
    pub passed: bool,
}

/// Conservation tolerance of [`check_geometry`].
pub const CONSERVATION_TOL: f64 = 1e-12;

/// Random frames with `v, v* ~ N(0, 4 Id)`, `θ ~ U[0, π/2]` and `p`
/// uniform on `S^{d-2}_{k⊥}`.
pub fn check_geometry(d: usize, frames: usize, seed: u64) -> Result<GeometryReport> {
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;
    if !(d == 2 || d == 3) || frames < 2 {
        return input(format!("check_geometry needs d in {{2,3}} and at least 2 frames, got d={d}, {frames}"));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let gauss = |rng: &mut rand_chacha::ChaCha8Rng, s: f64| {
        let mut c = [0.0; 3];
        c.iter_mut().take(d).for_each(|x| *x = s * rng.sample::<f64, _>(StandardNormal));
        VecD::from_slice(&c[..d])
    };
    let area = sphere_measure(d - 2);
    let (mut dp, mut de, mut ratio) = (0.0f64, 0.0f64, 0.0f64);
    let mut sum = [[0.0; 3]; 3];
    let mut sum_sq = [[0.0; 3]; 3];
    for _ in 0..frames {
        let (v, vs) = (gauss(&mut rng, 2.0), gauss(&mut rng, 2.0));
        let z = v - vs;
        let k = z * (1.0 / z.norm());
        let theta = 0.5 * PI * rng.random::<f64>();
        let p = match d {
            2 => tangent_frame(&k, if rng.random::<bool>() { 1.0 } else { -1.0 })?,
            _ => tangent_frame(&k, 2.0 * PI * rng.random::<f64>())?,
        };
        let sigma = k * theta.cos() + p * theta.sin();
        let (vp, vsp) = post_collision(&v, &vs, &sigma)?;
        dp = dp.max(((vp + vsp) - (v + vs)).norm() / (v.norm() + vs.norm()));
        let e0 = v.norm_sq() + vs.norm_sq();
        de = de.max((vp.norm_sq() + vsp.norm_sq() - e0).abs() / e0);
        if theta > 0.0 {
            ratio = ratio.max((sigma - k).norm() / (2.0 * theta));
        }
        let pi_k = MatD::identity(d).sub(&k.outer(&k));
        for i in 0..d {
            for j in 0..d {
                let r = area * (p[i] * p[j] - pi_k.get(i, j) / (d - 1) as f64);
                sum[i][j] += r;
                sum_sq[i][j] += r * r;
            }
        }
    }
    let n = frames as f64;
    let mut zmax = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let mean = sum[i][j] / n;
            let var = ((sum_sq[i][j] - n * mean * mean) / (n - 1.0)).max(0.0);
            let se = (var / n).sqrt();
            let z = if se > 1e-14 { mean.abs() / se } else if mean.abs() < 1e-12 { 0.0 } else { f64::INFINITY };
            zmax = zmax.max(z);
        }
    }
    let passed = dp <= CONSERVATION_TOL && de <= CONSERVATION_TOL && ratio <= 1.0 && zmax <= 3.0;
    Ok(GeometryReport {
        dim: d,
        frames,
        momentum_residual: dp,
        energy_residual: de,
        sigma_ratio: ratio,
        second_moment_z: zmax,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v2(a: f64, b: f64) -> VecD {
        VecD::from_slice(&[a, b])
    }

    #[test]
    fn right_angle_deflection() {
        let (a, b) = post_collision(&v2(1.0, 0.0), &v2(-1.0, 0.0), &v2(0.0, 1.0)).unwrap();
        assert_eq!(a, v2(0.0, 1.0));
        assert_eq!(b, v2(0.0, -1.0));
    }

    #[test]
    fn identity_when_sigma_is_k() {
        let (v, vs) = (v2(0.3, -1.2), v2(2.0, 0.5));
        let z = v - vs;
        let (a, b) = post_collision(&v, &vs, &(z * (1.0 / z.norm()))).unwrap();
        assert!((a - v).norm() < 1e-15 && (b - vs).norm() < 1e-15);
    }

    #[test]
    fn conservation_on_worked_example() {
        let (v, vs) = (v2(2.0, 1.0), v2(0.0, 1.0));
        let s = v2((PI / 6.0).cos(), (PI / 6.0).sin());
        let (a, b) = post_collision(&v, &vs, &s).unwrap();
        assert!(((a + b) - (v + vs)).norm() < 1e-12);
        assert!((a.norm_sq() + b.norm_sq() - v.norm_sq() - vs.norm_sq()).abs() < 1e-12);
        // v' = (1,1) + (cos π/6, sin π/6)
        assert!((a - v2(1.0 + 0.75f64.sqrt(), 1.5)).norm() < 1e-14);
    }

    #[test]
    fn non_unit_sigma_rejected() {
        assert!(post_collision(&v2(1.0, 0.0), &v2(0.0, 0.0), &v2(1.0, 1.0)).is_err());
    }

    #[test]
    fn deviation_angles() {
        let (v, vs) = (v2(1.0, 0.0), v2(-1.0, 0.0));
        assert_eq!(deviation_angle(&v, &vs, &v2(1.0, 0.0)).unwrap(), 0.0);
        assert!((deviation_angle(&v, &vs, &v2(0.0, 1.0)).unwrap() - PI / 2.0).abs() < 1e-15);
        let s = v2(0.3f64.cos(), 0.3f64.sin());
        assert!((deviation_angle(&v, &vs, &s).unwrap() - 0.3).abs() < 1e-14);
        assert_eq!(deviation_angle(&v, &v, &s), Err(LabError::DegenerateFrame));
    }

    #[test]
    fn tangent_conventions() {
        assert_eq!(tangent_frame(&v2(1.0, 0.0), 1.0).unwrap(), v2(0.0, -1.0));
        assert_eq!(tangent_frame(&v2(1.0, 0.0), -1.0).unwrap(), v2(-0.0, 1.0));
        let p = tangent_frame(&VecD::from_slice(&[0.0, 0.0, 1.0]), 0.0).unwrap();
        assert_eq!(p, VecD::from_slice(&[1.0, 0.0, 0.0]));
        assert!(tangent_frame(&v2(1.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn perp_rules_have_sphere_mass() {
        let k2 = v2(0.6, 0.8);
        let w2: f64 = sphere_perp_rule(&k2).unwrap().iter().map(|p| p.1).sum();
        assert_eq!(w2, 2.0);
        let k3 = VecD::from_slice(&[1.0, 2.0, 2.0]) * (1.0 / 3.0);
        let rule = sphere_perp_rule(&k3).unwrap();
        let w3: f64 = rule.iter().map(|p| p.1).sum();
        assert!((w3 - 2.0 * PI).abs() < 1e-13);
        // second moment identity is exact for the trapezoid rule
        let mut m = MatD::zeros(3);
        for (p, w) in &rule {
            m = m.add(&p.outer(p).scale(*w));
        }
        let target = MatD::identity(3).sub(&k3.outer(&k3)).scale(PI);
        assert!(m.sub(&target).max_abs() < 1e-13);
    }

    #[test]
    fn projection_examples() {
        let p = projection(&v2(2.0, 0.0), &v2(0.0, 0.0)).unwrap();
        assert_eq!(p, MatD::from_rows(&[&[0.0, 0.0], &[0.0, 1.0]]));
        let a = VecD::from_slice(&[1.0, 1.0, 1.0]);
        let p3 = projection(&a, &VecD::zeros(3)).unwrap();
        assert!(p3.matmul(&p3).sub(&p3).max_abs() < 1e-15);
        // eigenvalues {0,1,1}: trace 2, Π a = 0
        assert!((p3.m[0][0] + p3.m[1][1] + p3.m[2][2] - 2.0).abs() < 1e-15);
        assert!(p3.mul_vec(&a).norm() < 1e-15);
    }

    #[test]
    fn frame_from_sigma_roundtrip() {
        let x = VecD::zeros(3);
        let v = VecD::from_slice(&[0.5, -1.0, 2.0]);
        let vs = VecD::from_slice(&[-0.3, 0.2, 0.1]);
        let s = VecD::from_slice(&[0.2, 0.3, -0.5]);
        let s = s * (1.0 / s.norm());
        let f = CollisionFrame::from_sigma(x, x, v, vs, s).unwrap();
        let rebuilt = f.k * f.theta.cos() + f.p * f.theta.sin();
        assert!((rebuilt - s).norm() < 1e-12);
        let (a, b) = post_collision(&v, &vs, &s).unwrap();
        assert!((a - f.v_prime).norm() < 1e-12 && (b - f.vs_prime).norm() < 1e-12);
    }

    #[test]
    fn landau_gradient_examples() {
        let k = KineticKernel::PowerLaw { gamma: 0.0 };
        let x = v2(1.0, 0.0);
        let xs = v2(0.0, 0.0);
        let e = QuadraticTest::energy(2);
        let g = landau_gradient(&e, &x, &xs, &v2(0.3, 1.0), &v2(-1.0, 0.4), &k).unwrap();
        assert!(g.norm() < 1e-14);
        let g = landau_gradient(&QuadraticTest::velocity(2, 1), &x, &xs, &v2(1.0, 0.0), &v2(0.0, 0.0), &k).unwrap();
        assert_eq!(g.norm(), 0.0);
    }
}

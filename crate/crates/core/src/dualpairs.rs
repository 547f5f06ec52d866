//! Dissipation pairs `(Ψ, Ψ*, Θ)` with `(Ψ*)'(log s - log t) Θ(s,t) = s - t`.
//!
//! Two pairs are built in: the quadratic pair (`Ψ = Ψ* = r²/2`, `Θ` the
//! logarithmic mean) and the cosh pair (`Ψ* = 4(cosh(r/2) - 1)`, `Θ = √(st)`).
//! Any even, convex, superlinear `Ψ*` with `(Ψ*)''(0) = 1` induces a pair
//! through [`derive_theta`] and a numerical Legendre transform.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{input, LabError, Result};

/// Below this `|log(s/t)|` the mean is evaluated by its diagonal expansion.
pub const DIAGONAL_GAP: f64 = 1e-8;

type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum PairKind {
    Quadratic,
    Cosh,
    Derived { psi_star: RealFn, psi_star_prime: RealFn },
}

/// A dissipation pair.
#[derive(Clone)]
pub struct DualPair {
    pub name: String,
    kind: PairKind,
    pub satisfies_coth: bool,
}

impl fmt::Debug for DualPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DualPair")
            .field("name", &self.name)
            .field("satisfies_coth", &self.satisfies_coth)
            .finish()
    }
}

pub fn make_quadratic_pair() -> DualPair {
    DualPair { name: "quadratic".into(), kind: PairKind::Quadratic, satisfies_coth: true }
}

pub fn make_cosh_pair() -> DualPair {
    DualPair { name: "cosh".into(), kind: PairKind::Cosh, satisfies_coth: true }
}

/// Logarithmic mean `(s - t)/(log s - log t)`, evaluated as
/// `b·x/log(1+x)` with `b = min`, `x = (max - min)/min ≥ 0`.
pub fn log_mean(s: f64, t: f64) -> f64 {
    let (a, b) = if s >= t { (s, t) } else { (t, s) };
    if b == 0.0 {
        return 0.0;
    }
    let x = (a - b) / b;
    if x == 0.0 {
        b
    } else {
        b * (x / x.ln_1p())
    }
}

/// `log s - log t`; through `log(1 + (s - t)/t)` when `s/t ∈ [½, 2]`,
/// where `s - t` is exact and the plain difference cancels.
pub fn log_ratio(s: f64, t: f64) -> f64 {
    if s >= 0.5 * t && s <= 2.0 * t && t > 0.0 {
        ((s - t) / t).ln_1p()
    } else {
        s.ln() - t.ln()
    }
}

/// `√s - √t` without cancellation.
fn sqrt_gap(s: f64, t: f64) -> f64 {
    let d = s.sqrt() + t.sqrt();
    if d == 0.0 {
        0.0
    } else {
        (s - t) / d
    }
}

/// `Θ(s,t) = (s - t)/(Ψ*)'(log(s/t))` built from `(Ψ*)'`.
///
/// Rejects `(Ψ*)'` that is not odd and strictly increasing on a probe grid.
pub fn derive_theta(psi_star_prime: RealFn) -> Result<impl Fn(f64, f64) -> f64 + Send + Sync + Clone> {
    let mut prev = 0.0;
    for i in 1..=400 {
        let r = 0.05 * i as f64;
        let a = psi_star_prime(r);
        let b = psi_star_prime(-r);
        if !(a > prev) || (a + b).abs() > 1e-10 * a.abs().max(1.0) {
            return input(format!("(Ψ*)' is not odd and strictly increasing near r = {r}"));
        }
        prev = a;
    }
    Ok(move |s: f64, t: f64| derived_theta(&*psi_star_prime, s, t))
}

fn derived_theta(dp: &dyn Fn(f64) -> f64, s: f64, t: f64) -> f64 {
    if s == 0.0 || t == 0.0 {
        return 0.0;
    }
    let r = log_ratio(s, t);
    if r.abs() < DIAGONAL_GAP {
        0.5 * (s + t)
    } else {
        (s - t) / dp(r)
    }
}

/// `sup_r {a r - Ψ*(r)}` by safeguarded Newton on `(Ψ*)'(r) = a`.
pub fn legendre_transform(psi_star: &dyn Fn(f64) -> f64, psi_star_prime: &dyn Fn(f64) -> f64, a: f64) -> Result<f64> {
    if !a.is_finite() {
        return input("legendre_transform needs a finite argument");
    }
    if a == 0.0 {
        return Ok(-psi_star(0.0));
    }
    // Ψ* even, so Ψ is even and the maximiser has the sign of a
    let target = a.abs();
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut doublings = 0;
    while psi_star_prime(hi) < target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 1100 || !hi.is_finite() {
            return Err(LabError::Numerical { what: "legendre_transform", detail: format!("no bracket for a = {a}") });
        }
    }
    let mut r = 0.5 * (lo + hi);
    for _ in 0..200 {
        let g = psi_star_prime(r) - target;
        if g == 0.0 {
            break;
        }
        if g > 0.0 {
            hi = r;
        } else {
            lo = r;
        }
        let h = 1e-6 * r.abs().max(1.0);
        let slope = (psi_star_prime(r + h) - psi_star_prime(r - h)) / (2.0 * h);
        let mut next = r - g / slope;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let step = (next - r).abs();
        r = next;
        if step <= 1e-15 * r.abs().max(1.0) || hi - lo <= 1e-15 * hi.max(1.0) {
            let val = target * r - psi_star(r);
            return Ok(val);
        }
    }
    let val = target * r - psi_star(r);
    if (psi_star_prime(r) - target).abs() > 1e-10 * target.max(1.0) {
        return Err(LabError::Numerical { what: "legendre_transform", detail: format!("no convergence for a = {a}") });
    }
    Ok(val)
}

fn quartic_star(r: f64) -> f64 {
    r.powi(4) / 12.0 + 0.5 * r * r
}

fn quartic_star_prime(r: f64) -> f64 {
    r.powi(3) / 3.0 + r
}

/// Names accepted for custom pairs.
pub const CUSTOM_REGISTRY: &[&str] = &["quartic", "cosh_derived"];

/// A pair induced by a named `Ψ*` from the registry.
pub fn custom_pair(psi_star_name: &str) -> Result<DualPair> {
    let (ps, psp): (RealFn, RealFn) = match psi_star_name {
        "quartic" => (Arc::new(quartic_star), Arc::new(quartic_star_prime)),
        "cosh_derived" => (Arc::new(cosh_star), Arc::new(|r: f64| 2.0 * (0.5 * r).sinh())),
        other => return input(format!("unknown custom Ψ* '{other}' (known: {CUSTOM_REGISTRY:?})")),
    };
    let _ = derive_theta(psp.clone())?;
    let mut pair = DualPair {
        name: format!("custom:{psi_star_name}"),
        kind: PairKind::Derived { psi_star: ps, psi_star_prime: psp },
        satisfies_coth: false,
    };
    pair.satisfies_coth = coth_scan(&pair).0 <= 1e-10;
    Ok(pair)
}

/// `quadratic`, `cosh`, or `custom` with a registry name.
pub fn pair_by_name(name: &str, custom: Option<&str>) -> Result<DualPair> {
    match name {
        "quadratic" => Ok(make_quadratic_pair()),
        "cosh" => Ok(make_cosh_pair()),
        "custom" => match custom {
            Some(c) => custom_pair(c),
            None => input("pair.name = custom needs pair.psi_star"),
        },
        other => input(format!("unknown pair '{other}' (quadratic, cosh, custom)")),
    }
}

fn cosh_star(r: f64) -> f64 {
    // 4(cosh(r/2) - 1) = 8 sinh²(r/4), cancellation-free
    let s = (0.25 * r).sinh();
    8.0 * s * s
}

/// `Ψ` for the cosh pair obtained as the Legendre transform of `Ψ*`:
/// `2a asinh(a/2) - 2√(a²+4) + 4`, written to avoid cancellation at small `a`.
fn cosh_psi(a: f64) -> f64 {
    let q = (a * a + 4.0).sqrt();
    2.0 * a * (0.5 * a).asinh() - 2.0 * a * a / (q + 2.0)
}

/// The closed form for the cosh `Ψ` as printed in the source, which equals
/// 2 at the origin. Kept only to document the discrepancy.
pub fn cosh_psi_printed(r: f64) -> f64 {
    let q = (r * r + 4.0).sqrt();
    2.0 * r * ((r + q) / 2.0).ln() - q + 4.0
}

impl DualPair {
    pub fn psi_star(&self, r: f64) -> f64 {
        match &self.kind {
            PairKind::Quadratic => 0.5 * r * r,
            PairKind::Cosh => cosh_star(r),
            PairKind::Derived { psi_star, .. } => psi_star(r),
        }
    }

    pub fn psi_star_prime(&self, r: f64) -> f64 {
        match &self.kind {
            PairKind::Quadratic => r,
            PairKind::Cosh => 2.0 * (0.5 * r).sinh(),
            PairKind::Derived { psi_star_prime, .. } => psi_star_prime(r),
        }
    }

    /// `Ψ(a)`: closed form for the built-in pairs, numerical Legendre otherwise.
    pub fn psi(&self, a: f64) -> Result<f64> {
        match &self.kind {
            PairKind::Quadratic => Ok(0.5 * a * a),
            PairKind::Cosh => Ok(cosh_psi(a)),
            PairKind::Derived { .. } => self.psi_legendre(a),
        }
    }

    /// `Ψ(a)` always through the numerical Legendre transform.
    pub fn psi_legendre(&self, a: f64) -> Result<f64> {
        legendre_transform(&|r| self.psi_star(r), &|r| self.psi_star_prime(r), a)
    }

    pub fn has_closed_form_psi(&self) -> bool {
        !matches!(self.kind, PairKind::Derived { .. })
    }

    pub fn theta(&self, s: f64, t: f64) -> f64 {
        match &self.kind {
            PairKind::Quadratic => log_mean(s, t),
            PairKind::Cosh => (s * t).sqrt(),
            PairKind::Derived { psi_star_prime, .. } => derived_theta(&**psi_star_prime, s, t),
        }
    }

    /// `Θ(e^Δ, 1)`, the mean relative to its second argument.
    pub fn theta_exp(&self, delta: f64) -> f64 {
        if delta.abs() < DIAGONAL_GAP {
            return match &self.kind {
                PairKind::Quadratic => 1.0 + delta / 2.0 + delta * delta / 6.0,
                PairKind::Cosh => (0.5 * delta).exp(),
                PairKind::Derived { .. } => 1.0 + 0.5 * delta,
            };
        }
        match &self.kind {
            PairKind::Quadratic => delta.exp_m1() / delta,
            PairKind::Cosh => (0.5 * delta).exp(),
            PairKind::Derived { psi_star_prime, .. } => delta.exp_m1() / psi_star_prime(delta),
        }
    }

    /// `G_{Ψ*}(s,t) = ¼ Ψ*(log s - log t) Θ(s,t)`.
    pub fn g(&self, s: f64, t: f64) -> f64 {
        if s == 0.0 || t == 0.0 {
            return 0.0;
        }
        0.25 * self.psi_star(log_ratio(s, t)) * self.theta(s, t)
    }

    /// Tight constant in `Θ(s,t) ≤ C(s+t)`: `sup_r tanh(r/2)/(Ψ*)'(r)`.
    pub fn mean_constant(&self) -> f64 {
        let mut c: f64 = 0.5;
        for i in 0..=4000 {
            let r = 10f64.powf(-6.0 + 8.0 * i as f64 / 4000.0);
            c = c.max((0.5 * r).tanh() / self.psi_star_prime(r));
        }
        c
    }
}

/// Largest relative excess of `(log Ψ*)'(r)` over `coth(r/4)/2` on `(0, 20]`,
/// and the largest relative deviation in either direction.
fn coth_scan(pair: &DualPair) -> (f64, f64) {
    let mut excess = f64::NEG_INFINITY;
    let mut dev: f64 = 0.0;
    for i in 1..=2000 {
        let r = 20.0 * i as f64 / 2000.0;
        let lhs = pair.psi_star_prime(r) / pair.psi_star(r);
        let rhs = 0.5 / (0.25 * r).tanh();
        let rel = (lhs - rhs) / rhs;
        excess = excess.max(rel);
        dev = dev.max(rel.abs());
    }
    (excess, dev)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub worst_residual: f64,
    pub tolerance: f64,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PairReport {
    pub pair: String,
    pub mean_constant: f64,
    pub satisfies_coth: bool,
    pub coth_equality: bool,
    pub checks: Vec<CheckResult>,
}

impl PairReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn push(out: &mut Vec<CheckResult>, name: &str, worst: f64, tol: f64, note: impl Into<String>) {
    out.push(CheckResult { name: name.into(), passed: worst <= tol, worst_residual: worst, tolerance: tol, note: note.into() });
}

/// Random points in `(0, 10]²`.
fn random_pairs(rng: &mut ChaCha8Rng, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|_| (10.0 * (1.0 - rng.random::<f64>()), 10.0 * (1.0 - rng.random::<f64>())))
        .collect()
}

/// Runs every pair condition and reports worst-case residuals.
pub fn check_pair(pair: &DualPair, seed: u64) -> Result<PairReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    push(&mut out, "psi_star_zero", pair.psi_star(0.0).abs(), 1e-15, "Ψ*(0) = 0");

    let mut w: f64 = 0.0;
    for i in 0..=400 {
        let r = -20.0 + 0.1 * i as f64;
        let a = pair.psi_star(r);
        w = w.max((a - pair.psi_star(-r)).abs() / a.abs().max(1.0));
    }
    push(&mut out, "psi_star_even", w, 1e-12, "Ψ*(r) = Ψ*(-r) on [-20, 20]");

    let h = 1e-4;
    let d2 = (pair.psi_star(h) - 2.0 * pair.psi_star(0.0) + pair.psi_star(-h)) / (h * h);
    push(&mut out, "psi_star_curvature", (d2 - 1.0).abs(), 1e-6, "(Ψ*)''(0) = 1 by second differences");

    let pts = random_pairs(&mut rng, 10_000);
    let mut w: f64 = 0.0;
    for &(s, t) in &pts {
        let lhs = pair.psi_star_prime(log_ratio(s, t)) * pair.theta(s, t);
        let scale = (s - t).abs().max(f64::EPSILON * (s + t));
        w = w.max((lhs - (s - t)).abs() / scale);
    }
    push(&mut out, "compatibility", w, 1e-10, "(Ψ*)'(log s - log t)Θ(s,t) = s - t, relative to |s - t|");

    let mut ws: f64 = 0.0;
    let mut wh: f64 = 0.0;
    for &(s, t) in pts.iter().take(1000) {
        let th = pair.theta(s, t);
        ws = ws.max((th - pair.theta(t, s)).abs() / th.max(1e-300));
        let lam = 0.1 + 5.0 * rng.random::<f64>();
        wh = wh.max((pair.theta(lam * s, lam * t) - lam * th).abs() / (lam * th));
    }
    push(&mut out, "theta_symmetric", ws, 1e-12, "Θ(s,t) = Θ(t,s)");
    push(&mut out, "theta_homogeneous", wh, 1e-12, "Θ(λs,λt) = λΘ(s,t)");
    let wd = [0.5, 1.0, 3.0]
        .iter()
        .map(|&t| (pair.theta(t, t) - t).abs() / t)
        .fold(0.0, f64::max);
    push(&mut out, "theta_diagonal", wd, 1e-14, "Θ(t,t) = t at t = 0.5, 1, 3 (Θ(1,1) = 1)");
    let wz = [0.5, 1.0, 3.0].iter().map(|&t| pair.theta(0.0, t).abs()).fold(0.0, f64::max);
    push(&mut out, "theta_zero", wz, 0.0, "Θ(0,t) = 0");

    // Fenchel on a 20×20 grid and equality along a = (Ψ*)'(b)
    let mut wf: f64 = 0.0;
    let mut we: f64 = 0.0;
    let mut wl: f64 = 0.0;
    for i in 0..20 {
        let b = -5.0 + 10.0 * i as f64 / 19.0;
        for j in 0..20 {
            let a = -5.0 + 10.0 * j as f64 / 19.0;
            let gap = pair.psi(a)? + pair.psi_star(b) - a * b;
            wf = wf.max(-gap / (a * b).abs().max(1.0));
        }
        let a = pair.psi_star_prime(b);
        let gap = pair.psi(a)? + pair.psi_star(b) - a * b;
        we = we.max(gap.abs() / (a * b).abs().max(1.0));
        if pair.has_closed_form_psi() {
            let c = pair.psi(a)?;
            wl = wl.max((c - pair.psi_legendre(a)?).abs() / c.abs().max(1.0));
        }
    }
    push(&mut out, "fenchel_inequality", wf, 1e-8, "Ψ(a) + Ψ*(b) ≥ ab on a 20×20 grid");
    push(&mut out, "fenchel_equality", we, 1e-8, "equality at a = (Ψ*)'(b)");
    if pair.has_closed_form_psi() {
        push(&mut out, "psi_closed_form_vs_legendre", wl, 1e-8, "closed-form Ψ against the numerical sup");
    }

    let c = pair.mean_constant();
    let mut w: f64 = 0.0;
    for &(s, t) in &pts {
        w = w.max((pair.theta(s, t) - c * (s + t)) / (c * (s + t)));
    }
    push(&mut out, "mean_bound", w.max(0.0), 1e-12, format!("Θ(s,t) ≤ C(s+t) with C = {c}"));

    let mut wc: f64 = 0.0;
    let mut wg: f64 = 0.0;
    for _ in 0..1000 {
        let ends = random_pairs(&mut rng, 2);
        let (a, b) = (ends[0], ends[1]);
        let m = (0.5 * (a.0 + b.0), 0.5 * (a.1 + b.1));
        let (ta, tb, tm) = (pair.theta(a.0, a.1), pair.theta(b.0, b.1), pair.theta(m.0, m.1));
        wc = wc.max((0.5 * (ta + tb) - tm) / tm.max(1e-300));
        let (ga, gb, gm) = (pair.g(a.0, a.1), pair.g(b.0, b.1), pair.g(m.0, m.1));
        wg = wg.max((gm - 0.5 * (ga + gb)) / (0.5 * (ga + gb)).max(1e-12));
    }
    push(&mut out, "theta_concave", wc.max(0.0), 1e-12, "midpoint concavity of Θ on 10³ segments");
    push(&mut out, "g_convex", wg.max(0.0), 1e-12, "midpoint convexity of G_Ψ* on 10³ segments");

    let (excess, dev) = coth_scan(pair);
    let coth_equality = dev <= 1e-10;
    push(
        &mut out,
        "coth_condition",
        excess.max(0.0),
        1e-10,
        if coth_equality { "(log Ψ*)' ≤ coth(r/4)/2 holds with equality" } else { "(log Ψ*)' ≤ coth(r/4)/2 on (0, 20]" },
    );

    if pair.satisfies_coth {
        let mut w: f64 = 0.0;
        for &(s, t) in &pts {
            let lhs = 2.0 * sqrt_gap(s, t).powi(2);
            let rhs = pair.psi_star(log_ratio(s, t)) * pair.theta(s, t);
            w = w.max((lhs - rhs) / rhs.max(1e-300));
        }
        push(&mut out, "pair_lower_bound", w.max(0.0), 1e-10, "2|√s - √t|² ≤ Ψ*(log s - log t)Θ(s,t)");
    }

    let mut wd: f64 = 0.0;
    let mut wel: f64 = 0.0;
    for &(s, t) in &pts {
        let r = log_ratio(s, t);
        let full = (s - t) * r;
        wd = wd.max((pair.psi_star(r) * pair.theta(s, t) - full) / full.max(1e-300));
        wel = wel.max((sqrt_gap(s, t).powi(2) - 0.25 * full) / full.max(1e-300));
    }
    push(&mut out, "dpsi_below_db", wd.max(0.0), 1e-12, "Ψ*(log s - log t)Θ ≤ (s - t)(log s - log t)");
    push(&mut out, "elementary_inequality", wel.max(0.0), 1e-12, "|√s - √t|² ≤ ¼(s - t)(log s - log t)");

    let mut prev = 0.0;
    let mut wm: f64 = 0.0;
    for i in 1..=400 {
        let r = 0.05 * i as f64;
        let q = pair.psi(r)? / r;
        wm = wm.max((prev - q) / q.abs().max(1e-300));
        prev = q;
    }
    push(&mut out, "psi_over_r_monotone", wm.max(0.0), 1e-12, "Ψ(r)/r non-decreasing on (0, 20]");

    Ok(PairReport {
        pair: pair.name.clone(),
        mean_constant: c,
        satisfies_coth: pair.satisfies_coth,
        coth_equality,
        checks: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_examples() {
        let q = make_quadratic_pair();
        let e = std::f64::consts::E;
        assert!((q.theta(e, 1.0) - (e - 1.0)).abs() < 1e-15);
        for t in [0.5, 1.0, 3.0] {
            assert_eq!(q.theta(t, t), t);
        }
        assert!(((2.5f64).ln() * q.theta(5.0, 2.0) - 3.0).abs() < 1e-12);
        assert_eq!(q.psi(3.0).unwrap(), 4.5);
        assert!((q.psi_legendre(3.0).unwrap() - 4.5).abs() < 1e-10);
    }

    #[test]
    fn cosh_examples() {
        let c = make_cosh_pair();
        assert!((c.psi_star(2.0) - 2.172_322_539_260_975).abs() < 1e-12);
        let e2 = std::f64::consts::E.powi(2);
        assert!((c.psi_star_prime(2.0) * c.theta(e2, 1.0) - (e2 - 1.0)).abs() < 1e-12);
        assert_eq!(c.theta(4.0, 1.0), 2.0);
        assert_eq!(c.psi(0.0).unwrap(), 0.0);
        assert!(c.psi_legendre(0.0).unwrap().abs() < 1e-15);
        // the printed closed form exceeds the transform by √(r²+4)
        assert!((cosh_psi_printed(0.0) - 2.0).abs() < 1e-15);
        for a in [0.3, 1.0, 4.0] {
            let q = (a * a + 4.0f64).sqrt();
            assert!((cosh_psi_printed(a) - c.psi(a).unwrap() - q).abs() < 1e-12);
            assert!((c.psi(a).unwrap() - c.psi_legendre(a).unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn built_in_pairs_pass_on_every_seed() {
        for seed in 0..20 {
            for pair in [make_quadratic_pair(), make_cosh_pair()] {
                let r = check_pair(&pair, seed).unwrap();
                let failed: Vec<_> = r.checks.iter().filter(|c| !c.passed).map(|c| (&c.name, c.worst_residual)).collect();
                assert!(failed.is_empty(), "{} seed {seed}: {failed:?}", pair.name);
            }
        }
    }

    #[test]
    fn log_ratio_matches_difference_of_logs() {
        for (s, t) in [(5.0f64, 2.0f64), (1e-3, 7.0), (1.0, 1.0)] {
            assert!((log_ratio(s, t) - (s.ln() - t.ln())).abs() <= 1e-15 * (1.0 + s.ln().abs() + t.ln().abs()));
        }
        // near the diagonal: log(1 + h) = h - h²/2 + h³/3 - …, with s = t(1 + h) exact
        let h = 2f64.powi(-30);
        let t = 4.0;
        let series = h - h * h / 2.0 + h * h * h / 3.0;
        assert!((log_ratio(t * (1.0 + h), t) - series).abs() <= 2e-16 * h);
        assert_eq!(log_ratio(0.0, 1.0), f64::NEG_INFINITY);
    }

    #[test]
    fn log_mean_near_diagonal() {
        // x/log(1+x) = 1 + x/2 - x²/12 + x³/24 - 19x⁴/720 + O(x⁵)
        for h0 in [1e-12f64, 1e-9, 3e-8, 1e-6, 1e-4] {
            for t in [0.25, 1.0, 8.0] {
                let s = t * (1.0 + h0);
                // s - t is exact; t is a power of two
                let h = (s - t) / t;
                let series = 1.0 + h / 2.0 - h * h / 12.0 + h * h * h / 24.0 - 19.0 * h.powi(4) / 720.0;
                let got = log_mean(s, t);
                assert!((got / (t * series) - 1.0).abs() < 4e-16, "h={h} t={t}");
                assert_eq!(got, log_mean(t, s));
            }
        }
        assert_eq!(log_mean(2.5, 2.5), 2.5);
    }

    #[test]
    fn derived_theta_recovers_builtins() {
        let lm = derive_theta(Arc::new(|r| r)).unwrap();
        let gm = derive_theta(Arc::new(|r: f64| 2.0 * (0.5 * r).sinh())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (s, t) in random_pairs(&mut rng, 1000) {
            assert!((lm(s, t) - log_mean(s, t)).abs() <= 1e-12 * log_mean(s, t));
            assert!((gm(s, t) - (s * t).sqrt()).abs() <= 1e-12 * (s * t).sqrt());
        }
        assert_eq!(lm(0.0, 2.0), 0.0);
        assert!(derive_theta(Arc::new(|r: f64| r.sin())).is_err());
    }

    #[test]
    fn theta_exp_matches_theta() {
        for p in [make_quadratic_pair(), make_cosh_pair(), custom_pair("quartic").unwrap()] {
            for d in [-3.0, -1e-9, 0.0, 2e-9, 0.4, 5.0] {
                let a = p.theta_exp(d);
                let b = p.theta(f64::exp(d), 1.0);
                assert!((a - b).abs() <= 1e-12 * b, "{} {d}: {a} {b}", p.name);
            }
        }
    }
}

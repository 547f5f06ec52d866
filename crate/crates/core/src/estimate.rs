//! Quadrature results and the streaming accumulator behind them.

use serde::Serialize;

/// Rejected-draw fraction above which an estimate is flagged.
pub const UNRELIABLE_FRACTION: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    MonteCarlo,
    TensorGrid,
    /// Analytic value; error is zero.
    ClosedForm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: u64,
    pub method: Method,
    pub rejected: u64,
    pub unreliable: bool,
    /// Degenerate draws (`v = v*`) that were redrawn.
    pub resampled: u64,
}

impl Estimate {
    pub fn exact(value: f64, method: Method) -> Self {
        Self { value, std_error: 0.0, n_samples: 0, method, rejected: 0, unreliable: false, resampled: 0 }
    }

    /// `|self - other| ≤ k·√(se₁² + se₂²)`.
    pub fn agrees_with(&self, other: &Estimate, k: f64) -> bool {
        (self.value - other.value).abs() <= k * self.combined_error(other)
    }

    pub fn combined_error(&self, other: &Estimate) -> f64 {
        self.std_error.hypot(other.std_error)
    }

    pub fn scaled(mut self, a: f64) -> Self {
        self.value *= a;
        self.std_error *= a.abs();
        self
    }

    /// `z`-score of the difference to `other`.
    pub fn z_score(&self, other: &Estimate) -> f64 {
        let e = self.combined_error(other);
        if e == 0.0 {
            if self.value == other.value {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.value - other.value) / e
        }
    }
}

/// Streaming mean and variance.
///
/// The mean is a plain running sum divided by the count, so per-sample
/// orderings `a_i ≤ b_i` survive into the means of two streams fed in the
/// same order. The variance uses Welford's update.
#[derive(Clone, Copy, Debug, Default)]
pub struct Accumulator {
    pub n: u64,
    sum: f64,
    w_mean: f64,
    m2: f64,
    pub rejected: u64,
}

impl Accumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        let delta = x - self.w_mean;
        self.w_mean += delta / self.n as f64;
        self.m2 += delta * (x - self.w_mean);
    }

    /// Records a draw whose contribution was not finite.
    pub fn reject(&mut self) {
        self.rejected += 1;
    }

    /// Accepts `x` if finite, otherwise counts a rejection.
    pub fn push_checked(&mut self, x: f64) {
        if x.is_finite() {
            self.push(x);
        } else {
            self.reject();
        }
    }

    /// Chan's pairwise combine.
    pub fn merge(&mut self, o: &Accumulator) {
        if o.n == 0 {
            self.rejected += o.rejected;
            return;
        }
        if self.n == 0 {
            let rej = self.rejected;
            *self = *o;
            self.rejected += rej;
            return;
        }
        let n = self.n + o.n;
        let delta = o.w_mean - self.w_mean;
        self.m2 += o.m2 + delta * delta * (self.n as f64) * (o.n as f64) / n as f64;
        self.w_mean += delta * o.n as f64 / n as f64;
        self.sum += o.sum;
        self.n = n;
        self.rejected += o.rejected;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn finish(&self) -> Estimate {
        let total = self.n + self.rejected;
        let frac = if total == 0 { 1.0 } else { self.rejected as f64 / total as f64 };
        Estimate {
            value: self.mean(),
            std_error: (self.variance() / self.n.max(1) as f64).sqrt(),
            n_samples: self.n,
            method: Method::MonteCarlo,
            rejected: self.rejected,
            unreliable: self.n == 0 || frac > UNRELIABLE_FRACTION,
            resampled: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_matches_single_pass() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37 % 101) as f64).sin() * 3.0 + 1.0).collect();
        let mut all = Accumulator::new();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Accumulator::new();
        let mut b = Accumulator::new();
        xs[..313].iter().for_each(|&x| a.push(x));
        xs[313..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.n, all.n);
        assert!((a.mean() - all.mean()).abs() < 1e-14);
        assert!((a.variance() - all.variance()).abs() < 1e-12 * all.variance());
    }

    #[test]
    fn rejection_flags_unreliable() {
        let mut a = Accumulator::new();
        for i in 0..1000 {
            a.push_checked(if i % 100 == 0 { f64::NAN } else { 1.0 });
        }
        let e = a.finish();
        assert_eq!(e.rejected, 10);
        assert!(e.unreliable);
        assert_eq!(e.value, 1.0);
    }
}

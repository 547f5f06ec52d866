//! k-nearest-neighbour distances with a small kd-tree, and the
//! Kozachenko–Leonenko entropy estimator built on them.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{input, Result};
use crate::numerics::{cholesky, digamma, ln_gamma};

/// Largest supported point dimension (phase space of `d = 3`).
pub const MAX_DIM: usize = 6;
const LEAF_SIZE: usize = 8;

type Point = [f64; MAX_DIM];

enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// A static kd-tree over points in `R^n`, `n ≤ 6`.
pub struct KdTree {
    pts: Vec<Point>,
    dim: usize,
    idx: Vec<usize>,
    nodes: Vec<Node>,
}

fn dist_sq(a: &Point, b: &Point, n: usize) -> f64 {
    (0..n).map(|i| (a[i] - b[i]) * (a[i] - b[i])).sum()
}

impl KdTree {
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.len());
        if dim == 0 || dim > MAX_DIM {
            return input(format!("kd-tree needs points of dimension 1..={MAX_DIM}"));
        }
        let mut pts = Vec::with_capacity(points.len());
        for p in points {
            if p.len() != dim || p.iter().any(|c| !c.is_finite()) {
                return input("kd-tree points must share a dimension and be finite");
            }
            let mut a = [0.0; MAX_DIM];
            a[..dim].copy_from_slice(p);
            pts.push(a);
        }
        let mut tree = Self { idx: (0..pts.len()).collect(), pts, dim, nodes: Vec::new() };
        let n = tree.pts.len();
        tree.build(0, n);
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        // split the widest axis at its median
        let mut axis = 0;
        let mut spread = -1.0;
        for a in 0..self.dim {
            let (lo, hi) = self.idx[start..end]
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(self.pts[i][a]), hi.max(self.pts[i][a])));
            if hi - lo > spread {
                spread = hi - lo;
                axis = a;
            }
        }
        let mid = start + (end - start) / 2;
        let pts = &self.pts;
        self.idx[start..end].select_nth_unstable_by(mid - start, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]));
        let value = self.pts[self.idx[mid]][axis];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { axis, value, left, right };
        id
    }

    /// Squared distances to the `k` nearest other points of point `i`, ascending.
    pub fn knn_of(&self, i: usize, k: usize) -> Vec<f64> {
        let mut best = vec![f64::INFINITY; k];
        self.search(0, &self.pts[i], i, &mut best);
        best
    }

    fn search(&self, node: usize, q: &Point, skip: usize, best: &mut [f64]) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.idx[start..end] {
                    if j == skip {
                        continue;
                    }
                    let d = dist_sq(q, &self.pts[j], self.dim);
                    let k = best.len();
                    if d < best[k - 1] {
                        let mut pos = k - 1;
                        while pos > 0 && best[pos - 1] > d {
                            best[pos] = best[pos - 1];
                            pos -= 1;
                        }
                        best[pos] = d;
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, skip, best);
                if diff * diff <= best[best.len() - 1] {
                    self.search(far, q, skip, best);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct KnnEntropy {
    /// Estimate of `∫ f log f`.
    pub value: f64,
    pub std_error: f64,
    pub n: usize,
    pub k: usize,
    /// Points whose k-th neighbour coincided with them.
    pub zero_distances: usize,
}

/// Kozachenko–Leonenko estimate of `∫ f log f` from samples of `f`.
///
/// With `whiten`, points are first mapped through the inverse Cholesky
/// factor of their sample covariance and the log-determinant is added back.
pub fn entropy_knn(points: &[Vec<f64>], k: usize, whiten: bool) -> Result<KnnEntropy> {
    let big_n = points.len();
    if k < 1 || big_n <= k {
        return input(format!("entropy_knn needs N > k ≥ 1 (N = {big_n}, k = {k})"));
    }
    let n = points[0].len();
    let (pts, log_det) = if whiten { whitened(points)? } else { (points.to_vec(), 0.0) };
    let tree = KdTree::new(&pts)?;
    let mut log_eps: Vec<f64> = (0..big_n).into_par_iter().map(|i| 0.5 * tree.knn_of(i, k)[k - 1].ln()).collect();
    let zero_distances = log_eps.iter().filter(|l| !l.is_finite()).count();
    if zero_distances > 0 {
        let floor = log_eps.iter().copied().filter(|l| l.is_finite()).fold(f64::INFINITY, f64::min);
        if !floor.is_finite() {
            return input("entropy_knn: all neighbour distances vanish");
        }
        log::warn!("entropy_knn: {zero_distances} duplicate points, distances floored at the minimum positive one");
        for l in log_eps.iter_mut().filter(|l| !l.is_finite()) {
            *l = floor;
        }
    }
    let nf = n as f64;
    let log_unit_ball = 0.5 * nf * std::f64::consts::PI.ln() - ln_gamma(0.5 * nf + 1.0);
    let mean = log_eps.iter().sum::<f64>() / big_n as f64;
    let var = log_eps.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (big_n - 1) as f64;
    let h_diff = digamma(big_n as f64) - digamma(k as f64) + log_unit_ball + nf * mean + log_det;
    Ok(KnnEntropy { value: -h_diff, std_error: nf * (var / big_n as f64).sqrt(), n: big_n, k, zero_distances })
}

/// Whitened copy of the points and `log det L` of the covariance factor.
fn whitened(points: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, f64)> {
    let n = points[0].len();
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
    let l = match cholesky(&cov, n) {
        Some(l) => l,
        None => return input("entropy_knn: sample covariance is singular, cannot whiten"),
    };
    let log_det = (0..n).map(|i| l[i * n + i].ln()).sum();
    let out = points
        .iter()
        .map(|p| {
            // forward substitution L y = p - mean
            let mut y = vec![0.0; n];
            for i in 0..n {
                let mut s = p[i] - mean[i];
                for j in 0..i {
                    s -= l[i * n + j] * y[j];
                }
                y[i] = s / l[i * n + i];
            }
            y
        })
        .collect();
    Ok((out, log_det))
}

#![allow(dead_code)]

//! Brute-force reference implementations used only by tests.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfnn_core::randnn::{fit, gen_standard, hidden_output};

pub type Rows = Vec<Vec<f64>>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Rows {
    (0..rows).map(|_| (0..cols).map(|_| rng.random_range(lo..hi)).collect()).collect()
}

pub fn transpose(a: &[Vec<f64>]) -> Rows {
    let cols = a.first().map_or(0, Vec::len);
    (0..cols).map(|j| a.iter().map(|r| r[j]).collect()).collect()
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Rows {
    let inner = b.len();
    let cols = b.first().map_or(0, Vec::len);
    a.iter().map(|row| (0..cols).map(|j| (0..inner).map(|k| row[k] * b[k][j]).sum()).collect()).collect()
}

/// Solves `A X = B` for symmetric positive definite `A` by a textbook
/// Cholesky factorisation.
pub fn cholesky_solve(a: &[Vec<f64>], b: &[Vec<f64>]) -> Rows {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                assert!(d > 0.0, "matrix not positive definite");
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    let cols = b[0].len();
    let mut x = vec![vec![0.0; cols]; n];
    for c in 0..cols {
        let mut z = vec![0.0; n];
        for i in 0..n {
            z[i] = (b[i][c] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
        }
        for i in (0..n).rev() {
            x[i][c] = (z[i] - (i + 1..n).map(|k| l[k][i] * x[k][c]).sum::<f64>()) / l[i][i];
        }
    }
    x
}

/// Ridge least squares `argmin ‖HB − Y‖² + λ‖B‖²`, solved on whichever of the
/// primal or dual normal equations is smaller.
pub fn ridge_oracle(h: &[Vec<f64>], y: &[Vec<f64>], lambda: f64) -> Rows {
    let (rows, cols) = (h.len(), h[0].len());
    let ht = transpose(h);
    if cols <= rows {
        let mut g = matmul(&ht, h);
        (0..cols).for_each(|i| g[i][i] += lambda);
        cholesky_solve(&g, &matmul(&ht, y))
    } else {
        let mut g = matmul(h, &ht);
        (0..rows).for_each(|i| g[i][i] += lambda);
        matmul(&ht, &cholesky_solve(&g, y))
    }
}

pub fn residual_norm(h: &[Vec<f64>], b: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    matmul(h, b).iter().zip(y).flat_map(|(p, t)| p.iter().zip(t).map(|(a, b)| (a - b) * (a - b))).sum::<f64>().sqrt()
}

/// Ordinary least squares with intercept through the normal equations.
pub fn ols_with_intercept(xs: &[Vec<f64>], ys: &[f64]) -> (Vec<f64>, f64) {
    let design: Rows = xs.iter().map(|x| x.iter().copied().chain(std::iter::once(1.0)).collect()).collect();
    let targets: Rows = ys.iter().map(|&v| vec![v]).collect();
    let dt = transpose(&design);
    let sol = cholesky_solve(&matmul(&dt, &design), &matmul(&dt, &targets));
    let n = xs[0].len();
    ((0..n).map(|i| sol[i][0]).collect(), sol[n][0])
}

/// Doubled midranks of `|d|` for the non-zero entries, by pairwise counting.
pub fn doubled_midranks(diffs: &[f64]) -> Vec<(u64, bool)> {
    let nz: Vec<f64> = diffs.iter().copied().filter(|d| *d != 0.0).collect();
    nz.iter()
        .map(|d| {
            let below = nz.iter().filter(|o| o.abs() < d.abs()).count() as u64;
            let equal = nz.iter().filter(|o| o.abs() == d.abs()).count() as u64;
            // midrank = below + (equal + 1) / 2
            (2 * below + equal + 1, *d > 0.0)
        })
        .collect()
}

/// Two-sided signed-rank p-value by enumerating every sign pattern.
pub fn wilcoxon_enumerated_p(diffs: &[f64]) -> f64 {
    let ranked = doubled_midranks(diffs);
    let n = ranked.len();
    let observed: u64 = ranked.iter().filter(|r| r.1).map(|r| r.0).sum();
    let (mut lower, mut upper) = (0u64, 0u64);
    for mask in 0u64..(1 << n) {
        let w: u64 = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| ranked[i].0).sum();
        lower += u64::from(w <= observed);
        upper += u64::from(w >= observed);
    }
    (2.0 * lower.min(upper) as f64 / (1u64 << n) as f64).min(1.0)
}

/// Extreme singular values of `h` from the symmetric eigenvalues of the
/// smaller Gram matrix; independent of any SVD routine.
pub fn singular_value_range(h: &[Vec<f64>]) -> (f64, f64) {
    let (rows, cols) = (h.len(), h[0].len());
    let g = if rows <= cols { matmul(h, &transpose(h)) } else { matmul(&transpose(h), h) };
    let k = g.len();
    let eig = DMatrix::from_fn(k, k, |i, j| g[i][j]).symmetric_eigenvalues();
    let max = eig.max().max(0.0).sqrt();
    let min = eig.min().max(0.0).sqrt();
    (min, max)
}

/// Outcome of one random least-squares instance.
pub struct LsCase {
    pub rows: usize,
    pub cols: usize,
    pub ours: f64,
    pub oracle: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub y_norm: f64,
}

impl LsCase {
    /// The ridge penalty raises the residual by at most about
    /// `λ‖Y‖/σ_min²`; when that is far below the tolerance the oracle is a
    /// faithful least-squares reference.
    pub fn oracle_is_faithful(&self, lambda: f64) -> bool {
        self.sigma_min > 0.0 && lambda * self.y_norm / (self.sigma_min * self.sigma_min) <= 1e-7
    }

    /// Numerically full row rank with at least as many nodes as patterns.
    pub fn interpolating(&self) -> bool {
        self.cols >= self.rows && self.sigma_min >= 1e-6 * self.sigma_max
    }
}

/// Random network fit with `N ∈ [5,40]`, `m ∈ [1,60]`, `n ∈ [1,24]`, scored
/// against the ridge oracle.
pub fn least_squares_case(r: &mut ChaCha8Rng, seed: u64, lambda: f64) -> LsCase {
    let big_n = r.random_range(5..=40);
    let m = r.random_range(1..=60);
    let n = r.random_range(1..=24);
    let u = r.random_range(1.0..10.0);
    let xs = random_rows(r, big_n, n, -1.0, 1.0);
    let ys = random_rows(r, big_n, n, -1.0, 1.0);
    let layer = gen_standard(m, n, u, seed).unwrap();
    let h = hidden_output(&layer, &xs).unwrap().to_rows();
    let beta = fit(layer, &xs, &ys).unwrap().beta.to_rows();
    let oracle = ridge_oracle(&h, &ys, lambda);
    let (sigma_min, sigma_max) = singular_value_range(&h);
    LsCase {
        rows: big_n,
        cols: m,
        ours: residual_norm(&h, &beta, &ys),
        oracle: residual_norm(&h, &oracle, &ys),
        sigma_min,
        sigma_max,
        y_norm: ys.iter().flatten().map(|v| v * v).sum::<f64>().sqrt(),
    }
}

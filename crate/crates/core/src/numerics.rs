//! Numerical kernels shared by the network code.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Dense real matrix with finite entries only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix(DMatrix::zeros(rows, cols))
    }

    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        for c in 0..m.ncols() {
            for r in 0..m.nrows() {
                if !m[(r, c)].is_finite() {
                    return Err(Error::NonFinite { row: r, col: c });
                }
            }
        }
        Ok(Matrix(m))
    }

    /// Builds a matrix from equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.as_ref().len());
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.as_ref().len() != ncols) {
            return Err(Error::Shape(format!("row {i} has length {}, expected {ncols}", r.as_ref().len())));
        }
        Self::from_dmatrix(DMatrix::from_fn(nrows, ncols, |r, c| rows[r].as_ref()[c]))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    pub fn row(&self, row: usize) -> Vec<f64> {
        self.0.row(row).iter().copied().collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|r| self.row(r)).collect()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    /// Frobenius norm of `self * b - y`.
    pub fn residual_norm(&self, b: &Matrix, y: &Matrix) -> f64 {
        (&self.0 * &b.0 - &y.0).norm()
    }
}

impl TryFrom<Vec<Vec<f64>>> for Matrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Matrix::from_rows(&rows)
    }
}

impl From<Matrix> for Vec<Vec<f64>> {
    fn from(m: Matrix) -> Self {
        m.to_rows()
    }
}

/// Logistic sigmoid, evaluated without overflow for large |z|.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Default relative singular-value cutoff: `max(rows, cols) * EPSILON`.
pub fn default_tolerance(h: &Matrix) -> f64 {
    h.rows().max(h.cols()) as f64 * f64::EPSILON
}

/// Minimum-norm least-squares solution `B = H⁺ Y` through the thin SVD of `H`.
/// Singular values below `tol * σ_max` are treated as zero.
pub fn pinv_solve(h: &Matrix, y: &Matrix, tol: f64) -> Result<Matrix> {
    if h.rows() != y.rows() {
        return Err(Error::Shape(format!("H has {} rows but Y has {}", h.rows(), y.rows())));
    }
    if h.rows() == 0 || h.cols() == 0 {
        return Ok(Matrix::zeros(h.cols(), y.cols()));
    }
    let a = faer::Mat::<f64>::from_fn(h.rows(), h.cols(), |i, j| h.0[(i, j)]);
    let svd = a.thin_svd().map_err(|e| Error::Shape(format!("SVD did not converge: {e:?}")))?;
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    let sigma_max = (0..s.nrows()).map(|i| s[i]).fold(0.0, f64::max);
    if sigma_max == 0.0 {
        return Ok(Matrix::zeros(h.cols(), y.cols()));
    }
    let cutoff = tol * sigma_max;
    // B = Σ_i v_i (u_iᵀ Y) / σ_i over the retained singular triplets
    let mut beta = DMatrix::zeros(h.cols(), y.cols());
    for i in (0..s.nrows()).filter(|&i| s[i] > cutoff) {
        for c in 0..y.cols() {
            let coef = (0..h.rows()).map(|r| u[(r, i)] * y.0[(r, c)]).sum::<f64>() / s[i];
            for r in 0..h.cols() {
                beta[(r, c)] += v[(r, i)] * coef;
            }
        }
    }
    Matrix::from_dmatrix(beta)
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` points nearest to `query` in Euclidean distance, closest
/// first; ties go to the lower index. `skip` removes one point (the query's own
/// index when it is a member of `points`).
pub fn knn<P: AsRef<[f64]>>(points: &[P], query: &[f64], k: usize, skip: Option<usize>) -> Result<Vec<usize>> {
    let available = points.len() - usize::from(skip.is_some_and(|s| s < points.len()));
    if k == 0 || k > available {
        return param(format!("k = {k} but only {available} candidate points"));
    }
    let mut dist: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != skip)
        .map(|(i, p)| {
            let p = p.as_ref();
            if p.len() != query.len() {
                return Err(Error::Shape(format!("point {i} has dimension {}, query has {}", p.len(), query.len())));
            }
            Ok((squared_distance(p, query), i))
        })
        .collect::<Result<_>>()?;
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < dist.len() {
        dist.select_nth_unstable_by(k - 1, cmp);
        dist.truncate(k);
    }
    dist.sort_by(cmp);
    Ok(dist.into_iter().map(|(_, i)| i).collect())
}

/// Least-squares hyperplane `t ≈ coeffs · x + intercept`. Returns the
/// minimum-norm solution when the system is underdetermined.
pub fn fit_hyperplane<P: AsRef<[f64]>>(inputs: &[P], targets: &[f64]) -> Result<(Vec<f64>, f64)> {
    if inputs.is_empty() {
        return param("hyperplane fit needs at least one point");
    }
    if inputs.len() != targets.len() {
        return Err(Error::Shape(format!("{} inputs but {} targets", inputs.len(), targets.len())));
    }
    let dim = inputs[0].as_ref().len();
    let design: Vec<Vec<f64>> = inputs
        .iter()
        .map(|x| {
            let mut row = x.as_ref().to_vec();
            row.push(1.0);
            row
        })
        .collect();
    let design = Matrix::from_rows(&design)?;
    let t = Matrix::from_dmatrix(DMatrix::from_column_slice(targets.len(), 1, targets))?;
    let sol = pinv_solve(&design, &t, default_tolerance(&design))?;
    let coeffs = (0..dim).map(|i| sol.get(i, 0)).collect();
    Ok((coeffs, sol.get(dim, 0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
        (0..rows).map(|_| (0..cols).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn sigmoid_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!((sigmoid(40.0) - 1.0).abs() < 1e-15);
        // 1 / (1 + e^-1)
        assert!((sigmoid(1.0) - 0.7310585786300049).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    proptest! {
        #[test]
        fn sigmoid_is_symmetric(z in -50.0f64..50.0) {
            prop_assert!((sigmoid(-z) - (1.0 - sigmoid(z))).abs() <= 1e-15);
        }

        #[test]
        fn knn_is_permutation_consistent(seed in 0u64..500, k in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = random_rows(&mut rng, 12, 4);
            let q: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut perm: Vec<usize> = (0..12).collect();
            perm.reverse();
            perm.rotate_left((seed % 12) as usize);
            let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();
            let a = knn(&pts, &q, k, None).unwrap();
            let b: Vec<usize> = knn(&permuted, &q, k, None).unwrap().into_iter().map(|i| perm[i]).collect();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn matrix_rejects_non_finite() {
        assert!(matches!(Matrix::from_rows(&[vec![1.0, f64::NAN]]), Err(Error::NonFinite { row: 0, col: 1 })));
        assert!(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn pinv_identity() {
        let h = Matrix::from_dmatrix(DMatrix::identity(4, 4)).unwrap();
        let y = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0], [7.0, 8.0]]).unwrap();
        let b = pinv_solve(&h, &y, default_tolerance(&h)).unwrap();
        assert!((b.as_dmatrix() - y.as_dmatrix()).amax() < 1e-15);
    }

    #[test]
    fn pinv_shape_mismatch() {
        let h = Matrix::zeros(3, 2);
        let y = Matrix::zeros(4, 1);
        assert!(matches!(pinv_solve(&h, &y, 1e-12), Err(Error::Shape(_))));
    }

    #[test]
    fn pinv_handles_wide_and_zero_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = Matrix::from_rows(&random_rows(&mut rng, 3, 7)).unwrap();
        let y = Matrix::from_rows(&random_rows(&mut rng, 3, 2)).unwrap();
        let b = pinv_solve(&h, &y, default_tolerance(&h)).unwrap();
        assert_eq!((b.rows(), b.cols()), (7, 2));
        assert!(h.residual_norm(&b, &y) < 1e-12);
        let z = pinv_solve(&Matrix::zeros(3, 7), &y, 1e-12).unwrap();
        assert_eq!(z, Matrix::zeros(7, 2));
    }

    #[test]
    fn pinv_rank_deficient_matrices() {
        // Hidden-layer matrices are often exactly rank deficient, e.g. every
        // node sitting at sigmoid(0) = 0.5 on identical training inputs.
        let h = Matrix::from_dmatrix(DMatrix::from_element(22, 5, 0.5)).unwrap();
        let y = Matrix::from_dmatrix(DMatrix::from_element(22, 1, 1.0)).unwrap();
        let b = pinv_solve(&h, &y, default_tolerance(&h)).unwrap();
        for i in 0..5 {
            assert!((b.get(i, 0) - 0.4).abs() < 1e-14);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let (r, c) = (rng.random_range(1..40), rng.random_range(1..40));
            let k = rng.random_range(1..=r.min(c));
            let left = DMatrix::from_fn(r, k, |_, _| rng.random_range(-1.0..1.0));
            let right = DMatrix::from_fn(k, c, |_, _| rng.random_range(-1.0..1.0));
            let h = &left * &right;
            let y = DMatrix::from_fn(r, 2, |_, _| rng.random_range(-1.0..1.0));
            let b = pinv_solve(&Matrix(h.clone()), &Matrix(y.clone()), 1e-10).unwrap();
            // normal equations hold, and b lies in the row space of h
            let normal = h.transpose() * (&h * b.as_dmatrix() - &y);
            assert!(normal.amax() < 1e-8 * (1.0 + h.norm().powi(2)), "{r}x{c} rank {k}");
            let gram = (&right * right.transpose()).cholesky().unwrap();
            let projected = right.transpose() * gram.solve(&(&right * b.as_dmatrix()));
            assert!((projected - b.as_dmatrix()).amax() < 1e-6, "{r}x{c} rank {k}");
        }
    }

    #[test]
    fn pinv_minimizes_residual_against_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let h = Matrix::from_rows(&random_rows(&mut rng, 15, 6)).unwrap();
            let y = Matrix::from_rows(&random_rows(&mut rng, 15, 3)).unwrap();
            let b = pinv_solve(&h, &y, default_tolerance(&h)).unwrap();
            let best = h.residual_norm(&b, &y);
            for _ in 0..20 {
                let scale = 10f64.powi(rng.random_range(-6..0));
                let pert = DMatrix::from_fn(6, 3, |_, _| scale * rng.random_range(-1.0..1.0));
                let other = Matrix::from_dmatrix(b.as_dmatrix() + pert).unwrap();
                assert!(best <= h.residual_norm(&other, &y) + 1e-8);
            }
        }
    }

    #[test]
    fn knn_ordering_and_ties() {
        let pts = [[1.0], [3.0], [2.0], [10.0]];
        assert_eq!(knn(&pts, &[0.0], 2, None).unwrap(), vec![0, 2]);
        let tied = [[1.0], [-1.0], [5.0]];
        assert_eq!(knn(&tied, &[0.0], 1, None).unwrap(), vec![0]);
        assert_eq!(knn(&tied, &[0.0], 2, None).unwrap(), vec![0, 1]);
    }

    #[test]
    fn knn_self_exclusion_and_bounds() {
        let pts = [[0.0], [1.0], [2.0]];
        assert_eq!(knn(&pts, &[0.0], 2, Some(0)).unwrap(), vec![1, 2]);
        assert!(knn(&pts, &[0.0], 3, Some(0)).is_err());
        assert!(knn(&pts, &[0.0], 4, None).is_err());
        assert!(knn(&pts, &[0.0], 0, None).is_err());
    }

    #[test]
    fn knn_matches_full_sort() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pts = random_rows(&mut rng, 50, 24);
        let q: Vec<f64> = (0..24).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut oracle: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt(), i))
            .collect();
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expected: Vec<usize> = oracle.iter().take(5).map(|p| p.1).collect();
        assert_eq!(knn(&pts, &q, 5, None).unwrap(), expected);
    }

    #[test]
    fn hyperplane_exact_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs = random_rows(&mut rng, 10, 2);
        let t: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] - x[1] + 3.0).collect();
        let (c, d) = fit_hyperplane(&xs, &t).unwrap();
        assert!((c[0] - 2.0).abs() < 1e-8 && (c[1] + 1.0).abs() < 1e-8);
        assert!((d - 3.0).abs() < 1e-8);
    }

    #[test]
    fn hyperplane_flat_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs = random_rows(&mut rng, 8, 3);
        let (c, d) = fit_hyperplane(&xs, &[4.5; 8]).unwrap();
        assert!(c.iter().all(|v| v.abs() < 1e-10));
        assert!((d - 4.5).abs() < 1e-10);
    }

    #[test]
    fn hyperplane_errors_and_underdetermined() {
        let empty: [[f64; 2]; 0] = [];
        assert!(fit_hyperplane(&empty, &[]).is_err());
        assert!(fit_hyperplane(&[[1.0]], &[1.0, 2.0]).is_err());
        // two points in 5-d: minimum-norm interpolant
        let xs = [[1.0, 0.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0, 0.0]];
        let (c, d) = fit_hyperplane(&xs, &[1.0, -1.0]).unwrap();
        let fitted: Vec<f64> = xs.iter().map(|x| x.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() + d).collect();
        assert!((fitted[0] - 1.0).abs() < 1e-12 && (fitted[1] + 1.0).abs() < 1e-12);
    }
}

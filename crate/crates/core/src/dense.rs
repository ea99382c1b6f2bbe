//! Small dense matrices: the symmetric Jacobi eigensolver used for the patch
//! Gram matrices, plus LU and singular values for coarse systems.

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::error::{Error, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "ragged rows");
        DenseMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `max |A − Aᵀ|`.
    pub fn asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0_f64;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    fn to_faer(&self) -> Mat<f64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    /// Solves `A x = b` by LU with partial pivoting.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        if self.rows != self.cols || rhs.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} system with right-hand side of length {}",
                self.rows,
                self.cols,
                rhs.len()
            )));
        }
        let lu = self.to_faer().partial_piv_lu();
        let b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let x = lu.solve(&b);
        let x: Vec<f64> = x.col(0).iter().copied().collect();
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::SingularCoarse { condition: f64::INFINITY });
        }
        Ok(x)
    }

    /// Singular values in nonincreasing order.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        if self.rows == 0 || self.cols == 0 {
            return Ok(Vec::new());
        }
        self.to_faer()
            .singular_values()
            .map_err(|e| Error::Factorization(format!("SVD: {e:?}")))
    }
}

/// Eigenvalues in ascending order with unit eigenvectors as matching columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymmetricEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm drops below
/// `1e-14·‖A‖_F`. Each eigenvector is signed so that its entry of largest
/// magnitude (first one on ties) is positive.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<SymmetricEigen> {
    let n = a.rows;
    if a.cols != n {
        return Err(Error::DimensionMismatch(format!("eigenproblem for a {}x{} matrix", a.rows, a.cols)));
    }
    if a.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("eigenproblem matrix has non-finite entries".into()));
    }
    let mut m = a.clone();
    // symmetrize
    for i in 0..n {
        for j in i + 1..n {
            let v = 0.5 * (m.get(i, j) + m.get(j, i));
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    let mut v = DenseMatrix::identity(n);
    let target = 1e-14 * m.frobenius();
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal(&m) <= target {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }
    if !converged && off_diagonal(&m) > target {
        return Err(Error::EigenNoConvergence { sweeps: MAX_SWEEPS });
    }

    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    Ok(ordered(&diag, &v))
}

/// Sorts eigenpairs ascending (index order on ties) and applies the sign
/// convention to the vectors.
fn ordered(values: &[f64], v: &DenseMatrix) -> SymmetricEigen {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
    let mut vectors = DenseMatrix::zeros(v.rows, n);
    for (col, &k) in order.iter().enumerate() {
        let mut pivot = 0;
        for i in 0..v.rows {
            if v.get(i, k).abs() > v.get(pivot, k).abs() {
                pivot = i;
            }
        }
        let sign = if v.get(pivot, k) < 0.0 { -1.0 } else { 1.0 };
        for i in 0..v.rows {
            vectors.set(i, col, sign * v.get(i, k));
        }
    }
    SymmetricEigen {
        values: order.iter().map(|&k| values[k]).collect(),
        vectors,
    }
}

/// Eigenpairs of the Gram matrix `G[i][j] = ⟨y_i, z_j⟩` without forming it,
/// where `z_i = M y_i` for some symmetric positive definite `M`. One-sided
/// Jacobi rotates the columns until they are mutually orthogonal in that
/// inner product; small eigenvalues then carry an absolute error of order
/// `u·sqrt(λ_max)·sqrt(λ)` instead of `u·λ_max`.
pub fn gram_eigen(mut y: Vec<Vec<f64>>, mut z: Vec<Vec<f64>>) -> Result<SymmetricEigen> {
    let n = y.len();
    if z.len() != n || y.iter().zip(&z).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::DimensionMismatch("gram columns and mapped columns differ in shape".into()));
    }
    if y.iter().chain(&z).flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("gram columns have non-finite entries".into()));
    }
    let inner = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut v = DenseMatrix::identity(n);
    // columns below this squared norm are zero up to roundoff
    let noise = {
        let top = (0..n).map(|i| inner(&y[i], &z[i])).fold(0.0, f64::max);
        (n as f64 * f64::EPSILON).powi(2) * top
    };
    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        converged = true;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = inner(&y[p], &z[p]);
                let beta = inner(&y[q], &z[q]);
                let gamma = 0.5 * (inner(&y[p], &z[q]) + inner(&y[q], &z[p]));
                if alpha.min(beta) <= noise || !(gamma.abs() > 1e-14 * (alpha * beta).max(0.0).sqrt()) {
                    continue;
                }
                converged = false;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = t * c;
                for cols in [&mut y, &mut z] {
                    let (lo, hi) = cols.split_at_mut(q);
                    for (a, b) in lo[p].iter_mut().zip(hi[0].iter_mut()) {
                        let (ap, bq) = (*a, *b);
                        *a = c * ap - s * bq;
                        *b = s * ap + c * bq;
                    }
                }
                for k in 0..n {
                    let (vkp, vkq) = (v.get(k, p), v.get(k, q));
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    if !converged {
        return Err(Error::EigenNoConvergence { sweeps: MAX_SWEEPS });
    }
    let values: Vec<f64> = y.iter().zip(&z).map(|(a, b)| inner(a, b)).collect();
    Ok(ordered(&values, &v))
}

fn off_diagonal(m: &DenseMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..m.rows {
        for j in 0..m.cols {
            if i != j {
                s += m.get(i, j) * m.get(i, j);
            }
        }
    }
    s.sqrt()
}

fn rotate(m: &mut DenseMatrix, v: &mut DenseMatrix, p: usize, q: usize) {
    let apq = m.get(p, q);
    if apq == 0.0 {
        return;
    }
    let n = m.rows;
    let (app, aqq) = (m.get(p, p), m.get(q, q));
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + theta.hypot(1.0));
    let c = 1.0 / t.hypot(1.0);
    let s = t * c;
    for k in 0..n {
        let (mkp, mkq) = (m.get(k, p), m.get(k, q));
        m.set(k, p, c * mkp - s * mkq);
        m.set(k, q, s * mkp + c * mkq);
    }
    for k in 0..n {
        let (mpk, mqk) = (m.get(p, k), m.get(q, k));
        m.set(p, k, c * mpk - s * mqk);
        m.set(q, k, s * mpk + c * mqk);
    }
    m.set(p, p, app - t * apq);
    m.set(q, q, aqq + t * apq);
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);
    for k in 0..n {
        let (vkp, vkq) = (v.get(k, p), v.get(k, q));
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Side;
    use proptest::prelude::*;

    fn random_symmetric(n: usize, seed: &[f64]) -> DenseMatrix {
        let mut it = seed.iter().cycle();
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let x = *it.next().unwrap();
                m.set(i, j, x);
                m.set(j, i, x);
            }
        }
        m
    }

    #[test]
    fn two_by_two() {
        let m = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let e = symmetric_eigen(&m).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-15);
        assert!((e.values[1] - 3.0).abs() < 1e-15);
        let v0 = e.vector(0);
        assert!(v0[0] > 0.0 && (v0[0] + v0[1]).abs() < 1e-15);
    }

    #[test]
    fn zero_and_diagonal_matrices() {
        let e = symmetric_eigen(&DenseMatrix::zeros(3, 3)).unwrap();
        assert_eq!(e.values, vec![0.0; 3]);
        let d = DenseMatrix::from_fn(3, 3, |i, j| if i == j { [3.0, -1.0, 2.0][i] } else { 0.0 });
        let e = symmetric_eigen(&d).unwrap();
        assert_eq!(e.values, vec![-1.0, 2.0, 3.0]);
        assert_eq!(e.vector(0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn dense_solve_and_svd() {
        let m = DenseMatrix::from_rows(&[vec![4.0, 1.0], vec![2.0, 3.0]]);
        let x = m.solve(&[1.0, 2.0]).unwrap();
        assert!((x[0] - 0.1).abs() < 1e-15 && (x[1] - 0.6).abs() < 1e-15);
        let s = DenseMatrix::from_rows(&[vec![3.0, 0.0], vec![0.0, -2.0]]).singular_values().unwrap();
        assert!((s[0] - 3.0).abs() < 1e-14 && (s[1] - 2.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn matches_faer_and_has_small_residuals(
            n in 1usize..24,
            seed in proptest::collection::vec(-1.0f64..1.0, 300),
        ) {
            let m = random_symmetric(n, &seed);
            let e = symmetric_eigen(&m).unwrap();
            let reference = Mat::from_fn(n, n, |i, j| m.get(i, j))
                .self_adjoint_eigenvalues(Side::Lower)
                .unwrap();
            let scale = e.values.iter().fold(0.0_f64, |s, v| s.max(v.abs())).max(1e-300);
            for (a, b) in e.values.iter().zip(&reference) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
            for k in 0..n {
                let x = e.vector(k);
                let mx = m.matvec(&x);
                let r: f64 = mx.iter().zip(&x).map(|(p, q)| (p - e.values[k] * q).powi(2)).sum::<f64>().sqrt();
                prop_assert!(r <= 1e-12 * scale);
                let norm: f64 = x.iter().map(|v| v * v).sum::<f64>();
                prop_assert!((norm - 1.0).abs() < 1e-13);
            }
            prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn psd_gram_spectrum_is_nonnegative(
            n in 2usize..12,
            seed in proptest::collection::vec(-1.0f64..1.0, 200),
        ) {
            let r = DenseMatrix::from_fn(n / 2 + 1, n, |i, j| seed[(i * n + j) % seed.len()]);
            let g = DenseMatrix::from_fn(n, n, |i, j| (0..r.rows()).map(|k| r.get(k, i) * r.get(k, j)).sum());
            let e = symmetric_eigen(&g).unwrap();
            let top = *e.values.last().unwrap();
            prop_assert!(e.values[0] >= -1e-12 * top);
        }

        #[test]
        fn gram_eigen_matches_the_formed_gram(
            rows in 1usize..8,
            n in 1usize..10,
            seed in proptest::collection::vec(-1.0f64..1.0, 200),
        ) {
            let y: Vec<Vec<f64>> = (0..n).map(|j| (0..rows).map(|i| seed[(i * n + j) % seed.len()]).collect()).collect();
            // M = diag(1, 2, ..)
            let z: Vec<Vec<f64>> = y.iter().map(|c| c.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).collect()).collect();
            let g = DenseMatrix::from_fn(n, n, |i, j| y[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum());
            let a = gram_eigen(y, z).unwrap();
            let b = symmetric_eigen(&g).unwrap();
            let scale = b.values.last().unwrap().abs().max(1e-300);
            for (p, q) in a.values.iter().zip(&b.values) {
                prop_assert!((p - q).abs() <= 1e-12 * scale);
            }
            for k in 0..n {
                let x = a.vector(k);
                let gx = g.matvec(&x);
                let r: f64 = gx.iter().zip(&x).map(|(p, q)| (p - a.values[k] * q).powi(2)).sum::<f64>().sqrt();
                prop_assert!(r <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn gram_eigen_null_vector_is_accurate_for_large_columns() {
        // rank 2 in three columns, entries of order 1e8
        let y = vec![vec![1e8, 3e8], vec![2e8, -1e8], vec![4e8, 5e8]];
        let a = gram_eigen(y.clone(), y.clone()).unwrap();
        let v = a.vector(0);
        let r: f64 = (0..2).map(|i| (0..3).map(|j| y[j][i] * v[j]).sum::<f64>().powi(2)).sum::<f64>().sqrt();
        assert!(r <= 1e-15 * 5e8 * 4.0, "{r}");
        assert!(a.values[0].abs() <= 1e-14 * a.values[2]);
    }
}

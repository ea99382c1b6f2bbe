//! Linear solvers for the assembled convection–diffusion systems.
//!
//! Direct sparse LU (faer, partial pivoting) up to `direct_limit` unknowns,
//! restarted GMRES with an ILU(0) right preconditioner beyond that. Every
//! solve is checked before it is returned.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, CsrMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Auto,
    Direct,
    Krylov,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub kind: SolverKind,
    /// Largest system handled by the direct solver under [`SolverKind::Auto`].
    pub direct_limit: usize,
    /// Krylov: relative residual `‖Ax − b‖₂ / ‖b‖₂`. Direct: normwise backward
    /// error after refinement.
    pub tolerance: f64,
    pub restart: usize,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            kind: SolverKind::Auto,
            direct_limit: 300_000,
            tolerance: 1e-10,
            restart: 80,
            max_iterations: 50_000,
        }
    }
}

enum Backend {
    Direct(Box<Lu<usize, f64>>),
    Krylov(Ilu0),
}

/// A factorized (or preconditioned) operator ready for repeated solves.
pub struct LinearSolver<'a> {
    matrix: &'a CsrMatrix,
    backend: Backend,
    options: SolverOptions,
    norm_inf: f64,
}

impl<'a> LinearSolver<'a> {
    pub fn new(matrix: &'a CsrMatrix, options: SolverOptions) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "system matrix is {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let direct = match options.kind {
            SolverKind::Direct => true,
            SolverKind::Krylov => false,
            SolverKind::Auto => matrix.nrows() <= options.direct_limit,
        };
        let backend = if direct {
            let lu = matrix
                .to_faer()?
                .sp_lu()
                .map_err(|e| Error::Factorization(format!("sparse LU: {e:?}")))?;
            Backend::Direct(Box::new(lu))
        } else {
            Backend::Krylov(Ilu0::new(matrix)?)
        };
        let norm_inf = (0..matrix.nrows())
            .map(|i| matrix.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        Ok(LinearSolver {
            matrix,
            backend,
            options,
            norm_inf,
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.backend, Backend::Direct(_))
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.solve_many(std::slice::from_ref(&rhs.to_vec()))?.remove(0))
    }

    /// Solves for several right-hand sides at once.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.dim();
        if let Some(bad) = rhs.iter().find(|b| b.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "right-hand side has length {}, system has {n} unknowns",
                bad.len()
            )));
        }
        match &self.backend {
            Backend::Direct(lu) => {
                let mut out = lu_solve(lu, rhs);
                for (x, b) in out.iter_mut().zip(rhs) {
                    self.refine(lu, x, b)?;
                }
                Ok(out)
            }
            Backend::Krylov(ilu) => rhs
                .iter()
                .map(|b| gmres(self.matrix, ilu, b, &self.options))
                .collect(),
        }
    }

    /// Iterative refinement, then acceptance on the normwise backward error
    /// `‖r‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)`, which stays meaningful for badly
    /// conditioned systems where `‖r‖/‖b‖` cannot reach the tolerance.
    fn refine(&self, lu: &Lu<usize, f64>, x: &mut [f64], b: &[f64]) -> Result<()> {
        let bnorm = norm2(b);
        if bnorm == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(());
        }
        let mut r = residual(self.matrix, x, b);
        let mut rel = norm2(&r) / bnorm;
        for _ in 0..4 {
            if !rel.is_finite() || rel <= 1e-2 * self.options.tolerance {
                break;
            }
            let dx = lu_solve(lu, &[r.clone()]).remove(0);
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(xi, d)| xi + d).collect();
            let r_trial = residual(self.matrix, &trial, b);
            let rel_trial = norm2(&r_trial) / bnorm;
            if !(rel_trial < rel) {
                break;
            }
            x.copy_from_slice(&trial);
            r = r_trial;
            rel = rel_trial;
        }
        let eta = inf_norm(&r) / (self.norm_inf * inf_norm(x) + inf_norm(b));
        if eta.is_finite() && eta <= self.options.tolerance {
            return Ok(());
        }
        Err(Error::Solve {
            reason: "direct solve did not reach the backward error tolerance".into(),
            residual: eta,
        })
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn lu_solve(lu: &Lu<usize, f64>, rhs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if rhs.is_empty() {
        return Vec::new();
    }
    let n = rhs[0].len();
    let mut b = Mat::<f64>::from_fn(n, rhs.len(), |i, j| rhs[j][i]);
    lu.solve_in_place(b.as_mut());
    (0..rhs.len())
        .map(|j| b.col(j).iter().copied().collect())
        .collect()
}

pub fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    (0..a.nrows()).map(|i| b[i] - a.row_dot(i, x)).collect()
}

pub fn relative_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
    let bn = norm2(b);
    let rn = norm2(&residual(a, x, b));
    if bn == 0.0 {
        rn
    } else {
        rn / bn
    }
}

/// Incomplete LU factorization with the sparsity pattern of `A`.
struct Ilu0 {
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &CsrMatrix) -> Result<Self> {
        let diag = a
            .diagonal_positions()
            .ok_or_else(|| Error::Factorization("ILU(0): structurally zero diagonal".into()))?;
        let (indptr, indices, values) = a.raw();
        let (indptr, indices, mut values) = (indptr.to_vec(), indices.to_vec(), values.to_vec());
        let n = a.nrows();
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in indptr[i]..indptr[i + 1] {
                pos[indices[k]] = k;
            }
            for k in indptr[i]..diag[i] {
                let col = indices[k];
                let pivot = values[diag[col]];
                if pivot == 0.0 {
                    return Err(Error::Factorization(format!("ILU(0): zero pivot in row {col}")));
                }
                values[k] /= pivot;
                let factor = values[k];
                for kk in diag[col] + 1..indptr[col + 1] {
                    let p = pos[indices[kk]];
                    if p != usize::MAX {
                        values[p] -= factor * values[kk];
                    }
                }
            }
            for k in indptr[i]..indptr[i + 1] {
                pos[indices[k]] = usize::MAX;
            }
            if values[diag[i]] == 0.0 {
                return Err(Error::Factorization(format!("ILU(0): zero pivot in row {i}")));
            }
        }
        Ok(Ilu0 {
            indptr,
            indices,
            values,
            diag,
        })
    }

    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = z.len();
        for i in 0..n {
            let mut s = r[i];
            for k in self.indptr[i]..self.diag[i] {
                s -= self.values[k] * z[self.indices[k]];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in self.diag[i] + 1..self.indptr[i + 1] {
                s -= self.values[k] * z[self.indices[k]];
            }
            z[i] = s / self.values[self.diag[i]];
        }
    }
}

/// Right-preconditioned restarted GMRES; the monitored residual is the true one.
fn gmres(a: &CsrMatrix, m: &Ilu0, b: &[f64], opts: &SolverOptions) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let restart = opts.restart.max(1);
    let mut iterations = 0;
    let mut z = vec![0.0; n];
    loop {
        let r = residual(a, &x, b);
        let beta = norm2(&r);
        if beta / bnorm <= opts.tolerance {
            return Ok(x);
        }
        if iterations >= opts.max_iterations {
            return Err(Error::Solve {
                reason: format!("GMRES stopped after {iterations} iterations"),
                residual: beta / bnorm,
            });
        }
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess: Vec<Vec<f64>> = Vec::new();
        let (mut cs, mut sn) = (Vec::<f64>::new(), Vec::<f64>::new());
        let mut g = vec![beta];
        let mut k = 0;
        while k < restart && iterations < opts.max_iterations {
            m.apply(&basis[k], &mut z);
            let mut w = a.matvec(&z);
            let mut h = vec![0.0; k + 2];
            for (j, v) in basis.iter().enumerate() {
                h[j] = dot(&w, v);
                w.iter_mut().zip(v).for_each(|(wi, vi)| *wi -= h[j] * vi);
            }
            h[k + 1] = norm2(&w);
            for j in 0..k {
                let t = cs[j] * h[j] + sn[j] * h[j + 1];
                h[j + 1] = -sn[j] * h[j] + cs[j] * h[j + 1];
                h[j] = t;
            }
            let denom = h[k].hypot(h[k + 1]);
            let (c, s) = if denom == 0.0 { (1.0, 0.0) } else { (h[k] / denom, h[k + 1] / denom) };
            cs.push(c);
            sn.push(s);
            h[k] = denom;
            let hk1 = h[k + 1];
            h[k + 1] = 0.0;
            g.push(-s * g[k]);
            g[k] *= c;
            hess.push(h);
            iterations += 1;
            k += 1;
            if (g[k].abs() / bnorm) <= 0.5 * opts.tolerance || hk1 == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hk1).collect());
        }
        // back substitution for the k×k upper triangular system
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= hess[j][i] * y[j];
            }
            y[i] = s / hess[i][i];
        }
        let mut update = vec![0.0; n];
        for (yi, v) in y.iter().zip(&basis) {
            update.iter_mut().zip(v).for_each(|(u, vi)| *u += yi * vi);
        }
        m.apply(&update, &mut z);
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi += zi);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::SymmetryHint;

    fn convection_diffusion_1d(n: usize, eps: f64, beta: f64) -> CsrMatrix {
        let h = 1.0 / (n + 1) as f64;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0 * eps / h));
            if i + 1 < n {
                t.push((i, i + 1, -eps / h + beta / 2.0));
                t.push((i + 1, i, -eps / h - beta / 2.0));
            }
        }
        CsrMatrix::from_triplets(n, n, t, SymmetryHint::General)
    }

    #[test]
    fn direct_and_krylov_agree() {
        let a = convection_diffusion_1d(200, 0.05, 1.0);
        let b: Vec<f64> = (0..200).map(|i| (i as f64 * 0.1).sin()).collect();
        let direct = LinearSolver::new(&a, SolverOptions { kind: SolverKind::Direct, ..Default::default() }).unwrap();
        let krylov = LinearSolver::new(&a, SolverOptions { kind: SolverKind::Krylov, restart: 20, ..Default::default() }).unwrap();
        assert!(direct.is_direct() && !krylov.is_direct());
        let x1 = direct.solve(&b).unwrap();
        let x2 = krylov.solve(&b).unwrap();
        assert!(relative_residual(&a, &x1, &b) <= 1e-10);
        assert!(relative_residual(&a, &x2, &b) <= 1e-10);
        let diff = x1.iter().zip(&x2).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-7 * norm2(&x1), "diff {diff}");
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = convection_diffusion_1d(10, 1.0, 0.0);
        for kind in [SolverKind::Direct, SolverKind::Krylov] {
            let s = LinearSolver::new(&a, SolverOptions { kind, ..Default::default() }).unwrap();
            assert_eq!(s.solve(&[0.0; 10]).unwrap(), vec![0.0; 10]);
        }
    }

    #[test]
    fn krylov_reports_non_convergence() {
        // 5-point stencil on a 20x20 grid, so ILU(0) is not exact
        let n = 20;
        let mut t = Vec::new();
        for i in 0..n * n {
            t.push((i, i, 4.0));
            for (j, v) in [(i + 1, -0.5), (i + n, -1.5)] {
                if j < n * n {
                    t.push((i, j, v));
                    t.push((j, i, -1.0 - (v + 1.0)));
                }
            }
        }
        let a = CsrMatrix::from_triplets(n * n, n * n, t, SymmetryHint::General);
        let b = vec![1.0; n * n];
        let opts = SolverOptions { kind: SolverKind::Krylov, restart: 2, max_iterations: 3, ..Default::default() };
        let s = LinearSolver::new(&a, opts).unwrap();
        match s.solve(&b) {
            Err(Error::Solve { residual, .. }) => assert!(residual > 0.0),
            other => panic!("expected a solve error, got {other:?}"),
        }
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let a = convection_diffusion_1d(4, 1.0, 0.0);
        let s = LinearSolver::new(&a, SolverOptions::default()).unwrap();
        assert!(matches!(s.solve(&[1.0; 3]), Err(Error::DimensionMismatch(_))));
    }
}

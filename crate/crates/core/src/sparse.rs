//! Compressed sparse row storage for the assembled operators.

use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymmetryHint {
    Symmetric,
    /// Skew-symmetric up to quadrature (convection operators).
    SkewPartKnown,
    General,
}

#[derive(Clone, Debug)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
    symmetry: SymmetryHint,
}

impl CsrMatrix {
    /// Sums duplicate entries and drops entries that sum to exactly zero.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        symmetry: SymmetryHint,
    ) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len() / 2);
        let mut values = Vec::with_capacity(triplets.len() / 2);
        let mut k = 0;
        while k < triplets.len() {
            let (r, c, mut v) = triplets[k];
            debug_assert!(r < nrows && c < ncols);
            k += 1;
            while k < triplets.len() && triplets[k].0 == r && triplets[k].1 == c {
                v += triplets[k].2;
                k += 1;
            }
            if v != 0.0 {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
            symmetry,
        }
    }

    /// Builds from a sorted CSR pattern, dropping entries that are exactly zero.
    pub(crate) fn from_pattern(
        ncols: usize,
        indptr: &[usize],
        indices: &[usize],
        values: &[f64],
        symmetry: SymmetryHint,
    ) -> Self {
        let nrows = indptr.len() - 1;
        let mut out_ptr = Vec::with_capacity(nrows + 1);
        out_ptr.push(0);
        let mut out_idx = Vec::with_capacity(indices.len());
        let mut out_val = Vec::with_capacity(values.len());
        for r in 0..nrows {
            for k in indptr[r]..indptr[r + 1] {
                if values[k] != 0.0 {
                    out_idx.push(indices[k]);
                    out_val.push(values[k]);
                }
            }
            out_ptr.push(out_idx.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr: out_ptr,
            indices: out_idx,
            values: out_val,
            symmetry,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn symmetry(&self) -> SymmetryHint {
        self.symmetry
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter().zip(vals).map(|(&c, &v)| v * x[c]).sum()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        (0..self.nrows).map(|i| self.row_dot(i, x)).collect()
    }

    /// `xᵀ A x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        assert_eq!(self.nrows, self.ncols);
        (0..self.nrows).map(|i| x[i] * self.row_dot(i, x)).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            triplets.extend(cols.iter().zip(vals).map(|(&c, &v)| (c, i, v)));
        }
        CsrMatrix::from_triplets(self.ncols, self.nrows, triplets, self.symmetry)
    }

    /// `alpha·A + beta·B` for matrices of equal shape.
    pub fn linear_combination(alpha: f64, a: &CsrMatrix, beta: f64, b: &CsrMatrix) -> CsrMatrix {
        assert_eq!((a.nrows, a.ncols), (b.nrows, b.ncols));
        let mut indptr = vec![0; a.nrows + 1];
        let mut indices = Vec::with_capacity(a.nnz().max(b.nnz()));
        let mut values = Vec::with_capacity(a.nnz().max(b.nnz()));
        for i in 0..a.nrows {
            let (ca, va) = a.row(i);
            let (cb, vb) = b.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let (c, v) = if q == cb.len() || (p < ca.len() && ca[p] < cb[q]) {
                    p += 1;
                    (ca[p - 1], alpha * va[p - 1])
                } else if p == ca.len() || cb[q] < ca[p] {
                    q += 1;
                    (cb[q - 1], beta * vb[q - 1])
                } else {
                    p += 1;
                    q += 1;
                    (ca[p - 1], alpha * va[p - 1] + beta * vb[q - 1])
                };
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr[i + 1] = indices.len();
        }
        let symmetry = if a.symmetry == b.symmetry {
            a.symmetry
        } else {
            SymmetryHint::General
        };
        CsrMatrix {
            nrows: a.nrows,
            ncols: a.ncols,
            indptr,
            indices,
            values,
            symmetry,
        }
    }

    /// Rows `rows` of the matrix with columns renumbered through `col_map`
    /// (`None` drops the column).
    pub fn select(&self, rows: &[usize], col_map: impl Fn(usize) -> Option<usize>, ncols: usize) -> CsrMatrix {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut row_buf: Vec<(usize, f64)> = Vec::new();
        for &r in rows {
            let (cols, vals) = self.row(r);
            row_buf.clear();
            row_buf.extend(
                cols.iter()
                    .zip(vals)
                    .filter_map(|(&c, &v)| col_map(c).map(|nc| (nc, v))),
            );
            row_buf.sort_unstable_by_key(|&(c, _)| c);
            for &(c, v) in &row_buf {
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows: rows.len(),
            ncols,
            indptr,
            indices,
            values,
            symmetry: self.symmetry,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, row) in d.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                row[c] = v;
            }
        }
        d
    }

    pub(crate) fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<Triplet<usize, usize, f64>> = (0..self.nrows)
            .flat_map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter()
                    .zip(vals)
                    .map(move |(&c, &v)| Triplet::new(i, c, v))
            })
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets)
            .map_err(|e| Error::Factorization(format!("sparse conversion: {e:?}")))
    }

    pub(crate) fn diagonal_positions(&self) -> Option<Vec<usize>> {
        (0..self.nrows)
            .map(|i| {
                let (cols, _) = self.row(i);
                cols.binary_search(&i).ok().map(|k| self.indptr[i] + k)
            })
            .collect()
    }

    pub(crate) fn raw(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.indptr, &self.indices, &self.values)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_and_drop_zeros() {
        let m = CsrMatrix::from_triplets(
            2,
            3,
            vec![(0, 1, 1.0), (1, 2, 2.0), (0, 1, 3.0), (1, 0, 1.0), (1, 0, -1.0)],
            SymmetryHint::General,
        );
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), 4.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.matvec(&[1.0, 1.0, 1.0]), vec![4.0, 2.0]);
    }

    #[test]
    fn linear_combination_and_transpose() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (0, 1, 2.0)], SymmetryHint::General);
        let b = CsrMatrix::from_triplets(2, 2, vec![(0, 1, -1.0), (1, 0, 5.0)], SymmetryHint::General);
        let c = CsrMatrix::linear_combination(2.0, &a, 4.0, &b);
        assert_eq!(c.to_dense(), vec![vec![2.0, 0.0], vec![20.0, 0.0]]);
        assert_eq!(c.nnz(), 2);
        assert_eq!(c.transpose().to_dense(), vec![vec![2.0, 20.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn select_remaps_columns() {
        let a = CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 1.0), (0, 2, 2.0), (2, 1, 3.0), (2, 2, 4.0)],
            SymmetryHint::General,
        );
        let s = a.select(&[2, 0], |c| if c == 0 { None } else { Some(c - 1) }, 2);
        assert_eq!(s.to_dense(), vec![vec![3.0, 4.0], vec![0.0, 2.0]]);
    }
}

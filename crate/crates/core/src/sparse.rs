//! Real compressed-row matrices with complex matrix-vector products.

use std::io::Write;
use std::path::Path;

use faer::sparse::{SparseColMat, Triplet};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the matrix from `(row, col, value)` triplets; duplicates are
    /// summed in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        let mut next = counts.clone();
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..nrows {
            let (lo, hi) = (counts[i], counts[i + 1]);
            order.clear();
            order.extend(lo..hi);
            // stable: duplicates accumulate in insertion order
            order.sort_by_key(|&k| cols[k]);
            let mut last = usize::MAX;
            for &k in &order {
                if cols[k] == last {
                    *values.last_mut().unwrap() += vals[k];
                } else {
                    col_idx.push(cols[k]);
                    values.push(vals[k]);
                    last = cols[k];
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        let t: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &t)
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

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    /// `diag(d) A diag(d)`
    pub fn scale_symmetric(&self, d: &[f64]) -> CsrMatrix {
        self.scale(d, d)
    }

    /// `diag(left) A diag(right)`
    pub fn scale(&self, left: &[f64], right: &[f64]) -> CsrMatrix {
        assert!(left.len() == self.nrows && right.len() == self.ncols);
        let mut out = self.clone();
        for i in 0..self.nrows {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                out.values[k] *= left[i] * right[self.col_idx[k]];
            }
        }
        out
    }

    /// The `rows x cols` submatrix starting at `(row0, col0)`.
    pub fn block(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> CsrMatrix {
        assert!(row0 + rows <= self.nrows && col0 + cols <= self.ncols);
        let t: Vec<(usize, usize, f64)> = (row0..row0 + rows)
            .flat_map(|i| {
                self.row(i)
                    .filter(move |&(j, _)| j >= col0 && j < col0 + cols)
                    .map(move |(j, v)| (i - row0, j - col0, v))
            })
            .collect();
        CsrMatrix::from_triplets(rows, cols, &t)
    }

    /// The same matrix as a real faer column matrix.
    pub fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let t: Vec<Triplet<usize, usize, f64>> = self.triplets().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Config(format!("sparse matrix construction failed: {e:?}")))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `max |A_ij - A_ji|`
    pub fn asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| x[j] * v).sum()).collect()
    }

    /// `A^T x`, which is `A^H x` for a real matrix.
    pub fn transpose_matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![Complex64::new(0.0, 0.0); self.ncols];
        for (i, xi) in x.iter().enumerate() {
            for (j, v) in self.row(i) {
                y[j] += xi * v;
            }
        }
        y
    }

    /// `x^H A y`
    pub fn form(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        self.matvec(y).iter().zip(x).map(|(ay, xi)| xi.conj() * ay).sum()
    }

    pub fn to_dense(&self) -> faer::Mat<f64> {
        let mut m = faer::Mat::<f64>::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            m[(i, j)] += v;
        }
        m
    }

    /// `self + s * other` in complex arithmetic, as a faer column matrix.
    pub fn complex_combination(&self, s: Complex64, other: &CsrMatrix) -> Result<SparseColMat<usize, Complex64>> {
        complex_sum(&[(Complex64::new(1.0, 0.0), self), (s, other)])
    }

    /// Writes `i j re im` lines, zero-based.
    pub fn write_coordinates(&self, out: &mut impl Write) -> std::io::Result<()> {
        for (i, j, v) in self.triplets() {
            writeln!(out, "{i} {j} {v:.17e} {:.17e}", 0.0)?;
        }
        Ok(())
    }

    pub fn dump(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_coordinates(&mut f)?;
        f.flush()?;
        Ok(())
    }
}

/// `sum_k s_k A_k` in complex arithmetic, as a faer column matrix.
pub fn complex_sum(terms: &[(Complex64, &CsrMatrix)]) -> Result<SparseColMat<usize, Complex64>> {
    let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
    assert!(terms.iter().all(|(_, m)| (m.nrows, m.ncols) == (nrows, ncols)));
    let mut t: Vec<Triplet<usize, usize, Complex64>> = Vec::with_capacity(terms.iter().map(|(_, m)| m.nnz()).sum());
    for (s, m) in terms {
        t.extend(m.triplets().map(|(i, j, v)| Triplet::new(i, j, s * v)));
    }
    SparseColMat::try_new_from_triplets(nrows, ncols, &t)
        .map_err(|e| Error::Config(format!("sparse matrix construction failed: {e:?}")))
}

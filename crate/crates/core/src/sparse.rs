//! Compressed-sparse-row complex matrices.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Square complex matrix in CSR form with sorted column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    dim: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, indptr: vec![0; dim + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![Complex64::new(1.0, 0.0); dim])
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let dim = diag.len();
        let mut m = Self::zeros(dim);
        for (i, &d) in diag.iter().enumerate() {
            if d != Complex64::default() {
                m.indices.push(i);
                m.values.push(d);
            }
            m.indptr[i + 1] = m.indices.len();
        }
        m
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self::from_diagonal(&diag.iter().map(|&d| Complex64::new(d, 0.0)).collect::<Vec<_>>())
    }

    /// Builds from per-row `(column, value)` lists. Duplicate columns are
    /// summed; exact zeros are dropped.
    pub fn from_rows(dim: usize, rows: Vec<Vec<(usize, Complex64)>>) -> Self {
        assert_eq!(rows.len(), dim);
        let mut m = Self::zeros(dim);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                assert!(c < dim, "column {c} out of range for dimension {dim}");
                let mut v = Complex64::default();
                while k < row.len() && row[k].0 == c {
                    v += row[k].1;
                    k += 1;
                }
                if v != Complex64::default() {
                    m.indices.push(c);
                    m.values.push(v);
                }
            }
            m.indptr[i + 1] = m.indices.len();
        }
        m
    }

    /// Builds from a column-major dense array, dropping exact zeros.
    pub fn from_dense(dim: usize, dense: &[Complex64]) -> Self {
        assert_eq!(dense.len(), dim * dim);
        let rows = (0..dim).map(|i| (0..dim).map(|j| (j, dense[i + j * dim])).collect()).collect();
        Self::from_rows(dim, rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let r = self.indptr[i]..self.indptr[i + 1];
        self.indices[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    /// Iterates `(row, column, value)` over stored entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.dim).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let r = self.indptr[i]..self.indptr[i + 1];
        match self.indices[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => Complex64::default(),
        }
    }

    pub fn diagonal(&self) -> Vec<Complex64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries().all(|(i, j, _)| i == j)
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.entries().map(|(i, j, _)| i.abs_diff(j)).max().unwrap_or(0)
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn conj_transpose(&self) -> Self {
        let mut rows = vec![Vec::new(); self.dim];
        for (i, j, v) in self.entries() {
            rows[j].push((i, v.conj()));
        }
        Self::from_rows(self.dim, rows)
    }

    /// `max |M - M^H|` over all entries.
    pub fn hermitian_defect(&self) -> f64 {
        self.entries().map(|(i, j, v)| (v - self.get(j, i).conj()).norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= s);
        m
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { left: self.dim, right: other.dim })
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Self, s: Complex64) -> Result<Self> {
        self.check_dim(other)?;
        let rows = (0..self.dim).map(|i| self.row(i).chain(other.row(i).map(|(j, v)| (j, s * v))).collect()).collect();
        Ok(Self::from_rows(self.dim, rows))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, Complex64::new(-1.0, 0.0))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        let rows = (0..self.dim)
            .map(|i| {
                let mut acc: Vec<(usize, Complex64)> = Vec::new();
                for (k, a) in self.row(i) {
                    acc.extend(other.row(k).map(|(j, b)| (j, a * b)));
                }
                acc
            })
            .collect();
        Ok(Self::from_rows(self.dim, rows))
    }

    /// `tr(self)`.
    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    /// Column-major dense copy.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let n = self.dim;
        let mut d = vec![Complex64::default(); n * n];
        for (i, j, v) in self.entries() {
            d[i + j * n] = v;
        }
        d
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Induced infinity norm, `max_i sum_j |m_ij|`.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim).map(|i| self.row(i).map(|(_, v)| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Keeps only rows for which `keep(row)` holds.
    pub fn restrict_rows(&self, keep: impl Fn(usize) -> bool) -> Self {
        let rows = (0..self.dim).map(|i| if keep(i) { self.row(i).collect() } else { Vec::new() }).collect();
        Self::from_rows(self.dim, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn duplicates_sum_and_zeros_drop() {
        let m = CsrMatrix::from_rows(2, vec![vec![(1, c(1.0, 0.0)), (1, c(2.0, 0.0)), (0, c(0.0, 0.0))], vec![]]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), c(3.0, 0.0));
    }

    #[test]
    fn matmul_and_transpose_match_dense() {
        let a = CsrMatrix::from_rows(2, vec![vec![(0, c(1.0, 1.0)), (1, c(2.0, 0.0))], vec![(1, c(0.0, -1.0))]]);
        let b = CsrMatrix::from_rows(2, vec![vec![(1, c(3.0, 0.0))], vec![(0, c(1.0, 0.0))]]);
        let p = a.matmul(&b).unwrap();
        assert_eq!(p.get(0, 0), c(2.0, 0.0));
        assert_eq!(p.get(0, 1), c(3.0, 3.0));
        assert_eq!(p.get(1, 0), c(0.0, -1.0));
        let h = a.conj_transpose();
        assert_eq!(h.get(1, 0), c(2.0, 0.0));
        assert_eq!(h.get(0, 0), c(1.0, -1.0));
        assert!(a.add_scaled(&h, c(1.0, 0.0)).unwrap().hermitian_defect() == 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let e = CsrMatrix::identity(2).matmul(&CsrMatrix::identity(3)).unwrap_err();
        assert_eq!(e, Error::DimensionMismatch { left: 2, right: 3 });
    }
}

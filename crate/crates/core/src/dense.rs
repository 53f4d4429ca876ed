//! Row-major dense matrices and the row-sparse propagation matrices used by
//! every forward and backward pass.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Work (multiply-adds) above which products are split across threads.
const PAR_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(Error::Shape(format!(
                    "row {i} has {} columns, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Copies the listed rows, in order, into a new matrix.
    pub fn gather_rows(&self, idx: &[usize]) -> Self {
        let mut out = Self::zeros(idx.len(), self.cols);
        for (dst, &src) in idx.iter().enumerate() {
            out.row_mut(dst).copy_from_slice(self.row(src));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, layer: usize) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite { layer })
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn row_norm(&self, r: usize) -> f64 {
        self.row(r).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &DenseMatrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// `self · rhs`
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        if out.data.is_empty() {
            return Ok(out);
        }
        let n = rhs.cols;
        let kernel = |(r, out_row): (usize, &mut [f64])| {
            let lhs_row = self.row(r);
            for (k, &a) in lhs_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let rhs_row = &rhs.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        };
        if self.rows * self.cols * n >= PAR_THRESHOLD {
            out.data.par_chunks_mut(n).enumerate().for_each(kernel);
        } else {
            out.data.chunks_mut(n).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `selfᵀ · rhs` without materializing the transpose.
    pub fn t_matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != rhs.rows {
            return Err(Error::Shape(format!(
                "t_matmul ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.cols, rhs.cols);
        let n = rhs.cols;
        for r in 0..self.rows {
            let rhs_row = rhs.row(r);
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out.data[k * n..(k + 1) * n];
                for (o, &b) in out_row.iter_mut().zip(rhs_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ`
    pub fn matmul_t(&self, rhs: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != rhs.cols {
            return Err(Error::Shape(format!(
                "matmul_t {}x{} by ({}x{})ᵀ",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = Self::zeros(self.rows, rhs.rows);
        for r in 0..self.rows {
            let a = self.row(r);
            for c in 0..rhs.rows {
                out.data[r * rhs.rows + c] = dot(a, rhs.row(c));
            }
        }
        Ok(out)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-compressed sparse matrix whose column indices address rows of the
/// dense operand it multiplies. One of these describes a layer's weighted
/// aggregation: output row `i` sums `value * input[col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    n_cols: usize,
    offsets: Vec<usize>,
    cols: Vec<usize>,
    values: Vec<f64>,
}

impl SparseRows {
    pub fn with_capacity(n_cols: usize, rows: usize, nnz: usize) -> Self {
        let mut offsets = Vec::with_capacity(rows + 1);
        offsets.push(0);
        Self {
            n_cols,
            offsets,
            cols: Vec::with_capacity(nnz),
            values: Vec::with_capacity(nnz),
        }
    }

    pub fn push(&mut self, col: usize, value: f64) {
        debug_assert!(col < self.n_cols);
        self.cols.push(col);
        self.values.push(value);
    }

    pub fn finish_row(&mut self) {
        self.offsets.push(self.cols.len());
    }

    pub fn n_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let (s, e) = (self.offsets[r], self.offsets[r + 1]);
        (&self.cols[s..e], &self.values[s..e])
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// `self · dense`
    pub fn spmm(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if dense.rows() != self.n_cols {
            return Err(Error::Shape(format!(
                "sparse {}x{} by dense {}x{}",
                self.n_rows(),
                self.n_cols,
                dense.rows(),
                dense.cols()
            )));
        }
        let d = dense.cols();
        let mut out = DenseMatrix::zeros(self.n_rows(), d);
        if d == 0 {
            return Ok(out);
        }
        let kernel = |(r, out_row): (usize, &mut [f64])| {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &x) in out_row.iter_mut().zip(dense.row(c)) {
                    *o += v * x;
                }
            }
        };
        if self.nnz() * d >= PAR_THRESHOLD {
            out.as_mut_slice()
                .par_chunks_mut(d)
                .enumerate()
                .for_each(kernel);
        } else {
            out.as_mut_slice().chunks_mut(d).enumerate().for_each(kernel);
        }
        Ok(out)
    }

    /// `selfᵀ · dense`, the adjoint used by the backward pass.
    pub fn spmm_t(&self, dense: &DenseMatrix) -> Result<DenseMatrix> {
        if dense.rows() != self.n_rows() {
            return Err(Error::Shape(format!(
                "sparse ({}x{})ᵀ by dense {}x{}",
                self.n_rows(),
                self.n_cols,
                dense.rows(),
                dense.cols()
            )));
        }
        let d = dense.cols();
        let mut out = DenseMatrix::zeros(self.n_cols, d);
        for r in 0..self.n_rows() {
            let src = dense.row(r);
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                for (o, &x) in out.row_mut(c).iter_mut().zip(src) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_rows(), self.n_cols);
        for r in 0..self.n_rows() {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                let cur = m.get(r, c);
                m.set(r, c, cur + v);
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix {
        DenseMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn products_agree_with_hand_values() {
        let a = m(&[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let b = m(&[&[1.0, 0.0, -1.0], &[2.0, 1.0, 0.5]]);
        let ab = a.matmul(&b).unwrap();
        assert_eq!(ab.row(0), &[5.0, 2.0, 0.0]);
        assert_eq!(ab.row(2), &[17.0, 6.0, -2.0]);
        assert_eq!(a.t_matmul(&a).unwrap(), a.transpose().matmul(&a).unwrap());
        assert_eq!(a.matmul_t(&a).unwrap(), a.matmul(&a.transpose()).unwrap());
    }

    #[test]
    fn shape_errors_are_reported() {
        let a = DenseMatrix::zeros(2, 3);
        assert!(matches!(a.matmul(&a), Err(Error::Shape(_))));
        assert!(DenseMatrix::from_vec(2, 2, vec![1.0]).is_err());
        assert!(DenseMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn sparse_products_match_dense() {
        let mut s = SparseRows::with_capacity(3, 2, 3);
        s.push(0, 2.0);
        s.push(2, -1.0);
        s.finish_row();
        s.push(1, 0.5);
        s.finish_row();
        let x = m(&[&[1.0, 1.0], &[2.0, 0.0], &[0.0, 3.0]]);
        let dense = s.to_dense();
        assert_eq!(s.spmm(&x).unwrap(), dense.matmul(&x).unwrap());
        let g = m(&[&[1.0, -1.0], &[0.5, 2.0]]);
        assert_eq!(s.spmm_t(&g).unwrap(), dense.t_matmul(&g).unwrap());
    }

    #[test]
    fn large_matmul_uses_parallel_path_consistently() {
        let a = DenseMatrix::from_vec(64, 64, (0..4096).map(|v| (v % 7) as f64 - 3.0).collect())
            .unwrap();
        let b = a.transpose();
        let p = a.matmul(&b).unwrap();
        assert_eq!(p, a.matmul_t(&a).unwrap());
    }
}

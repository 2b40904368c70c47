//! Dense row-major matrices and scaled dot-product attention.
//!
//! Everything here is a pure function of its inputs. Each output row of
//! [`sdpa`] is computed from one query row and the full key/value sets, so
//! permuting query rows permutes the output rows bit-for-bit.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major data, rejecting bad lengths and non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape(
                "Matrix::from_vec",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix data"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::shape("Matrix::from_rows", "ragged rows"));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// A single column built from a slice.
    pub fn column_vector(values: &[f64]) -> Self {
        Self { rows: values.len(), cols: 1, data: values.to_vec() }
    }

    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(rows * cols, data.len());
        Self { rows, cols, data }
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
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        // chunks_exact panics on zero, and a 0-column matrix still has rows.
        (0..self.rows).map(move |i| self.row(i))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    /// `self · rhs`.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::shape("matmul", format!("{:?} x {:?}", self.shape(), rhs.shape())));
        }
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = out.row_mut(i);
            for (k, &aik) in a.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                for (oj, &bkj) in o.iter_mut().zip(rhs.row(k)) {
                    *oj += aik * bkj;
                }
            }
        }
        Ok(out)
    }

    /// `self · rhsᵀ`, i.e. all pairwise row dot products.
    pub fn matmul_transposed(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.cols {
            return Err(Error::shape("matmul_transposed", format!("{:?} x {:?}ᵀ", self.shape(), rhs.shape())));
        }
        let mut data = Vec::with_capacity(self.rows * rhs.rows);
        for a in self.row_iter() {
            for b in rhs.row_iter() {
                data.push(dot(a, b));
            }
        }
        Ok(Matrix::from_vec_unchecked(self.rows, rhs.rows, data))
    }

    pub fn scale(mut self, factor: f64) -> Matrix {
        self.data.iter_mut().for_each(|v| *v *= factor);
        self
    }

    /// Column-wise concatenation `[self, rhs]`.
    pub fn hcat(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.rows != rhs.rows {
            return Err(Error::shape("hcat", format!("{:?} | {:?}", self.shape(), rhs.shape())));
        }
        let cols = self.cols + rhs.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(rhs.row(i));
        }
        Ok(Matrix::from_vec_unchecked(self.rows, cols, data))
    }

    /// Row-wise concatenation.
    pub fn vcat(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.cols {
            return Err(Error::shape("vcat", format!("{:?} / {:?}", self.shape(), rhs.shape())));
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&rhs.data);
        Ok(Matrix::from_vec_unchecked(self.rows + rhs.rows, self.cols, data))
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix {
        Matrix::from_vec_unchecked(end - start, self.cols, self.data[start * self.cols..end * self.cols].to_vec())
    }

    /// Gathers rows by index; `out.row(k) == self.row(idx[k])`.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_vec_unchecked(idx.len(), self.cols, data)
    }

    /// Gathers columns by index.
    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.rows);
        for i in 0..self.rows {
            let r = self.row(i);
            data.extend(idx.iter().map(|&j| r[j]));
        }
        Matrix::from_vec_unchecked(self.rows, idx.len(), data)
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Softmax of a single slice, in place. The max is subtracted first.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Numerically stable softmax applied independently to every row.
pub fn row_softmax(logits: &Matrix) -> Result<Matrix> {
    if !logits.is_finite() {
        return Err(Error::NonFinite("row_softmax logits"));
    }
    let mut out = logits.clone();
    for i in 0..out.rows {
        softmax_in_place(out.row_mut(i));
    }
    Ok(out)
}

/// `softmax(Q Kᵀ / √d_k) V` with `d_k = Q.cols`.
pub fn sdpa(q: &Matrix, k: &Matrix, v: &Matrix) -> Result<Matrix> {
    if q.cols != k.cols {
        return Err(Error::shape("sdpa", format!("query width {} != key width {}", q.cols, k.cols)));
    }
    if k.rows != v.rows {
        return Err(Error::shape("sdpa", format!("{} keys but {} values", k.rows, v.rows)));
    }
    if k.rows == 0 {
        return Err(Error::shape("sdpa", "empty key set"));
    }
    let scale = 1.0 / (q.cols as f64).sqrt();
    let mut weights = vec![0.0; k.rows];
    let mut out = Matrix::zeros(q.rows, v.cols);
    for i in 0..q.rows {
        let qi = q.row(i);
        for (w, kj) in weights.iter_mut().zip(k.row_iter()) {
            *w = dot(qi, kj) * scale;
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("sdpa logits"));
        }
        softmax_in_place(&mut weights);
        let o = out.row_mut(i);
        for (&w, vj) in weights.iter().zip(v.row_iter()) {
            for (oc, &vc) in o.iter_mut().zip(vj) {
                *oc += w * vc;
            }
        }
    }
    Ok(out)
}

/// Query, key and value inputs for one attention head.
#[derive(Debug, Clone)]
pub struct Head {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
}

/// Runs [`sdpa`] per head, concatenates the outputs column-wise and projects
/// them with `w_out` (shape `(H·d_v) × d_out`).
pub fn multi_head_sdpa(heads: &[Head], w_out: &Matrix) -> Result<Matrix> {
    let Some(first) = heads.first() else {
        return Err(Error::InvalidArgument("multi-head attention needs at least one head".into()));
    };
    let mut concat = sdpa(&first.q, &first.k, &first.v)?;
    for h in &heads[1..] {
        concat = concat.hcat(&sdpa(&h.q, &h.k, &h.v)?)?;
    }
    concat.matmul(w_out)
}

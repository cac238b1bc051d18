//! Dense row-major matrices and the handful of kernels the networks need.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

pub type Complex64 = Complex<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "data length does not match shape");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols;
        &mut self.data[i * c..(i + 1) * c]
    }

    /// `out = self * x`.
    #[inline]
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o = dot(row, x);
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(x, &mut out);
        out
    }

    /// `out += self^T * y`.
    #[inline]
    pub fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if yi != 0.0 {
                axpy(yi, row, out);
            }
        }
    }

    /// `self += a * x y^T`.
    #[inline]
    pub fn rank1_acc(&mut self, a: f64, x: &[f64], y: &[f64]) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        let cols = self.cols;
        for (&xi, row) in x.iter().zip(self.data.chunks_exact_mut(cols)) {
            let s = a * xi;
            if s != 0.0 {
                axpy(s, y, row);
            }
        }
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Principal submatrix on the given (sorted) index set.
    pub fn submatrix(&self, idx: &[usize]) -> Mat {
        Mat::from_fn(idx.len(), idx.len(), |i, j| self.get(idx[i], idx[j]))
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn to_nalgebra(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.data)
    }

    /// All eigenvalues of a square matrix, via real Schur decomposition.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        assert_eq!(self.rows, self.cols, "eigenvalues of a non-square matrix");
        if self.rows == 0 {
            return Vec::new();
        }
        self.to_nalgebra().complex_eigenvalues().iter().copied().collect()
    }

    /// Solves `(I - self) x = b`; `None` when the system is singular.
    pub fn solve_identity_minus(&self, b: &[f64]) -> Option<Vec<f64>> {
        let n = self.rows;
        let m = DMatrix::<f64>::identity(n, n) - self.to_nalgebra();
        let lu = m.lu();
        let rhs = nalgebra::DVector::from_column_slice(b);
        lu.solve(&rhs).map(|x| x.iter().copied().collect())
    }

    /// Spectral radius (largest eigenvalue modulus).
    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators so the loop vectorizes without -ffast-math.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = logits.iter().map(|&z| (z - m).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

/// `log(sum(exp(z)))`, stable.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + logits.iter().map(|&z| (z - m).exp()).sum::<f64>().ln()
}

pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose_agree() {
        let m = Mat::from_fn(3, 5, |i, j| (i * 5 + j) as f64 * 0.1 - 0.7);
        let y = [0.3, -1.0, 2.0];
        let mut out = vec![0.0; 5];
        m.matvec_t_acc(&y, &mut out);
        let expect = m.transpose().matvec(&y);
        for (a, b) in out.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn eigenvalues_of_rotation() {
        let th: f64 = 0.3;
        let m = Mat::from_vec(2, 2, vec![th.cos(), -th.sin(), th.sin(), th.cos()]);
        let ev = m.eigenvalues();
        assert_eq!(ev.len(), 2);
        for z in ev {
            assert!((z.norm() - 1.0).abs() < 1e-12);
            assert!((z.arg().abs() - th).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_closed_form() {
        let p = softmax(&[1.0, 0.0, 0.0]);
        let e = std::f64::consts::E;
        assert!((p[0] - e / (e + 2.0)).abs() < 1e-15);
        assert!((p[1] - 1.0 / (e + 2.0)).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}

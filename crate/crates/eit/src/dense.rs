//! Small dense-matrix kernels used by the Jacobian, the constrained solver,
//! and the network layers. Row-major storage throughout.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// y = A^T x.
    pub fn tr_matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows);
        let mut y = vec![0.0; self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for (yj, aij) in y.iter_mut().zip(self.row(i)) {
                *yj += aij * xi;
            }
        }
        y
    }

    /// Gram matrix A^T A, returned as a full symmetric `cols x cols` matrix.
    /// Rows are computed independently so the result does not depend on the
    /// rayon schedule.
    pub fn gram(&self) -> Mat {
        let n = self.cols;
        let mut out = Mat::zeros(n, n);
        out.data
            .par_chunks_mut(n)
            .enumerate()
            .for_each(|(j, out_row)| {
                for i in 0..self.rows {
                    let a = self.row(i);
                    let aij = a[j];
                    if aij == 0.0 {
                        continue;
                    }
                    for (o, &aik) in out_row.iter_mut().zip(a) {
                        *o += aij * aik;
                    }
                }
            });
        out
    }

    /// C = A B. Output rows are computed independently so the result does
    /// not depend on the rayon schedule.
    pub fn matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows);
        let mut out = Mat::zeros(self.rows, rhs.cols);
        out.data
            .par_chunks_mut(rhs.cols.max(1))
            .enumerate()
            .for_each(|(i, out_row)| {
                for (k, &aik) in self.row(i).iter().enumerate() {
                    if aik == 0.0 {
                        continue;
                    }
                    for (o, &bkj) in out_row.iter_mut().zip(rhs.row(k)) {
                        *o += aik * bkj;
                    }
                }
            });
        out
    }

    /// C = A^T B.
    pub fn tr_matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.rows, rhs.rows);
        let mut out = Mat::zeros(self.cols, rhs.cols);
        out.data
            .par_chunks_mut(rhs.cols.max(1))
            .enumerate()
            .for_each(|(j, out_row)| {
                for i in 0..self.rows {
                    let aij = self.get(i, j);
                    if aij == 0.0 {
                        continue;
                    }
                    for (o, &bik) in out_row.iter_mut().zip(rhs.row(i)) {
                        *o += aij * bik;
                    }
                }
            });
        out
    }

    /// C = A B^T.
    pub fn matmul_tr(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.cols);
        let mut out = Mat::zeros(self.rows, rhs.rows);
        out.data
            .par_chunks_mut(rhs.rows.max(1))
            .enumerate()
            .for_each(|(i, out_row)| {
                let a = self.row(i);
                for (j, o) in out_row.iter_mut().enumerate() {
                    *o = dot(a, rhs.row(j));
                }
            });
        out
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    /// Largest absolute difference between the matrix and its transpose.
    pub fn max_asymmetry(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cholesky factorization of a dense symmetric positive-definite matrix.
/// Stores the lower factor packed row-major.
#[derive(Debug, Clone)]
pub struct DenseCholesky {
    n: usize,
    l: Vec<f64>,
}

impl DenseCholesky {
    /// Factor `a` (full symmetric storage). Returns None if a pivot is not
    /// strictly positive.
    pub fn factor(a: &Mat) -> Option<Self> {
        assert_eq!(a.rows(), a.cols());
        let n = a.rows();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return None;
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Some(Self { n, l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                x[i] -= self.l[i * n + k] * x[k];
            }
            x[i] /= self.l[i * n + i];
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                x[i] -= self.l[k * n + i] * x[k];
            }
            x[i] /= self.l[i * n + i];
        }
        x
    }
}

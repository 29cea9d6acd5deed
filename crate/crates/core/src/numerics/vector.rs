//! Dense vectors and matrices, 64-bit floats throughout.

use std::ops::Index;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense column vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Vector(values)
    }

    pub fn from_slice(values: &[f64]) -> Self {
        Vector(values.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Fails on any NaN or infinite entry.
    pub fn validate_finite(&self, context: &'static str) -> Result<()> {
        validate_finite(&self.0, context)
    }

    fn check_dim(&self, other: &Vector, context: &'static str) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context,
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        self.check_dim(other, "vector add")?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        self.check_dim(other, "vector sub")?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    pub fn scale(&self, factor: f64) -> Vector {
        Vector(self.0.iter().map(|a| a * factor).collect())
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        self.check_dim(other, "vector dot")?;
        Ok(dot(&self.0, &other.0))
    }

    pub fn norm(&self) -> f64 {
        dot(&self.0, &self.0).sqrt()
    }

    /// In-place `self += factor * other`.
    pub fn axpy(&mut self, factor: f64, other: &Vector) -> Result<()> {
        self.check_dim(other, "vector axpy")?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += factor * b;
        }
        Ok(())
    }
}

impl Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn validate_finite(values: &[f64], context: &'static str) -> Result<()> {
    if values.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { context });
    }
    Ok(())
}

/// Scale a vector so its L2 norm does not exceed `threshold`; vectors already
/// inside the ball pass through unchanged.
pub fn l2_clip(v: &Vector, threshold: f64) -> Result<Vector> {
    if !(threshold > 0.0) {
        return Err(Error::InvalidParameter {
            context: "l2_clip",
            message: format!("threshold must be positive, got {threshold}"),
        });
    }
    v.validate_finite("l2_clip")?;
    let n = v.norm();
    if n <= threshold {
        Ok(v.clone())
    } else {
        Ok(v.scale(threshold / n))
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    context: "matrix from_rows",
                    expected: c,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: r,
            cols: c,
            data,
        })
    }

    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Result<Matrix> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "matrix from_flat",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn matvec(&self, v: &Vector) -> Result<Vector> {
        if v.dim() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "matvec",
                expected: self.cols,
                got: v.dim(),
            });
        }
        Ok(Vector::from_vec(
            (0..self.rows)
                .map(|r| dot(self.row(r), v.as_slice()))
                .collect(),
        ))
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "matmul",
                expected: self.cols,
                got: other.rows,
            });
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == 0.0 {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * out.cols + c] += a * other.get(k, c);
                }
            }
        }
        Ok(out)
    }

    pub fn validate_finite(&self, context: &'static str) -> Result<()> {
        validate_finite(&self.data, context)
    }
}

/// Largest-magnitude eigenvalue and full spectrum of a small symmetric matrix
/// via cyclic Jacobi rotations. Intended for d up to a few hundred.
pub fn sym_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    if m.rows != m.cols {
        return Err(Error::DimensionMismatch {
            context: "sym_eigenvalues",
            expected: m.rows,
            got: m.cols,
        });
    }
    let n = m.rows;
    let mut a = m.clone();
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a.get(p, q) * a.get(p, q);
            }
        }
        if off < 1e-24 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq.abs() < 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
            }
        }
    }
    let mut eigs: Vec<f64> = (0..n).map(|i| a.get(i, i)).collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Ok(eigs)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_lambda_max(m: &Matrix) -> Result<f64> {
    let eigs = sym_eigenvalues(m)?;
    eigs.last().copied().ok_or(Error::InvalidDimension {
        context: "sym_lambda_max",
        got: 0,
    })
}

/// Solve `A x = b` for a small square system by Gaussian elimination with
/// partial pivoting.
pub fn solve(a: &Matrix, b: &Vector) -> Result<Vector> {
    if a.rows != a.cols {
        return Err(Error::DimensionMismatch {
            context: "solve: square",
            expected: a.rows,
            got: a.cols,
        });
    }
    if b.dim() != a.rows {
        return Err(Error::DimensionMismatch {
            context: "solve: rhs",
            expected: a.rows,
            got: b.dim(),
        });
    }
    let n = a.rows;
    let mut m = a.clone();
    let mut x = b.clone().into_vec();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                m.get(i, col)
                    .abs()
                    .partial_cmp(&m.get(j, col).abs())
                    .unwrap()
            })
            .unwrap();
        if m.get(pivot, col).abs() < 1e-300 {
            return Err(Error::InvalidParameter {
                context: "solve",
                message: "singular matrix".into(),
            });
        }
        if pivot != col {
            for k in 0..n {
                let tmp = m.get(col, k);
                m.set(col, k, m.get(pivot, k));
                m.set(pivot, k, tmp);
            }
            x.swap(col, pivot);
        }
        for row in (col + 1)..n {
            let f = m.get(row, col) / m.get(col, col);
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                let v = m.get(row, k) - f * m.get(col, k);
                m.set(row, k, v);
            }
            x[row] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut s = x[col];
        for (k, &xk) in x.iter().enumerate().skip(col + 1) {
            s -= m.get(col, k) * xk;
        }
        x[col] = s / m.get(col, col);
    }
    Ok(Vector::from_vec(x))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimension_mismatch_is_loud() {
        let a = Vector::from_vec(vec![1.0, 2.0]);
        let b = Vector::from_vec(vec![1.0]);
        assert!(a.add(&b).is_err());
        assert!(a.dot(&b).is_err());
        let m = Matrix::zeros(2, 3);
        assert!(m.matvec(&b).is_err());
    }

    #[test]
    fn non_finite_detected() {
        let v = Vector::from_vec(vec![1.0, f64::NAN]);
        assert!(v.validate_finite("test").is_err());
        assert!(l2_clip(&v, 1.0).is_err());
    }

    #[test]
    fn l2_clip_scales_over_threshold() {
        let v = Vector::from_vec(vec![3.0, 4.0]);
        let c = l2_clip(&v, 1.0).unwrap();
        assert!((c[0] - 0.6).abs() < 1e-15);
        assert!((c[1] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn l2_clip_under_threshold_unchanged() {
        let v = Vector::from_vec(vec![0.3, 0.4]);
        let c = l2_clip(&v, 1.0).unwrap();
        assert_eq!(c.as_slice(), v.as_slice());
    }

    #[test]
    fn l2_clip_four_ones() {
        let v = Vector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        let c = l2_clip(&v, 1.0).unwrap();
        for i in 0..4 {
            assert!((c[i] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn jacobi_matches_known_spectrum() {
        let m = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let eigs = sym_eigenvalues(&m).unwrap();
        assert!((eigs[0] - 2.0).abs() < 1e-12);
        assert!((eigs[1] - 4.0).abs() < 1e-12);

        // 2x2 with known closed form: eigs of [[2,1],[1,2]] are 1 and 3.
        let m = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let eigs = sym_eigenvalues(&m).unwrap();
        assert!((eigs[0] - 1.0).abs() < 1e-12);
        assert!((eigs[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn solve_roundtrip() {
        let a = Matrix::from_rows(&[
            vec![4.0, 1.0, 0.0],
            vec![1.0, 3.0, 1.0],
            vec![0.0, 1.0, 2.0],
        ])
        .unwrap();
        let x_true = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        let b = a.matvec(&x_true).unwrap();
        let x = solve(&a, &b).unwrap();
        for i in 0..3 {
            assert!((x[i] - x_true[i]).abs() < 1e-12);
        }
    }
}

use serde::{Deserialize, Serialize};
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

/// Small dense matrix of size 2 or 3, stored in a fixed 3×3 array.
/// Entries outside the leading `n × n` block are always zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    pub n: usize,
    pub a: [[f64; 3]; 3],
}

impl Mat {
    pub fn zeros(n: usize) -> Self {
        debug_assert!(n == 2 || n == 3);
        Mat { n, a: [[0.0; 3]; 3] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.a[i][i] = 1.0;
        }
        m
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, v) in d.iter().enumerate() {
            m.a[i][i] = *v;
        }
        m
    }

    /// Row-major entries, `rows.len()` must be 4 or 9.
    pub fn from_rows(n: usize, rows: &[f64]) -> Self {
        assert_eq!(rows.len(), n * n, "expected {} entries", n * n);
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.a[i][j] = rows[i * n + j];
            }
        }
        m
    }

    pub fn unit(n: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(n);
        m.a[i][j] = 1.0;
        m
    }

    pub fn entries(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.n * self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                v.push(self.a[i][j]);
            }
        }
        v
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for row in m.a.iter_mut() {
            for v in row.iter_mut() {
                *v *= s;
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m.a[i][j] = self.a[j][i];
            }
        }
        m
    }

    pub fn sym(&self) -> Self {
        (*self + self.transpose()).scale(0.5)
    }

    pub fn det(&self) -> f64 {
        let a = &self.a;
        match self.n {
            2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
            _ => {
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
                    - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            }
        }
    }

    /// Inverse by cofactors; `None` when the determinant is not safely nonzero.
    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if !d.is_finite() || d.abs() <= 1e-300 {
            return None;
        }
        let a = &self.a;
        let mut m = Self::zeros(self.n);
        match self.n {
            2 => {
                m.a[0][0] = a[1][1] / d;
                m.a[0][1] = -a[0][1] / d;
                m.a[1][0] = -a[1][0] / d;
                m.a[1][1] = a[0][0] / d;
            }
            _ => {
                for i in 0..3 {
                    for j in 0..3 {
                        let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                        let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                        m.a[i][j] = (a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]) / d;
                    }
                }
            }
        }
        Some(m)
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn frobenius_sq(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s += self.a[i][j] * self.a[i][j];
            }
        }
        s
    }

    pub fn max_abs(&self) -> f64 {
        let mut s: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                s = s.max(self.a[i][j].abs());
            }
        }
        s
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().flatten().all(|v| v.is_finite())
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn sym_eigenvalues(&self) -> Vec<f64> {
        let s = self.sym();
        match self.n {
            2 => {
                let (p, q, r) = (s.a[0][0], s.a[0][1], s.a[1][1]);
                let mid = 0.5 * (p + r);
                let rad = (0.25 * (p - r) * (p - r) + q * q).sqrt();
                vec![mid - rad, mid + rad]
            }
            _ => {
                let m = nalgebra::Matrix3::from_fn(|i, j| s.a[i][j]);
                let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
                ev.sort_by(|a, b| a.total_cmp(b));
                ev
            }
        }
    }

    pub fn sym_min_eig(&self) -> f64 {
        self.sym_eigenvalues()[0]
    }

    /// Spectral norm, from the eigenvalues of `MᵀM`.
    pub fn op_norm(&self) -> f64 {
        let g = self.transpose() * *self;
        let ev = g.sym_eigenvalues();
        ev.last().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    pub fn mul_vec(&self, v: &[f64; 3]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..self.n {
            for j in 0..self.n {
                out[i] += self.a[i][j] * v[j];
            }
        }
        out
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.a[i][j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.a[i][j]
    }
}

impl Add for Mat {
    type Output = Mat;
    fn add(self, o: Mat) -> Mat {
        let mut m = self;
        for i in 0..3 {
            for j in 0..3 {
                m.a[i][j] += o.a[i][j];
            }
        }
        m
    }
}

impl Sub for Mat {
    type Output = Mat;
    fn sub(self, o: Mat) -> Mat {
        let mut m = self;
        for i in 0..3 {
            for j in 0..3 {
                m.a[i][j] -= o.a[i][j];
            }
        }
        m
    }
}

impl Neg for Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

impl Mul for Mat {
    type Output = Mat;
    fn mul(self, o: Mat) -> Mat {
        let mut m = Mat::zeros(self.n);
        for i in 0..self.n {
            for k in 0..self.n {
                let v = self.a[i][k];
                if v == 0.0 {
                    continue;
                }
                for j in 0..self.n {
                    m.a[i][j] += v * o.a[k][j];
                }
            }
        }
        m
    }
}

/// Euclidean norm of a 3-vector.
pub fn norm3(v: &[f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_roundtrip() {
        let m = Mat::from_rows(3, &[2.0, 1.0, 0.5, 0.0, 3.0, 1.0, 1.0, 0.0, 4.0]);
        let p = m * m.inverse().unwrap();
        assert!((p - Mat::identity(3)).max_abs() < 1e-14);
        let m2 = Mat::from_rows(2, &[2.0, 1.0, 3.0, 4.0]);
        let p2 = m2.inverse().unwrap() * m2;
        assert!((p2 - Mat::identity(2)).max_abs() < 1e-14);
    }

    #[test]
    fn eigen_and_norms() {
        let d = Mat::diag(&[2.0, 0.5]);
        assert_eq!(d.sym_eigenvalues(), vec![0.5, 2.0]);
        assert!((d.op_norm() - 2.0).abs() < 1e-14);
        let r = Mat::from_rows(3, &[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert!((r.op_norm() - 1.0).abs() < 1e-12);
        assert!((r.sym_min_eig() - 0.0).abs() < 1e-12);
    }

    #[test]
    fn singular_has_no_inverse() {
        assert!(Mat::from_rows(2, &[1.0, 2.0, 2.0, 4.0]).inverse().is_none());
    }
}

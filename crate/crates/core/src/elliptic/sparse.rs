//! Compressed sparse rows, ILU(0) and two preconditioned Krylov solvers.

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Csr {
    /// Builds from unsorted triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            if last == Some((r, c)) {
                *vals.last_mut().expect("duplicate follows an entry") += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { n, row_ptr, cols, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[p] * x[self.cols[p]];
            }
            y[i] = s;
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.cols[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(p) => self.vals[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    /// Symmetric to relative tolerance `tol` (entries compared against the
    /// largest magnitude in the matrix).
    pub fn is_symmetric(&self, tol: f64) -> bool {
        let scale = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.cols[p];
                if (self.vals[p] - self.get(j, i)).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }
}

/// Incomplete LU with the sparsity pattern of the matrix.
pub struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &Csr) -> Result<Self> {
        let mut lu = a.clone();
        let n = a.n;
        let mut diag = vec![usize::MAX; n];
        for (i, d) in diag.iter_mut().enumerate() {
            for p in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.cols[p] == i {
                    *d = p;
                }
            }
            if *d == usize::MAX {
                return Err(Error::Numerical(format!("row {i} has no diagonal entry")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (lo, hi) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for p in lo..hi {
                pos[lu.cols[p]] = p;
            }
            for p in lo..hi {
                let k = lu.cols[p];
                if k >= i {
                    break;
                }
                let pivot = lu.vals[diag[k]];
                let f = lu.vals[p] / pivot;
                lu.vals[p] = f;
                for q in diag[k] + 1..lu.row_ptr[k + 1] {
                    let c = lu.cols[q];
                    if pos[c] != usize::MAX {
                        lu.vals[pos[c]] -= f * lu.vals[q];
                    }
                }
            }
            for p in lo..hi {
                pos[lu.cols[p]] = usize::MAX;
            }
            if lu.vals[diag[i]].abs() < 1e-300 {
                return Err(Error::Numerical(format!("zero pivot in incomplete factorization at row {i}")));
            }
        }
        Ok(Ilu0 { lu, diag })
    }

    /// Solves `LU z = r`.
    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = r[i];
            for p in lu.row_ptr[i]..self.diag[i] {
                s -= lu.vals[p] * z[lu.cols[p]];
            }
            z[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = z[i];
            for p in self.diag[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.vals[p] * z[lu.cols[p]];
            }
            z[i] = s / lu.vals[self.diag[i]];
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final `‖b − Ax‖ / ‖b‖`.
    pub residual: f64,
    pub history: Vec<f64>,
    pub method: &'static str,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn true_residual(a: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let mut ax = vec![0.0; a.n];
    a.mul(x, &mut ax);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
    norm(&r) / norm(b).max(1e-300)
}

fn stalled(iterations: usize, residual: f64, history: Vec<f64>) -> Error {
    Error::SolverStalled { iterations, residual, history }
}

/// Preconditioned conjugate gradients.
pub fn pcg(a: &Csr, b: &[f64], x: &mut [f64], pre: &Ilu0, tol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = a.n;
    let bn = norm(b);
    if bn == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0, history: vec![], method: "pcg" });
    }
    let mut r = vec![0.0; n];
    a.mul(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z = vec![0.0; n];
    pre.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut history = Vec::new();
    for it in 1..=max_iter {
        a.mul(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(stalled(it, norm(&r) / bn, history));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / bn;
        history.push(rel);
        if rel <= tol {
            let residual = true_residual(a, x, b);
            return Ok(SolveStats { iterations: it, residual, history, method: "pcg" });
        }
        pre.apply(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let rel = norm(&r) / bn;
    Err(stalled(max_iter, rel, history))
}

/// Right-preconditioned BiCGSTAB.
pub fn bicgstab(a: &Csr, b: &[f64], x: &mut [f64], pre: &Ilu0, tol: f64, max_iter: usize) -> Result<SolveStats> {
    let n = a.n;
    let bn = norm(b);
    if bn == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveStats { iterations: 0, residual: 0.0, history: vec![], method: "bicgstab" });
    }
    let mut r = vec![0.0; n];
    a.mul(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut zz = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut history = Vec::new();
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new.abs() < 1e-300 {
            return Err(stalled(it, norm(&r) / bn, history));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pre.apply(&p, &mut y);
        a.mul(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / bn <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            history.push(norm(&s) / bn);
            let residual = true_residual(a, x, b);
            return Ok(SolveStats { iterations: it, residual, history, method: "bicgstab" });
        }
        pre.apply(&s, &mut zz);
        a.mul(&zz, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for i in 0..n {
            x[i] += alpha * y[i] + omega * zz[i];
            r[i] = s[i] - omega * t[i];
        }
        let rel = norm(&r) / bn;
        history.push(rel);
        if rel <= tol {
            let residual = true_residual(a, x, b);
            return Ok(SolveStats { iterations: it, residual, history, method: "bicgstab" });
        }
        if omega == 0.0 {
            return Err(stalled(it, rel, history));
        }
    }
    let rel = norm(&r) / bn;
    Err(stalled(max_iter, rel, history))
}

/// PCG for symmetric matrices, BiCGSTAB otherwise, both with ILU(0).
pub fn solve(a: &Csr, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    let pre = Ilu0::new(a)?;
    let mut x = vec![0.0; a.n];
    let stats = if a.is_symmetric(1e-13) {
        pcg(a, b, &mut x, &pre, tol, max_iter)?
    } else {
        bicgstab(a, b, &mut x, &pre, tol, max_iter)?
    };
    Ok((x, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize, skew: f64) -> Csr {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0 - skew));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0 + skew));
            }
        }
        Csr::from_triplets(n, t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = Csr::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, 1.0)]);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.get(1, 0), 2.0);
        assert_eq!(m.get(1, 1), 0.0);
        assert_eq!(m.nnz(), 3);
    }

    #[test]
    fn ilu_is_exact_for_tridiagonal() {
        let a = laplacian_1d(30, 0.2);
        let pre = Ilu0::new(&a).unwrap();
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let mut z = vec![0.0; 30];
        pre.apply(&b, &mut z);
        let mut az = vec![0.0; 30];
        a.mul(&z, &mut az);
        for i in 0..30 {
            assert!((az[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn krylov_solvers_converge() {
        let b: Vec<f64> = (0..200).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        for skew in [0.0, 0.3] {
            let a = laplacian_1d(200, skew);
            let (x, st) = solve(&a, &b, 1e-10, 10_000).unwrap();
            assert!(st.residual < 1e-9, "{}: {}", st.method, st.residual);
            assert_eq!(st.method, if skew == 0.0 { "pcg" } else { "bicgstab" });
            assert!(x.iter().all(|v| v.is_finite()));
        }
    }
}

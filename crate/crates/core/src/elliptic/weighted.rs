//! Degenerate operator `−div(|t|^{d+1−n} A∇u)` on `R³ \ R¹` in cylindrical
//! coordinates `(x, θ, r)`, `r ∈ [h, 1]`.
//!
//! With physical point `(x, r cos θ, r sin θ)` the weak form pulls back to
//! a plain Q1 problem in `(x, θ, r)` with coefficient `J⁻¹ A J⁻ᵀ` times
//! `w(r)·r = 1` for `d = 1`.

use super::{solve_problem, DiscreteSolution, Problem, StripGrid};
use crate::error::{Error, Result};
use crate::field::Point;
use crate::matrix::Mat;
use crate::mesh::HalfSpaceMesh;
use std::f64::consts::PI;

pub const N_THETA: usize = 16;

/// Physical coefficient as a function of `x` and `t = (t₂, t₃)`.
pub type CylCoeff<'a> = &'a (dyn Fn(f64, [f64; 2]) -> Mat + Sync);
/// Physical flux vector `(x, t₂, t₃)` at `(x, t)`.
pub type CylFlux<'a> = &'a (dyn Fn(f64, [f64; 2]) -> [f64; 3] + Sync);

pub enum WeightedData<'a> {
    /// Trace `f(x, θ)` on the inner ring; `mean(f)` at `r = 1`.
    Trace(&'a (dyn Fn(f64, f64) -> f64 + Sync)),
    /// Zero traces, right-hand side `−div(w 𝐡)`.
    Source(CylFlux<'a>),
}

/// Cylindrical grid: lateral axes `x` (period 1) and `θ` (period 2π),
/// normal axis `r ∈ [h, 1]`.
pub fn cyl_grid(mesh: &HalfSpaceMesh) -> StripGrid {
    StripGrid {
        dims: 3,
        nlat: [mesh.nx, N_THETA],
        lat_len: [1.0, 2.0 * PI],
        nz: mesh.nx - 1,
        z0: mesh.h,
        z1: 1.0,
    }
}

/// Rows are the gradients of `x`, `θ`, `r` in physical coordinates.
pub fn inverse_jacobian(theta: f64, r: f64) -> Mat {
    let (s, c) = theta.sin_cos();
    Mat::from_rows(3, &[1.0, 0.0, 0.0, 0.0, -s / r, c / r, 0.0, c, s])
}

pub fn physical(x: f64, theta: f64, r: f64) -> (f64, [f64; 2]) {
    (x, [r * theta.cos(), r * theta.sin()])
}

/// Solves the weighted problem for `(n, d) = (3, 1)`.
pub fn solve_weighted(a: CylCoeff, data: WeightedData, mesh: &HalfSpaceMesh, n: usize, d: usize) -> Result<DiscreteSolution> {
    if (n, d) != (3, 1) {
        return Err(Error::NotApplicable(format!("weighted solver supports (n, d) = (3, 1), got ({n}, {d})")));
    }
    let grid = cyl_grid(mesh);
    let coeff = |p: &Point| {
        let (theta, r) = (p.x[1], p.t);
        let (x, t) = physical(p.x[0], theta, r);
        let jinv = inverse_jacobian(theta, r);
        // w(r) |det J| = r⁻¹ r
        jinv * a(x, t) * jinv.transpose()
    };
    let nl = grid.n_lat();
    match data {
        WeightedData::Trace(f) => {
            let bottom: Vec<f64> = (0..nl)
                .map(|l| {
                    let p = grid.node_point(l);
                    f(p.x[0], p.x[1])
                })
                .collect();
            let m = bottom.iter().sum::<f64>() / nl as f64;
            let prob = Problem { grid, coeff: &coeff, bottom, top: vec![m; nl], flux: None, source: None };
            solve_problem(&prob)
        }
        WeightedData::Source(h) => {
            let flux = |p: &Point| {
                let (theta, r) = (p.x[1], p.t);
                let (x, t) = physical(p.x[0], theta, r);
                inverse_jacobian(theta, r).mul_vec(&h(x, t))
            };
            let prob =
                Problem { grid, coeff: &coeff, bottom: vec![0.0; nl], top: vec![0.0; nl], flux: Some(&flux), source: None };
            solve_problem(&prob)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_trace_gives_constant() {
        let mesh = HalfSpaceMesh::new(3, 3).unwrap();
        let id = |_: f64, _: [f64; 2]| Mat::identity(3);
        let one = |_: f64, _: f64| 2.5;
        let sol = solve_weighted(&id, WeightedData::Trace(&one), &mesh, 3, 1).unwrap();
        assert!(sol.values.iter().all(|v| (v - 2.5).abs() < 1e-10));
    }

    #[test]
    fn pulled_back_identity_is_diagonal() {
        let j = inverse_jacobian(0.7, 0.4);
        let k = j * j.transpose();
        assert!((k[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((k[(1, 1)] - 1.0 / 0.16).abs() < 1e-12);
        assert!((k[(2, 2)] - 1.0).abs() < 1e-14);
        assert!(k[(1, 2)].abs() < 1e-14);
    }

    #[test]
    fn rejects_other_codimensions() {
        let mesh = HalfSpaceMesh::new(3, 3).unwrap();
        let id = |_: f64, _: [f64; 2]| Mat::identity(3);
        let one = |_: f64, _: f64| 1.0;
        assert!(solve_weighted(&id, WeightedData::Trace(&one), &mesh, 3, 2).is_err());
    }
}

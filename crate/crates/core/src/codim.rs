//! Boundary of codimension two: `R³ \ R¹` with points `(x, t)`,
//! `t ∈ R² \ {0}`, radius `r = |t|` and the weight `|t|^{d+1−n} = r⁻¹`.

use crate::carleson::{self, CarlesonReport};
use crate::elliptic::weighted::{self, WeightedData, N_THETA};
use crate::elliptic::{DiscreteSolution, StripGrid, StripOracle, TrigData};
use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::mesh::HalfSpaceMesh;
use crate::quadrature::hash_unit;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Cylindrical mesh `x ∈ [0, 1)`, `θ ∈ [0, 2π)`, `r ∈ [h, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylMesh {
    pub n: usize,
    pub d: usize,
    pub j: u32,
    pub grid: StripGrid,
}

impl CylMesh {
    pub fn new(n: usize, d: usize, j: u32) -> Result<Self> {
        if (n, d) != (3, 1) {
            return Err(Error::NotApplicable(format!("only (n, d) = (3, 1) is supported, got ({n}, {d})")));
        }
        let mesh = HalfSpaceMesh::new(3, j)?;
        Ok(CylMesh { n, d, j, grid: weighted::cyl_grid(&mesh) })
    }

    pub fn h(&self) -> f64 {
        self.grid.hz()
    }

    pub fn n_theta(&self) -> usize {
        self.grid.nlat[1]
    }

    /// `r^{d+1−n}`.
    pub fn weight(&self, r: f64) -> f64 {
        r.powi(self.d as i32 + 1 - self.n as i32)
    }

    /// Volume of a cell whose inner radius is `r0`: `∫ r dr dθ dx`.
    pub fn cell_volume(&self, r0: f64) -> f64 {
        let h = self.h();
        self.grid.hx(0) * self.grid.hx(1) * 0.5 * ((r0 + h).powi(2) - r0 * r0)
    }
}

// ---------------------------------------------------------------- identities

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivativeCheck {
    pub samples: usize,
    /// `max |∂_j u − (t_j/|t|)∂_r u − Σ_k (t_k/|t|) ∂_{φ_jk} u|`.
    pub gradient_residual: f64,
    /// `max |∂_r (t_k/|t|)|`.
    pub angle_residual: f64,
    /// `max |∂_{φ_jk} u|` for a radial `u`.
    pub radial_residual: f64,
}

/// Random trigonometric polynomial in `(x, t₂, t₃)` with its gradient.
struct TrigPoly {
    terms: Vec<([f64; 3], f64, f64)>,
}

impl TrigPoly {
    fn random(seed: u64) -> Self {
        let s = seed as i64;
        let terms = (0..4)
            .map(|i| {
                let k = [0, 1, 2].map(|d| (hash_unit(&[s, i, d]) * 7.0).floor() - 3.0);
                (k, hash_unit(&[s, i, 10]) * 2.0 - 1.0, hash_unit(&[s, i, 11]) * 2.0 * PI)
            })
            .collect();
        TrigPoly { terms }
    }

    fn grad(&self, p: [f64; 3]) -> [f64; 3] {
        let mut g = [0.0; 3];
        for (k, c, ph) in &self.terms {
            let arg = 2.0 * PI * (k[0] * p[0] + k[1] * p[1] + k[2] * p[2]) + ph;
            for d in 0..3 {
                g[d] -= c * 2.0 * PI * k[d] * arg.sin();
            }
        }
        g
    }
}

/// `∂_r u = (t/|t|)·∇_t u`.
fn radial(t: [f64; 2], g: [f64; 3]) -> f64 {
    let r = t[0].hypot(t[1]);
    (t[0] * g[1] + t[1] * g[2]) / r
}

/// `∂_{φ_jk} u = (t_k ∂_j u − t_j ∂_k u)/|t|` for `j, k ∈ {0, 1}` (indices
/// into `t`).
fn angular(t: [f64; 2], g: [f64; 3], j: usize, k: usize) -> f64 {
    let r = t[0].hypot(t[1]);
    (t[k] * g[1 + j] - t[j] * g[1 + k]) / r
}

/// Evaluates the cylindrical derivative identities at `samples` seeded
/// points with `|t| ∈ [0.05, 2]`.
pub fn cylindrical_derivative_check(samples: usize, seed: u64) -> DerivativeCheck {
    let mut out = DerivativeCheck { samples, gradient_residual: 0.0, angle_residual: 0.0, radial_residual: 0.0 };
    let s = seed as i64;
    for i in 0..samples as i64 {
        let x = hash_unit(&[s, i, 0]);
        let r = 0.05 + 1.95 * hash_unit(&[s, i, 1]);
        let th = 2.0 * PI * hash_unit(&[s, i, 2]);
        let t = [r * th.cos(), r * th.sin()];
        let u = TrigPoly::random(seed.wrapping_add(i as u64));
        let g = u.grad([x, t[0], t[1]]);
        let dr = radial(t, g);
        for j in 0..2 {
            let rebuilt = t[j] / r * dr + (0..2).map(|k| t[k] / r * angular(t, g, j, k)).sum::<f64>();
            out.gradient_residual = out.gradient_residual.max((g[1 + j] - rebuilt).abs());
        }
        // ∂_r(t_k/|t|) = Σ_j (t_j/|t|)(δ_jk/|t| − t_j t_k/|t|³)
        for k in 0..2 {
            let d: f64 = (0..2)
                .map(|j| t[j] / r * ((if j == k { 1.0 } else { 0.0 }) / r - t[j] * t[k] / r.powi(3)))
                .sum();
            out.angle_residual = out.angle_residual.max(d.abs());
        }
        // u = cos(2πr): ∇_t u = −2π sin(2πr) t/r
        let gr = -2.0 * PI * (2.0 * PI * r).sin() / r;
        let gu = [0.0, gr * t[0], gr * t[1]];
        out.radial_residual = out.radial_residual.max(angular(t, gu, 0, 1).abs()).max(angular(t, gu, 1, 0).abs());
    }
    out
}

// ---------------------------------------------------------------- radial identity

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialReport {
    pub j: u32,
    pub h: f64,
    /// `L²` error against the codimension-one oracle at `(x, r)`, with the
    /// angular measure normalized to one.
    pub l2_error: f64,
    pub max_error: f64,
    /// Largest spread in `θ` of the nodal values.
    pub theta_spread: f64,
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `−div(r⁻¹∇u) = 0` with `θ`-independent trace `f` and compares
/// against the harmonic extension of `f` evaluated at `(x, r)`.
pub fn radial_identity_probe(data: &TrigData, j: u32) -> Result<RadialReport> {
    let mesh = HalfSpaceMesh::new(3, j)?;
    let id = |_: f64, _: [f64; 2]| Mat::identity(3);
    let f = |x: f64, _: f64| data.eval(x);
    let sol = weighted::solve_weighted(&id, WeightedData::Trace(&f), &mesh, 3, 1)?;
    let oracle = StripOracle::new(data.clone(), 1.0, 1.0);
    let l2 = sol.l2_error(|p| oracle.eval(p.x[0], p.t)) / (2.0 * PI).sqrt();
    let max_error =
        (0..sol.grid.n_nodes()).map(|i| (sol.values[i] - oracle.eval(sol.grid.node_point(i).x[0], sol.grid.node_point(i).t)).abs()).fold(0.0, f64::max);
    Ok(RadialReport {
        j,
        h: mesh.h,
        l2_error: l2,
        max_error,
        theta_spread: theta_spread(&sol),
        iterations: sol.iterations,
        residual: sol.residual,
    })
}

/// Largest `max_θ u − min_θ u` over `(x, r)` node pairs.
pub fn theta_spread(sol: &DiscreteSolution) -> f64 {
    let g = &sol.grid;
    let mut worst: f64 = 0.0;
    for k in 0..=g.nz {
        for i in 0..g.nlat[0] {
            let vals = (0..g.nlat[1]).map(|m| sol.values[k * g.n_lat() + i + g.nlat[0] * m]);
            let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            worst = worst.max(hi - lo);
        }
    }
    worst
}

// ---------------------------------------------------------------- Carleson

/// Carleson norm of `g(x, θ, r)` with the measure `dx dt/|t|^{n−d}` over
/// tents `{|x − x₀| < s, |t| < s}`. The angular integral is normalized by
/// `2π`, which turns the measure into `dx dr/r` on the `(x, r)` half-plane.
pub fn codim_carleson_norm(g: &(dyn Fn(f64, f64, f64) -> f64 + Sync), mesh: &CylMesh) -> Result<CarlesonReport> {
    let plane = HalfSpaceMesh::new(2, mesh.j)?;
    let nt = mesh.n_theta();
    carleson::refinement_report(&plane, |m| {
        Ok(m.sample(|p| {
            (0..nt)
                .map(|k| {
                    let th = 2.0 * PI * (k as f64 + 0.5) / nt as f64;
                    g(p.x[0], th, p.t).powi(2)
                })
                .sum::<f64>()
                / nt as f64
        }))
    })
}

// ---------------------------------------------------------------- structure presets

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CodimCase {
    /// Off-diagonal blocks free, lower-right block `b₄ I`.
    General,
    /// Off-diagonal blocks `𝐛₂ t/|t|` and `(tᵀ/|t|) 𝐛₃`.
    Rotational,
}

/// Coefficients built from the profile `g(x, r) = δ sin(2πx) e^{−r/ℓ}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CodimPreset {
    pub case: CodimCase,
    pub delta: f64,
    pub ell: f64,
}

impl CodimPreset {
    pub fn profile(&self, x: f64, r: f64) -> f64 {
        self.delta * (2.0 * PI * x).sin() * (-r / self.ell).exp()
    }

    /// Matrix in the order `(x, t₂, t₃)`.
    pub fn eval(&self, x: f64, t: [f64; 2]) -> Mat {
        let r = t[0].hypot(t[1]);
        let g = self.profile(x, r);
        let b4 = 1.0 + 0.5 * g;
        let (upper, lower) = match self.case {
            CodimCase::General => ([0.5 * g, -0.25 * g], [0.25 * g, 0.5 * g]),
            CodimCase::Rotational => {
                let (b2, b3) = (0.5 * g, 0.25 * g);
                ([b2 * t[0] / r, b2 * t[1] / r], [b3 * t[0] / r, b3 * t[1] / r])
            }
        };
        Mat::from_rows(3, &[1.0 + g, upper[0], upper[1], lower[0], b4, 0.0, lower[1], 0.0, b4])
    }

    /// Largest violation of the block shape of this case at `(x, t)`.
    pub fn shape_residual(&self, x: f64, t: [f64; 2]) -> f64 {
        shape_residual(&self.eval(x, t), t, self.case)
    }
}

/// Block-shape residual: lower-right block a multiple of the identity and,
/// for the rotational case, off-diagonal blocks parallel to `t`.
pub fn shape_residual(m: &Mat, t: [f64; 2], case: CodimCase) -> f64 {
    let mut res = m[(1, 2)].abs().max(m[(2, 1)].abs()).max((m[(1, 1)] - m[(2, 2)]).abs());
    if case == CodimCase::Rotational {
        let r = t[0].hypot(t[1]);
        let perp = [-t[1] / r, t[0] / r];
        res = res
            .max((m[(0, 1)] * perp[0] + m[(0, 2)] * perp[1]).abs())
            .max((m[(1, 0)] * perp[0] + m[(2, 0)] * perp[1]).abs());
    }
    res
}

// ---------------------------------------------------------------- radial integration by parts

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialIbp {
    pub j: u32,
    /// `∬ f (∂_r|t|) dt/|t| dx`.
    pub first: f64,
    /// `∬ (∂_r f)|t| dt/|t| dx`.
    pub second: f64,
    pub residual: f64,
}

/// Midpoint quadrature of both radial terms for a smooth compactly
/// supported non-radial `f`, on `2^j` cells per unit in `x` and `r`.
pub fn radial_ibp_check(j: u32) -> Result<RadialIbp> {
    let mesh = HalfSpaceMesh::new(3, j)?;
    let n = mesh.nx;
    let h = mesh.h;
    let bump = |s: f64| if s.abs() < 1.0 { (1.0 - s * s).powi(4) } else { 0.0 };
    let dbump = |s: f64| if s.abs() < 1.0 { -8.0 * s * (1.0 - s * s).powi(3) } else { 0.0 };
    // f = bump(4(x − ½)) bump((r − 0.45)/0.35) (1 + 0.3 cos θ)
    let fr = |r: f64| bump((r - 0.45) / 0.35);
    let dfr = |r: f64| dbump((r - 0.45) / 0.35) / 0.35;
    let nt = 4 * N_THETA;
    let ang: f64 = (0..nt).map(|m| 1.0 + 0.3 * (2.0 * PI * (m as f64 + 0.5) / nt as f64).cos()).sum::<f64>() * 2.0 * PI / nt as f64;
    let (mut first, mut second) = (0.0, 0.0);
    for i in 0..n {
        let x = (i as f64 + 0.5) * h;
        let fx = bump(4.0 * (x - 0.5));
        for k in 0..n {
            let r = (k as f64 + 0.5) * h;
            // dt/|t| = dr dθ
            first += fx * fr(r) * ang * h * h;
            second += fx * dfr(r) * r * ang * h * h;
        }
    }
    Ok(RadialIbp { j, first, second, residual: (first + second).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_identities_hold() {
        let c = cylindrical_derivative_check(100, 3);
        assert!(c.gradient_residual < 1e-10, "{c:?}");
        assert!(c.angle_residual < 1e-10 && c.radial_residual < 1e-10);
    }

    #[test]
    fn presets_have_their_block_shape() {
        for case in [CodimCase::General, CodimCase::Rotational] {
            let p = CodimPreset { case, delta: 0.2, ell: 0.5 };
            for (x, t) in [(0.1, [0.3, -0.2]), (0.7, [-0.05, 0.6])] {
                assert!(p.shape_residual(x, t) < 1e-15);
            }
        }
        let general = CodimPreset { case: CodimCase::General, delta: 0.2, ell: 0.5 };
        assert!(shape_residual(&general.eval(0.1, [0.3, 0.2]), [0.3, 0.2], CodimCase::Rotational) > 1e-3);
    }

    #[test]
    fn radial_ibp_converges() {
        let a = radial_ibp_check(5).unwrap();
        let b = radial_ibp_check(6).unwrap();
        assert!(b.residual < a.residual / 3.0, "{a:?} {b:?}");
    }

    #[test]
    fn carleson_norm_of_zero_and_root() {
        let m = CylMesh::new(3, 1, 5).unwrap();
        assert_eq!(codim_carleson_norm(&|_, _, _| 0.0, &m).unwrap().norm, 0.0);
        let r = codim_carleson_norm(&|_, _, r: f64| r.sqrt(), &m).unwrap();
        assert!(r.norm.is_finite() && !r.diverging);
    }
}

//! The flattening map `ρ(x, t) = (x + t𝐯(x, t), t h(x, t))` built from the
//! last row `(𝐯, h)` of a smooth coefficient field, and the pullback of an
//! operator through it.

use crate::carleson::{self, CarlesonReport};
use crate::error::{Error, Result};
use crate::field::{gradient_or_fd, sample_points, FieldRef, Grad, MatrixField, Point};
use crate::matrix::Mat;
use crate::mesh::HalfSpaceMesh;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Sample count used to certify invertibility.
pub const INVERTIBILITY_SAMPLES: usize = 10_000;
/// Smallest height of the invertibility samples.
pub const SAMPLE_T_MIN: f64 = 1.0 / 128.0;
pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct MapConstants {
    pub sup_jacobian: f64,
    pub sup_inverse_jacobian: f64,
    pub min_det: f64,
    pub max_det: f64,
    /// `sup |J − I|` (operator norm).
    pub sup_deviation: f64,
    pub samples: usize,
}

impl MapConstants {
    /// Bi-Lipschitz constant `max(sup|J|, sup|J⁻¹|)`.
    pub fn bilipschitz(&self) -> f64 {
        self.sup_jacobian.max(self.sup_inverse_jacobian)
    }
}

pub struct ChangeOfVariable {
    source: FieldRef,
    pub analytic: bool,
    pub constants: MapConstants,
    pub invertible: bool,
}

impl std::fmt::Debug for ChangeOfVariable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChangeOfVariable")
            .field("source", &self.source.name())
            .field("analytic", &self.analytic)
            .field("constants", &self.constants)
            .finish()
    }
}

fn source_gradient(b: &dyn MatrixField, p: &Point) -> Result<Grad> {
    gradient_or_fd(b, p, 0.01 * p.t).ok_or_else(|| Error::NotApplicable(format!("field '{}' is not differentiable", b.name())))
}

impl ChangeOfVariable {
    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    pub fn source(&self) -> &FieldRef {
        &self.source
    }

    /// `(𝐯, h)` at a point.
    pub fn blocks(&self, p: &Point) -> ([f64; 2], f64) {
        let n = self.dim();
        let m = self.source.eval(p);
        let mut v = [0.0; 2];
        for (j, slot) in v.iter_mut().enumerate().take(n - 1) {
            *slot = m[(n - 1, j)];
        }
        (v, m[(n - 1, n - 1)])
    }

    pub fn map(&self, p: &Point) -> Point {
        let (v, h) = self.blocks(p);
        Point { x: [p.x[0] + p.t * v[0], p.x[1] + p.t * v[1]], t: p.t * h }
    }

    /// `∂ρ_i/∂y_j` with rows and columns ordered `(x₁, …, t)`.
    pub fn jacobian(&self, p: &Point) -> Result<Mat> {
        let n = self.dim();
        let k = n - 1;
        let m = self.source.eval(p);
        let g = source_gradient(self.source.as_ref(), p)?;
        let mut j = Mat::zeros(n);
        for i in 0..k {
            for d in 0..k {
                j[(i, d)] = if i == d { 1.0 } else { 0.0 } + p.t * g[d][(k, i)];
            }
            j[(i, k)] = m[(k, i)] + p.t * g[k][(k, i)];
        }
        for d in 0..k {
            j[(k, d)] = p.t * g[d][(k, k)];
        }
        j[(k, k)] = m[(k, k)] + p.t * g[k][(k, k)];
        Ok(j)
    }

    /// Central differences of the map with step `step` (capped at `t/2`
    /// vertically).
    pub fn jacobian_fd(&self, p: &Point, step: f64) -> Mat {
        let n = self.dim();
        let mut j = Mat::zeros(n);
        for d in 0..n {
            let hs = if d == n - 1 { step.min(0.5 * p.t) } else { step };
            let plus = self.map(&p.shifted(n, d, hs));
            let minus = self.map(&p.shifted(n, d, -hs));
            for i in 0..n {
                j[(i, d)] = (plus.coord(n, i) - minus.coord(n, i)) / (2.0 * hs);
            }
        }
        j
    }

    /// `|ρ(x, t) − (x, 0)| / t`.
    pub fn boundary_ratio(&self, x: [f64; 2], t: f64) -> f64 {
        let n = self.dim();
        let p = Point { x, t };
        let q = self.map(&p);
        let mut s = 0.0;
        for i in 0..n - 1 {
            s += (q.x[i] - x[i]).powi(2);
        }
        (s + q.t * q.t).sqrt() / t
    }

    /// Damped Newton solve of `ρ(Y) = X`.
    pub fn invert(&self, target: &Point) -> Result<Point> {
        if !self.invertible {
            return Err(Error::NotApplicable("the change of variable is not certified invertible".into()));
        }
        let n = self.dim();
        let (_, h) = self.blocks(target);
        let mut y = Point { x: target.x, t: target.t / h };
        let resid = |y: &Point| -> (Vec<f64>, f64) {
            let q = self.map(y);
            let r: Vec<f64> = (0..n).map(|i| q.coord(n, i) - target.coord(n, i)).collect();
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            (r, norm)
        };
        let (mut r, mut norm) = resid(&y);
        for _ in 0..NEWTON_MAX_ITER {
            if norm <= NEWTON_TOL {
                return Ok(y);
            }
            let j = self.jacobian(&y)?;
            let jinv = j.inverse().ok_or_else(|| Error::Numerical(format!("singular Jacobian at {y:?}")))?;
            let mut rv = [0.0; 3];
            rv[..n].copy_from_slice(&r);
            let step = jinv.mul_vec(&rv);
            let mut damping = 1.0;
            loop {
                let mut cand = y;
                for d in 0..n {
                    let c = cand.coord(n, d) - damping * step[d];
                    cand = cand.shifted(n, d, c - cand.coord(n, d));
                }
                if cand.t > 0.0 {
                    let (rc, nc) = resid(&cand);
                    if nc < norm || damping < 1e-6 {
                        y = cand;
                        r = rc;
                        norm = nc;
                        break;
                    }
                }
                damping *= 0.5;
                if damping < 1e-12 {
                    return Err(Error::Numerical(format!("Newton line search failed, residual {norm:.3e}")));
                }
            }
        }
        if norm <= NEWTON_TOL {
            Ok(y)
        } else {
            Err(Error::Numerical(format!("Newton did not converge, residual {norm:.3e}")))
        }
    }
}

/// Builds `ρ` from the last row of `b` and certifies invertibility by
/// checking `det J > 0` on `samples` quasi-random points.
pub fn build_rho(b: FieldRef, samples: usize) -> Result<ChangeOfVariable> {
    let n = b.dim();
    if samples == 0 {
        return Err(Error::Config("at least one invertibility sample is required".into()));
    }
    let analytic = b.gradient(&Point { x: [0.5, 0.5], t: 0.5 }).is_some();
    let mut rho = ChangeOfVariable { source: b, analytic, constants: MapConstants::default(), invertible: false };
    let pts = sample_points(n, samples, SAMPLE_T_MIN);
    let jac: Vec<Result<Mat>> = crate::par::map(pts.len(), |i| rho.jacobian(&pts[i]));
    let mut c = MapConstants { min_det: f64::INFINITY, samples, ..Default::default() };
    for (p, j) in pts.iter().zip(jac) {
        let j = j?;
        let det = j.det();
        if !(det > 0.0) {
            return Err(Error::NotInvertible { x: p.x, t: p.t, det });
        }
        let jinv = j.inverse().ok_or_else(|| Error::NotInvertible { x: p.x, t: p.t, det })?;
        c.sup_jacobian = c.sup_jacobian.max(j.op_norm());
        c.sup_inverse_jacobian = c.sup_inverse_jacobian.max(jinv.op_norm());
        c.min_det = c.min_det.min(det);
        c.max_det = c.max_det.max(det);
        c.sup_deviation = c.sup_deviation.max((j - Mat::identity(n)).op_norm());
    }
    rho.constants = c;
    rho.invertible = true;
    Ok(rho)
}

/// `A_ρ(Y) = |det J| J⁻¹ A(ρ(Y)) J⁻ᵀ`.
pub struct ConjugatedField {
    pub base: FieldRef,
    pub rho: std::sync::Arc<ChangeOfVariable>,
}

impl ConjugatedField {
    pub fn try_eval(&self, p: &Point) -> Result<Mat> {
        let j = self.rho.jacobian(p)?;
        let det = j.det();
        let jinv = j.inverse().ok_or_else(|| Error::Numerical(format!("singular Jacobian at {p:?}")))?;
        Ok((jinv * self.base.eval(&self.rho.map(p)) * jinv.transpose()).scale(det.abs()))
    }
}

impl MatrixField for ConjugatedField {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn eval(&self, p: &Point) -> Mat {
        self.try_eval(p).unwrap_or_else(|_| Mat::identity(self.dim()).scale(f64::NAN))
    }
    fn is_differentiable(&self) -> bool {
        self.base.is_differentiable()
    }
    fn ellipticity(&self) -> f64 {
        let c = &self.rho.constants;
        self.base.ellipticity() * c.min_det / c.sup_jacobian.powi(2)
    }
    fn bound(&self) -> f64 {
        let c = &self.rho.constants;
        self.base.bound() * c.max_det * c.sup_inverse_jacobian.powi(2)
    }
    fn name(&self) -> String {
        format!("{}_rho", self.base.name())
    }
    fn params(&self) -> BTreeMap<String, f64> {
        self.base.params()
    }
}

/// Pulls `a` back through `ρ`.
pub fn conjugate(a: FieldRef, rho: std::sync::Arc<ChangeOfVariable>) -> Result<ConjugatedField> {
    if a.dim() != rho.dim() {
        return Err(Error::Config(format!("field dimension {} does not match map dimension {}", a.dim(), rho.dim())));
    }
    if !rho.invertible {
        return Err(Error::NotApplicable("the change of variable is not certified invertible".into()));
    }
    Ok(ConjugatedField { base: a, rho })
}

/// Upper rows of a field with the last row replaced by `(0, …, 0, 1)`.
struct UpperBlock<'a>(&'a dyn MatrixField);

impl MatrixField for UpperBlock<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, p: &Point) -> Mat {
        let n = self.dim();
        let mut m = self.0.eval(p);
        for j in 0..n {
            m[(n - 1, j)] = if j == n - 1 { 1.0 } else { 0.0 };
        }
        m
    }
    fn is_differentiable(&self) -> bool {
        self.0.is_differentiable()
    }
    fn ellipticity(&self) -> f64 {
        self.0.ellipticity()
    }
    fn bound(&self) -> f64 {
        self.0.bound()
    }
    fn name(&self) -> String {
        format!("upper[{}]", self.0.name())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructureReport {
    /// Carleson norm of `|last row of A_ρ − (0, …, 0, 1)|`.
    pub deviation: CarlesonReport,
    /// Carleson norm of `t|∇|` of the upper rows (finite differences), or
    /// of their Whitney oscillation when the field is not differentiable.
    pub upper: CarlesonReport,
    pub upper_kind: String,
}

pub fn last_row_deviation(m: &Mat) -> f64 {
    let n = m.n;
    (0..n)
        .map(|j| {
            let target = if j == n - 1 { 1.0 } else { 0.0 };
            (m[(n - 1, j)] - target).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

pub fn structure_check(a_rho: &dyn MatrixField, mesh: &HalfSpaceMesh) -> Result<StructureReport> {
    let dev = |p: &Point| last_row_deviation(&a_rho.eval(p));
    let deviation = carleson::cm_norm(&dev, mesh)?;
    let upper_field = UpperBlock(a_rho);
    let (upper, upper_kind) = if a_rho.is_differentiable() {
        (carleson::dkp_norm(&upper_field, mesh)?, "dkp".to_string())
    } else {
        (carleson::weak_dkp_norm(&upper_field, mesh)?, "weak_dkp".to_string())
    };
    Ok(StructureReport { deviation, upper, upper_kind })
}

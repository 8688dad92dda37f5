//! Carleson norms over dyadic tents and the coefficient functionals built
//! on them: the Whitney oscillation, the gradient (DKP) norm and the
//! sup-deviation variant.

use crate::error::{Error, Result};
use crate::field::{grad_norm, gradient_or_fd, MatrixField, Point, ScalarField};
use crate::functionals;
use crate::matrix::Mat;
use crate::mesh::{DyadicTent, HalfSpaceMesh};
use crate::quadrature::{composite, gauss_legendre};
use serde::{Deserialize, Serialize};

/// Relative growth of `M²` between `J` and `J+1` above which a tail is
/// reported as diverging.
pub const DIVERGENCE_THRESHOLD: f64 = 0.05;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScaleEntry {
    pub scale: f64,
    pub max_average: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TentValue {
    pub center: [f64; 2],
    pub scale: f64,
    pub average: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CarlesonReport {
    /// `M`, square root of the largest tent average.
    pub norm: f64,
    /// `M²`, the largest tent average itself.
    pub norm_sq: f64,
    pub argmax: DyadicTent,
    pub per_scale: Vec<ScaleEntry>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub tents: Vec<TentValue>,
    pub diverging: bool,
    /// `M²` on the once-refined mesh, when a refinement study was run.
    pub refined_norm_sq: Option<f64>,
    pub j: u32,
}

impl CarlesonReport {
    fn zero(mesh: &HalfSpaceMesh) -> Self {
        CarlesonReport {
            norm: 0.0,
            norm_sq: 0.0,
            argmax: DyadicTent { center: [0.0; 2], scale: 1.0 },
            per_scale: Vec::new(),
            tents: Vec::new(),
            diverging: false,
            refined_norm_sq: None,
            j: mesh.j,
        }
    }
}

/// Tent report for a nonnegative per-cell density `d`: the tent average is
/// `⨍_{B(z,r)} ∫_h^r d dt/t dx`, quadrature weight `h/t` per level. The
/// bottom level `(0, h)` lies below the mesh floor and is left out.
pub fn tent_report(density: &[f64], mesh: &HalfSpaceMesh) -> CarlesonReport {
    assert_eq!(density.len(), mesh.n_cells());
    let nl = mesh.n_lateral();
    let nt = mesh.n_levels();
    // cumulative column sums: col[lat * (nt+1) + K] = Σ_{k<K}
    let mut col = vec![0.0; nl * (nt + 1)];
    for lat in 0..nl {
        let base = lat * (nt + 1);
        for k in 0..nt {
            let w = if k == 0 { 0.0 } else { mesh.h / mesh.level_height(k) };
            col[base + k + 1] = col[base + k] + density[mesh.cell_index(lat, k)] * w;
        }
    }
    let mut rep = CarlesonReport::zero(mesh);
    let mut best = -1.0;
    for js in 0..=mesh.j {
        let tents = mesh.tents_at(js);
        let vals = crate::par::map(tents.len(), |i| {
            let tent = &tents[i];
            let cols = mesh.ball_columns(tent.center, tent.scale);
            let kk = mesh.levels_below(tent.scale);
            let s: f64 = cols.iter().map(|&lat| col[lat * (nt + 1) + kk]).sum();
            if cols.is_empty() {
                0.0
            } else {
                s / cols.len() as f64
            }
        });
        let mut scale_max: f64 = 0.0;
        for (tent, v) in tents.iter().zip(vals) {
            scale_max = scale_max.max(v);
            if v > best {
                best = v;
                rep.argmax = *tent;
            }
            rep.tents.push(TentValue { center: tent.center, scale: tent.scale, average: v });
        }
        rep.per_scale.push(ScaleEntry { scale: (-(js as f64)).exp2(), max_average: scale_max });
    }
    rep.norm_sq = best.max(0.0);
    rep.norm = rep.norm_sq.sqrt();
    rep
}

/// Runs `density_on` on `mesh` and on its refinement, and flags divergence
/// when `M²` grows by more than [`DIVERGENCE_THRESHOLD`] relative.
pub fn refinement_report<F>(mesh: &HalfSpaceMesh, density_on: F) -> Result<CarlesonReport>
where
    F: Fn(&HalfSpaceMesh) -> Result<Vec<f64>>,
{
    let mut rep = tent_report(&density_on(mesh)?, mesh);
    let fine = mesh.refined()?;
    let fine_rep = tent_report(&density_on(&fine)?, &fine);
    let growth = fine_rep.norm_sq - rep.norm_sq;
    rep.diverging = growth > 1e-12 && growth > DIVERGENCE_THRESHOLD * fine_rep.norm_sq;
    rep.refined_norm_sq = Some(fine_rep.norm_sq);
    Ok(rep)
}

/// Carleson norm of a scalar function `g`, `sup (⨍∫ |g|² dt/t)^{1/2}`,
/// with a J vs J+1 divergence check.
pub fn cm_norm(g: &dyn ScalarField, mesh: &HalfSpaceMesh) -> Result<CarlesonReport> {
    refinement_report(mesh, |m| {
        Ok(m.sample(|p| {
            let v = g.value(p);
            v * v
        }))
    })
}

/// Carleson norm of per-cell values (no refinement check).
pub fn cm_norm_cells(values: &[f64], mesh: &HalfSpaceMesh) -> CarlesonReport {
    let d: Vec<f64> = values.iter().map(|v| v * v).collect();
    tent_report(&d, mesh)
}

// ---------------------------------------------------------------- Whitney boxes

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WhitneyOscillation {
    pub point: Point,
    /// Weighted mean of `A` over the box: the optimal constant matrix.
    pub mean: Mat,
    /// Weighted mean of `|A − mean|²` (Frobenius).
    pub value: f64,
    /// The box was cut at `s = 1`.
    pub clipped: bool,
}

/// Quadrature nodes on the Whitney box `B(x, 2t) × (t, 2t)` for the
/// measure `dy ds/s`, normalized to total weight one.
pub fn whitney_nodes(a: &dyn MatrixField, p: &Point) -> (Vec<(Point, f64)>, bool) {
    let n = a.dim();
    let t = p.t;
    let top = (2.0 * t).min(1.0);
    let clipped = 2.0 * t > 1.0;
    let top = if top <= t { 2.0 * t } else { top };
    let vb: Vec<f64> = a.vertical_breaks(t, top).iter().map(|s| s.ln()).collect();
    let us = composite(t.ln(), top.ln(), 2, &vb, 4);
    let mut nodes = Vec::new();
    if n == 2 {
        for (u, wu) in us {
            let s = u.exp();
            let lb = a.lateral_breaks(0, s, p.x[0] - 2.0 * t, p.x[0] + 2.0 * t);
            for (y, wy) in composite(p.x[0] - 2.0 * t, p.x[0] + 2.0 * t, 4, &lb, 4) {
                nodes.push((Point::new2(y, s), wu * wy));
            }
        }
    } else {
        let radial = composite(0.0, 2.0 * t, 2, &[], 4);
        let nth = 16;
        for (u, wu) in us {
            let s = u.exp();
            for &(rho, wr) in &radial {
                for m in 0..nth {
                    let th = 2.0 * std::f64::consts::PI * (m as f64 + 0.5) / nth as f64;
                    let q = Point::new3(p.x[0] + rho * th.cos(), p.x[1] + rho * th.sin(), s);
                    nodes.push((q, wu * wr * rho / nth as f64));
                }
            }
        }
    }
    let total: f64 = nodes.iter().map(|(_, w)| w).sum();
    for (_, w) in nodes.iter_mut() {
        *w /= total;
    }
    (nodes, clipped)
}

/// L² oscillation of `A` on the Whitney box above `p`, with the optimal
/// constant (the weighted mean).
pub fn whitney_oscillation(a: &dyn MatrixField, p: &Point) -> WhitneyOscillation {
    let (nodes, clipped) = whitney_nodes(a, p);
    let vals: Vec<(Mat, f64)> = nodes.iter().map(|(q, w)| (a.eval(q), *w)).collect();
    let mut mean = Mat::zeros(a.dim());
    for (m, w) in &vals {
        mean = mean + m.scale(*w);
    }
    let value = vals.iter().map(|(m, w)| w * (*m - mean).frobenius_sq()).sum();
    WhitneyOscillation { point: *p, mean, value, clipped }
}

/// Weighted mean square deviation of `A` from an arbitrary constant.
pub fn whitney_deviation(a: &dyn MatrixField, p: &Point, c: &Mat) -> f64 {
    let (nodes, _) = whitney_nodes(a, p);
    nodes.iter().map(|(q, w)| w * (a.eval(q) - *c).frobenius_sq()).sum()
}

/// Sup deviation in the max-entry norm from the entrywise midpoint of
/// (min, max) over the box nodes.
pub fn whitney_sup_deviation(a: &dyn MatrixField, p: &Point) -> f64 {
    let (nodes, _) = whitney_nodes(a, p);
    let n = a.dim();
    let mut lo = [[f64::INFINITY; 3]; 3];
    let mut hi = [[f64::NEG_INFINITY; 3]; 3];
    for (q, _) in &nodes {
        let m = a.eval(q);
        for i in 0..n {
            for j in 0..n {
                lo[i][j] = lo[i][j].min(m.a[i][j]);
                hi[i][j] = hi[i][j].max(m.a[i][j]);
            }
        }
    }
    let mut v: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            v = v.max(0.5 * (hi[i][j] - lo[i][j]));
        }
    }
    v
}

/// Largest per-entry weighted standard deviation over the box.
pub fn whitney_entry_std(a: &dyn MatrixField, p: &Point) -> f64 {
    let (nodes, _) = whitney_nodes(a, p);
    let n = a.dim();
    let vals: Vec<(Mat, f64)> = nodes.iter().map(|(q, w)| (a.eval(q), *w)).collect();
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let mean: f64 = vals.iter().map(|(m, w)| w * m.a[i][j]).sum();
            let var: f64 = vals.iter().map(|(m, w)| w * (m.a[i][j] - mean).powi(2)).sum();
            best = best.max(var.sqrt());
        }
    }
    best
}

/// Weak-DKP norm: tent averages of `f_L` itself (first power), reported
/// as `norm_sq`.
pub fn weak_dkp_norm(a: &dyn MatrixField, mesh: &HalfSpaceMesh) -> Result<CarlesonReport> {
    check_dim(a, mesh)?;
    refinement_report(mesh, |m| Ok(m.sample(|p| whitney_oscillation(a, p).value)))
}

/// Carleson norm of `t|∇A|`. Uses the analytic gradient, or central
/// differences with step `h/4` for differentiable fields without one.
pub fn dkp_norm(a: &dyn MatrixField, mesh: &HalfSpaceMesh) -> Result<CarlesonReport> {
    check_dim(a, mesh)?;
    if !a.is_differentiable() {
        return Err(Error::NotApplicable(format!("field '{}' has no gradient", a.name())));
    }
    refinement_report(mesh, |m| {
        let step = 0.25 * m.h;
        let n = a.dim();
        let vals = m.sample(|p| match gradient_or_fd(a, p, step) {
            Some(g) => (p.t * grad_norm(&g, n)).powi(2),
            None => f64::NAN,
        });
        if vals.iter().any(|v| v.is_nan()) {
            return Err(Error::NotApplicable(format!("field '{}' has no gradient", a.name())));
        }
        Ok(vals)
    })
}

/// Carleson norm of the Whitney sup-deviation (max-entry norm).
pub fn linfty_whitney_norm(a: &dyn MatrixField, mesh: &HalfSpaceMesh) -> Result<CarlesonReport> {
    check_dim(a, mesh)?;
    refinement_report(mesh, |m| Ok(m.sample(|p| whitney_sup_deviation(a, p).powi(2))))
}

fn check_dim(a: &dyn MatrixField, mesh: &HalfSpaceMesh) -> Result<()> {
    if a.dim() != mesh.n {
        return Err(Error::Config(format!("field dimension {} does not match mesh dimension {}", a.dim(), mesh.n)));
    }
    Ok(())
}

// ---------------------------------------------------------------- embedding

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingCheck {
    /// `∬ |a f g| dx dt/t`.
    pub lhs: f64,
    /// `M ∫ N(f) 𝒜(g) dx`.
    pub rhs: f64,
    /// `M ‖N(f)‖₂ ‖𝒜(g)‖₂`.
    pub rhs_l2: f64,
    pub ratio: f64,
    pub ratio_l2: f64,
    pub m: f64,
}

/// Compares both sides of the Carleson embedding for per-cell data.
pub fn carleson_embedding_check(a: &[f64], f: &[f64], g: &[f64], mesh: &HalfSpaceMesh, m: f64) -> EmbeddingCheck {
    let hn = mesh.h.powi(mesh.n as i32);
    let mut lhs = 0.0;
    for c in 0..mesh.n_cells() {
        let t = mesh.level_height(mesh.level_of(c));
        lhs += (a[c] * f[c] * g[c]).abs() * hn / t;
    }
    let nf = functionals::ntmax(f, mesh);
    let ag = functionals::area(g, mesh);
    let hb = mesh.h.powi(mesh.n as i32 - 1);
    let pair: f64 = nf.values.iter().zip(&ag.values).map(|(x, y)| x * y * hb).sum();
    let rhs = m * pair;
    let rhs_l2 = m * functionals::lp_norm(&nf, 2.0) * functionals::lp_norm(&ag, 2.0);
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.0 };
    EmbeddingCheck { lhs, rhs, rhs_l2, ratio: ratio(lhs, rhs), ratio_l2: ratio(lhs, rhs_l2), m }
}

/// Weighted variance of `s` on `(t, 2t)` under `ds/s` with 64-point Gauss in
/// `ln s`; used as an independent check of the box quadrature.
pub fn log_variance(t: f64) -> f64 {
    let rule = gauss_legendre(64);
    let (a, b) = (t.ln(), (2.0 * t).ln());
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    let (mut m1, mut m2, mut m0) = (0.0, 0.0, 0.0);
    for (x, w) in rule.0.iter().zip(&rule.1) {
        let s = (c + r * x).exp();
        m0 += w * r;
        m1 += w * r * s;
        m2 += w * r * s * s;
    }
    m2 / m0 - (m1 / m0).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Constant, DkpSmooth, WhitneyPiecewise};

    struct LinearInT;
    impl MatrixField for LinearInT {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, p: &Point) -> Mat {
            Mat::identity(2) + Mat::unit(2, 0, 0).scale(p.t)
        }
        fn ellipticity(&self) -> f64 {
            1.0
        }
        fn bound(&self) -> f64 {
            2.0
        }
        fn name(&self) -> String {
            "linear".into()
        }
    }

    #[test]
    fn zero_and_power_fields() {
        let mesh = HalfSpaceMesh::new(2, 5).unwrap();
        let z = cm_norm(&|_: &Point| 0.0, &mesh).unwrap();
        assert_eq!(z.norm, 0.0);
        assert!(!z.diverging);
        let r = cm_norm(&|p: &Point| p.t.sqrt(), &mesh).unwrap();
        assert!((r.norm_sq - (1.0 - mesh.h)).abs() < 1e-12);
        assert_eq!(r.argmax.scale, 1.0);
        assert!(!r.diverging);
        let one = cm_norm(&|_: &Point| 1.0, &mesh).unwrap();
        assert!(one.diverging);
    }

    #[test]
    fn oscillation_of_linear_profile_matches_log_variance() {
        for t in [0.01, 0.1, 0.3] {
            let w = whitney_oscillation(&LinearInT, &Point::new2(0.4, t));
            let closed = 3.0 * t * t / (2.0 * std::f64::consts::LN_2) - t * t / std::f64::consts::LN_2.powi(2);
            assert!((w.value - closed).abs() < 1e-10 * t * t, "t={t}: {} vs {closed}", w.value);
            assert!((w.value - log_variance(t)).abs() < 1e-8 * w.value);
            assert!(!w.clipped);
        }
        assert!(whitney_oscillation(&LinearInT, &Point::new2(0.4, 0.7)).clipped);
    }

    #[test]
    fn constant_fields_vanish() {
        let mesh = HalfSpaceMesh::new(2, 4).unwrap();
        let c = Constant { a: Mat::from_rows(2, &[2.0, 0.3, -0.1, 1.5]) };
        assert!(weak_dkp_norm(&c, &mesh).unwrap().norm_sq < 1e-24);
        assert_eq!(dkp_norm(&c, &mesh).unwrap().norm, 0.0);
        assert_eq!(linfty_whitney_norm(&c, &mesh).unwrap().norm, 0.0);
    }

    #[test]
    fn piecewise_bounds_and_classification() {
        let w = WhitneyPiecewise { n: 2, delta: 0.2, seed: 9 };
        for p in crate::field::sample_points(2, 200, 1e-3) {
            let o = whitney_oscillation(&w, &p);
            assert!(o.value <= 0.2 * 0.2 * 4.0 + 1e-12);
            assert!(whitney_sup_deviation(&w, &p) + 1e-12 >= whitney_entry_std(&w, &p));
        }
        let mesh = HalfSpaceMesh::new(2, 4).unwrap();
        assert!(matches!(dkp_norm(&w, &mesh), Err(Error::NotApplicable(_))));
    }

    #[test]
    fn dkp_norm_is_linear_in_delta() {
        let mesh = HalfSpaceMesh::new(2, 4).unwrap();
        let a = dkp_norm(&DkpSmooth::new(2, 0.1, 1.0), &mesh).unwrap().norm;
        let b = dkp_norm(&DkpSmooth::new(2, 0.2, 1.0), &mesh).unwrap().norm;
        assert!(((b / a) - 2.0).abs() < 0.02);
    }

    #[test]
    fn projection_property() {
        let f = DkpSmooth::with_ones(2, 0.3, 0.5);
        let p = Point::new2(0.2, 0.05);
        let o = whitney_oscillation(&f, &p);
        let pert = Mat::from_rows(2, &[1e-3, -2e-3, 5e-4, 1e-3]);
        assert!(whitney_deviation(&f, &p, &(o.mean + pert)) > o.value);
    }
}

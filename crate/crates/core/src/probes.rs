//! Measured solvability ratios over small data families.
//!
//! Probes never decide solvability; they report per-case ratios, the
//! largest ratio and the spread `max/min` over the family.

use crate::carleson;
use crate::chgvar::{self, ChangeOfVariable, StructureReport};
use crate::elliptic::{
    self, boundary_samples, laplace_fourier_oracle, DiscreteSolution, Geometry, TrigData, SOLVER_TOL,
};
use crate::error::{Error, Result};
use crate::field::{gradient_or_fd, grad_norm, sample_points, Combined, FieldRef, MatrixField, Point};
use crate::functionals::{self, lp_norm, lp_norm_values};
use crate::mesh::HalfSpaceMesh;
use crate::smoothing::{self, DecomposeOptions, QUAD_TOL};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

// ---------------------------------------------------------------- data

/// Periodic boundary datum of the first tangential variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundaryData {
    Trig(TrigData),
    /// `(1 − s²)⁴` with `s = (x − center)/width`, periodized.
    Bump { center: f64, width: f64 },
}

impl BoundaryData {
    pub fn id(&self) -> String {
        match self {
            BoundaryData::Trig(t) if t.mean == 0.0 && t.modes.len() == 1 && t.modes[0].1 == 1.0 && t.modes[0].2 == 0.0 => {
                format!("cos{}", t.modes[0].0)
            }
            BoundaryData::Trig(t) => {
                let mut s = format!("{}", t.mean);
                for (k, a, b) in &t.modes {
                    s.push_str(&format!("{a:+}cos{k}{b:+}sin{k}"));
                }
                s
            }
            BoundaryData::Bump { center, width } => format!("bump{center}w{width}"),
        }
    }

    fn offset(x: f64, center: f64) -> f64 {
        (x - center + 0.5).rem_euclid(1.0) - 0.5
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            BoundaryData::Trig(t) => t.eval(x),
            BoundaryData::Bump { center, width } => {
                let s = Self::offset(x, *center) / width;
                if s.abs() < 1.0 {
                    (1.0 - s * s).powi(4)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            BoundaryData::Trig(t) => t.derivative(x),
            BoundaryData::Bump { center, width } => {
                let s = Self::offset(x, *center) / width;
                if s.abs() < 1.0 {
                    -8.0 * s * (1.0 - s * s).powi(3) / width
                } else {
                    0.0
                }
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Option<TrigData> {
        match self {
            BoundaryData::Trig(t) => Some(TrigData {
                mean: c * t.mean,
                modes: t.modes.iter().map(|(k, a, b)| (*k, c * a, c * b)).collect(),
            }),
            BoundaryData::Bump { .. } => None,
        }
    }
}

pub const FREQUENCIES: [u32; 4] = [1, 2, 4, 8];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataFamily {
    pub name: String,
    pub cases: Vec<BoundaryData>,
}

impl DataFamily {
    /// `cos(2πkx)` for `k ∈ {1, 2, 4, 8}`.
    pub fn trig() -> Self {
        DataFamily { name: "trig".into(), cases: FREQUENCIES.iter().map(|k| BoundaryData::Trig(TrigData::cos(*k))).collect() }
    }

    pub fn bumps() -> Self {
        DataFamily {
            name: "bumps".into(),
            cases: vec![BoundaryData::Bump { center: 0.3, width: 0.2 }, BoundaryData::Bump { center: 0.7, width: 0.2 }],
        }
    }

    /// Four frequencies plus two translated bumps.
    pub fn full() -> Self {
        let mut f = Self::trig();
        f.cases.extend(Self::bumps().cases);
        f.name = "full".into();
        f
    }

    /// `trig`, `bumps`, `full`, or a single trigonometric sum such as
    /// `cos1 + 0.5sin3`.
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "trig" => Ok(Self::trig()),
            "bumps" => Ok(Self::bumps()),
            "full" => Ok(Self::full()),
            other => {
                let t: TrigData = other.parse()?;
                Ok(DataFamily { name: other.into(), cases: vec![BoundaryData::Trig(t)] })
            }
        }
    }
}

// ---------------------------------------------------------------- reports

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRow {
    pub id: String,
    pub numerator: f64,
    pub denominator: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedCase {
    pub id: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub max_ratio: f64,
    pub min_ratio: f64,
    /// `max_ratio / min_ratio`.
    pub spread: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub seed: u64,
    pub solver_tol: f64,
    pub quadrature_tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probe: String,
    pub preset: String,
    pub j: u32,
    pub p: f64,
    pub family: String,
    pub params: BTreeMap<String, f64>,
    pub cases: Vec<CaseRow>,
    pub skipped: Vec<SkippedCase>,
    pub summary: ProbeSummary,
    /// Probe-specific measurements.
    pub extra: BTreeMap<String, f64>,
    pub environment: Environment,
}

impl ProbeReport {
    fn new(probe: &str, field: &dyn MatrixField, settings: &ProbeSettings) -> Self {
        ProbeReport {
            probe: probe.into(),
            preset: field.name(),
            j: settings.j,
            p: settings.p,
            family: settings.family.name.clone(),
            params: field.params(),
            cases: Vec::new(),
            skipped: Vec::new(),
            summary: ProbeSummary { max_ratio: 0.0, min_ratio: 0.0, spread: 0.0 },
            extra: BTreeMap::new(),
            environment: Environment { seed: settings.seed, solver_tol: SOLVER_TOL, quadrature_tol: QUAD_TOL },
        }
    }

    fn finish(mut self) -> Result<Self> {
        if self.cases.iter().any(|c| !c.ratio.is_finite()) {
            return Err(Error::Numerical(format!("probe '{}' produced a non-finite ratio", self.probe)));
        }
        let max = self.cases.iter().map(|c| c.ratio).fold(0.0, f64::max);
        let min = self.cases.iter().map(|c| c.ratio).fold(f64::INFINITY, f64::min);
        self.summary = if self.cases.is_empty() {
            ProbeSummary { max_ratio: 0.0, min_ratio: 0.0, spread: 0.0 }
        } else {
            ProbeSummary { max_ratio: max, min_ratio: min, spread: if min > 0.0 { max / min } else { f64::INFINITY } }
        };
        Ok(self)
    }

    fn push(&mut self, id: String, numerator: f64, denominator: f64) {
        self.cases.push(CaseRow { id, numerator, denominator, ratio: numerator / denominator });
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    pub j: u32,
    pub p: f64,
    pub seed: u64,
    pub family: DataFamily,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        ProbeSettings { j: 5, p: 2.0, seed: 1, family: DataFamily::full() }
    }
}

impl ProbeSettings {
    fn validate(&self) -> Result<()> {
        if !(self.p >= 1.0 && self.p.is_finite()) {
            return Err(Error::Config(format!("p must be a finite number ≥ 1, got {}", self.p)));
        }
        if self.family.cases.is_empty() {
            return Err(Error::Config("the data family is empty".into()));
        }
        Ok(())
    }

    fn mesh(&self, n: usize) -> Result<HalfSpaceMesh> {
        self.validate()?;
        HalfSpaceMesh::new(n, self.j)
    }
}

// ---------------------------------------------------------------- Dirichlet and regularity

fn solve_case(a: &dyn MatrixField, data: &BoundaryData, mesh: &HalfSpaceMesh) -> Result<DiscreteSolution> {
    let f = boundary_samples(mesh, |x| data.eval(x[0]));
    elliptic::solve_dirichlet(a, &f, mesh)
}

/// `‖N(u_f)‖_p / ‖f‖_p` per case.
pub fn dirichlet_probe(a: &dyn MatrixField, settings: &ProbeSettings) -> Result<ProbeReport> {
    let mesh = settings.mesh(a.dim())?;
    let mut report = ProbeReport::new("dirichlet", a, settings);
    let cases = &settings.family.cases;
    let rows = crate::par::map(cases.len(), |i| -> Result<(f64, f64)> {
        let data = &cases[i];
        let f = boundary_samples(&mesh, |x| data.eval(x[0]));
        let den = lp_norm_values(&f, settings.p);
        if den < 1e-14 {
            return Ok((0.0, 0.0));
        }
        let u = elliptic::solve_dirichlet(a, &f, &mesh)?;
        Ok((lp_norm(&functionals::ntmax(&u.cell_values(), &mesh), settings.p), den))
    });
    for (data, row) in cases.iter().zip(rows) {
        let (num, den) = row?;
        if den == 0.0 {
            report.skipped.push(SkippedCase { id: data.id(), reason: "zero data".into() });
        } else {
            report.push(data.id(), num, den);
        }
    }
    report.finish()
}

/// `(‖Ñ(∇u_f)‖_p, ‖∇f‖_p)`, or `None` when `∇f` vanishes.
pub fn regularity_case(a: &dyn MatrixField, data: &BoundaryData, mesh: &HalfSpaceMesh, p: f64) -> Result<Option<(f64, f64)>> {
    let df = boundary_samples(mesh, |x| data.derivative(x[0]));
    let den = lp_norm_values(&df, p);
    if den < 1e-14 {
        return Ok(None);
    }
    let u = solve_case(a, data, mesh)?;
    let num = lp_norm(&functionals::avg_ntmax(&u.cell_gradient_norms(), mesh), p);
    Ok(Some((num, den)))
}

/// `‖Ñ(∇u_f)‖_p / ‖∇f‖_p` per case; constant data is skipped.
pub fn regularity_probe(a: &dyn MatrixField, settings: &ProbeSettings) -> Result<ProbeReport> {
    let mesh = settings.mesh(a.dim())?;
    let mut report = ProbeReport::new("regularity", a, settings);
    let cases = &settings.family.cases;
    let rows = crate::par::map(cases.len(), |i| regularity_case(a, &cases[i], &mesh, settings.p));
    for (data, row) in cases.iter().zip(rows) {
        match row? {
            Some((num, den)) => report.push(data.id(), num, den),
            None => report.skipped.push(SkippedCase { id: data.id(), reason: "constant data".into() }),
        }
    }
    report.finish()
}

// ---------------------------------------------------------------- perturbation

/// Regularity ratios of `A₀` and `A₀ + C` side by side; each row's ratio
/// is the inflation `ratio(A₀ + C) / ratio(A₀)`.
pub fn perturbation_probe(a0: FieldRef, c: FieldRef, settings: &ProbeSettings) -> Result<ProbeReport> {
    let n = a0.dim();
    let mesh = settings.mesh(n)?;
    if c.dim() != n {
        return Err(Error::Config("perturbation and base field dimensions differ".into()));
    }
    let mut sup_tgrad: f64 = 0.0;
    for p in sample_points(n, 256, 1.0 / 64.0) {
        let g = gradient_or_fd(a0.as_ref(), &p, 0.01 * p.t)
            .ok_or_else(|| Error::NotApplicable(format!("base field '{}' is not differentiable", a0.name())))?;
        sup_tgrad = sup_tgrad.max(p.t * grad_norm(&g, n));
    }
    if !sup_tgrad.is_finite() {
        return Err(Error::NotApplicable("sup |t∇A₀| is not finite".into()));
    }
    let cm_c = carleson::cm_norm(&|p: &Point| c.eval(p).frobenius(), &mesh)?;
    let a1: FieldRef = Arc::new(Combined::sum(a0.clone(), c.clone(), "A0+C"));
    let mut report = ProbeReport::new("perturbation", a1.as_ref(), settings);
    report.preset = format!("{}+{}", a0.name(), c.name());
    for (k, v) in c.params() {
        report.params.insert(format!("c_{k}"), v);
    }
    let cases = &settings.family.cases;
    let rows = crate::par::map(cases.len(), |i| -> Result<Option<(f64, f64)>> {
        let r0 = regularity_case(a0.as_ref(), &cases[i], &mesh, settings.p)?;
        let r1 = regularity_case(a1.as_ref(), &cases[i], &mesh, settings.p)?;
        Ok(match (r0, r1) {
            (Some((n0, d0)), Some((n1, d1))) => Some((n1 / d1, n0 / d0)),
            _ => None,
        })
    });
    for (data, row) in cases.iter().zip(rows) {
        match row? {
            Some((r1, r0)) => report.push(data.id(), r1, r0),
            None => report.skipped.push(SkippedCase { id: data.id(), reason: "constant data".into() }),
        }
    }
    report.extra.insert("sup_t_grad_a0".into(), sup_tgrad);
    report.extra.insert("cm_norm_c".into(), cm_c.norm);
    report.finish()
}

// ---------------------------------------------------------------- bi-Lipschitz stability

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PullbackComparison {
    /// `‖v_h − u_h∘ρ‖_{L²}` on the unit strip.
    pub l2_difference: f64,
    pub u_height: f64,
}

/// Solves `Lu = 0` on a strip tall enough to contain `ρ(strip)` and
/// `L_ρ v = 0` on the unit strip, both with trace `f`, and compares
/// `v_h` with `u_h∘ρ`.
pub fn pullback_difference(
    a: &dyn MatrixField,
    a_rho: &dyn MatrixField,
    rho: &ChangeOfVariable,
    data: &BoundaryData,
    mesh: &HalfSpaceMesh,
) -> Result<PullbackComparison> {
    let top = (0..mesh.n_lateral())
        .map(|l| {
            let x = mesh.boundary_node(l);
            rho.map(&Point { x, t: 1.0 }).t
        })
        .fold(1.0, f64::max);
    let height = (top / mesh.h).ceil() * mesh.h;
    let f = boundary_samples(mesh, |x| data.eval(x[0]));
    let u = elliptic::solve_dirichlet_height(a, &f, mesh, height)?;
    let v = elliptic::solve_dirichlet(a_rho, &f, mesh)?;
    Ok(PullbackComparison { l2_difference: v.l2_error(|p| u.eval(&rho.map(p))), u_height: height })
}

/// Compares `L` with its conjugate `L_ρ` for a given map: per case, the
/// row holds `ratio(L_ρ)` over `ratio(L)`.
pub fn stability_with_map(a: FieldRef, rho: Arc<ChangeOfVariable>, settings: &ProbeSettings) -> Result<ProbeReport> {
    let mesh = settings.mesh(a.dim())?;
    let a_rho = chgvar::conjugate(a.clone(), rho.clone())?;
    let mut report = ProbeReport::new("bilipschitz", a.as_ref(), settings);
    let cases = &settings.family.cases;
    let mut worst_diff: f64 = 0.0;
    let mut l2: f64 = 0.0;
    for data in cases {
        let r0 = regularity_case(a.as_ref(), data, &mesh, settings.p)?;
        let r1 = regularity_case(&a_rho, data, &mesh, settings.p)?;
        let cmp = pullback_difference(a.as_ref(), &a_rho, &rho, data, &mesh)?;
        l2 = l2.max(cmp.l2_difference);
        match (r0, r1) {
            (Some((n0, d0)), Some((n1, d1))) => {
                let (q0, q1) = (n0 / d0, n1 / d1);
                worst_diff = worst_diff.max((q1 / q0 - 1.0).abs());
                report.push(data.id(), q1, q0);
            }
            _ => report.skipped.push(SkippedCase { id: data.id(), reason: "constant data".into() }),
        }
    }
    let c = &rho.constants;
    report.extra.insert("l2_difference".into(), l2);
    report.extra.insert("ratio_difference".into(), worst_diff);
    report.extra.insert("bilipschitz".into(), c.bilipschitz());
    report.extra.insert("min_det".into(), c.min_det);
    report.extra.insert("sup_jacobian_deviation".into(), c.sup_deviation);
    report.finish()
}

/// Decomposes `A`, flattens with the map built from `B` and compares `L`
/// with `L_ρ`.
pub fn bilipschitz_stability_probe(a: FieldRef, eps: f64, settings: &ProbeSettings) -> Result<ProbeReport> {
    settings.validate()?;
    let dec = smoothing::decompose(a.clone(), eps, &DecomposeOptions::default())?;
    let rho = Arc::new(chgvar::build_rho(dec.b.clone(), chgvar::INVERTIBILITY_SAMPLES)?);
    let mut report = stability_with_map(a, rho, settings)?;
    report.extra.insert("lambda".into(), dec.summary.lambda);
    report.extra.insert("eps_achieved".into(), dec.summary.eps_achieved);
    report.params.insert("eps".into(), eps);
    Ok(report)
}

// ---------------------------------------------------------------- reduction chain

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineReport {
    pub decomposition: smoothing::DecompositionSummary,
    pub map: chgvar::MapConstants,
    pub structure: StructureReport,
    pub regularity: ProbeReport,
}

/// Decompose, flatten, check the structure of `A_ρ` and run the
/// regularity probe on it.
pub fn reduction_pipeline(a: FieldRef, eps: f64, settings: &ProbeSettings) -> Result<PipelineReport> {
    let mesh = settings.mesh(a.dim())?;
    let dec = smoothing::decompose(a.clone(), eps, &DecomposeOptions::default())?;
    let rho = Arc::new(chgvar::build_rho(dec.b.clone(), chgvar::INVERTIBILITY_SAMPLES)?);
    let a_rho = chgvar::conjugate(a, rho.clone())?;
    let structure = chgvar::structure_check(&a_rho, &mesh)?;
    let regularity = regularity_probe(&a_rho, settings)?;
    Ok(PipelineReport { decomposition: dec.summary, map: rho.constants.clone(), structure, regularity })
}

// ---------------------------------------------------------------- Moser

/// Largest `|∇u|(Y) / (⨍_{B(y,t)} ⨍_{t/3}^{3t} |∇u|² ds/s dz)^{1/2}` over
/// cells with `6h ≤ t ≤ 1/3`, from per-cell gradient magnitudes. The
/// vertical integral is a mean for `ds/s`, so constant gradients give 1.
/// Returns `(constant, cell)`; cells with zero denominator are skipped.
pub fn moser_constant(grad: &[f64], mesh: &HalfSpaceMesh) -> Option<(f64, usize)> {
    let h = mesh.h;
    let levels: Vec<usize> = (0..mesh.n_levels()).filter(|&k| {
        let t = mesh.level_height(k);
        t >= 6.0 * h && t <= 1.0 / 3.0
    }).collect();
    let rows = crate::par::map(levels.len(), |li| {
        let k = levels[li];
        let t = mesh.level_height(k);
        let offs = ball_offsets(mesh, t);
        let vlevels: Vec<(usize, f64)> = (0..mesh.n_levels())
            .filter_map(|m| {
                let s = mesh.level_height(m);
                (s >= t / 3.0 && s <= 3.0 * t).then_some((m, 1.0 / s))
            })
            .collect();
        let wsum: f64 = vlevels.iter().map(|v| v.1).sum::<f64>() * offs.len() as f64;
        let mut best: Option<(f64, usize)> = None;
        for lat in 0..mesh.n_lateral() {
            let c = mesh.lat_coords(lat);
            let mut acc = 0.0;
            for off in &offs {
                let l2 = mesh.lat_from_coords([c[0] as i64 + off[0], c[1] as i64 + off[1]]);
                for (m, w) in &vlevels {
                    acc += w * grad[mesh.cell_index(l2, *m)].powi(2);
                }
            }
            let den = (acc / wsum).sqrt();
            if den > 1e-300 {
                let cell = mesh.cell_index(lat, k);
                let r = grad[cell] / den;
                if best.is_none_or(|b| r > b.0) {
                    best = Some((r, cell));
                }
            }
        }
        best
    });
    rows.into_iter().flatten().fold(None, |acc: Option<(f64, usize)>, r| match acc {
        Some(a) if a.0 >= r.0 => Some(a),
        _ => Some(r),
    })
}

fn ball_offsets(mesh: &HalfSpaceMesh, r: f64) -> Vec<[i64; 2]> {
    let m = (r / mesh.h).ceil() as i64;
    let mut out = Vec::new();
    for a in -m..=m {
        let b_range = if mesh.n == 3 { -m..=m } else { 0..=0 };
        for b in b_range {
            let d2 = ((a * a + b * b) as f64) * mesh.h * mesh.h;
            if d2 < r * r {
                out.push([a, b]);
            }
        }
    }
    out
}

/// Empirical Moser constant of `u_f` per case.
pub fn moser_probe(a: &dyn MatrixField, settings: &ProbeSettings) -> Result<ProbeReport> {
    let mesh = settings.mesh(a.dim())?;
    if 6.0 * mesh.h > 1.0 / 3.0 {
        return Err(Error::Config(format!("the Moser probe needs cells with 6h ≤ t ≤ 1/3, i.e. J ≥ 5 (got J = {})", mesh.j)));
    }
    let mut report = ProbeReport::new("moser", a, settings);
    for data in &settings.family.cases {
        let u = solve_case(a, data, &mesh)?;
        let g = u.cell_gradient_norms();
        match moser_constant(&g, &mesh) {
            Some((c, cell)) => {
                let num = g[cell];
                report.push(data.id(), num, num / c);
            }
            None => report.skipped.push(SkippedCase { id: data.id(), reason: "zero gradient".into() }),
        }
    }
    report.finish()
}

// ---------------------------------------------------------------- integration by parts

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IbpTerms {
    pub j: u32,
    pub total: f64,
    pub terms: [f64; 4],
    pub residual: f64,
}

/// Coefficient entry, comparison solution and test function of the
/// integration-by-parts check (two dimensions).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IbpSetup {
    /// Amplitude of `D_ij = δ sin(2πx)(1 + t)e^{−t}`.
    pub delta: f64,
    /// Tangential index of `∂_i v`; must be below `n − 1 = 1`.
    pub i: usize,
    /// Index of `∂_j ũ`, `0` (tangential) or `1` (normal).
    pub j: usize,
}

impl IbpSetup {
    fn d(&self, x: f64, t: f64) -> f64 {
        self.delta * (2.0 * PI * x).sin() * (1.0 + t) * (-t).exp()
    }
}

fn ibp_u(x: f64, t: f64) -> f64 {
    (-2.0 * PI * t).exp() * (2.0 * PI * x).cos()
}

fn ibp_v(x: f64, t: f64) -> f64 {
    let b = |s: f64| if s.abs() < 1.0 { (1.0 - s * s).powi(4) } else { 0.0 };
    b((x - 0.5) / 0.3) * b((t - 0.5) / 0.3) * (1.0 + 0.5 * (2.0 * PI * x).sin())
}

/// `T_ij = ∬ D_ij ∂_j ũ ∂_i v` and the four terms obtained by moving `∂_t`
/// off `t` and then `∂_i` off `v`. Derivatives are centered differences
/// with step `h` and integrals midpoint sums on the `2^j` grid, so the
/// residual is `O(h²)`.
pub fn ibp_terms(setup: &IbpSetup, j: u32) -> Result<IbpTerms> {
    if setup.i != 0 {
        return Err(Error::Config("only tangential derivatives of v are allowed (i must be 0 in two dimensions)".into()));
    }
    if setup.j > 1 {
        return Err(Error::Config(format!("j must be 0 or 1, got {}", setup.j)));
    }
    let mesh = HalfSpaceMesh::new(2, j)?;
    let h = mesh.h;
    let dx = |f: &dyn Fn(f64, f64) -> f64, x: f64, t: f64| (f(x + h, t) - f(x - h, t)) / (2.0 * h);
    let dt = |f: &dyn Fn(f64, f64) -> f64, x: f64, t: f64| (f(x, t + h) - f(x, t - h)) / (2.0 * h);
    let d = |x: f64, t: f64| setup.d(x, t);
    let dj = |f: &dyn Fn(f64, f64) -> f64, x: f64, t: f64| if setup.j == 0 { dx(f, x, t) } else { dt(f, x, t) };
    let du_j = |x: f64, t: f64| dj(&ibp_u, x, t);
    let mut total = 0.0;
    let mut terms = [0.0; 4];
    for cell in 0..mesh.n_cells() {
        let p = mesh.cell_center(cell);
        let (x, t) = (p.x[0], p.t);
        let w = h * h;
        let dv_i = dx(&ibp_v, x, t);
        let dv_n = dt(&ibp_v, x, t);
        if dv_i == 0.0 && dv_n == 0.0 {
            continue;
        }
        let uj = du_j(x, t);
        total += w * d(x, t) * uj * dv_i;
        terms[0] -= w * dt(&d, x, t) * uj * dv_i * t;
        terms[1] -= w * d(x, t) * dt(&du_j, x, t) * dv_i * t;
        terms[2] += w * dx(&d, x, t) * uj * dv_n * t;
        terms[3] += w * d(x, t) * dx(&du_j, x, t) * dv_n * t;
    }
    let residual = (total - terms.iter().sum::<f64>()).abs();
    Ok(IbpTerms { j, total, terms, residual })
}

/// Residual of the integration-by-parts identity over a ladder of
/// resolutions; rows hold `(residual, |T_ij|)`.
pub fn ibp_identity_probe(setup: &IbpSetup, js: &[u32]) -> Result<ProbeReport> {
    let mut report = ProbeReport {
        probe: "ibp".into(),
        preset: "ibp_bump".into(),
        j: js.iter().copied().max().unwrap_or(0),
        p: 0.0,
        family: "bump".into(),
        params: BTreeMap::from([("delta".into(), setup.delta), ("i".into(), setup.i as f64), ("j".into(), setup.j as f64)]),
        cases: vec![],
        skipped: vec![],
        summary: ProbeSummary { max_ratio: 0.0, min_ratio: 0.0, spread: 0.0 },
        extra: BTreeMap::new(),
        environment: Environment { seed: 0, solver_tol: SOLVER_TOL, quadrature_tol: QUAD_TOL },
    };
    let mut prev: Option<f64> = None;
    for &j in js {
        let r = ibp_terms(setup, j)?;
        let scale = r.total.abs().max(1e-300);
        report.cases.push(CaseRow { id: format!("J{j}"), numerator: r.residual, denominator: r.total.abs(), ratio: r.residual / scale });
        if let Some(p) = prev {
            if r.residual > 0.0 {
                report.extra.insert(format!("reduction_J{j}"), p / r.residual);
            }
        }
        prev = Some(r.residual);
    }
    if setup.delta == 0.0 {
        for c in &mut report.cases {
            c.ratio = 0.0;
        }
    }
    report.finish()
}

// ---------------------------------------------------------------- Poisson duality

/// Source of the comparison solution `ũ_f`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    /// Fourier oracle on the strip.
    Oracle,
    /// Discrete Laplace solve on the same mesh.
    DiscreteLaplace,
}

/// Cells with center height in `[1/8, 1/2]`.
pub fn duality_band(mesh: &HalfSpaceMesh) -> Vec<bool> {
    functionals::band_mask(mesh, 0.125, 0.5)
}

/// Builds the witness `𝐡` for `F = ∇(u_f − ũ_f)`, solves `L* v = −div 𝐡`
/// and reports `‖𝒮(v)‖_{q′} + ‖N(v)‖_{q′}` per trigonometric case.
pub fn poisson_duality_probe(a: &dyn MatrixField, q: f64, comparison: Comparison, settings: &ProbeSettings) -> Result<ProbeReport> {
    let mesh = settings.mesh(a.dim())?;
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::Config(format!("q must be in (1, ∞), got {q}")));
    }
    let qp = q / (q - 1.0);
    let mut report = ProbeReport::new("poisson_duality", a, settings);
    report.params.insert("q".into(), q);
    let k_mask = duality_band(&mesh);
    let grid = elliptic::StripGrid::from_mesh(&mesh);
    let mut certificate = f64::INFINITY;
    for data in &settings.family.cases {
        let BoundaryData::Trig(trig) = data else {
            report.skipped.push(SkippedCase { id: data.id(), reason: "the oracle needs trigonometric data".into() });
            continue;
        };
        let u = solve_case(a, data, &mesh)?;
        let tilde = match comparison {
            Comparison::Oracle => laplace_fourier_oracle(trig, &mesh, Geometry::Strip { height: 1.0 })?,
            Comparison::DiscreteLaplace => {
                let id = crate::field::Constant { a: crate::Mat::identity(mesh.n) };
                solve_case(&id, data, &mesh)?
            }
        };
        let gu = u.cell_gradients();
        let gt = tilde.cell_gradients();
        let f: Vec<[f64; 3]> = gu.iter().zip(&gt).map(|(a, b)| [a[0] - b[0], a[1] - b[1], a[2] - b[2]]).collect();
        let (s_norm, n_norm) = match functionals::dual_witness(&f, &mesh, &k_mask, q) {
            Ok(w) => {
                certificate = certificate.min(w.certificate);
                let field = w.field;
                let g2 = grid.clone();
                let flux = move |p: &Point| -> [f64; 3] {
                    let cell = cell_of(&g2, p);
                    let v = field[cell];
                    // cell data is (x₁, x₂, t); fluxes are in matrix order
                    if g2.dims == 2 {
                        [v[0], v[2], 0.0]
                    } else {
                        v
                    }
                };
                let v = elliptic::solve_inhomogeneous(a, &flux, &mesh, true)?;
                let s = lp_norm(&functionals::square(&v.cell_gradient_norms(), &mesh), qp);
                let nv = lp_norm(&functionals::ntmax(&v.cell_values(), &mesh), qp);
                (s, nv)
            }
            Err(Error::DegenerateInput(_)) => (0.0, 0.0),
            Err(e) => return Err(e),
        };
        report.push(data.id(), s_norm + n_norm, 1.0);
        report.extra.insert(format!("S_{}", data.id()), s_norm);
        report.extra.insert(format!("N_{}", data.id()), n_norm);
    }
    if certificate.is_finite() {
        report.extra.insert("min_certificate".into(), certificate);
    }
    report.finish()
}

fn cell_of(grid: &elliptic::StripGrid, p: &Point) -> usize {
    let i0 = ((p.x[0].rem_euclid(1.0) / grid.hx(0)).floor() as usize).min(grid.nlat[0] - 1);
    let i1 = if grid.dims == 3 { ((p.x[1].rem_euclid(1.0) / grid.hx(1)).floor() as usize).min(grid.nlat[1] - 1) } else { 0 };
    let k = (((p.t - grid.z0) / grid.hz()).floor().max(0.0) as usize).min(grid.nz - 1);
    k * grid.n_lat() + i0 + grid.nlat[0] * i1
}

/// Scales trigonometric data and checks that a probe's ratios are
/// unchanged; returns the largest relative change.
pub fn homogeneity_defect(
    probe: impl Fn(&ProbeSettings) -> Result<ProbeReport>,
    settings: &ProbeSettings,
    c: f64,
) -> Result<f64> {
    let base = probe(settings)?;
    let mut scaled = settings.clone();
    scaled.family.cases = settings
        .family
        .cases
        .iter()
        .map(|d| d.scaled(c).map(BoundaryData::Trig).unwrap_or_else(|| d.clone()))
        .collect();
    let other = probe(&scaled)?;
    Ok(base
        .cases
        .iter()
        .zip(&other.cases)
        .map(|(a, b)| (a.ratio - b.ratio).abs() / a.ratio.abs().max(1e-300))
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Constant;
    use crate::Mat;

    fn small(family: DataFamily) -> ProbeSettings {
        ProbeSettings { j: 4, p: 2.0, seed: 1, family }
    }

    #[test]
    fn family_parsing() {
        assert_eq!(DataFamily::parse("full").unwrap().cases.len(), 6);
        assert_eq!(DataFamily::parse("cos3").unwrap().cases[0].id(), "cos3");
        assert!(DataFamily::parse("nonsense").is_err());
    }

    #[test]
    fn bump_derivative_matches_differences() {
        let b = BoundaryData::Bump { center: 0.95, width: 0.2 };
        for x in [0.0, 0.05, 0.9, 0.97] {
            let fd = (b.eval(x + 1e-6) - b.eval(x - 1e-6)) / 2e-6;
            assert!((fd - b.derivative(x)).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_data_is_skipped() {
        let id = Constant { a: Mat::identity(2) };
        let fam = DataFamily { name: "c".into(), cases: vec![BoundaryData::Trig(TrigData { mean: 1.0, modes: vec![] })] };
        let r = regularity_probe(&id, &small(fam)).unwrap();
        assert!(r.cases.is_empty() && r.skipped.len() == 1);
    }

    #[test]
    fn dirichlet_ratio_attains_trace() {
        let id = Constant { a: Mat::identity(2) };
        // the lowest cell center sits at t = h/2, so mode k keeps about
        // cos(πkh) e^{−πkh} of its trace
        let r = dirichlet_probe(&id, &ProbeSettings { j: 6, ..small(DataFamily::trig()) }).unwrap();
        for (row, k) in r.cases.iter().zip(FREQUENCIES) {
            let kh = PI * k as f64 / 64.0;
            assert!(row.ratio > kh.cos() * (-kh).exp(), "{row:?}");
        }
        assert!(r.cases[0].ratio > 0.95);
    }

    #[test]
    fn moser_constant_of_constant_gradient_is_one() {
        let mesh = HalfSpaceMesh::new(2, 6).unwrap();
        let (c, _) = moser_constant(&vec![2.0; mesh.n_cells()], &mesh).unwrap();
        assert!((c - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ibp_rejects_normal_index_and_vanishes_for_zero_coefficient() {
        assert!(ibp_terms(&IbpSetup { delta: 0.3, i: 1, j: 0 }, 5).is_err());
        let z = ibp_terms(&IbpSetup { delta: 0.0, i: 0, j: 1 }, 5).unwrap();
        assert_eq!(z.total, 0.0);
        assert!(z.terms.iter().all(|t| *t == 0.0));
    }

    #[test]
    fn ratios_are_homogeneous() {
        let id = Constant { a: Mat::identity(2) };
        let s = small(DataFamily::trig());
        let d = homogeneity_defect(|st| regularity_probe(&id, st), &s, 3.7).unwrap();
        assert!(d < 1e-9, "{d}");
    }
}

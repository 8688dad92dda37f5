//! Coefficient fields evaluable anywhere in the open upper half-space.
//!
//! A point is `(x, t)` with `x ∈ R^{n-1}` (stored in a 2-array, only the
//! first `n-1` entries used) and height `t > 0`. Gradients are returned as
//! `[Mat; 3]`: entries `0..n-1` are the tangential derivatives and entry
//! `n-1` is the derivative in `t`.

use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::quadrature::{halton, hash_unit};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: [f64; 2],
    pub t: f64,
}

impl Point {
    pub fn new2(x: f64, t: f64) -> Self {
        Point { x: [x, 0.0], t }
    }

    pub fn new3(x1: f64, x2: f64, t: f64) -> Self {
        Point { x: [x1, x2], t }
    }

    /// Coordinate `d` in the layout (x₁, …, x_{n-1}, t).
    pub fn coord(&self, n: usize, d: usize) -> f64 {
        if d == n - 1 {
            self.t
        } else {
            self.x[d]
        }
    }

    pub fn shifted(&self, n: usize, d: usize, by: f64) -> Self {
        let mut p = *self;
        if d == n - 1 {
            p.t += by;
        } else {
            p.x[d] += by;
        }
        p
    }
}

pub type Grad = [Mat; 3];

pub fn zero_grad(n: usize) -> Grad {
    [Mat::zeros(n); 3]
}

/// Frobenius norm of a gradient tensor over all entries and directions.
pub fn grad_norm(g: &Grad, n: usize) -> f64 {
    g[..n].iter().map(|m| m.frobenius_sq()).sum::<f64>().sqrt()
}

pub trait MatrixField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, p: &Point) -> Mat;

    /// Analytic gradient when available.
    fn gradient(&self, _p: &Point) -> Option<Grad> {
        None
    }

    /// Whether finite differences of `eval` are meaningful.
    fn is_differentiable(&self) -> bool {
        true
    }

    /// True when the field is constant between its vertical and lateral
    /// breaks, so averages reduce to sums over boxes.
    fn piecewise_constant(&self) -> bool {
        false
    }

    /// Declared ellipticity constant.
    fn ellipticity(&self) -> f64;

    /// Declared operator-norm bound.
    fn bound(&self) -> f64;

    fn name(&self) -> String;

    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::new()
    }

    /// Heights in `(lo, hi)` where the field jumps in `t`.
    fn vertical_breaks(&self, _lo: f64, _hi: f64) -> Vec<f64> {
        Vec::new()
    }

    /// Positions in `(lo, hi)` along tangential axis `axis` where the field
    /// jumps, at height `s`.
    fn lateral_breaks(&self, _axis: usize, _s: f64, _lo: f64, _hi: f64) -> Vec<f64> {
        Vec::new()
    }
}

pub type FieldRef = Arc<dyn MatrixField>;

/// Gradient from the analytic evaluator, or central differences with step
/// `step` (kept below `t/2` in the vertical direction).
pub fn gradient_or_fd(f: &dyn MatrixField, p: &Point, step: f64) -> Option<Grad> {
    if let Some(g) = f.gradient(p) {
        return Some(g);
    }
    if !f.is_differentiable() {
        return None;
    }
    let n = f.dim();
    let mut g = zero_grad(n);
    for (d, slot) in g.iter_mut().enumerate().take(n) {
        let hs = if d == n - 1 { step.min(0.5 * p.t) } else { step };
        let plus = f.eval(&p.shifted(n, d, hs));
        let minus = f.eval(&p.shifted(n, d, -hs));
        *slot = (plus - minus).scale(0.5 / hs);
    }
    Some(g)
}

pub trait ScalarField: Send + Sync {
    fn value(&self, p: &Point) -> f64;
}

impl<F: Fn(&Point) -> f64 + Send + Sync> ScalarField for F {
    fn value(&self, p: &Point) -> f64 {
        self(p)
    }
}

/// Periodic distance on the unit circle.
pub fn per_dist(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

// ---------------------------------------------------------------- presets

#[derive(Clone, Debug)]
pub struct Constant {
    pub a: Mat,
}

impl MatrixField for Constant {
    fn dim(&self) -> usize {
        self.a.n
    }
    fn eval(&self, _p: &Point) -> Mat {
        self.a
    }
    fn gradient(&self, _p: &Point) -> Option<Grad> {
        Some(zero_grad(self.a.n))
    }
    fn ellipticity(&self) -> f64 {
        self.a.sym_min_eig()
    }
    fn bound(&self) -> f64 {
        self.a.op_norm()
    }
    fn name(&self) -> String {
        "constant".into()
    }
    fn params(&self) -> BTreeMap<String, f64> {
        self.a
            .entries()
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("a{i}"), *v))
            .collect()
    }
}

/// `A = I + δ sin(2πx₁) e^{-t/ℓ} E`.
#[derive(Clone, Debug)]
pub struct DkpSmooth {
    pub delta: f64,
    pub ell: f64,
    pub e: Mat,
}

impl DkpSmooth {
    pub fn new(n: usize, delta: f64, ell: f64) -> Self {
        DkpSmooth { delta, ell, e: Mat::unit(n, 0, 0) }
    }

    /// Direction matrix with every entry equal to one. Unlike `e₁⊗e₁` it
    /// also moves the last row, so the flattening map is not the identity.
    pub fn with_ones(n: usize, delta: f64, ell: f64) -> Self {
        DkpSmooth { delta, ell, e: Mat::from_rows(n, &vec![1.0; n * n]) }
    }
}

impl MatrixField for DkpSmooth {
    fn dim(&self) -> usize {
        self.e.n
    }
    fn eval(&self, p: &Point) -> Mat {
        let amp = self.delta * (2.0 * PI * p.x[0]).sin() * (-p.t / self.ell).exp();
        Mat::identity(self.e.n) + self.e.scale(amp)
    }
    fn gradient(&self, p: &Point) -> Option<Grad> {
        let n = self.e.n;
        let decay = (-p.t / self.ell).exp();
        let mut g = zero_grad(n);
        g[0] = self.e.scale(self.delta * 2.0 * PI * (2.0 * PI * p.x[0]).cos() * decay);
        g[n - 1] = self.e.scale(-self.delta / self.ell * (2.0 * PI * p.x[0]).sin() * decay);
        Some(g)
    }
    fn ellipticity(&self) -> f64 {
        1.0 - self.delta.abs() * self.e.op_norm()
    }
    fn bound(&self) -> f64 {
        1.0 + self.delta.abs() * self.e.op_norm()
    }
    fn name(&self) -> String {
        "dkp_smooth".into()
    }
    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("delta".into(), self.delta), ("ell".into(), self.ell)])
    }
}

/// `A = I + δ sin(ln t) e₁⊗e₁`: bounded `t|∇A|` that is not a Carleson measure.
#[derive(Clone, Debug)]
pub struct LogOscillation {
    pub n: usize,
    pub delta: f64,
}

impl MatrixField for LogOscillation {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, p: &Point) -> Mat {
        Mat::identity(self.n) + Mat::unit(self.n, 0, 0).scale(self.delta * p.t.ln().sin())
    }
    fn gradient(&self, p: &Point) -> Option<Grad> {
        let mut g = zero_grad(self.n);
        g[self.n - 1] = Mat::unit(self.n, 0, 0).scale(self.delta * p.t.ln().cos() / p.t);
        Some(g)
    }
    fn ellipticity(&self) -> f64 {
        1.0 - self.delta.abs()
    }
    fn bound(&self) -> f64 {
        1.0 + self.delta.abs()
    }
    fn name(&self) -> String {
        "log_oscillation".into()
    }
    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("delta".into(), self.delta)])
    }
}

/// Dyadic layer of height `s`: `s ∈ (2^{-k-1}, 2^{-k}]`.
pub fn dyadic_layer(s: f64) -> i64 {
    (-s.log2()).floor() as i64
}

/// Index of the lateral dyadic interval of layer `k` containing `x`
/// (width `2^{-k}`, wrapped to `0..2^k`; a single interval when `k ≤ 0`).
pub fn dyadic_slot(x: f64, k: i64) -> i64 {
    if k <= 0 {
        return 0;
    }
    let m = 1i64 << k.min(60);
    ((x.rem_euclid(1.0) * m as f64).floor() as i64).rem_euclid(m)
}

/// Entries constant on each dyadic Whitney box, `I + U` with `U_ij`
/// i.i.d. uniform in `[-δ, δ]` (hashed from the seed and the box index).
#[derive(Clone, Debug)]
pub struct WhitneyPiecewise {
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
}

impl WhitneyPiecewise {
    fn box_key(&self, p: &Point) -> (i64, i64, i64) {
        let k = dyadic_layer(p.t);
        let m1 = dyadic_slot(p.x[0], k);
        let m2 = if self.n == 3 { dyadic_slot(p.x[1], k) } else { 0 };
        (k, m1, m2)
    }
}

impl MatrixField for WhitneyPiecewise {
    fn dim(&self) -> usize {
        self.n
    }
    fn piecewise_constant(&self) -> bool {
        true
    }
    fn eval(&self, p: &Point) -> Mat {
        let (k, m1, m2) = self.box_key(p);
        let mut a = Mat::identity(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let u = hash_unit(&[self.seed as i64, k, m1, m2, i as i64, j as i64]);
                a.a[i][j] += self.delta * (2.0 * u - 1.0);
            }
        }
        a
    }
    fn is_differentiable(&self) -> bool {
        false
    }
    fn ellipticity(&self) -> f64 {
        1.0 - self.n as f64 * self.delta.abs()
    }
    fn bound(&self) -> f64 {
        1.0 + self.n as f64 * self.delta.abs()
    }
    fn name(&self) -> String {
        "whitney_piecewise".into()
    }
    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("delta".into(), self.delta), ("seed".into(), self.seed as f64)])
    }
    fn vertical_breaks(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut out = Vec::new();
        if !(hi > lo) || lo <= 0.0 {
            return out;
        }
        let mut k = dyadic_layer(hi);
        loop {
            let s = (-(k as f64)).exp2();
            if s <= lo {
                break;
            }
            if s < hi {
                out.push(s);
            }
            k += 1;
        }
        out.reverse();
        out
    }
    fn lateral_breaks(&self, _axis: usize, s: f64, lo: f64, hi: f64) -> Vec<f64> {
        let k = dyadic_layer(s);
        let mut out = Vec::new();
        if k <= 0 {
            // one box per period: no lateral jumps
            return out;
        }
        let w = (-(k as f64)).exp2();
        let mut j = (lo / w).floor() + 1.0;
        while j * w < hi {
            out.push(j * w);
            j += 1.0;
        }
        out
    }
}

/// One smooth `sin²` bump per dyadic layer `k ≥ 1`, on the box of lateral
/// index `hash(seed, k) mod 2^k`, in the `(0, 0)` entry. `|C|` is a
/// Carleson measure because the boxes are sparse.
#[derive(Clone, Debug)]
pub struct CarlesonPerturbation {
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    pub max_layer: i64,
}

impl CarlesonPerturbation {
    pub fn new(n: usize, delta: f64, seed: u64) -> Self {
        CarlesonPerturbation { n, delta, seed, max_layer: 40 }
    }

    fn chosen_slot(&self, k: i64) -> i64 {
        let m = 1i64 << k.min(60);
        ((hash_unit(&[self.seed as i64, k, 17]) * m as f64).floor() as i64).rem_euclid(m)
    }

    /// Returns (profile, ∂profile per coordinate).
    fn profile(&self, p: &Point) -> (f64, [f64; 3]) {
        let k = dyadic_layer(p.t);
        if k < 1 || k > self.max_layer {
            return (0.0, [0.0; 3]);
        }
        let w = (-(k as f64)).exp2();
        let slot = self.chosen_slot(k);
        let mut val = 1.0;
        let mut dval = [0.0; 3];
        let lat = self.n - 1;
        let mut factors = [(1.0, 0.0); 3];
        for (a, f) in factors.iter_mut().enumerate().take(lat) {
            if dyadic_slot(p.x[a], k) != slot {
                return (0.0, [0.0; 3]);
            }
            let u = (p.x[a].rem_euclid(1.0) - slot as f64 * w) / w;
            let sn = (PI * u).sin();
            *f = (sn * sn, 2.0 * sn * (PI * u).cos() * PI / w);
        }
        let base = 0.5 * w;
        let u = (p.t - base) / base;
        let sn = (PI * u).sin();
        factors[lat] = (sn * sn, 2.0 * sn * (PI * u).cos() * PI / base);
        for f in factors.iter().take(self.n) {
            val *= f.0;
        }
        for (d, slot) in dval.iter_mut().enumerate().take(self.n) {
            let mut prod = factors[d].1;
            for (e, f) in factors.iter().enumerate().take(self.n) {
                if e != d {
                    prod *= f.0;
                }
            }
            *slot = prod;
        }
        (val, dval)
    }
}

impl MatrixField for CarlesonPerturbation {
    fn dim(&self) -> usize {
        self.n
    }
    fn eval(&self, p: &Point) -> Mat {
        Mat::unit(self.n, 0, 0).scale(self.delta * self.profile(p).0)
    }
    fn gradient(&self, p: &Point) -> Option<Grad> {
        let (_, d) = self.profile(p);
        let mut g = zero_grad(self.n);
        for (k, slot) in g.iter_mut().enumerate().take(self.n) {
            *slot = Mat::unit(self.n, 0, 0).scale(self.delta * d[k]);
        }
        Some(g)
    }
    fn ellipticity(&self) -> f64 {
        0.0
    }
    fn bound(&self) -> f64 {
        self.delta.abs()
    }
    fn name(&self) -> String {
        "carleson_perturbation".into()
    }
    fn params(&self) -> BTreeMap<String, f64> {
        BTreeMap::from([("delta".into(), self.delta), ("seed".into(), self.seed as f64)])
    }
}

/// Sum or difference of two fields.
pub struct Combined {
    pub a: FieldRef,
    pub b: FieldRef,
    pub sign: f64,
    pub label: String,
}

impl Combined {
    pub fn sum(a: FieldRef, b: FieldRef, label: &str) -> Self {
        Combined { a, b, sign: 1.0, label: label.into() }
    }
    pub fn difference(a: FieldRef, b: FieldRef, label: &str) -> Self {
        Combined { a, b, sign: -1.0, label: label.into() }
    }
}

impl MatrixField for Combined {
    fn dim(&self) -> usize {
        self.a.dim()
    }
    fn eval(&self, p: &Point) -> Mat {
        self.a.eval(p) + self.b.eval(p).scale(self.sign)
    }
    fn gradient(&self, p: &Point) -> Option<Grad> {
        let ga = self.a.gradient(p)?;
        let gb = self.b.gradient(p)?;
        let mut g = ga;
        for (d, slot) in g.iter_mut().enumerate() {
            *slot = *slot + gb[d].scale(self.sign);
        }
        Some(g)
    }
    fn is_differentiable(&self) -> bool {
        self.a.is_differentiable() && self.b.is_differentiable()
    }
    fn ellipticity(&self) -> f64 {
        self.a.ellipticity() - self.b.bound()
    }
    fn bound(&self) -> f64 {
        self.a.bound() + self.b.bound()
    }
    fn name(&self) -> String {
        self.label.clone()
    }
    fn params(&self) -> BTreeMap<String, f64> {
        let mut m = self.a.params();
        for (k, v) in self.b.params() {
            m.insert(format!("b.{k}"), v);
        }
        m
    }
    fn vertical_breaks(&self, lo: f64, hi: f64) -> Vec<f64> {
        let mut v = self.a.vertical_breaks(lo, hi);
        v.extend(self.b.vertical_breaks(lo, hi));
        v.sort_by(|x, y| x.total_cmp(y));
        v
    }
    fn lateral_breaks(&self, axis: usize, s: f64, lo: f64, hi: f64) -> Vec<f64> {
        let mut v = self.a.lateral_breaks(axis, s, lo, hi);
        v.extend(self.b.lateral_breaks(axis, s, lo, hi));
        v.sort_by(|x, y| x.total_cmp(y));
        v
    }
}

/// Transpose of a field, used by adjoint solves.
pub struct Transposed(pub FieldRef);

impl MatrixField for Transposed {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, p: &Point) -> Mat {
        self.0.eval(p).transpose()
    }
    fn gradient(&self, p: &Point) -> Option<Grad> {
        let g = self.0.gradient(p)?;
        Some([g[0].transpose(), g[1].transpose(), g[2].transpose()])
    }
    fn is_differentiable(&self) -> bool {
        self.0.is_differentiable()
    }
    fn piecewise_constant(&self) -> bool {
        self.0.piecewise_constant()
    }
    fn ellipticity(&self) -> f64 {
        self.0.ellipticity()
    }
    fn bound(&self) -> f64 {
        self.0.bound()
    }
    fn name(&self) -> String {
        format!("{}^T", self.0.name())
    }
    fn params(&self) -> BTreeMap<String, f64> {
        self.0.params()
    }
    fn vertical_breaks(&self, lo: f64, hi: f64) -> Vec<f64> {
        self.0.vertical_breaks(lo, hi)
    }
    fn lateral_breaks(&self, axis: usize, s: f64, lo: f64, hi: f64) -> Vec<f64> {
        self.0.lateral_breaks(axis, s, lo, hi)
    }
}

// ---------------------------------------------------------------- presets by name

/// Named preset with its parameters, as read from a config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PresetSpec {
    pub name: String,
    pub delta: f64,
    pub ell: f64,
    pub seed: u64,
    /// Row-major matrix entries: `A0` for `constant`, `E` for `dkp_smooth`.
    /// Empty means the default (identity, resp. e₁⊗e₁).
    pub entries: Vec<f64>,
}

impl Default for PresetSpec {
    fn default() -> Self {
        PresetSpec { name: "constant".into(), delta: 0.1, ell: 1.0, seed: 1, entries: Vec::new() }
    }
}

pub const PRESET_NAMES: [&str; 5] =
    ["constant", "dkp_smooth", "log_oscillation", "whitney_piecewise", "carleson_bump"];

/// Builds a preset field of dimension `n`.
pub fn build_preset(n: usize, spec: &PresetSpec) -> Result<FieldRef> {
    if n != 2 && n != 3 {
        return Err(Error::Config(format!("dimension must be 2 or 3, got {n}")));
    }
    if !spec.delta.is_finite() || spec.delta < 0.0 {
        return Err(Error::Config(format!("delta must be a finite nonnegative number, got {}", spec.delta)));
    }
    let entries = |default: Mat| -> Result<Mat> {
        match spec.entries.len() {
            0 => Ok(default),
            k if k == n * n => Ok(Mat::from_rows(n, &spec.entries)),
            k => Err(Error::Config(format!("expected {} matrix entries, got {k}", n * n))),
        }
    };
    let field: FieldRef = match spec.name.as_str() {
        "constant" => {
            let a = entries(Mat::identity(n))?;
            if a.sym_min_eig() <= 0.0 {
                return Err(Error::Config("constant matrix is not elliptic".into()));
            }
            Arc::new(Constant { a })
        }
        "dkp_smooth" => {
            if !(spec.ell > 0.0) {
                return Err(Error::Config(format!("ell must be positive, got {}", spec.ell)));
            }
            let e = entries(Mat::unit(n, 0, 0))?;
            let f = DkpSmooth { delta: spec.delta, ell: spec.ell, e };
            if f.ellipticity() <= 0.0 {
                return Err(Error::Config("delta too large: field is not elliptic".into()));
            }
            Arc::new(f)
        }
        "log_oscillation" => {
            if spec.delta >= 1.0 {
                return Err(Error::Config("delta must be below 1".into()));
            }
            Arc::new(LogOscillation { n, delta: spec.delta })
        }
        "whitney_piecewise" => {
            if spec.delta * n as f64 >= 1.0 {
                return Err(Error::Config("delta·n must be below 1".into()));
            }
            Arc::new(WhitneyPiecewise { n, delta: spec.delta, seed: spec.seed })
        }
        "carleson_bump" => {
            if spec.delta >= 1.0 {
                return Err(Error::Config("delta must be below 1".into()));
            }
            Arc::new(Combined::sum(
                Arc::new(Constant { a: Mat::identity(n) }),
                Arc::new(CarlesonPerturbation::new(n, spec.delta, spec.seed)),
                "carleson_bump",
            ))
        }
        other => {
            return Err(Error::Config(format!(
                "unknown preset '{other}' (known: {})",
                PRESET_NAMES.join(", ")
            )))
        }
    };
    Ok(field)
}

// ---------------------------------------------------------------- checks

/// Quasi-random sample points: x uniform on the torus, t log-uniform in
/// `[t_min, 1]`.
pub fn sample_points(n: usize, count: usize, t_min: f64) -> Vec<Point> {
    let lo = t_min.ln();
    (0..count as u64)
        .map(|i| {
            let h = halton(i, n);
            let t = (lo * (1.0 - h[n - 1])).exp();
            if n == 2 {
                Point::new2(h[0], t)
            } else {
                Point::new3(h[0], h[1], t)
            }
        })
        .collect()
}

/// Empirical (min symmetric eigenvalue, max operator norm) over `samples`
/// quasi-random points with `t ∈ [2^-10, 1]`.
pub fn check_ellipticity(a: &dyn MatrixField, samples: usize) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::Config("at least one sample is required".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for p in sample_points(a.dim(), samples, 2f64.powi(-10)) {
        let m = a.eval(&p);
        if !m.is_finite() {
            return Err(Error::Field { x: p.x, t: p.t, msg: "non-finite coefficient".into() });
        }
        lo = lo.min(m.sym_min_eig());
        hi = hi.max(m.op_norm());
    }
    Ok((lo, hi))
}

/// Block layout of an `n × n` matrix with last row `(v, h)`:
/// ```text
/// [ B_par  b ]
/// [ v      h ]
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockView {
    pub par: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub v: Vec<f64>,
    pub h: f64,
}

impl BlockView {
    pub fn of(m: &Mat) -> Self {
        let k = m.n - 1;
        BlockView {
            par: (0..k).map(|i| (0..k).map(|j| m.a[i][j]).collect()).collect(),
            b: (0..k).map(|i| m.a[i][k]).collect(),
            v: (0..k).map(|j| m.a[k][j]).collect(),
            h: m.a[k][k],
        }
    }

    pub fn reassemble(&self) -> Mat {
        let k = self.b.len();
        let mut m = Mat::zeros(k + 1);
        for i in 0..k {
            for j in 0..k {
                m.a[i][j] = self.par[i][j];
            }
            m.a[i][k] = self.b[i];
            m.a[k][i] = self.v[i];
        }
        m.a[k][k] = self.h;
        m
    }
}

pub fn block_split(b: &dyn MatrixField, p: &Point) -> BlockView {
    BlockView::of(&b.eval(p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ellipticity_of_simple_fields() {
        let id = Constant { a: Mat::identity(2) };
        let (l, u) = check_ellipticity(&id, 50).unwrap();
        assert!((l - 1.0).abs() < 1e-14 && (u - 1.0).abs() < 1e-14);
        let d = Constant { a: Mat::diag(&[2.0, 0.5]) };
        let (l, u) = check_ellipticity(&d, 50).unwrap();
        assert!((l - 0.5).abs() < 1e-14 && (u - 2.0).abs() < 1e-14);
    }

    #[test]
    fn dkp_smooth_gradient_matches_differences() {
        let f = DkpSmooth::with_ones(3, 0.2, 0.7);
        let p = Point::new3(0.31, 0.4, 0.2);
        let g = f.gradient(&p).unwrap();
        let hs = 1e-5;
        for d in 0..3 {
            let fd = (f.eval(&p.shifted(3, d, hs)) - f.eval(&p.shifted(3, d, -hs))).scale(0.5 / hs);
            assert!((fd - g[d]).max_abs() < 1e-8, "direction {d}");
        }
    }

    #[test]
    fn carleson_perturbation_gradient_matches_differences() {
        let c = CarlesonPerturbation::new(2, 0.3, 5);
        let mut checked = 0;
        for i in 0..400 {
            let p = sample_points(2, 400, 1e-3)[i];
            if c.eval(&p).max_abs() < 1e-3 {
                continue;
            }
            let g = c.gradient(&p).unwrap();
            let hs = 1e-7 * p.t;
            for d in 0..2 {
                let fd = (c.eval(&p.shifted(2, d, hs)) - c.eval(&p.shifted(2, d, -hs))).scale(0.5 / hs);
                assert!((fd - g[d]).max_abs() < 1e-4 * (1.0 + g[d].max_abs()));
            }
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn whitney_piecewise_is_constant_on_boxes() {
        let w = WhitneyPiecewise { n: 2, delta: 0.2, seed: 3 };
        // layer k = 3: s in (1/16, 1/8], lateral width 1/8
        let a = w.eval(&Point::new2(0.26, 0.07));
        let b = w.eval(&Point::new2(0.37, 0.12));
        assert_eq!(a, b);
        let c = w.eval(&Point::new2(0.38, 0.12));
        assert_ne!(a, c);
        assert_eq!(w.vertical_breaks(0.05, 0.3), vec![0.0625, 0.125, 0.25]);
        assert_eq!(w.lateral_breaks(0, 0.1, 0.2, 0.5), vec![0.25, 0.375]);
        assert!(w.gradient(&Point::new2(0.1, 0.1)).is_none());
        assert!(!w.is_differentiable());
    }

    #[test]
    fn block_roundtrip() {
        let m = Mat::from_rows(2, &[2.0, 1.0, 3.0, 4.0]);
        let b = BlockView::of(&m);
        assert_eq!(b.par, vec![vec![2.0]]);
        assert_eq!(b.b, vec![1.0]);
        assert_eq!(b.v, vec![3.0]);
        assert_eq!(b.h, 4.0);
        assert_eq!(b.reassemble(), m);
        let i3 = BlockView::of(&Mat::identity(3));
        assert_eq!(i3.v, vec![0.0, 0.0]);
        assert_eq!(i3.h, 1.0);
    }

    #[test]
    fn unknown_preset_is_config_error() {
        let spec = PresetSpec { name: "nope".into(), ..Default::default() };
        assert!(matches!(build_preset(2, &spec), Err(Error::Config(_))));
    }
}

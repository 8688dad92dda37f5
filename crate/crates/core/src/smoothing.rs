//! Logarithmic mollification of coefficient fields.
//!
//! The kernel is
//! `Φ_{x,t,Λ}(y,s) = s^{1-n}/ln Λ · φ((y−x)/s) · ψ(ln(s/t)/ln Λ)`,
//! supported in `s ∈ (Λt, Λ²t)`, `|y − x| < s`, with unit mass for the
//! measure `dy ds/s`. `B₁` averages `A` at `Λ = 2^{1/4}` by tanh-mapped
//! Gauss quadrature; `B_Λ` averages `B₁` on a global lattice in
//! `(y, ln s)` whose samples are cached and shared between points.

use crate::carleson::{self, CarlesonReport};
use crate::error::{Error, Result};
use crate::field::{per_dist, Combined, FieldRef, Grad, MatrixField, Point};
use crate::matrix::Mat;
use crate::mesh::HalfSpaceMesh;
use crate::quadrature::{composite, gauss_on, tanh_rule, tanh_rule_plain, TANH_WINDOW};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{LN_2, PI};
use std::sync::{Arc, OnceLock};

/// Λ of the initial split.
pub fn initial_lambda() -> f64 {
    2f64.powf(0.25)
}

pub const LAMBDA_LADDER: [f64; 4] = [4.0, 16.0, 64.0, 256.0];

/// Relative change below which a refinement is accepted.
pub const QUAD_TOL: f64 = 1e-6;

// ---------------------------------------------------------------- kernels

/// The bumps `φ` on the unit ball of `R^{n-1}` and `ψ` on `(1, 2)`, with
/// `c_φ = ∫|∇φ|` and `c_ψ = ∫|ψ′|`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelPair {
    pub n: usize,
    pub phi_mass: f64,
    pub psi_mass: f64,
    pub c_phi: f64,
    pub c_psi: f64,
    /// `(F, dF/dw)` of the one-dimensional `φ` at `z = tanh w` on a uniform
    /// grid in `w`; empty when n = 3.
    #[serde(skip)]
    cdf: Vec<(f64, f64)>,
}

const CDF_CELLS: usize = 4096;

fn raw_bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}

impl KernelPair {
    pub fn get(n: usize) -> &'static KernelPair {
        static K2: OnceLock<KernelPair> = OnceLock::new();
        static K3: OnceLock<KernelPair> = OnceLock::new();
        match n {
            2 => K2.get_or_init(|| KernelPair::compute(2)),
            _ => K3.get_or_init(|| KernelPair::compute(3)),
        }
    }

    fn compute(n: usize) -> Self {
        // ∫_{-1}^{1} exp(-1/(1-z²)) dz
        let line: f64 = tanh_rule(&[], 96).iter().map(|(z, w)| w * raw_bump(z * z)).sum();
        let phi_mass = if n == 2 {
            line
        } else {
            // 2π ∫_0^1 e^{-1/(1-r²)} r dr = π ∫_0^1 e^{-1/(1-v)} dv
            let v: f64 = composite(0.0, 1.0, 64, &[], 16).iter().map(|(x, w)| w * raw_bump(*x)).sum();
            PI * v
        };
        // ψ(u) = exp(-1/((u-1)(2-u))): with u = 1.5 + τ/2 this is exp(-4/(1-τ²))
        let psi_mass: f64 = tanh_rule(&[], 96).iter().map(|(tau, w)| 0.5 * w * (-4.0 / (1.0 - tau * tau)).exp()).sum();
        let c_phi = if n == 2 { 2.0 * (-1.0f64).exp() / phi_mass } else { 2.0 * PI * 0.5 * line / phi_mass };
        let c_psi = 2.0 * (-4.0f64).exp() / psi_mass;
        let mut kp = KernelPair { n, phi_mass, psi_mass, c_phi, c_psi, cdf: Vec::new() };
        if n == 2 {
            kp.cdf = kp.build_cdf();
        }
        kp
    }

    fn build_cdf(&self) -> Vec<(f64, f64)> {
        let h = 2.0 * TANH_WINDOW / CDF_CELLS as f64;
        let dens = |w: f64| {
            let c = w.cosh();
            self.phi([w.tanh(), 0.0]) / (c * c)
        };
        let mut out = Vec::with_capacity(CDF_CELLS + 1);
        let mut acc = 0.0;
        let mut cell = Vec::new();
        for i in 0..=CDF_CELLS {
            let w = -TANH_WINDOW + i as f64 * h;
            out.push((acc, dens(w)));
            cell.clear();
            gauss_on(w, w + h, 8, &mut cell);
            acc += cell.iter().map(|(x, wt)| wt * dens(*x)).sum::<f64>();
        }
        let total = out[CDF_CELLS].0;
        out.iter().map(|(f, d)| (f / total, d / total)).collect()
    }

    /// `∫_{-1}^{z} φ` for the one-dimensional bump (n = 2 only).
    pub fn phi_cdf(&self, z: f64) -> f64 {
        if z <= -1.0 {
            return 0.0;
        }
        if z >= 1.0 {
            return 1.0;
        }
        let w = z.atanh();
        let h = 2.0 * TANH_WINDOW / CDF_CELLS as f64;
        let x = (w + TANH_WINDOW) / h;
        if x <= 0.0 {
            return 0.0;
        }
        if x >= CDF_CELLS as f64 {
            return 1.0;
        }
        let i = (x.floor() as usize).min(CDF_CELLS - 1);
        let r = x - i as f64;
        let (f0, d0) = self.cdf[i];
        let (f1, d1) = self.cdf[i + 1];
        // cubic Hermite
        let r2 = r * r;
        let r3 = r2 * r;
        (2.0 * r3 - 3.0 * r2 + 1.0) * f0
            + (r3 - 2.0 * r2 + r) * h * d0
            + (-2.0 * r3 + 3.0 * r2) * f1
            + (r3 - r2) * h * d1
    }

    /// `φ(z)` for `z ∈ R^{n-1}` (second entry ignored when n = 2).
    pub fn phi(&self, z: [f64; 2]) -> f64 {
        raw_bump(self.r2(z)) / self.phi_mass
    }

    /// `∇φ(z)`.
    pub fn grad_phi(&self, z: [f64; 2]) -> [f64; 2] {
        let r2 = self.r2(z);
        if r2 >= 1.0 {
            return [0.0; 2];
        }
        let f = raw_bump(r2) / self.phi_mass * (-2.0 / ((1.0 - r2) * (1.0 - r2)));
        [f * z[0], if self.n == 3 { f * z[1] } else { 0.0 }]
    }

    fn r2(&self, z: [f64; 2]) -> f64 {
        if self.n == 2 {
            z[0] * z[0]
        } else {
            z[0] * z[0] + z[1] * z[1]
        }
    }

    pub fn psi(&self, u: f64) -> f64 {
        if u <= 1.0 || u >= 2.0 {
            return 0.0;
        }
        (-1.0 / ((u - 1.0) * (2.0 - u))).exp() / self.psi_mass
    }

    pub fn dpsi(&self, u: f64) -> f64 {
        if u <= 1.0 || u >= 2.0 {
            return 0.0;
        }
        let q = (u - 1.0) * (2.0 - u);
        self.psi(u) * (3.0 - 2.0 * u) / (q * q)
    }
}

/// `Φ_{x,t,Λ}(y, s)`.
pub fn kernel_weight(n: usize, x: [f64; 2], t: f64, lambda: f64, y: [f64; 2], s: f64) -> f64 {
    if !(s > lambda * t && s < lambda * lambda * t) {
        return 0.0;
    }
    let k = KernelPair::get(n);
    let lnl = lambda.ln();
    let z = [(y[0] - x[0]) / s, (y[1] - x[1]) / s];
    s.powi(1 - n as i32) / lnl * k.phi(z) * k.psi((s / t).ln() / lnl)
}

/// Quadrature of `∬ Φ_{x,t,Λ} ds/s dy` with the same tanh-mapped rule used
/// by the initial split (should be one).
pub fn kernel_mass(n: usize, p: &Point, lambda: f64, order: usize) -> f64 {
    let k = KernelPair::get(n);
    let lnl = lambda.ln();
    let mut total = 0.0;
    for (tau, wt) in tanh_rule(&[], order) {
        let u = 1.5 + 0.5 * tau;
        let s = p.t * lambda.powf(u);
        let rule = tanh_rule(&[], order);
        let inner: f64 = if n == 2 {
            rule.iter().map(|(z, wz)| wz * s * kernel_weight(n, p.x, p.t, lambda, [p.x[0] + s * z, 0.0], s)).sum()
        } else {
            let mut acc = 0.0;
            for (z1, w1) in &rule {
                for (z2, w2) in &rule {
                    let y = [p.x[0] + s * z1, p.x[1] + s * z2];
                    acc += w1 * w2 * s * s * kernel_weight(n, p.x, p.t, lambda, y, s);
                }
            }
            acc
        };
        // ds/s = ln Λ du, du = dτ/2
        total += 0.5 * wt * lnl * inner;
    }
    let _ = k;
    total
}

// ---------------------------------------------------------------- averages of A

/// Kernel average of a field and its scaled derivatives at one point.
#[derive(Clone, Copy, Debug)]
pub struct Averaged {
    pub value: Mat,
    /// `t ∂_{x_i}` of the average.
    pub t_dx: [Mat; 2],
    /// `t ∂_t` of the average.
    pub t_dt: Mat,
}

impl Averaged {
    fn change_from(&self, o: &Averaged) -> f64 {
        let d = (self.value - o.value)
            .frobenius()
            .max((self.t_dx[0] - o.t_dx[0]).frobenius())
            .max((self.t_dx[1] - o.t_dx[1]).frobenius())
            .max((self.t_dt - o.t_dt).frobenius());
        d / self.value.frobenius().max(1.0)
    }

    pub fn t_grad_norm(&self, n: usize) -> f64 {
        let mut s = self.t_dt.frobenius_sq();
        for i in 0..n - 1 {
            s += self.t_dx[i].frobenius_sq();
        }
        s.sqrt()
    }
}

fn average_at_order(a: &dyn MatrixField, p: &Point, lambda: f64, order: usize) -> Averaged {
    let n = a.dim();
    let k = KernelPair::get(n);
    let lnl = lambda.ln();
    let t = p.t;
    let vb: Vec<f64> = a
        .vertical_breaks(lambda * t, lambda * lambda * t)
        .iter()
        .map(|s| 2.0 * ((s / t).ln() / lnl) - 3.0)
        .collect();
    let plain = tanh_rule_plain(order);
    let u_rule = if vb.is_empty() { plain.clone() } else { Arc::new(tanh_rule(&vb, order)) };
    // Σ w A, Σ c_x A, Σ c_t A and the matching scalar sums; derivatives use
    // Σ c (A − B) = Σ c A − B Σ c.
    let mut sum_w = 0.0;
    let mut sum_cx = [0.0; 2];
    let mut sum_ct = 0.0;
    let mut acc_w = Mat::zeros(n);
    let mut acc_x = [Mat::zeros(n); 2];
    let mut acc_t = Mat::zeros(n);
    for &(tau, wt) in u_rule.iter() {
        let u = 1.5 + 0.5 * tau;
        let wu = 0.5 * wt;
        let (ps, dps) = (k.psi(u), k.dpsi(u));
        if ps == 0.0 && dps == 0.0 {
            continue;
        }
        let s = t * lambda.powf(u);
        if n == 2 && a.piecewise_constant() {
            let mut edges = vec![p.x[0] - s];
            edges.extend(a.lateral_breaks(0, s, p.x[0] - s, p.x[0] + s));
            edges.push(p.x[0] + s);
            for e in edges.windows(2) {
                let (za, zb) = ((e[0] - p.x[0]) / s, (e[1] - p.x[0]) / s);
                let mass = k.phi_cdf(zb) - k.phi_cdf(za);
                let dphi = k.phi([zb, 0.0]) - k.phi([za, 0.0]);
                let am = a.eval(&Point::new2(0.5 * (e[0] + e[1]), s));
                let cw = wu * ps * mass;
                let cx = wu * ps * dphi * t / s;
                let ct = wu * dps * mass;
                sum_w += cw;
                acc_w = acc_w + am.scale(cw);
                sum_cx[0] += cx;
                acc_x[0] = acc_x[0] + am.scale(cx);
                sum_ct += ct;
                acc_t = acc_t + am.scale(ct);
            }
            continue;
        }
        let axis_rule = |axis: usize| -> Arc<Vec<(f64, f64)>> {
            let lb = a.lateral_breaks(axis, s, p.x[axis] - s, p.x[axis] + s);
            if lb.is_empty() && s >= 1.0 {
                // the window spans whole periods: trapezoid with `order`
                // nodes per unit length resolves the field and the bump
                let m = (2.0 * s * order as f64).ceil() as usize;
                let dz = 2.0 / m as f64;
                return Arc::new((1..m).map(|j| (-1.0 + j as f64 * dz, dz)).collect());
            }
            if lb.is_empty() {
                return plain.clone();
            }
            let zb: Vec<f64> = lb.iter().map(|y| (y - p.x[axis]) / s).collect();
            Arc::new(tanh_rule(&zb, order))
        };
        let r0 = axis_rule(0);
        let r1 = if n == 3 { axis_rule(1) } else { Arc::new(vec![(0.0, 1.0)]) };
        for &(z2, w2) in r1.iter() {
            for &(z1, w1) in r0.iter() {
                let z = [z1, z2];
                let ph = k.phi(z);
                if ph == 0.0 {
                    continue;
                }
                let w = wu * w1 * w2;
                let gp = k.grad_phi(z);
                let am = a.eval(&Point { x: [p.x[0] + s * z1, p.x[1] + s * z2], t: s });
                let cw = w * ph * ps;
                let cx = [w * gp[0] * ps * t / s, w * gp[1] * ps * t / s];
                let ct = w * ph * dps;
                sum_w += cw;
                acc_w = acc_w + am.scale(cw);
                for i in 0..n - 1 {
                    sum_cx[i] += cx[i];
                    acc_x[i] = acc_x[i] + am.scale(cx[i]);
                }
                sum_ct += ct;
                acc_t = acc_t + am.scale(ct);
            }
        }
    }
    let inv = 1.0 / sum_w;
    let value = acc_w.scale(inv);
    let dev = |acc: Mat, c: f64| (acc - value.scale(c)).scale(-inv);
    Averaged {
        value,
        t_dx: [dev(acc_x[0], sum_cx[0]), dev(acc_x[1], sum_cx[1])],
        t_dt: dev(acc_t, sum_ct).scale(1.0 / lnl),
    }
}

/// `∬ Φ_{x,t,Λ} A ds/s dy` and its scaled derivatives obtained by
/// differentiating the kernel. Gauss order doubles from 16 until the
/// relative change is below [`QUAD_TOL`].
pub fn kernel_average(a: &dyn MatrixField, p: &Point, lambda: f64) -> Result<Averaged> {
    let mut prev = average_at_order(a, p, lambda, 16);
    let mut change = f64::INFINITY;
    for order in [32usize, 64] {
        let next = average_at_order(a, p, lambda, order);
        change = next.change_from(&prev);
        prev = next;
        if change < QUAD_TOL {
            return Ok(prev);
        }
    }
    Err(Error::Quadrature { change, refinements: 2 })
}

type PointKey = (u64, u64, u64);

fn point_key(p: &Point) -> PointKey {
    (p.x[0].to_bits(), p.x[1].to_bits(), p.t.to_bits())
}

const MEMO_CAP: usize = 1 << 20;

/// Records the worst quadrature failure seen by a lazily evaluated field.
#[derive(Default)]
struct FailureLog {
    worst: Mutex<Option<f64>>,
}

impl FailureLog {
    fn record(&self, change: f64) {
        let mut w = self.worst.lock();
        *w = Some(w.map_or(change, |c: f64| c.max(change)));
    }
    fn get(&self) -> Option<f64> {
        *self.worst.lock()
    }
}

/// `B₁`: the initial split of a field at `Λ = 2^{1/4}`.
pub struct InitialSplit {
    pub base: FieldRef,
    memo: RwLock<HashMap<PointKey, Averaged>>,
    failures: FailureLog,
}

impl InitialSplit {
    pub fn new(base: FieldRef) -> Self {
        InitialSplit { base, memo: RwLock::new(HashMap::new()), failures: FailureLog::default() }
    }

    /// Averaged value and scaled derivatives at `p`.
    pub fn averaged(&self, p: &Point) -> Averaged {
        let key = point_key(p);
        if let Some(v) = self.memo.read().get(&key) {
            return *v;
        }
        let v = match kernel_average(self.base.as_ref(), p, initial_lambda()) {
            Ok(v) => v,
            Err(Error::Quadrature { change, .. }) => {
                self.failures.record(change);
                average_at_order(self.base.as_ref(), p, initial_lambda(), 64)
            }
            Err(_) => unreachable!("kernel_average only fails on quadrature"),
        };
        let mut m = self.memo.write();
        if m.len() >= MEMO_CAP {
            m.clear();
        }
        m.insert(key, v);
        v
    }

    /// Worst relative change among evaluations that did not converge.
    pub fn quadrature_failure(&self) -> Option<f64> {
        self.failures.get()
    }
}

fn grad_from(avg: &Averaged, n: usize, t: f64) -> Grad {
    let mut g = [Mat::zeros(n); 3];
    for i in 0..n - 1 {
        g[i] = avg.t_dx[i].scale(1.0 / t);
    }
    g[n - 1] = avg.t_dt.scale(1.0 / t);
    g
}

impl MatrixField for InitialSplit {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn eval(&self, p: &Point) -> Mat {
        self.averaged(p).value
    }
    fn gradient(&self, p: &Point) -> Option<Grad> {
        Some(grad_from(&self.averaged(p), self.dim(), p.t))
    }
    fn ellipticity(&self) -> f64 {
        self.base.ellipticity()
    }
    fn bound(&self) -> f64 {
        self.base.bound()
    }
    fn name(&self) -> String {
        format!("B1[{}]", self.base.name())
    }
    fn params(&self) -> BTreeMap<String, f64> {
        self.base.params()
    }
}

/// `(B₁, C₁)` with `C₁ = A − B₁`.
pub fn initial_split(a: FieldRef) -> (Arc<InitialSplit>, FieldRef) {
    let b1 = Arc::new(InitialSplit::new(a.clone()));
    let c1: FieldRef = Arc::new(Combined::difference(a, b1.clone(), "C1"));
    (b1, c1)
}

// ---------------------------------------------------------------- B_Λ on a lattice

/// Lateral lattice spacing is `1/P` with `P = 2^{4 - min(ℓ, 0)}`,
/// `ℓ = floor(log₂ s)`, so at least 32 nodes cover the support of `φ`
/// (trapezoid error about 1e-8). The vertical spacing in `ln s` is
/// `ln 2 / 2^L` and `L` is refined.
const LAT_BITS: i64 = 4;
const BLOCK_1D: i64 = 32;
const BLOCK_2D: i64 = 8;
/// Beyond this height the lateral kernel spans many periods and is replaced
/// by the periodic mean (aliasing error below 1e-8).
const FAR_FIELD: f64 = 8.0;
const L_START: u32 = 3;
const L_MAX: u32 = 7;

type BlockKey = (u32, i64, i64, i64);

/// `B_Λ = ∬ Φ_{x,t,Λ} B₁ ds/s dy` on a global lattice in `(y, ln s)` shared
/// by all evaluation points. Gradients differentiate the kernel, which only
/// needs values of `B₁`; [`Mollified::transferred`] evaluates the
/// transferred identities `∇ₓB_Λ = ∬Φ ∇ₓB₁` and
/// `t∂ₜB_Λ = ∬Φ (s∂ₛB₁ + (y−x)·∇ₓB₁)` for comparison.
pub struct Mollified {
    pub b1: Arc<InitialSplit>,
    pub lambda: f64,
    blocks: RwLock<HashMap<BlockKey, Arc<Vec<Mat>>>>,
    memo: RwLock<HashMap<PointKey, Averaged>>,
    failures: FailureLog,
}

struct Node {
    level: u32,
    kv: i64,
    period: i64,
    j: [i64; 2],
    /// Lateral offset `y − x`.
    off: [f64; 2],
    s: f64,
    /// Kernel weight, lateral derivative weight `(t/s)∇φ ψ` and vertical
    /// derivative weight `φ ψ′`, all with the lattice cell volume.
    w: f64,
    cx: [f64; 2],
    ct: f64,
}

impl Mollified {
    pub fn new(b1: Arc<InitialSplit>, lambda: f64) -> Self {
        Mollified {
            b1,
            lambda,
            blocks: RwLock::new(HashMap::new()),
            memo: RwLock::new(HashMap::new()),
            failures: FailureLog::default(),
        }
    }

    fn n(&self) -> usize {
        self.b1.dim()
    }

    fn block(&self, level: u32, kv: i64, period: i64, b: [i64; 2]) -> Arc<Vec<Mat>> {
        let key = (level, kv, b[0], b[1]);
        if let Some(v) = self.blocks.read().get(&key) {
            return v.clone();
        }
        let n = self.n();
        let s = level_height(level, kv);
        let dy = 1.0 / period as f64;
        let mut out = Vec::new();
        if n == 2 {
            let lo = b[0] * BLOCK_1D;
            let hi = (lo + BLOCK_1D).min(period);
            for j in lo..hi {
                out.push(self.b1.averaged(&Point::new2(j as f64 * dy, s)).value);
            }
        } else {
            let (lo1, lo2) = (b[0] * BLOCK_2D, b[1] * BLOCK_2D);
            let (hi1, hi2) = ((lo1 + BLOCK_2D).min(period), (lo2 + BLOCK_2D).min(period));
            for j2 in lo2..hi2 {
                for j1 in lo1..hi1 {
                    out.push(self.b1.averaged(&Point::new3(j1 as f64 * dy, j2 as f64 * dy, s)).value);
                }
            }
        }
        let arc = Arc::new(out);
        let mut w = self.blocks.write();
        if w.len() >= MEMO_CAP / 16 {
            w.clear();
        }
        w.insert(key, arc.clone());
        arc
    }

    fn sample(&self, nd: &Node) -> Mat {
        let period = nd.period;
        let jm = [nd.j[0].rem_euclid(period), nd.j[1].rem_euclid(period)];
        if self.n() == 2 {
            let blk = self.block(nd.level, nd.kv, period, [jm[0] / BLOCK_1D, 0]);
            blk[(jm[0] % BLOCK_1D) as usize]
        } else {
            let b = [jm[0] / BLOCK_2D, jm[1] / BLOCK_2D];
            let blk = self.block(nd.level, nd.kv, period, b);
            let w1 = BLOCK_2D.min(period - b[0] * BLOCK_2D);
            blk[((jm[1] % BLOCK_2D) * w1 + jm[0] % BLOCK_2D) as usize]
        }
    }

    /// Lattice nodes in the support of `Φ_{x,t,Λ}` at resolution `level`.
    fn nodes(&self, p: &Point, level: u32) -> Vec<Node> {
        let n = self.n();
        let k = KernelPair::get(n);
        let lnl = self.lambda.ln();
        let per_oct = 1i64 << level;
        let eta = LN_2 / per_oct as f64;
        let lt = p.t.ln();
        let k0 = ((lt + lnl) / eta).floor() as i64 + 1;
        let k1 = ((lt + 2.0 * lnl) / eta).ceil() as i64 - 1;
        let mut out = Vec::new();
        for kv in k0..=k1 {
            let v = kv as f64 * eta;
            let u = (v - lt) / lnl;
            let (ps, dps) = (k.psi(u), k.dpsi(u));
            if ps == 0.0 && dps == 0.0 {
                continue;
            }
            let s = v.exp();
            let ell = kv.div_euclid(per_oct);
            let period = 1i64 << (LAT_BITS - ell.min(0));
            let dy = 1.0 / period as f64;
            if s >= FAR_FIELD {
                // periodic mean; ∫∇φ = 0 so the lateral derivative drops out
                let cnt = if n == 2 { period } else { period * period };
                let w = ps / cnt as f64;
                let ct = dps / cnt as f64;
                let r1 = if n == 2 { 0..1 } else { 0..period };
                for j2 in r1 {
                    for j1 in 0..period {
                        out.push(Node { level, kv, period, j: [j1, j2], off: [0.0; 2], s, w, cx: [0.0; 2], ct });
                    }
                }
                continue;
            }
            let lat_w = s.powi(1 - n as i32) * dy.powi(n as i32 - 1);
            let range = |x: f64| ((((x - s) / dy).floor() as i64) + 1, (((x + s) / dy).ceil() as i64) - 1);
            let (a0, a1) = range(p.x[0]);
            let (b0, b1) = if n == 2 { (0, 0) } else { range(p.x[1]) };
            for j2 in b0..=b1 {
                for j1 in a0..=a1 {
                    let off = [j1 as f64 * dy - p.x[0], if n == 2 { 0.0 } else { j2 as f64 * dy - p.x[1] }];
                    let z = [off[0] / s, off[1] / s];
                    let ph = k.phi(z);
                    if ph == 0.0 {
                        continue;
                    }
                    let gp = k.grad_phi(z);
                    out.push(Node {
                        level,
                        kv,
                        period,
                        j: [j1, j2],
                        off,
                        s,
                        w: lat_w * ph * ps,
                        cx: [lat_w * gp[0] * ps * p.t / s, lat_w * gp[1] * ps * p.t / s],
                        ct: lat_w * ph * dps,
                    });
                }
            }
        }
        out
    }

    /// Single lattice pass at resolution `level`, uncached.
    pub fn lattice_average(&self, p: &Point, level: u32) -> Averaged {
        let n = self.n();
        let lnl = self.lambda.ln();
        let (mut sw, mut scx, mut sct) = (0.0, [0.0; 2], 0.0);
        let (mut aw, mut ax, mut at) = (Mat::zeros(n), [Mat::zeros(n); 2], Mat::zeros(n));
        for nd in self.nodes(p, level) {
            let b = self.sample(&nd);
            sw += nd.w;
            aw = aw + b.scale(nd.w);
            for i in 0..n - 1 {
                scx[i] += nd.cx[i];
                ax[i] = ax[i] + b.scale(nd.cx[i]);
            }
            sct += nd.ct;
            at = at + b.scale(nd.ct);
        }
        let inv = 1.0 / sw;
        let value = aw.scale(inv);
        let dev = |acc: Mat, c: f64| (acc - value.scale(c)).scale(-inv);
        Averaged {
            value,
            t_dx: [dev(ax[0], scx[0]), dev(ax[1], scx[1])],
            t_dt: dev(at, sct).scale(1.0 / lnl),
        }
    }

    /// Averaged value with lattice refinement until the change is below
    /// [`QUAD_TOL`].
    pub fn averaged(&self, p: &Point) -> Averaged {
        let key = point_key(p);
        if let Some(v) = self.memo.read().get(&key) {
            return *v;
        }
        let mut prev = self.lattice_average(p, L_START);
        let mut done = false;
        let mut change = f64::INFINITY;
        for level in L_START + 1..=L_MAX {
            let next = self.lattice_average(p, level);
            change = next.change_from(&prev);
            prev = next;
            if change < QUAD_TOL {
                done = true;
                break;
            }
        }
        if !done {
            self.failures.record(change);
        }
        let mut m = self.memo.write();
        if m.len() >= MEMO_CAP {
            m.clear();
        }
        m.insert(key, prev);
        prev
    }

    /// `t∇B_Λ` from the transferred identities at lattice resolution
    /// `level`, using derivatives of `B₁` at the lattice nodes. Not cached.
    pub fn transferred(&self, p: &Point, level: u32) -> Averaged {
        let n = self.n();
        let (mut sw, mut aw) = (0.0, Mat::zeros(n));
        let (mut gx, mut gt) = ([Mat::zeros(n); 2], Mat::zeros(n));
        for nd in self.nodes(p, level) {
            let dy = 1.0 / nd.period as f64;
            let y = Point { x: [nd.j[0] as f64 * dy, nd.j[1] as f64 * dy], t: nd.s };
            let b = self.b1.averaged(&y);
            sw += nd.w;
            aw = aw + b.value.scale(nd.w);
            let g0 = b.t_dx[0].scale(1.0 / nd.s);
            let g1 = b.t_dx[1].scale(1.0 / nd.s);
            gx[0] = gx[0] + g0.scale(nd.w);
            gx[1] = gx[1] + g1.scale(nd.w);
            gt = gt + (b.t_dt + g0.scale(nd.off[0]) + g1.scale(nd.off[1])).scale(nd.w);
        }
        let inv = 1.0 / sw;
        Averaged {
            value: aw.scale(inv),
            t_dx: [gx[0].scale(inv * p.t), gx[1].scale(inv * p.t)],
            t_dt: gt.scale(inv),
        }
    }

    /// Worst non-converged relative change, from `B_Λ` or from `B₁`.
    pub fn quadrature_failure(&self) -> Option<f64> {
        match (self.failures.get(), self.b1.quadrature_failure()) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        }
    }

    pub fn cached_samples(&self) -> usize {
        self.blocks.read().values().map(|b| b.len()).sum()
    }
}

fn level_height(level: u32, kv: i64) -> f64 {
    (kv as f64 * LN_2 / (1u64 << level) as f64).exp()
}

impl MatrixField for Mollified {
    fn dim(&self) -> usize {
        self.n()
    }
    fn eval(&self, p: &Point) -> Mat {
        self.averaged(p).value
    }
    fn gradient(&self, p: &Point) -> Option<Grad> {
        Some(grad_from(&self.averaged(p), self.dim(), p.t))
    }
    fn ellipticity(&self) -> f64 {
        self.b1.ellipticity()
    }
    fn bound(&self) -> f64 {
        self.b1.bound()
    }
    fn name(&self) -> String {
        format!("B_{}[{}]", self.lambda, self.b1.base.name())
    }
    fn params(&self) -> BTreeMap<String, f64> {
        let mut m = self.b1.params();
        m.insert("lambda".into(), self.lambda);
        m
    }
}

/// `B_Λ` from `B₁`. `Λ` must be at least 2.
pub fn mollify(b1: Arc<InitialSplit>, lambda: f64) -> Result<Arc<Mollified>> {
    if !(lambda >= 2.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("mollification scale must be at least 2, got {lambda}")));
    }
    Ok(Arc::new(Mollified::new(b1, lambda)))
}

// ---------------------------------------------------------------- decomposition

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecomposeOptions {
    /// Mesh on which sup |t∇B| and the Carleson norms are measured.
    pub mesh_j: u32,
    pub ladder: Vec<f64>,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions { mesh_j: 5, ladder: LAMBDA_LADDER.to_vec() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LadderStep {
    pub lambda: f64,
    pub sup_t_grad: f64,
}

/// Serializable summary of a decomposition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub lambda: f64,
    pub eps_target: f64,
    pub eps_achieved: f64,
    pub m_b: f64,
    pub m_c: f64,
    pub ellipticity: f64,
    pub mesh_j: u32,
    pub ladder: Vec<LadderStep>,
    pub m_b_report: CarlesonReport,
    pub m_c_report: CarlesonReport,
}

pub struct Decomposition {
    pub b: Arc<Mollified>,
    pub c: FieldRef,
    pub b1: Arc<InitialSplit>,
    pub summary: DecompositionSummary,
}

/// Largest `|t∇B|` (Frobenius) over cell centers.
pub fn sup_t_grad(b: &Mollified, mesh: &HalfSpaceMesh) -> f64 {
    let n = b.dim();
    mesh.sample(|p| b.averaged(p).t_grad_norm(n)).into_iter().fold(0.0, f64::max)
}

/// Largest `|t∂ₜB|` over cell centers.
pub fn sup_t_dt(b: &Mollified, mesh: &HalfSpaceMesh) -> f64 {
    mesh.sample(|p| b.averaged(p).t_dt.frobenius()).into_iter().fold(0.0, f64::max)
}

/// Carleson norm of `t|∇B_Λ|` with a J vs J+1 check.
pub fn t_grad_carleson(b: &Mollified, mesh: &HalfSpaceMesh) -> Result<CarlesonReport> {
    let n = b.dim();
    carleson::refinement_report(mesh, |m| Ok(m.sample(|p| b.averaged(p).t_grad_norm(n).powi(2))))
}

/// Splits `A = B + C` with `B = B_Λ` for the smallest `Λ` of the ladder
/// whose measured `sup|t∇B_Λ|` is at most `eps`.
pub fn decompose(a: FieldRef, eps: f64, opts: &DecomposeOptions) -> Result<Decomposition> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!("eps must be in (0, 1), got {eps}")));
    }
    let mesh = HalfSpaceMesh::new(a.dim(), opts.mesh_j)?;
    let (b1, _) = initial_split(a.clone());
    let mut steps = Vec::new();
    let mut best = (f64::INFINITY, 0.0);
    for &lambda in &opts.ladder {
        let b = mollify(b1.clone(), lambda)?;
        let sup = sup_t_grad(&b, &mesh);
        if let Some(change) = b.quadrature_failure() {
            return Err(Error::Quadrature { change, refinements: (L_MAX - L_START) as usize });
        }
        steps.push(LadderStep { lambda, sup_t_grad: sup });
        if sup < best.0 {
            best = (sup, lambda);
        }
        if sup <= eps {
            let c: FieldRef = Arc::new(Combined::difference(a.clone(), b.clone(), "C"));
            let m_b_report = t_grad_carleson(&b, &mesh)?;
            let m_c_report = carleson::cm_norm(&|p: &Point| c.eval(p).frobenius(), &mesh)?;
            let ellipticity = mesh
                .sample(|p| b.eval(p).sym_min_eig())
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let summary = DecompositionSummary {
                lambda,
                eps_target: eps,
                eps_achieved: sup,
                m_b: m_b_report.norm,
                m_c: m_c_report.norm,
                ellipticity,
                mesh_j: opts.mesh_j,
                ladder: steps,
                m_b_report,
                m_c_report,
            };
            return Ok(Decomposition { b, c, b1, summary });
        }
    }
    Err(Error::EpsilonUnreachable { target: eps, best: best.0, lambda: best.1 })
}

/// Periodic helper reused by tests: distance of lateral positions.
pub fn lateral_distance(a: [f64; 2], b: [f64; 2], n: usize) -> f64 {
    let d0 = per_dist(a[0], b[0]);
    if n == 2 {
        d0
    } else {
        let d1 = per_dist(a[1], b[1]);
        (d0 * d0 + d1 * d1).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{Constant, DkpSmooth, WhitneyPiecewise};

    #[test]
    fn kernel_constants() {
        let k = KernelPair::get(2);
        assert!((k.phi_mass - 0.443_993_816_168_079_4).abs() < 1e-13);
        let mass: f64 = tanh_rule(&[], 64).iter().map(|(z, w)| w * k.phi([*z, 0.0])).sum();
        assert!((mass - 1.0).abs() < 1e-12);
        // c_ψ = ∫|ψ'| = 2 max ψ for a unimodal bump
        let direct: f64 = composite(1.0, 2.0, 64, &[1.5], 16).iter().map(|(u, w)| w * k.dpsi(*u).abs()).sum();
        assert!((direct - k.c_psi).abs() < 1e-8 * k.c_psi);
        let k3 = KernelPair::get(3);
        let direct3: f64 = composite(0.0, 1.0, 64, &[], 16)
            .iter()
            .map(|(r, w)| w * 2.0 * PI * r * k3.grad_phi([*r, 0.0])[0].abs())
            .sum();
        assert!((direct3 - k3.c_phi).abs() < 1e-8 * k3.c_phi);
    }

    #[test]
    fn support_is_respected() {
        let x = [0.3, 0.0];
        assert_eq!(kernel_weight(2, x, 0.01, 4.0, x, 0.039), 0.0);
        assert_eq!(kernel_weight(2, x, 0.01, 4.0, x, 0.161), 0.0);
        assert!(kernel_weight(2, x, 0.01, 4.0, x, 0.08) > 0.0);
        assert_eq!(kernel_weight(2, x, 0.01, 4.0, [0.3 + 0.081, 0.0], 0.08), 0.0);
    }

    #[test]
    fn constants_are_fixed_points() {
        let a: FieldRef = Arc::new(Constant { a: Mat::from_rows(2, &[2.0, 0.5, -0.3, 1.0]) });
        let (b1, c1) = initial_split(a.clone());
        let p = Point::new2(0.37, 0.02);
        assert!((b1.eval(&p) - a.eval(&p)).max_abs() < 1e-14);
        assert!(c1.eval(&p).max_abs() < 1e-14);
        let g = b1.gradient(&p).unwrap();
        assert!(g[0].max_abs() < 1e-12 && g[1].max_abs() < 1e-12);
        let bl = mollify(b1, 4.0).unwrap();
        let v = bl.averaged(&p);
        assert!((v.value - a.eval(&p)).max_abs() < 1e-14);
        assert!(v.t_grad_norm(2) < 1e-12);
    }

    #[test]
    fn piecewise_initial_split_bounds() {
        let delta = 0.2;
        let a: FieldRef = Arc::new(WhitneyPiecewise { n: 2, delta, seed: 4 });
        let (b1, _) = initial_split(a);
        let k = KernelPair::get(2);
        let lam = initial_lambda();
        let bx = k.c_phi / lam * 2.0 * delta;
        let bt = k.c_psi / lam.ln() * 2.0 * delta;
        for p in crate::field::sample_points(2, 40, 1e-3) {
            let v = b1.averaged(&p);
            assert!(v.t_dx[0].frobenius() <= bx * (1.0 + 1e-6));
            assert!(v.t_dt.frobenius() <= bt * (1.0 + 1e-6));
        }
        assert!(b1.quadrature_failure().is_none());
    }

    #[test]
    fn transferred_gradient_matches_differences() {
        let a: FieldRef = Arc::new(DkpSmooth::with_ones(2, 0.2, 0.5));
        let (b1, _) = initial_split(a);
        let bl = mollify(b1, 4.0).unwrap();
        for p in [Point::new2(0.13, 0.02), Point::new2(0.71, 0.05)] {
            let g = bl.gradient(&p).unwrap();
            for d in 0..2 {
                let hs = 1e-3 * p.t;
                let fd = (bl.eval(&p.shifted(2, d, hs)) - bl.eval(&p.shifted(2, d, -hs))).scale(0.5 / hs);
                let scale = g[d].max_abs().max(1e-3);
                assert!((fd - g[d]).max_abs() < 1e-3 * scale, "d={d}: {:?} vs {:?}", fd, g[d]);
            }
        }
    }

    /// Hides the box structure so the generic quadrature path runs.
    struct Opaque(FieldRef);

    impl MatrixField for Opaque {
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn eval(&self, p: &Point) -> Mat {
            self.0.eval(p)
        }
        fn gradient(&self, _p: &Point) -> Option<Grad> {
            None
        }
        fn ellipticity(&self) -> f64 {
            self.0.ellipticity()
        }
        fn bound(&self) -> f64 {
            self.0.bound()
        }
        fn name(&self) -> String {
            "opaque".into()
        }
        fn vertical_breaks(&self, lo: f64, hi: f64) -> Vec<f64> {
            self.0.vertical_breaks(lo, hi)
        }
        fn lateral_breaks(&self, axis: usize, s: f64, lo: f64, hi: f64) -> Vec<f64> {
            self.0.lateral_breaks(axis, s, lo, hi)
        }
    }

    #[test]
    fn phi_cdf_matches_quadrature() {
        let k = KernelPair::get(2);
        for z in [-0.99, -0.7, -0.2, 0.0, 0.31, 0.8, 0.995] {
            let direct: f64 = tanh_rule(&[z], 64)
                .iter()
                .filter(|(x, _)| *x < z)
                .map(|(x, w)| w * k.phi([*x, 0.0]))
                .sum();
            assert!((k.phi_cdf(z) - direct).abs() < 1e-11, "z={z}");
        }
        assert_eq!(k.phi_cdf(-1.0), 0.0);
        assert_eq!(k.phi_cdf(1.0), 1.0);
    }

    #[test]
    fn box_sums_match_generic_quadrature() {
        let a: FieldRef = Arc::new(WhitneyPiecewise { n: 2, delta: 0.2, seed: 9 });
        let opaque = Opaque(a.clone());
        for p in crate::field::sample_points(2, 12, 1e-3) {
            let fast = kernel_average(a.as_ref(), &p, initial_lambda()).unwrap();
            let slow = kernel_average(&opaque, &p, initial_lambda()).unwrap();
            assert!(fast.change_from(&slow) < 1e-7, "{p:?}");
        }
    }

    #[test]
    fn transferred_identities_agree() {
        let a: FieldRef = Arc::new(DkpSmooth::with_ones(2, 0.2, 0.5));
        let (b1, _) = initial_split(a);
        let bl = mollify(b1, 4.0).unwrap();
        for p in [Point::new2(0.21, 0.03), Point::new2(0.64, 0.2)] {
            let direct = bl.averaged(&p);
            let moved = bl.transferred(&p, 6);
            let scale = direct.t_grad_norm(2).max(1e-3);
            assert!((direct.t_dx[0] - moved.t_dx[0]).max_abs() < 1e-5 * scale);
            assert!((direct.t_dt - moved.t_dt).max_abs() < 1e-5 * scale);
        }
    }
}

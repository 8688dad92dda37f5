//! Closed-form solutions for trigonometric boundary data.

use super::{DiscreteSolution, StripGrid};
use crate::error::{Error, Result};
use crate::field::Point;
use crate::mesh::HalfSpaceMesh;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::str::FromStr;

/// `f(x) = c₀ + Σ a_k cos(2πkx) + b_k sin(2πkx)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigData {
    pub mean: f64,
    /// `(k, a_k, b_k)` with `k ≥ 1`.
    pub modes: Vec<(u32, f64, f64)>,
}

impl TrigData {
    pub fn cos(k: u32) -> Self {
        TrigData { mean: 0.0, modes: vec![(k, 1.0, 0.0)] }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.mean
            + self
                .modes
                .iter()
                .map(|(k, a, b)| {
                    let w = 2.0 * PI * *k as f64 * x;
                    a * w.cos() + b * w.sin()
                })
                .sum::<f64>()
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.modes
            .iter()
            .map(|(k, a, b)| {
                let kk = 2.0 * PI * *k as f64;
                kk * (-a * (kk * x).sin() + b * (kk * x).cos())
            })
            .sum()
    }
}

/// Parses sums like `1 + 0.5cos2 - sin3`.
impl FromStr for TrigData {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("cannot parse trigonometric data '{s}'"));
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(bad());
        }
        let mut terms = Vec::new();
        let mut cur = String::new();
        for (i, c) in compact.chars().enumerate() {
            if (c == '+' || c == '-') && i > 0 && !cur.ends_with(['e', 'E']) {
                terms.push(std::mem::take(&mut cur));
            }
            cur.push(c);
        }
        terms.push(cur);
        let mut out = TrigData { mean: 0.0, modes: Vec::new() };
        for term in terms {
            let (sign, body) = match term.strip_prefix('-') {
                Some(rest) => (-1.0, rest),
                None => (1.0, term.trim_start_matches('+')),
            };
            let kind = ["cos", "sin"].iter().find_map(|w| body.find(w).map(|i| (*w, i)));
            match kind {
                None => out.mean += sign * body.parse::<f64>().map_err(|_| bad())?,
                Some((w, i)) => {
                    let coef = if i == 0 { 1.0 } else { body[..i].trim_end_matches('*').parse::<f64>().map_err(|_| bad())? };
                    let k: u32 = body[i + 3..].parse().map_err(|_| bad())?;
                    if k == 0 {
                        return Err(bad());
                    }
                    let c = sign * coef;
                    match out.modes.iter_mut().find(|m| m.0 == k) {
                        Some(m) if w == "cos" => m.1 += c,
                        Some(m) => m.2 += c,
                        None if w == "cos" => out.modes.push((k, c, 0.0)),
                        None => out.modes.push((k, 0.0, c)),
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Geometry {
    /// Strip `(0, H)` closed by the mean value at the top.
    Strip { height: f64 },
    HalfPlane,
}

/// Solution of `a₁₁ u_xx + a₂₂ u_tt = 0` with data `f` at `t = 0`;
/// `rate_scale = √(a₁₁/a₂₂)`.
#[derive(Clone, Debug)]
pub struct StripOracle {
    pub data: TrigData,
    pub geometry: Geometry,
    pub rate_scale: f64,
}

impl StripOracle {
    pub fn new(data: TrigData, height: f64, rate_scale: f64) -> Self {
        StripOracle { data, geometry: Geometry::Strip { height }, rate_scale }
    }

    pub fn half_plane(data: TrigData) -> Self {
        StripOracle { data, geometry: Geometry::HalfPlane, rate_scale: 1.0 }
    }

    /// Profile of mode `k` and its `t`-derivative.
    fn profile(&self, k: u32, t: f64) -> (f64, f64) {
        let a = 2.0 * PI * k as f64 * self.rate_scale;
        match self.geometry {
            Geometry::HalfPlane => {
                let e = (-a * t).exp();
                (e, -a * e)
            }
            Geometry::Strip { height } => {
                // sinh(a(H−t))/sinh(aH) without overflow
                let denom = 1.0 - (-2.0 * a * height).exp();
                let e = (-a * t).exp();
                let far = (-2.0 * a * height + a * t).exp();
                ((e - far) / denom, -a * (e + far) / denom)
            }
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        self.data.mean
            + self
                .data
                .modes
                .iter()
                .map(|(k, a, b)| {
                    let w = 2.0 * PI * *k as f64 * x;
                    self.profile(*k, t).0 * (a * w.cos() + b * w.sin())
                })
                .sum::<f64>()
    }

    /// `(∂x, ∂t)`.
    pub fn grad(&self, x: f64, t: f64) -> [f64; 2] {
        let mut g = [0.0; 2];
        for (k, a, b) in &self.data.modes {
            let kk = 2.0 * PI * *k as f64;
            let (p, dp) = self.profile(*k, t);
            g[0] += p * kk * (-a * (kk * x).sin() + b * (kk * x).cos());
            g[1] += dp * (a * (kk * x).cos() + b * (kk * x).sin());
        }
        g
    }
}

/// Periodic Poisson kernel of the upper half-plane over the unit circle,
/// `sinh(2πt) / (cosh(2πt) − cos(2πx))`; integrates to one in `x`.
pub fn poisson_kernel(x: f64, t: f64) -> f64 {
    let s = 2.0 * PI * t;
    s.sinh() / (s.cosh() - (2.0 * PI * x).cos())
}

/// The exact Laplace solution interpolated on the mesh grid.
pub fn laplace_fourier_oracle(data: &TrigData, mesh: &HalfSpaceMesh, geometry: Geometry) -> Result<DiscreteSolution> {
    let (grid, oracle) = match geometry {
        Geometry::Strip { height } => {
            if height <= 0.0 {
                return Err(Error::Config("strip height must be positive".into()));
            }
            let grid = StripGrid::with_height(mesh, height);
            let h = grid.z1;
            (grid, StripOracle::new(data.clone(), h, 1.0))
        }
        Geometry::HalfPlane => (StripGrid::from_mesh(mesh), StripOracle::half_plane(data.clone())),
    };
    Ok(DiscreteSolution::interpolate(grid, |p: &Point| oracle.eval(p.x[0], p.t)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_trig_sums() {
        let d: TrigData = "1 + 0.5cos2 - sin3".parse().unwrap();
        assert_eq!(d.mean, 1.0);
        assert_eq!(d.modes, vec![(2, 0.5, 0.0), (3, 0.0, -1.0)]);
        assert!("cos0".parse::<TrigData>().is_err());
        assert!("tan1".parse::<TrigData>().is_err());
    }

    #[test]
    fn strip_profile_is_harmonic_with_right_ends() {
        let o = StripOracle::new(TrigData::cos(2), 1.0, 1.0);
        assert!((o.eval(0.0, 0.0) - 1.0).abs() < 1e-14);
        assert!(o.eval(0.1, 1.0).abs() < 1e-14);
        let (x, t, h) = (0.3, 0.4, 1e-4);
        let lap = (o.eval(x + h, t) + o.eval(x - h, t) + o.eval(x, t + h) + o.eval(x, t - h) - 4.0 * o.eval(x, t)) / (h * h);
        assert!(lap.abs() < 1e-4, "{lap}");
        let g = o.grad(x, t);
        assert!((g[1] - (o.eval(x, t + h) - o.eval(x, t - h)) / (2.0 * h)).abs() < 1e-6);
    }

    #[test]
    fn poisson_kernel_has_unit_mass() {
        let n = 20_000;
        let m: f64 = (0..n).map(|i| poisson_kernel((i as f64 + 0.5) / n as f64, 0.05)).sum::<f64>() / n as f64;
        assert!((m - 1.0).abs() < 1e-10);
    }
}

//! Boundary functionals of per-cell data: non-tangential maximal functions,
//! area and square functions, boundary `L^p` norms and the discrete dual
//! witness for the truncated maximal function.
//!
//! All inputs are per-cell values in mesh order. Scalar functionals take
//! magnitudes; vector data is `[f64; 3]` per cell with the same coordinate
//! layout as points.

use crate::error::{Error, Result};
use crate::matrix::norm3;
use crate::mesh::HalfSpaceMesh;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FunctionalProfile {
    pub name: String,
    /// One value per boundary node.
    pub values: Vec<f64>,
    pub j: u32,
    pub aperture: f64,
}

impl FunctionalProfile {
    pub fn new(name: &str, values: Vec<f64>, mesh: &HalfSpaceMesh) -> Self {
        FunctionalProfile { name: name.into(), values, j: mesh.j, aperture: 1.0 }
    }
}

fn cone_table(mesh: &HalfSpaceMesh) -> Vec<Vec<[i64; 2]>> {
    (0..mesh.n_levels()).map(|k| mesh.cone_offsets(k)).collect()
}

fn shifted_lat(mesh: &HalfSpaceMesh, node: usize, off: [i64; 2]) -> usize {
    let c = mesh.lat_coords(node);
    mesh.lat_from_coords([c[0] as i64 + off[0], c[1] as i64 + off[1]])
}

/// Largest per-cell value over each cone.
fn cone_max(cell_values: &[f64], mesh: &HalfSpaceMesh) -> Vec<f64> {
    let table = cone_table(mesh);
    crate::par::map(mesh.n_lateral(), |node| {
        let mut best: f64 = 0.0;
        for (k, offs) in table.iter().enumerate() {
            for &off in offs {
                best = best.max(cell_values[mesh.cell_index(shifted_lat(mesh, node, off), k)]);
            }
        }
        best
    })
}

/// `N(v)(x) = max_{Γ(x)} |v|`.
pub fn ntmax(v: &[f64], mesh: &HalfSpaceMesh) -> FunctionalProfile {
    let a: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    FunctionalProfile::new("N", cone_max(&a, mesh), mesh)
}

/// Whitney averages `(⨍_{B(y,2t)} ∫_t^{2t} |v|² ds/s^e dz)^{1/2}` at every
/// cell, normalized so that constants are reproduced exactly.
pub fn whitney_averages(v: &[f64], mesh: &HalfSpaceMesh, exponent: f64) -> Vec<f64> {
    let nt = mesh.n_levels();
    let nx = mesh.nx;
    let weight: Vec<f64> = (0..nt).map(|k| mesh.h / mesh.level_height(k).powf(exponent)).collect();
    if mesh.n == 2 {
        // per level prefix sums of v² over two periods
        let mut pre = vec![0.0; nt * (2 * nx + 1)];
        for k in 0..nt {
            let base = k * (2 * nx + 1);
            for i in 0..2 * nx {
                let c = mesh.cell_index(i % nx, k);
                pre[base + i + 1] = pre[base + i] + v[c] * v[c];
            }
        }
        crate::par::map(mesh.n_cells(), |cell| {
            let k = mesh.level_of(cell);
            let i = mesh.lateral_of(cell) as i64;
            let (mut num, mut den) = (0.0, 0.0);
            let half = 2 * k as i64;
            for kk in k..=(2 * k).min(nt - 1) {
                let base = kk * (2 * nx + 1);
                let (sum, count) = if 2 * half + 1 >= nx as i64 {
                    (pre[base + nx], nx as f64)
                } else {
                    let lo = (i - half).rem_euclid(nx as i64) as usize;
                    let len = (2 * half + 1) as usize;
                    (pre[base + lo + len] - pre[base + lo], len as f64)
                };
                num += weight[kk] * sum;
                den += weight[kk] * count;
            }
            (num / den).sqrt()
        })
    } else {
        // rows of the disc via per-row prefix sums
        let mut pre = vec![0.0; nt * nx * (2 * nx + 1)];
        for k in 0..nt {
            for r in 0..nx {
                let base = (k * nx + r) * (2 * nx + 1);
                for i in 0..2 * nx {
                    let c = mesh.cell_index(mesh.lat_from_coords([i as i64, r as i64]), k);
                    pre[base + i + 1] = pre[base + i] + v[c] * v[c];
                }
            }
        }
        crate::par::map(mesh.n_cells(), |cell| {
            let k = mesh.level_of(cell);
            let c = mesh.lat_coords(mesh.lateral_of(cell));
            let rad = 2.0 * (k as f64 + 0.5);
            let (mut num, mut den) = (0.0, 0.0);
            let bmax = (rad.ceil() as i64).min(nx as i64 / 2);
            for kk in k..=(2 * k).min(nt - 1) {
                for b in -bmax..=bmax {
                    if b >= (nx as i64 + 1) / 2 && b != -bmax && 2 * bmax + 1 > nx as i64 {
                        continue;
                    }
                    let rem = rad * rad - (b * b) as f64;
                    if rem <= 0.0 {
                        continue;
                    }
                    let half = (rem.sqrt() - 1e-12).ceil() as i64 - 1;
                    let row = (c[1] as i64 + b).rem_euclid(nx as i64) as usize;
                    let base = (kk * nx + row) * (2 * nx + 1);
                    let (sum, count) = if 2 * half + 1 >= nx as i64 {
                        (pre[base + nx], nx as f64)
                    } else {
                        let lo = (c[0] as i64 - half).rem_euclid(nx as i64) as usize;
                        let len = (2 * half + 1) as usize;
                        (pre[base + lo + len] - pre[base + lo], len as f64)
                    };
                    num += weight[kk] * sum;
                    den += weight[kk] * count;
                }
            }
            if den > 0.0 {
                (num / den).sqrt()
            } else {
                v[cell].abs()
            }
        })
    }
}

/// `Ñ(v)(x) = max over cone points of the Whitney L² average of v`.
pub fn avg_ntmax(v: &[f64], mesh: &HalfSpaceMesh) -> FunctionalProfile {
    FunctionalProfile::new("N~", cone_max(&whitney_averages(v, mesh, 1.0), mesh), mesh)
}

/// Averaged maximal function with vertical measure `ds/s^e`.
pub fn avg_ntmax_weighted(v: &[f64], mesh: &HalfSpaceMesh, exponent: f64) -> FunctionalProfile {
    FunctionalProfile::new("N~w", cone_max(&whitney_averages(v, mesh, exponent), mesh), mesh)
}

/// `𝒜(v)(x) = (∫_{Γ(x)} v² t^{-n} dy dt)^{1/2}`, truncated at the mesh floor.
pub fn area(v: &[f64], mesh: &HalfSpaceMesh) -> FunctionalProfile {
    let table = cone_table(mesh);
    let hn = mesh.h.powi(mesh.n as i32);
    let vals = crate::par::map(mesh.n_lateral(), |node| {
        let mut s = 0.0;
        for (k, offs) in table.iter().enumerate() {
            let w = hn / mesh.level_height(k).powi(mesh.n as i32);
            for &off in offs {
                let x = v[mesh.cell_index(shifted_lat(mesh, node, off), k)];
                s += x * x * w;
            }
        }
        s.sqrt()
    });
    FunctionalProfile::new("A", vals, mesh)
}

/// `𝒮(u) = 𝒜(t∇u)` from per-cell gradient magnitudes `|∇u|`.
pub fn square(grad_mag: &[f64], mesh: &HalfSpaceMesh) -> FunctionalProfile {
    let scaled: Vec<f64> = grad_mag
        .iter()
        .enumerate()
        .map(|(c, g)| g * mesh.level_height(mesh.level_of(c)))
        .collect();
    let mut p = area(&scaled, mesh);
    p.name = "S".into();
    p
}

/// `(Σ_i h^{n-1} |value_i|^p)^{1/p}` on the periodic boundary grid.
pub fn lp_norm(profile: &FunctionalProfile, p: f64) -> f64 {
    let nb = profile.values.len() as f64;
    let w = 1.0 / nb;
    if p.is_infinite() {
        return profile.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    }
    profile.values.iter().map(|v| w * v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Same norm on raw boundary samples.
pub fn lp_norm_values(values: &[f64], p: f64) -> f64 {
    let w = 1.0 / values.len() as f64;
    values.iter().map(|v| w * v.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

// ---------------------------------------------------------------- truncated

/// Cells within Euclidean distance `< t/4` of a cell center at level `k`
/// (periodic laterally, clipped vertically), as (lateral offset, level offset).
fn ball_offsets(mesh: &HalfSpaceMesh, k: usize) -> Vec<([i64; 2], i64)> {
    let rad = (k as f64 + 0.5) / 4.0;
    let r = rad.ceil() as i64;
    let mut out = Vec::new();
    for dk in -r..=r {
        let kk = k as i64 + dk;
        if kk < 0 || kk >= mesh.nx as i64 {
            continue;
        }
        for a in -r..=r {
            let bs: Vec<i64> = if mesh.n == 3 { (-r..=r).collect() } else { vec![0] };
            for b in bs {
                if ((a * a + b * b + dk * dk) as f64) < rad * rad || (a == 0 && b == 0 && dk == 0) {
                    out.push(([a, b], dk));
                }
            }
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct TruncatedProfile {
    pub profile: FunctionalProfile,
    /// Maximizing ball (member cells) per boundary node; empty when the cone
    /// does not meet `K`.
    pub balls: Vec<Vec<usize>>,
}

/// `N_{p,K}(v)(x) = sup over cone points Y with B(Y, t/4) ⊆ K of the L^p
/// mean of |v| on that ball`. Ties: smallest level, then smallest lateral index.
pub fn truncated_ntmax(v: &[f64], mesh: &HalfSpaceMesh, k_mask: &[bool], p: f64) -> Result<TruncatedProfile> {
    if p < 1.0 {
        return Err(Error::Config(format!("p must be at least 1, got {p}")));
    }
    if k_mask.len() != mesh.n_cells() {
        return Err(Error::Config("mask size does not match the mesh".into()));
    }
    let nt = mesh.n_levels();
    let balls_by_level: Vec<Vec<([i64; 2], i64)>> = (0..nt).map(|k| ball_offsets(mesh, k)).collect();
    // ball mean and validity per cell
    let per_cell = crate::par::map(mesh.n_cells(), |cell| {
        if !k_mask[cell] {
            return None;
        }
        let k = mesh.level_of(cell);
        let lat = mesh.lateral_of(cell);
        let mut members = Vec::with_capacity(balls_by_level[k].len());
        for &(off, dk) in &balls_by_level[k] {
            let c = mesh.cell_index(shifted_lat(mesh, lat, off), (k as i64 + dk) as usize);
            if !k_mask[c] {
                return None;
            }
            members.push(c);
        }
        let mean = members.iter().map(|&c| v[c].abs().powf(p)).sum::<f64>() / members.len() as f64;
        Some(mean.powf(1.0 / p))
    });
    let table = cone_table(mesh);
    let picks = crate::par::map(mesh.n_lateral(), |node| {
        let mut best: Option<(f64, usize)> = None;
        for (k, offs) in table.iter().enumerate() {
            let mut lats: Vec<usize> = offs.iter().map(|&o| shifted_lat(mesh, node, o)).collect();
            lats.sort_unstable();
            for lat in lats {
                let c = mesh.cell_index(lat, k);
                if let Some(val) = per_cell[c] {
                    if best.map_or(true, |(b, _)| val > b) {
                        best = Some((val, c));
                    }
                }
            }
        }
        best
    });
    let mut values = Vec::with_capacity(picks.len());
    let mut balls = Vec::with_capacity(picks.len());
    for pick in picks {
        match pick {
            Some((val, c)) => {
                values.push(val);
                let k = mesh.level_of(c);
                let lat = mesh.lateral_of(c);
                balls.push(
                    balls_by_level[k]
                        .iter()
                        .map(|&(off, dk)| mesh.cell_index(shifted_lat(mesh, lat, off), (k as i64 + dk) as usize))
                        .collect(),
                );
            }
            None => {
                values.push(0.0);
                balls.push(Vec::new());
            }
        }
    }
    Ok(TruncatedProfile { profile: FunctionalProfile::new(&format!("N_{p},K"), values, mesh), balls })
}

/// Mask of cells with center height in `[lo, hi]`.
pub fn band_mask(mesh: &HalfSpaceMesh, lo: f64, hi: f64) -> Vec<bool> {
    (0..mesh.n_cells())
        .map(|c| {
            let t = mesh.level_height(mesh.level_of(c));
            t >= lo && t <= hi
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualWitness {
    /// Vector field per cell, supported in `K`.
    pub field: Vec<[f64; 3]>,
    /// `∬ F · 𝐡`.
    pub pairing: f64,
    /// `‖N_{1,K}(F)‖_q`.
    pub target: f64,
    pub certificate: f64,
}

/// Discrete witness `𝐡` for `‖N_{1,K}(F)‖_q ≤ 2 ∬ F·𝐡`.
pub fn dual_witness(f: &[[f64; 3]], mesh: &HalfSpaceMesh, k_mask: &[bool], q: f64) -> Result<DualWitness> {
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::Config(format!("q must be in (1, ∞), got {q}")));
    }
    if f.iter().all(|v| norm3(v) == 0.0) {
        return Err(Error::DegenerateInput("F vanishes identically".into()));
    }
    let mags: Vec<f64> = f.iter().map(norm3).collect();
    let tp = truncated_ntmax(&mags, mesh, k_mask, 1.0)?;
    let target = lp_norm(&tp.profile, q);
    if target == 0.0 {
        return Err(Error::DegenerateInput("N_{1,K}(F) vanishes identically".into()));
    }
    let hb = mesh.h.powi(mesh.n as i32 - 1);
    let hn = mesh.h.powi(mesh.n as i32);
    let mut field = vec![[0.0; 3]; mesh.n_cells()];
    for (i, ball) in tp.balls.iter().enumerate() {
        if ball.is_empty() {
            continue;
        }
        let g = (tp.profile.values[i] / target).powf(q - 1.0);
        let coef = hb * g / (ball.len() as f64 * hn);
        for &c in ball {
            let m = mags[c];
            if m < 1e-14 {
                continue;
            }
            for d in 0..3 {
                field[c][d] += coef * f[c][d] / m;
            }
        }
    }
    let pairing: f64 = f
        .iter()
        .zip(&field)
        .map(|(a, b)| (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) * hn)
        .sum();
    Ok(DualWitness { field, pairing, target, certificate: pairing / target })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_are_reproduced() {
        let mesh = HalfSpaceMesh::new(2, 5).unwrap();
        let v = vec![-3.0; mesh.n_cells()];
        assert!(ntmax(&v, &mesh).values.iter().all(|x| *x == 3.0));
        assert!(avg_ntmax(&v, &mesh).values.iter().all(|x| (x - 3.0).abs() < 1e-12));
        let mesh3 = HalfSpaceMesh::new(3, 3).unwrap();
        let v3 = vec![2.0; mesh3.n_cells()];
        assert!(avg_ntmax(&v3, &mesh3).values.iter().all(|x| (x - 2.0).abs() < 1e-12));
    }

    #[test]
    fn lp_of_cosine() {
        let mesh = HalfSpaceMesh::new(2, 6).unwrap();
        let vals: Vec<f64> = (0..mesh.nx).map(|i| (2.0 * std::f64::consts::PI * i as f64 * mesh.h).cos()).collect();
        let p = FunctionalProfile::new("f", vals, &mesh);
        assert!((lp_norm(&p, 2.0) - 0.5f64.sqrt()).abs() < 1e-12);
        let c = FunctionalProfile::new("c", vec![4.0; mesh.nx], &mesh);
        assert!((lp_norm(&c, 3.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn square_function_of_decaying_mode() {
        let mesh = HalfSpaceMesh::new(2, 7).unwrap();
        let tau = 2.0 * std::f64::consts::PI;
        let g = mesh.sample(|p| tau * (-tau * p.t).exp());
        let s = square(&g, &mesh);
        for v in &s.values {
            assert!((v - 0.5f64.sqrt()).abs() < 0.05 * 0.5f64.sqrt(), "{v}");
        }
    }

    #[test]
    fn single_ball_witness_is_exact() {
        let mesh = HalfSpaceMesh::new(2, 5).unwrap();
        let mask = band_mask(&mesh, 0.1, 0.6);
        let mut f = vec![[0.0; 3]; mesh.n_cells()];
        let c = mesh.cell_index(10, 8);
        f[c] = [0.5, -1.0, 0.0];
        let w = dual_witness(&f, &mesh, &mask, 2.0).unwrap();
        assert!((w.certificate - 1.0).abs() < 1e-12);
        assert!(w.field.iter().enumerate().all(|(i, v)| mask[i] || norm3(v) == 0.0));
        let zero = vec![[0.0; 3]; mesh.n_cells()];
        assert!(matches!(dual_witness(&zero, &mesh, &mask, 2.0), Err(Error::DegenerateInput(_))));
    }
}

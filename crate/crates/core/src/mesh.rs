//! Uniform periodic tensor mesh on the truncated half-space `T^{n-1} × (0, 1]`.
//!
//! With `N = 2^J` and `h = 1/N`, boundary nodes sit at `x_i = i h` and cells
//! are `[i h, (i+1) h] × [k h, (k+1) h]` with centers `((i+½)h, (k+½)h)`.
//! Cell index: `k * N^{n-1} + lateral`, lateral index `i₁ + N i₂`.

use crate::error::{Error, Result};
use crate::field::{per_dist, Point};
use serde::{Deserialize, Serialize};

pub const MIN_J: u32 = 3;
pub const MAX_J: u32 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HalfSpaceMesh {
    pub n: usize,
    pub j: u32,
    /// Nodes per tangential direction, and number of vertical levels.
    pub nx: usize,
    pub h: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicTent {
    /// Lateral center (second entry unused in 2D).
    pub center: [f64; 2],
    pub scale: f64,
}

impl HalfSpaceMesh {
    /// Validated constructor, `3 ≤ J ≤ 10`.
    pub fn new(n: usize, j: u32) -> Result<Self> {
        if !(MIN_J..=MAX_J).contains(&j) {
            return Err(Error::Config(format!("resolution J must be in {MIN_J}..={MAX_J}, got {j}")));
        }
        Self::unchecked(n, j)
    }

    /// Same as `new` but allows one extra level, used for refinement studies.
    pub(crate) fn unchecked(n: usize, j: u32) -> Result<Self> {
        if n != 2 && n != 3 {
            return Err(Error::Config(format!("dimension must be 2 or 3, got {n}")));
        }
        if j > MAX_J + 1 || j < 1 {
            return Err(Error::Config(format!("resolution J={j} is out of range")));
        }
        let nx = 1usize << j;
        Ok(HalfSpaceMesh { n, j, nx, h: 1.0 / nx as f64 })
    }

    pub fn refined(&self) -> Result<Self> {
        Self::unchecked(self.n, self.j + 1)
    }

    pub fn n_lateral(&self) -> usize {
        self.nx.pow(self.n as u32 - 1)
    }

    pub fn n_levels(&self) -> usize {
        self.nx
    }

    pub fn n_cells(&self) -> usize {
        self.n_lateral() * self.nx
    }

    pub fn cell_index(&self, lat: usize, k: usize) -> usize {
        k * self.n_lateral() + lat
    }

    pub fn level_of(&self, cell: usize) -> usize {
        cell / self.n_lateral()
    }

    pub fn lateral_of(&self, cell: usize) -> usize {
        cell % self.n_lateral()
    }

    /// Lateral multi-index `(i₁, i₂)` of a lateral index.
    pub fn lat_coords(&self, lat: usize) -> [usize; 2] {
        if self.n == 2 {
            [lat, 0]
        } else {
            [lat % self.nx, lat / self.nx]
        }
    }

    pub fn lat_from_coords(&self, c: [i64; 2]) -> usize {
        let m = self.nx as i64;
        let a = c[0].rem_euclid(m) as usize;
        if self.n == 2 {
            a
        } else {
            a + self.nx * c[1].rem_euclid(m) as usize
        }
    }

    pub fn level_height(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.h
    }

    pub fn cell_center(&self, cell: usize) -> Point {
        let k = self.level_of(cell);
        let c = self.lat_coords(self.lateral_of(cell));
        let t = self.level_height(k);
        let x0 = (c[0] as f64 + 0.5) * self.h;
        if self.n == 2 {
            Point::new2(x0, t)
        } else {
            Point::new3(x0, (c[1] as f64 + 0.5) * self.h, t)
        }
    }

    /// Boundary node position of lateral index `lat`.
    pub fn boundary_node(&self, lat: usize) -> [f64; 2] {
        let c = self.lat_coords(lat);
        [c[0] as f64 * self.h, c[1] as f64 * self.h]
    }

    /// Lateral offsets `m` (in cells) of the cone cells at level `k` above
    /// a boundary node: a cell of lateral index `node + m` belongs to the
    /// cone iff its center is within periodic distance `t_k` of the node.
    /// Offsets are deduplicated modulo the period.
    pub fn cone_offsets(&self, k: usize) -> Vec<[i64; 2]> {
        let m = self.nx as i64;
        let kk = k as i64;
        let r2 = (k as f64 + 0.5) * (k as f64 + 0.5);
        let mut out = Vec::new();
        if self.n == 2 {
            if 2 * kk + 2 >= m {
                out.extend((0..m).map(|i| [i, 0]));
            } else {
                out.extend((-kk - 1..=kk).map(|i| [i, 0]));
            }
            return out;
        }
        let half = m / 2;
        let range: Vec<i64> = if 2 * kk + 2 >= m { (-half..m - half).collect() } else { (-kk - 1..=kk).collect() };
        for &a in &range {
            for &b in &range {
                // periodic distance in units of h from node to center a + ½
                let da = per_dist_units(a as f64 + 0.5, m as f64);
                let db = per_dist_units(b as f64 + 0.5, m as f64);
                if da * da + db * db <= r2 + 1e-9 {
                    out.push([a, b]);
                }
            }
        }
        out
    }

    /// Cells of the cone `Γ(x_node)`, levels ascending.
    pub fn cone_cells(&self, node: usize) -> Vec<usize> {
        let c = self.lat_coords(node);
        let mut out = Vec::new();
        for k in 0..self.nx {
            for off in self.cone_offsets(k) {
                let lat = self.lat_from_coords([c[0] as i64 + off[0], c[1] as i64 + off[1]]);
                out.push(self.cell_index(lat, k));
            }
        }
        out
    }

    /// Number of cone cells at level `k` (constant over nodes).
    pub fn cone_width(&self, k: usize) -> usize {
        self.cone_offsets(k).len()
    }

    /// Dyadic tents at scale `r = 2^{-j}`, centers on the grid of spacing `r/2`.
    pub fn tents_at(&self, jscale: u32) -> Vec<DyadicTent> {
        let r = (-(jscale as f64)).exp2();
        let count = (2usize << jscale).min(self.nx);
        let step = 1.0 / count as f64;
        let mut out = Vec::new();
        if self.n == 2 {
            for i in 0..count {
                out.push(DyadicTent { center: [i as f64 * step, 0.0], scale: r });
            }
        } else {
            for i2 in 0..count {
                for i1 in 0..count {
                    out.push(DyadicTent { center: [i1 as f64 * step, i2 as f64 * step], scale: r });
                }
            }
        }
        out
    }

    /// Lateral cell columns whose centers lie in the open ball `B(z, r)`.
    pub fn ball_columns(&self, z: [f64; 2], r: f64) -> Vec<usize> {
        let mut out = Vec::new();
        for lat in 0..self.n_lateral() {
            let c = self.lat_coords(lat);
            let dx = per_dist((c[0] as f64 + 0.5) * self.h, z[0]);
            let d2 = if self.n == 2 {
                dx * dx
            } else {
                let dy = per_dist((c[1] as f64 + 0.5) * self.h, z[1]);
                dx * dx + dy * dy
            };
            if d2 < r * r {
                out.push(lat);
            }
        }
        out
    }

    /// Number of levels whose center height is below `r`.
    pub fn levels_below(&self, r: f64) -> usize {
        ((r / self.h - 0.5).ceil().max(0.0) as usize).min(self.nx)
    }

    /// Tent member cells: centers with `|x − z| < r` and `t < r`.
    pub fn tent_cells(&self, tent: &DyadicTent) -> Vec<usize> {
        let cols = self.ball_columns(tent.center, tent.scale);
        let mut out = Vec::new();
        for k in 0..self.levels_below(tent.scale) {
            out.extend(cols.iter().map(|&lat| self.cell_index(lat, k)));
        }
        out
    }

    /// Evaluates a scalar function at every cell center.
    pub fn sample<F: Fn(&Point) -> f64 + Sync + Send>(&self, f: F) -> Vec<f64> {
        crate::par::map(self.n_cells(), |c| f(&self.cell_center(c)))
    }
}

fn per_dist_units(d: f64, m: f64) -> f64 {
    let r = d.rem_euclid(m);
    r.min(m - r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let m = HalfSpaceMesh::new(2, 3).unwrap();
        assert_eq!((m.n_lateral(), m.n_levels(), m.n_cells()), (8, 8, 64));
        let m3 = HalfSpaceMesh::new(3, 3).unwrap();
        assert_eq!((m3.n_lateral(), m3.n_cells()), (64, 512));
        assert!(HalfSpaceMesh::new(2, 0).is_err());
        assert!(HalfSpaceMesh::new(2, 11).is_err());
        assert!(HalfSpaceMesh::new(4, 5).is_err());
        assert_eq!(m.h * m.nx as f64, 1.0);
    }

    #[test]
    fn tents_cover_lower_cells() {
        for n in [2, 3] {
            let m = HalfSpaceMesh::new(n, 4).unwrap();
            for js in 0..=m.j {
                let r = (-(js as f64)).exp2();
                let mut hit = vec![false; m.n_cells()];
                for tent in m.tents_at(js) {
                    for c in m.tent_cells(&tent) {
                        hit[c] = true;
                    }
                }
                for c in 0..m.n_cells() {
                    if m.cell_center(c).t < r {
                        assert!(hit[c], "n={n} scale {r} misses cell {c}");
                    } else {
                        assert!(!hit[c]);
                    }
                }
            }
        }
    }

    #[test]
    fn cone_is_monotone_in_height() {
        let m = HalfSpaceMesh::new(2, 5).unwrap();
        let cone = m.cone_cells(3);
        for &c in &cone {
            let lat = m.lateral_of(c);
            for k in m.level_of(c)..m.nx {
                assert!(cone.contains(&m.cell_index(lat, k)));
            }
        }
    }

    #[test]
    fn cone_tent_duality() {
        let m = HalfSpaceMesh::new(2, 4).unwrap();
        for node in 0..m.n_lateral() {
            let cone = m.cone_cells(node);
            let x = m.boundary_node(node)[0];
            for c in 0..m.n_cells() {
                let p = m.cell_center(c);
                let inside = per_dist(p.x[0], x) <= p.t + 1e-12;
                assert_eq!(cone.contains(&c), inside);
            }
        }
    }
}

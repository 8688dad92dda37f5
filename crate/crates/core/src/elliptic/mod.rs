//! Weak-form solvers on the truncated strip with bilinear/trilinear
//! elements: `∬ A∇u·∇φ = ∬ 𝐡·∇φ + ∬ f φ` for every interior hat `φ`,
//! periodic in the lateral axes, Dirichlet at both ends of the normal axis.

pub mod oracle;
pub mod sparse;
pub mod weighted;

use crate::error::{Error, Result};
use crate::field::{MatrixField, Point};
use crate::matrix::Mat;
use crate::mesh::HalfSpaceMesh;
use serde::{Deserialize, Serialize};

pub use oracle::{laplace_fourier_oracle, Geometry, StripOracle, TrigData};
pub use sparse::SolveStats;

pub const SOLVER_TOL: f64 = 1e-10;
pub const SOLVER_MAX_ITER: usize = 10_000;

/// Tensor grid: periodic lateral axes and a normal axis `[z0, z1]` split
/// into `nz` cells. Node `(lat, k)` has index `k * n_lat + lat`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripGrid {
    pub dims: usize,
    pub nlat: [usize; 2],
    pub lat_len: [f64; 2],
    pub nz: usize,
    pub z0: f64,
    pub z1: f64,
}

const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];
const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

impl StripGrid {
    /// Grid whose cells coincide with the mesh cells.
    pub fn from_mesh(mesh: &HalfSpaceMesh) -> Self {
        Self::with_height(mesh, 1.0)
    }

    /// Same lateral resolution and spacing, normal axis `[0, height]`
    /// rounded to a whole number of cells.
    pub fn with_height(mesh: &HalfSpaceMesh, height: f64) -> Self {
        let nz = ((height / mesh.h).round() as usize).max(2);
        StripGrid {
            dims: mesh.n,
            nlat: [mesh.nx, if mesh.n == 3 { mesh.nx } else { 1 }],
            lat_len: [1.0, 1.0],
            nz,
            z0: 0.0,
            z1: nz as f64 * mesh.h,
        }
    }

    pub fn n_lat(&self) -> usize {
        self.nlat[0] * self.nlat[1]
    }

    pub fn n_nodes(&self) -> usize {
        self.n_lat() * (self.nz + 1)
    }

    pub fn n_cells(&self) -> usize {
        self.n_lat() * self.nz
    }

    pub fn hz(&self) -> f64 {
        (self.z1 - self.z0) / self.nz as f64
    }

    pub fn hx(&self, axis: usize) -> f64 {
        self.lat_len[axis] / self.nlat[axis] as f64
    }

    fn lat_index(&self, i0: i64, i1: i64) -> usize {
        let a = i0.rem_euclid(self.nlat[0] as i64) as usize;
        let b = i1.rem_euclid(self.nlat[1] as i64) as usize;
        a + self.nlat[0] * b
    }

    fn lat_coords(&self, lat: usize) -> [usize; 2] {
        [lat % self.nlat[0], lat / self.nlat[0]]
    }

    pub fn node_point(&self, idx: usize) -> Point {
        let lat = idx % self.n_lat();
        let k = idx / self.n_lat();
        let c = self.lat_coords(lat);
        Point { x: [c[0] as f64 * self.hx(0), c[1] as f64 * self.hx(1)], t: self.z0 + k as f64 * self.hz() }
    }

    /// Lower corner of cell `(lat, k)`.
    pub fn cell_origin(&self, cell: usize) -> Point {
        self.node_point(cell)
    }

    pub fn cell_center(&self, cell: usize) -> Point {
        let o = self.cell_origin(cell);
        Point {
            x: [o.x[0] + 0.5 * self.hx(0), if self.dims == 3 { o.x[1] + 0.5 * self.hx(1) } else { 0.0 }],
            t: o.t + 0.5 * self.hz(),
        }
    }

    fn corners(&self) -> usize {
        1 << self.dims
    }

    /// Global node of local corner `c` (bits: axis 0, normal, axis 1).
    fn corner_node(&self, cell: usize, c: usize) -> usize {
        let lat = cell % self.n_lat();
        let k = cell / self.n_lat();
        let lc = self.lat_coords(lat);
        let (b0, bz, b1) = (c & 1, (c >> 1) & 1, (c >> 2) & 1);
        let l = self.lat_index(lc[0] as i64 + b0 as i64, lc[1] as i64 + b1 as i64);
        (k + bz) * self.n_lat() + l
    }

    /// Shape function values and physical gradients at reference point
    /// `xi = (ξ₀, ξ_z, ξ₁)`.
    fn shape(&self, xi: [f64; 3]) -> (Vec<f64>, Vec<[f64; 3]>) {
        let hs = [self.hx(0), self.hz(), self.hx(1)];
        let nc = self.corners();
        let mut val = Vec::with_capacity(nc);
        let mut grad = Vec::with_capacity(nc);
        for c in 0..nc {
            let bits = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
            let f: Vec<f64> = (0..3).map(|a| if bits[a] == 1 { xi[a] } else { 1.0 - xi[a] }).collect();
            let df: Vec<f64> = (0..3).map(|a| if bits[a] == 1 { 1.0 } else { -1.0 }).collect();
            let used = if self.dims == 2 { 2 } else { 3 };
            let v: f64 = f[..used].iter().product();
            let mut g = [0.0; 3];
            for a in 0..used {
                let mut p = df[a] / hs[a];
                for b in 0..used {
                    if b != a {
                        p *= f[b];
                    }
                }
                g[a] = p;
            }
            val.push(v);
            // reorder to (lateral 0, lateral 1, normal) = Point layout
            grad.push(if self.dims == 2 { [g[0], 0.0, g[1]] } else { [g[0], g[2], g[1]] });
        }
        (val, grad)
    }

    fn ref_to_point(&self, cell: usize, xi: [f64; 3]) -> Point {
        let o = self.cell_origin(cell);
        Point {
            x: [o.x[0] + xi[0] * self.hx(0), if self.dims == 3 { o.x[1] + xi[2] * self.hx(1) } else { 0.0 }],
            t: o.t + xi[1] * self.hz(),
        }
    }

    fn cell_volume(&self) -> f64 {
        let v = self.hx(0) * self.hz();
        if self.dims == 3 {
            v * self.hx(1)
        } else {
            v
        }
    }

    /// Tensor Gauss points of a cell in reference coordinates, with weights
    /// summing to one.
    fn ref_points(&self, three: bool) -> Vec<([f64; 3], f64)> {
        let rule: Vec<(f64, f64)> =
            if three { GAUSS3.to_vec() } else { GAUSS2.iter().map(|g| (*g, 0.5)).collect() };
        let mut out = Vec::new();
        let third: Vec<(f64, f64)> = if self.dims == 3 { rule.clone() } else { vec![(0.5, 1.0)] };
        for &(a, wa) in &rule {
            for &(b, wb) in &rule {
                for &(c, wc) in &third {
                    out.push(([a, b, c], wa * wb * wc));
                }
            }
        }
        out
    }
}

/// Vector of the gradient components ordered as the matrix rows.
fn grad_vec(g: &[f64; 3], dims: usize) -> [f64; 3] {
    // Point layout is (x₁, x₂, t); matrices are ordered (x₁, [x₂,] t).
    if dims == 2 {
        [g[0], g[2], 0.0]
    } else {
        *g
    }
}

pub type CoeffFn<'a> = &'a (dyn Fn(&Point) -> Mat + Sync);
pub type FluxFn<'a> = &'a (dyn Fn(&Point) -> [f64; 3] + Sync);
pub type SourceFn<'a> = &'a (dyn Fn(&Point) -> f64 + Sync);

/// A linear problem on a strip grid. Flux vectors are in matrix order
/// `(x₁, [x₂,] t)`.
pub struct Problem<'a> {
    pub grid: StripGrid,
    pub coeff: CoeffFn<'a>,
    /// Dirichlet values on the `k = 0` and `k = nz` node layers.
    pub bottom: Vec<f64>,
    pub top: Vec<f64>,
    pub flux: Option<FluxFn<'a>>,
    pub source: Option<SourceFn<'a>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiscreteSolution {
    pub grid: StripGrid,
    /// Nodal values, boundary layers included.
    pub values: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub method: String,
    #[serde(skip)]
    pub history: Vec<f64>,
}

struct LocalSystem {
    k: Vec<f64>,
    b: Vec<f64>,
}

fn local_system(p: &Problem, cell: usize, pts: &[([f64; 3], f64)], shapes: &[(Vec<f64>, Vec<[f64; 3]>)]) -> LocalSystem {
    let g = &p.grid;
    let nc = g.corners();
    let vol = g.cell_volume();
    let mut k = vec![0.0; nc * nc];
    let mut b = vec![0.0; nc];
    for (q, (xi, w)) in pts.iter().enumerate() {
        let pt = g.ref_to_point(cell, *xi);
        let a = (p.coeff)(&pt);
        let (val, grads) = &shapes[q];
        let gv: Vec<[f64; 3]> = grads.iter().map(|gr| grad_vec(gr, g.dims)).collect();
        let wv = w * vol;
        for i in 0..nc {
            for j in 0..nc {
                // ∇φ_iᵀ A ∇u_j
                let aj = a.mul_vec(&gv[j]);
                let s: f64 = (0..a.n).map(|r| gv[i][r] * aj[r]).sum();
                k[i * nc + j] += wv * s;
            }
        }
        if let Some(h) = p.flux {
            let hv = h(&pt);
            for i in 0..nc {
                let s: f64 = (0..a.n).map(|r| hv[r] * gv[i][r]).sum();
                b[i] += wv * s;
            }
        }
        if let Some(f) = p.source {
            let fv = f(&pt);
            for i in 0..nc {
                b[i] += wv * fv * val[i];
            }
        }
    }
    LocalSystem { k, b }
}

/// Assembles and solves a problem.
pub fn solve_problem(p: &Problem) -> Result<DiscreteSolution> {
    let g = &p.grid;
    let nl = g.n_lat();
    if p.bottom.len() != nl || p.top.len() != nl {
        return Err(Error::Config(format!("boundary data must have {nl} values")));
    }
    if p.bottom.iter().chain(&p.top).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateInput("boundary data must be finite".into()));
    }
    if g.nz < 2 {
        return Err(Error::Config("the normal axis needs at least two cells".into()));
    }
    let pts = g.ref_points(false);
    let shapes: Vec<_> = pts.iter().map(|(xi, _)| g.shape(*xi)).collect();
    let locals = crate::par::map(g.n_cells(), |c| local_system(p, c, &pts, &shapes));
    let n_unknown = nl * (g.nz - 1);
    let unknown = |node: usize| -> Option<usize> {
        let k = node / nl;
        if k == 0 || k == g.nz {
            None
        } else {
            Some(node - nl)
        }
    };
    let dirichlet = |node: usize| -> f64 {
        let k = node / nl;
        if k == 0 {
            p.bottom[node % nl]
        } else {
            p.top[node % nl]
        }
    };
    let nc = g.corners();
    let mut trip = Vec::with_capacity(g.n_cells() * nc * nc);
    let mut rhs = vec![0.0; n_unknown];
    for (cell, loc) in locals.iter().enumerate() {
        let nodes: Vec<usize> = (0..nc).map(|c| g.corner_node(cell, c)).collect();
        for i in 0..nc {
            let Some(row) = unknown(nodes[i]) else { continue };
            rhs[row] += loc.b[i];
            for j in 0..nc {
                let v = loc.k[i * nc + j];
                match unknown(nodes[j]) {
                    Some(col) => trip.push((row, col, v)),
                    None => rhs[row] -= v * dirichlet(nodes[j]),
                }
            }
        }
    }
    let a = sparse::Csr::from_triplets(n_unknown, trip);
    let (x, stats) = sparse::solve(&a, &rhs, SOLVER_TOL, SOLVER_MAX_ITER)?;
    let mut values = vec![0.0; g.n_nodes()];
    for node in 0..g.n_nodes() {
        values[node] = match unknown(node) {
            Some(i) => x[i],
            None => dirichlet(node),
        };
    }
    Ok(DiscreteSolution {
        grid: g.clone(),
        values,
        residual: stats.residual,
        iterations: stats.iterations,
        method: stats.method.to_string(),
        history: stats.history,
    })
}

impl DiscreteSolution {
    /// Nodal values placed on a grid without solving (oracles, pullbacks).
    pub fn from_values(grid: StripGrid, values: Vec<f64>) -> Self {
        DiscreteSolution { grid, values, residual: 0.0, iterations: 0, method: "exact".into(), history: vec![] }
    }

    /// Interpolates a function at the nodes.
    pub fn interpolate(grid: StripGrid, f: impl Fn(&Point) -> f64) -> Self {
        let values = (0..grid.n_nodes()).map(|i| f(&grid.node_point(i))).collect();
        Self::from_values(grid, values)
    }

    pub fn value(&self, lat: usize, k: usize) -> f64 {
        self.values[k * self.grid.n_lat() + lat]
    }

    fn locate(&self, p: &Point) -> (usize, [f64; 3]) {
        let g = &self.grid;
        let loc = |x: f64, h: f64, n: usize, len: f64| -> (i64, f64) {
            let y = x.rem_euclid(len) / h;
            let i = (y.floor() as i64).min(n as i64 - 1);
            (i, y - i as f64)
        };
        let (i0, f0) = loc(p.x[0], g.hx(0), g.nlat[0], g.lat_len[0]);
        let (i1, f1) = if g.dims == 3 { loc(p.x[1], g.hx(1), g.nlat[1], g.lat_len[1]) } else { (0, 0.0) };
        let z = ((p.t - g.z0) / g.hz()).clamp(0.0, g.nz as f64);
        let k = (z.floor() as usize).min(g.nz - 1);
        let lat = g.lat_index(i0, i1);
        (k * g.n_lat() + lat, [f0, z - k as f64, f1])
    }

    /// Value of the finite element function at a point.
    pub fn eval(&self, p: &Point) -> f64 {
        let (cell, xi) = self.locate(p);
        let (val, _) = self.grid.shape(xi);
        (0..self.grid.corners()).map(|c| val[c] * self.values[self.grid.corner_node(cell, c)]).sum()
    }

    /// Gradient `(∂x₁, ∂x₂, ∂t)` at a point.
    pub fn eval_grad(&self, p: &Point) -> [f64; 3] {
        let (cell, xi) = self.locate(p);
        self.grad_in(cell, xi)
    }

    fn grad_in(&self, cell: usize, xi: [f64; 3]) -> [f64; 3] {
        let (_, grads) = self.grid.shape(xi);
        let mut g = [0.0; 3];
        for (c, gr) in grads.iter().enumerate() {
            let v = self.values[self.grid.corner_node(cell, c)];
            for a in 0..3 {
                g[a] += gr[a] * v;
            }
        }
        g
    }

    /// Gradient at the center of every cell, `(∂x₁, ∂x₂, ∂t)`.
    pub fn cell_gradients(&self) -> Vec<[f64; 3]> {
        (0..self.grid.n_cells()).map(|c| self.grad_in(c, [0.5; 3])).collect()
    }

    /// Value at every cell center.
    pub fn cell_values(&self) -> Vec<f64> {
        let (val, _) = self.grid.shape([0.5; 3]);
        (0..self.grid.n_cells())
            .map(|c| (0..self.grid.corners()).map(|k| val[k] * self.values[self.grid.corner_node(c, k)]).sum())
            .collect()
    }

    /// Gradient magnitudes at cell centers.
    pub fn cell_gradient_norms(&self) -> Vec<f64> {
        self.cell_gradients().iter().map(|g| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt()).collect()
    }

    fn integrate(&self, f: impl Fn(&Point, f64, [f64; 3]) -> f64 + Sync) -> f64 {
        self.integrate_with(true, f)
    }

    /// Integral over the grid with the 3-point (`fine`) or the assembly
    /// 2-point tensor rule.
    fn integrate_with(&self, fine: bool, f: impl Fn(&Point, f64, [f64; 3]) -> f64 + Sync) -> f64 {
        let g = &self.grid;
        let pts = g.ref_points(fine);
        let shapes: Vec<_> = pts.iter().map(|(xi, _)| g.shape(*xi)).collect();
        let vol = g.cell_volume();
        let per_cell = crate::par::map(g.n_cells(), |cell| {
            let nodes: Vec<f64> = (0..g.corners()).map(|c| self.values[g.corner_node(cell, c)]).collect();
            let mut acc = 0.0;
            for (q, (xi, w)) in pts.iter().enumerate() {
                let (val, grads) = &shapes[q];
                let u: f64 = val.iter().zip(&nodes).map(|(a, b)| a * b).sum();
                let mut du = [0.0; 3];
                for (gr, v) in grads.iter().zip(&nodes) {
                    for a in 0..3 {
                        du[a] += gr[a] * v;
                    }
                }
                acc += w * vol * f(&g.ref_to_point(cell, *xi), u, du);
            }
            acc
        });
        per_cell.iter().sum()
    }

    /// `‖u_h − u‖_{L²}` over the grid domain.
    pub fn l2_error(&self, exact: impl Fn(&Point) -> f64 + Sync) -> f64 {
        self.integrate(|p, u, _| (u - exact(p)).powi(2)).sqrt()
    }

    /// `‖∇(u_h − u)‖_{L²}`, exact gradient in Point layout `(x₁, x₂, t)`.
    pub fn h1_error(&self, exact_grad: impl Fn(&Point) -> [f64; 3] + Sync) -> f64 {
        self.integrate(|p, _, du| {
            let e = exact_grad(p);
            (0..3).map(|a| (du[a] - e[a]).powi(2)).sum::<f64>()
        })
        .sqrt()
    }

    /// `‖u_h − v_h‖_{L²}` for a second function on the same domain.
    pub fn l2_distance(&self, other: &DiscreteSolution) -> f64 {
        self.l2_error(|p| other.eval(p))
    }

    /// `∬ A∇u_h·∇u_h`.
    pub fn energy(&self, coeff: impl Fn(&Point) -> Mat + Sync) -> f64 {
        let dims = self.grid.dims;
        self.integrate(|p, _, du| {
            let gv = grad_vec(&du, dims);
            let a = coeff(p);
            let ag = a.mul_vec(&gv);
            (0..a.n).map(|r| gv[r] * ag[r]).sum()
        })
    }

    /// `∬ A∇u_h·∇φ` for the hat function of node `node`.
    pub fn weak_residual(&self, coeff: impl Fn(&Point) -> Mat + Sync, node: usize) -> f64 {
        let g = &self.grid;
        let pts = g.ref_points(false);
        let vol = g.cell_volume();
        let mut acc = 0.0;
        for cell in 0..g.n_cells() {
            let Some(c_local) = (0..g.corners()).find(|&c| g.corner_node(cell, c) == node) else { continue };
            for (xi, w) in &pts {
                let (_, grads) = g.shape(*xi);
                let mut du = [0.0; 3];
                for (c, gr) in grads.iter().enumerate() {
                    let v = self.values[g.corner_node(cell, c)];
                    for a in 0..3 {
                        du[a] += gr[a] * v;
                    }
                }
                let a = coeff(&g.ref_to_point(cell, *xi));
                let gu = grad_vec(&du, g.dims);
                let gp = grad_vec(&grads[c_local], g.dims);
                let agu = a.mul_vec(&gu);
                acc += w * vol * (0..a.n).map(|r| gp[r] * agu[r]).sum::<f64>();
            }
        }
        acc
    }

    /// Values on the `k = 0` layer.
    pub fn trace(&self) -> &[f64] {
        &self.values[..self.grid.n_lat()]
    }
}

fn coeff_of(a: &dyn MatrixField) -> impl Fn(&Point) -> Mat + Sync + '_ {
    move |p: &Point| a.eval(p)
}

fn check_field(a: &dyn MatrixField, mesh: &HalfSpaceMesh) -> Result<()> {
    if a.dim() != mesh.n {
        return Err(Error::Config(format!("field dimension {} does not match mesh dimension {}", a.dim(), mesh.n)));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `Lu = 0` with `u = f` at `t = 0`, `u = mean(f)` at the top of a strip of
/// the given height, periodic laterally. `f` is given at boundary nodes.
pub fn solve_dirichlet_height(
    a: &dyn MatrixField,
    f: &[f64],
    mesh: &HalfSpaceMesh,
    height: f64,
) -> Result<DiscreteSolution> {
    check_field(a, mesh)?;
    if f.len() != mesh.n_lateral() {
        return Err(Error::Config(format!("boundary data needs {} values, got {}", mesh.n_lateral(), f.len())));
    }
    let coeff = coeff_of(a);
    let m = mean(f);
    let p = Problem {
        grid: StripGrid::with_height(mesh, height),
        coeff: &coeff,
        bottom: f.to_vec(),
        top: vec![m; f.len()],
        flux: None,
        source: None,
    };
    solve_problem(&p)
}

/// [`solve_dirichlet_height`] on the unit strip.
pub fn solve_dirichlet(a: &dyn MatrixField, f: &[f64], mesh: &HalfSpaceMesh) -> Result<DiscreteSolution> {
    solve_dirichlet_height(a, f, mesh, 1.0)
}

/// Samples boundary data at the boundary nodes of a mesh.
pub fn boundary_samples(mesh: &HalfSpaceMesh, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
    (0..mesh.n_lateral()).map(|l| f(mesh.boundary_node(l))).collect()
}

/// `∬ A∇v·∇φ = ∬ 𝐡·∇φ` (or with `Aᵀ` when `adjoint`), zero trace at both
/// ends. `𝐡` must vanish on boundary-adjacent cells.
pub fn solve_inhomogeneous(
    a: &dyn MatrixField,
    h: FluxFn,
    mesh: &HalfSpaceMesh,
    adjoint: bool,
) -> Result<DiscreteSolution> {
    check_field(a, mesh)?;
    let grid = StripGrid::from_mesh(mesh);
    for cell in 0..grid.n_cells() {
        let k = cell / grid.n_lat();
        if k != 0 && k != grid.nz - 1 {
            continue;
        }
        for (xi, _) in grid.ref_points(true) {
            let v = h(&grid.ref_to_point(cell, xi));
            if v.iter().any(|c| *c != 0.0) {
                return Err(Error::Config("the source field must vanish on boundary-adjacent cells".into()));
            }
        }
    }
    let coeff = move |p: &Point| {
        let m = a.eval(p);
        if adjoint {
            m.transpose()
        } else {
            m
        }
    };
    let nl = grid.n_lat();
    let p = Problem { grid, coeff: &coeff, bottom: vec![0.0; nl], top: vec![0.0; nl], flux: Some(h), source: None };
    solve_problem(&p)
}

// ---------------------------------------------------------------- convergence studies

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub j: u32,
    pub h: f64,
    pub l2: f64,
    pub h1: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slopes of `log error` against `log(1/h)`.
    pub l2_slope: f64,
    pub h1_slope: f64,
}

/// Least-squares slope of `-log err` against `-log h`; NaN when any error
/// is zero.
pub fn rate(hs: &[f64], errs: &[f64]) -> f64 {
    if errs.iter().any(|e| *e <= 0.0) {
        return f64::NAN;
    }
    let xs: Vec<f64> = hs.iter().map(|h| -h.ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| -e.ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Runs `errors(mesh) -> (L², H¹)` over a ladder of resolutions.
pub fn convergence_test(
    n: usize,
    js: &[u32],
    errors: impl Fn(&HalfSpaceMesh) -> Result<(f64, f64)>,
) -> Result<ConvergenceReport> {
    let mut rows = Vec::new();
    for &j in js {
        let mesh = HalfSpaceMesh::new(n, j)?;
        let (l2, h1) = errors(&mesh)?;
        rows.push(ConvergenceRow { j, h: mesh.h, l2, h1 });
    }
    let hs: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let l2: Vec<f64> = rows.iter().map(|r| r.l2).collect();
    let h1: Vec<f64> = rows.iter().map(|r| r.h1).collect();
    Ok(ConvergenceReport { l2_slope: rate(&hs, &l2), h1_slope: rate(&hs, &h1), rows })
}

/// Errors of the homogeneous solve with trigonometric data against the
/// strip oracle (`A` constant diagonal).
pub fn strip_mode_errors(a: &dyn MatrixField, data: &TrigData, mesh: &HalfSpaceMesh) -> Result<(f64, f64)> {
    let p0 = Point::new2(0.0, 0.5);
    let am = a.eval(&p0);
    let oracle = StripOracle::new(data.clone(), 1.0, (am[(0, 0)] / am[(1, 1)]).sqrt());
    let f = boundary_samples(mesh, |x| data.eval(x[0]));
    let sol = solve_dirichlet(a, &f, mesh)?;
    let l2 = sol.l2_error(|p| oracle.eval(p.x[0], p.t));
    let h1 = sol.h1_error(|p| {
        let g = oracle.grad(p.x[0], p.t);
        [g[0], 0.0, g[1]]
    });
    Ok((l2, h1))
}

/// Manufactured solution `u* = sin(2πx) sin(πt) + ½ cos(2πx) sin(2πt)`,
/// zero at both ends of the unit strip, with `𝐡 = A∇u*` so that
/// `−div A∇u = −div 𝐡`.
pub fn manufactured_errors(a: &dyn MatrixField, mesh: &HalfSpaceMesh) -> Result<(f64, f64)> {
    use std::f64::consts::PI;
    check_field(a, mesh)?;
    if mesh.n != 2 {
        return Err(Error::Config("manufactured solutions are two-dimensional".into()));
    }
    let u = |p: &Point| (2.0 * PI * p.x[0]).sin() * (PI * p.t).sin() + 0.5 * (2.0 * PI * p.x[0]).cos() * (2.0 * PI * p.t).sin();
    let du = |p: &Point| {
        let (x, t) = (p.x[0], p.t);
        [
            2.0 * PI * (2.0 * PI * x).cos() * (PI * t).sin() - PI * (2.0 * PI * x).sin() * (2.0 * PI * t).sin(),
            0.0,
            PI * (2.0 * PI * x).sin() * (PI * t).cos() + PI * (2.0 * PI * x).cos() * (2.0 * PI * t).cos(),
        ]
    };
    let flux = |p: &Point| {
        let g = du(p);
        let v = a.eval(p).mul_vec(&[g[0], g[2], 0.0]);
        [v[0], v[1], 0.0]
    };
    let coeff = coeff_of(a);
    let grid = StripGrid::from_mesh(mesh);
    let nl = grid.n_lat();
    let prob = Problem { grid, coeff: &coeff, bottom: vec![0.0; nl], top: vec![0.0; nl], flux: Some(&flux), source: None };
    let sol = solve_problem(&prob)?;
    Ok((sol.l2_error(u), sol.h1_error(du)))
}

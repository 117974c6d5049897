//! Linear triangular finite elements on ring meshes of the unit disk.
//!
//! The reference mesh is built from concentric rings whose node counts are
//! multiples of 12, with every 30-degree sector triangulated identically, so
//! the discrete problem on the reference disk is invariant under rotations by
//! multiples of 30 degrees. The core/shell interface is one of the rings.
//! Perturbed domains reuse the reference triangulation through a mapping of
//! the vertices, which keeps the interface fitted.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{conjugate_gradient, CsrMatrix, SkylineCholesky, TripletBuilder};

pub const SECTORS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Core,
    Shell,
}

/// Ring triangulation of the unit disk with the interface ring at `r_inner`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMesh {
    pub r_inner: f64,
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub phase: Vec<Phase>,
    /// Ring radii, index 0 is the centre.
    pub ring_radius: Vec<f64>,
    /// Node indices of each ring in increasing angle, starting at angle 0.
    pub rings: Vec<Vec<usize>>,
    pub interface_ring: usize,
}

impl ReferenceMesh {
    /// `resolution` is the number of rings between the centre and the boundary.
    pub fn disk(r_inner: f64, resolution: usize) -> Result<Self> {
        if !(r_inner > 0.0 && r_inner < 1.0) {
            return Err(Error::config(format!("core radius must lie in (0,1), got {r_inner}")));
        }
        if resolution < 4 {
            return Err(Error::config("mesh resolution must be at least 4"));
        }
        let nc = ((resolution as f64 * r_inner).round() as usize).clamp(1, resolution - 1);
        let ns = resolution - nc;
        let mut ring_radius = vec![0.0];
        for j in 1..=nc {
            ring_radius.push(if j == nc { r_inner } else { r_inner * j as f64 / nc as f64 });
        }
        for j in 1..=ns {
            ring_radius.push(if j == ns {
                1.0
            } else {
                r_inner + (1.0 - r_inner) * j as f64 / ns as f64
            });
        }
        // Core rings get roughly isotropic node spacing; every ring from the
        // interface outwards carries the boundary count, so the shell is a
        // structured polar band and all boundary nodes share one stencil.
        let h_shell = (1.0 - r_inner) / ns as f64;
        let per_sector_shell = ((2.0 * PI / (SECTORS as f64 * h_shell)).round() as usize).max(1);
        let mut vertices = vec![[0.0, 0.0]];
        let mut rings = vec![vec![0usize]];
        for j in 1..ring_radius.len() {
            let rho = ring_radius[j];
            let per_sector = if j >= nc {
                per_sector_shell
            } else {
                let h = rho - ring_radius[j - 1];
                ((2.0 * PI * rho / (SECTORS as f64 * h)).round() as usize).max(1)
            };
            let m = per_sector * SECTORS;
            let mut ring = Vec::with_capacity(m);
            for i in 0..m {
                let th = 2.0 * PI * i as f64 / m as f64;
                ring.push(vertices.len());
                vertices.push([rho * th.cos(), rho * th.sin()]);
            }
            rings.push(ring);
        }
        let mut triangles = Vec::new();
        let mut phase = Vec::new();
        for j in 1..rings.len() {
            let ph = if j <= nc { Phase::Core } else { Phase::Shell };
            let outer = &rings[j];
            if j == 1 {
                for i in 0..outer.len() {
                    triangles.push([0, outer[i], outer[(i + 1) % outer.len()]]);
                    phase.push(ph);
                }
                continue;
            }
            let inner = &rings[j - 1];
            let a = inner.len() / SECTORS;
            let b = outer.len() / SECTORS;
            for sec in 0..SECTORS {
                let (mut i, mut o) = (0usize, 0usize);
                let in_idx = |k: usize| inner[(sec * a + k) % inner.len()];
                let out_idx = |k: usize| outer[(sec * b + k) % outer.len()];
                while i < a || o < b {
                    let adv_outer = if i == a {
                        true
                    } else if o == b {
                        false
                    } else {
                        // compare angles of the next nodes
                        let ti = (i + 1) as f64 / a as f64;
                        let to = (o + 1) as f64 / b as f64;
                        to <= ti
                    };
                    if adv_outer {
                        triangles.push([in_idx(i), out_idx(o), out_idx(o + 1)]);
                        o += 1;
                    } else {
                        triangles.push([in_idx(i), out_idx(o), in_idx(i + 1)]);
                        i += 1;
                    }
                    phase.push(ph);
                }
            }
        }
        for t in triangles.iter_mut() {
            if signed_area(&vertices, t) < 0.0 {
                t.swap(1, 2);
            }
        }
        Ok(ReferenceMesh {
            r_inner,
            vertices,
            triangles,
            phase,
            ring_radius,
            rings,
            interface_ring: nc,
        })
    }

    pub fn boundary_ring(&self) -> &[usize] {
        self.rings.last().unwrap()
    }

    pub fn interface_nodes(&self) -> &[usize] {
        &self.rings[self.interface_ring]
    }

    /// Polar angle of a reference vertex in `[0, 2 pi)`.
    pub fn angle(&self, v: usize) -> f64 {
        let p = self.vertices[v];
        p[1].atan2(p[0]).rem_euclid(2.0 * PI)
    }

    pub fn radius(&self, v: usize) -> f64 {
        let p = self.vertices[v];
        p[0].hypot(p[1])
    }

    /// Largest ring spacing.
    pub fn h(&self) -> f64 {
        self.ring_radius.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }
}

pub fn signed_area(v: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

/// Mapped mesh of a perturbed two-phase disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub reference: Arc<ReferenceMesh>,
    pub vertices: Vec<[f64; 2]>,
    /// Outer boundary nodes in the order of their reference angles.
    pub boundary: Vec<usize>,
    pub boundary_angles: Vec<f64>,
    pub interface: Vec<usize>,
    pub interface_angles: Vec<f64>,
    /// Outward unit normals at the boundary nodes (average of the two edges).
    pub normals: Vec<[f64; 2]>,
    /// Tangential Jacobian at the boundary nodes: boundary length element per
    /// unit reference angle.
    pub jtau: Vec<f64>,
}

impl Mesh {
    pub fn from_reference(reference: Arc<ReferenceMesh>, map: impl Fn([f64; 2]) -> [f64; 2]) -> Result<Self> {
        let vertices: Vec<[f64; 2]> = reference.vertices.iter().map(|&p| map(p)).collect();
        for (k, t) in reference.triangles.iter().enumerate() {
            if signed_area(&vertices, t) <= 0.0 {
                return Err(Error::PerturbationTooLarge(format!("mapped triangle {k} is inverted")));
            }
        }
        let boundary = reference.boundary_ring().to_vec();
        let boundary_angles: Vec<f64> = boundary.iter().map(|&v| reference.angle(v)).collect();
        let interface = reference.interface_nodes().to_vec();
        let interface_angles = interface.iter().map(|&v| reference.angle(v)).collect();
        let m = boundary.len();
        let mut normals = Vec::with_capacity(m);
        let mut jtau = Vec::with_capacity(m);
        let dtheta = 2.0 * PI / m as f64;
        for i in 0..m {
            let prev = vertices[boundary[(i + m - 1) % m]];
            let next = vertices[boundary[(i + 1) % m]];
            let cur = vertices[boundary[i]];
            let e1 = [cur[0] - prev[0], cur[1] - prev[1]];
            let e2 = [next[0] - cur[0], next[1] - cur[1]];
            let l1 = e1[0].hypot(e1[1]);
            let l2 = e2[0].hypot(e2[1]);
            let n = [e1[1] / l1 + e2[1] / l2, -e1[0] / l1 - e2[0] / l2];
            let ln = n[0].hypot(n[1]);
            normals.push([n[0] / ln, n[1] / ln]);
            jtau.push((l1 + l2) / (2.0 * dtheta));
        }
        Ok(Mesh {
            reference,
            vertices,
            boundary,
            boundary_angles,
            interface,
            interface_angles,
            normals,
            jtau,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.reference.triangles
    }

    pub fn phase(&self, t: usize) -> Phase {
        self.reference.phase[t]
    }

    pub fn area(&self) -> f64 {
        self.triangles().iter().map(|t| signed_area(&self.vertices, t)).sum()
    }

    pub fn core_area(&self) -> f64 {
        self.triangles()
            .iter()
            .enumerate()
            .filter(|(k, _)| self.phase(*k) == Phase::Core)
            .map(|(_, t)| signed_area(&self.vertices, t))
            .sum()
    }

    pub fn boundary_length(&self) -> f64 {
        let m = self.boundary.len();
        (0..m)
            .map(|i| {
                let a = self.vertices[self.boundary[i]];
                let b = self.vertices[self.boundary[(i + 1) % m]];
                (b[0] - a[0]).hypot(b[1] - a[1])
            })
            .sum()
    }

    /// Smallest interior angle over all triangles, in degrees.
    pub fn min_angle_deg(&self) -> f64 {
        let mut worst = 180.0_f64;
        for t in self.triangles() {
            for k in 0..3 {
                let a = self.vertices[t[k]];
                let b = self.vertices[t[(k + 1) % 3]];
                let c = self.vertices[t[(k + 2) % 3]];
                let u = [b[0] - a[0], b[1] - a[1]];
                let v = [c[0] - a[0], c[1] - a[1]];
                let cos = (u[0] * v[0] + u[1] * v[1]) / (u[0].hypot(u[1]) * v[0].hypot(v[1]));
                worst = worst.min(cos.clamp(-1.0, 1.0).acos().to_degrees());
            }
        }
        worst
    }

    /// Returns an error naming the worst triangle when the minimum angle is
    /// below `floor_deg`.
    pub fn check_quality(&self, floor_deg: f64) -> Result<()> {
        let a = self.min_angle_deg();
        if a < floor_deg {
            let (k, _) = self
                .triangles()
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    let c = centroid(&self.vertices, t);
                    (k, c)
                })
                .min_by(|x, y| {
                    tri_min_angle(&self.vertices, &self.triangles()[x.0])
                        .partial_cmp(&tri_min_angle(&self.vertices, &self.triangles()[y.0]))
                        .unwrap()
                })
                .unwrap();
            let c = centroid(&self.vertices, &self.triangles()[k]);
            return Err(Error::Meshing(format!(
                "minimum angle {a:.2} deg below floor {floor_deg} deg near ({:.3}, {:.3})",
                c[0], c[1]
            )));
        }
        Ok(())
    }

    /// Euler characteristic V - E + F of the triangulation.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for t in self.triangles() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        self.n_nodes() as i64 - edges.len() as i64 + self.triangles().len() as i64
    }
}

fn centroid(v: &[[f64; 2]], t: &[usize; 3]) -> [f64; 2] {
    [
        (v[t[0]][0] + v[t[1]][0] + v[t[2]][0]) / 3.0,
        (v[t[0]][1] + v[t[1]][1] + v[t[2]][1]) / 3.0,
    ]
}

fn tri_min_angle(v: &[[f64; 2]], t: &[usize; 3]) -> f64 {
    (0..3)
        .map(|k| {
            let a = v[t[k]];
            let b = v[t[(k + 1) % 3]];
            let c = v[t[(k + 2) % 3]];
            let u = [b[0] - a[0], b[1] - a[1]];
            let w = [c[0] - a[0], c[1] - a[1]];
            ((u[0] * w[0] + u[1] * w[1]) / (u[0].hypot(u[1]) * w[0].hypot(w[1]))).acos()
        })
        .fold(f64::INFINITY, f64::min)
}

/// P1 gradients of the three barycentric functions and the triangle area.
pub fn p1_gradients(v: &[[f64; 2]], t: &[usize; 3]) -> ([[f64; 2]; 3], f64) {
    let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
    let area = signed_area(v, t);
    let inv = 0.5 / area;
    (
        [
            [(b[1] - c[1]) * inv, (c[0] - b[0]) * inv],
            [(c[1] - a[1]) * inv, (a[0] - c[0]) * inv],
            [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv],
        ],
        area,
    )
}

/// Stiffness `int sigma grad phi_i . grad phi_j` and consistent mass.
pub struct Assembled {
    pub stiffness: CsrMatrix,
    pub mass: CsrMatrix,
    pub lumped: Vec<f64>,
}

pub fn assemble(mesh: &Mesh, sigma: impl Fn(Phase) -> f64) -> Assembled {
    let n = mesh.n_nodes();
    let nt = mesh.triangles().len();
    let mut k = TripletBuilder::with_capacity(n, 9 * nt);
    let mut m = TripletBuilder::with_capacity(n, 9 * nt);
    let mut lumped = vec![0.0; n];
    for (e, t) in mesh.triangles().iter().enumerate() {
        let (g, area) = p1_gradients(&mesh.vertices, t);
        let s = sigma(mesh.phase(e));
        for a in 0..3 {
            lumped[t[a]] += area / 3.0;
            for b in 0..3 {
                k.add(t[a], t[b], s * area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]));
                m.add(t[a], t[b], area * if a == b { 1.0 / 6.0 } else { 1.0 / 12.0 });
            }
        }
    }
    Assembled {
        stiffness: k.build(),
        mass: m.build(),
        lumped,
    }
}

/// Factored operator restricted to the free (non-Dirichlet) nodes.
pub struct DirichletSolver {
    pub matrix: CsrMatrix,
    map: Vec<Option<usize>>,
    free: Vec<usize>,
    chol: SkylineCholesky,
}

impl DirichletSolver {
    pub fn new(matrix: CsrMatrix, dirichlet: &[usize]) -> Result<Self> {
        let mut keep = vec![true; matrix.n];
        for &d in dirichlet {
            keep[d] = false;
        }
        let (reduced, map) = matrix.restrict(&keep);
        let free: Vec<usize> = (0..matrix.n).filter(|&i| keep[i]).collect();
        let chol = SkylineCholesky::factor(&reduced)?;
        Ok(DirichletSolver {
            matrix,
            map,
            free,
            chol,
        })
    }

    /// Solves `A u = rhs` on free nodes with `u = g` on constrained nodes,
    /// where `g` holds the full vector of prescribed values (free entries ignored).
    pub fn solve(&self, rhs: &[f64], g: &[f64]) -> Vec<f64> {
        let n = self.matrix.n;
        let mut lifted = vec![0.0; n];
        for i in 0..n {
            if self.map[i].is_none() {
                lifted[i] = g[i];
            }
        }
        let ag = self.matrix.mul(&lifted);
        let b: Vec<f64> = self.free.iter().map(|&i| rhs[i] - ag[i]).collect();
        let x = self.chol.solve(&b);
        let mut u = lifted;
        for (k, &i) in self.free.iter().enumerate() {
            u[i] = x[k];
        }
        u
    }
}

/// Consistent P1 mass matrix of the closed boundary polygon, applied to `x`.
fn boundary_mass_apply(mesh: &Mesh, x: &[f64], out: &mut [f64]) {
    let m = mesh.boundary.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..m {
        let j = (i + 1) % m;
        let a = mesh.vertices[mesh.boundary[i]];
        let b = mesh.vertices[mesh.boundary[j]];
        let l = (b[0] - a[0]).hypot(b[1] - a[1]);
        out[i] += l * (x[i] / 3.0 + x[j] / 6.0);
        out[j] += l * (x[j] / 3.0 + x[i] / 6.0);
    }
}

/// Converts boundary residual loads `F_i = int q phi_i ds` into nodal values of
/// `q` by solving with the boundary mass matrix.
pub fn boundary_density(mesh: &Mesh, loads: &[f64]) -> Result<Vec<f64>> {
    let (q, _) = conjugate_gradient(|x, out| boundary_mass_apply(mesh, x, out), loads, 1e-14, 10 * loads.len() + 50)?;
    Ok(q)
}

/// Uniform bucket grid for point location.
#[derive(Debug, Clone)]
pub struct Locator {
    lo: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    buckets: Vec<Vec<usize>>,
}

impl Locator {
    pub fn new(mesh: &Mesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &mesh.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let nt = mesh.triangles().len();
        let side = ((nt as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let cell = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / side as f64) * (1.0 + 1e-9);
        let nx = ((hi[0] - lo[0]) / cell).ceil() as usize + 1;
        let ny = ((hi[1] - lo[1]) / cell).ceil() as usize + 1;
        let mut buckets = vec![Vec::new(); nx * ny];
        for (k, t) in mesh.triangles().iter().enumerate() {
            let mut blo = [f64::INFINITY; 2];
            let mut bhi = [f64::NEG_INFINITY; 2];
            for &v in t {
                for d in 0..2 {
                    blo[d] = blo[d].min(mesh.vertices[v][d]);
                    bhi[d] = bhi[d].max(mesh.vertices[v][d]);
                }
            }
            let i0 = ((blo[0] - lo[0]) / cell).floor() as usize;
            let i1 = ((bhi[0] - lo[0]) / cell).floor() as usize;
            let j0 = ((blo[1] - lo[1]) / cell).floor() as usize;
            let j1 = ((bhi[1] - lo[1]) / cell).floor() as usize;
            for i in i0..=i1.min(nx - 1) {
                for j in j0..=j1.min(ny - 1) {
                    buckets[j * nx + i].push(k);
                }
            }
        }
        Locator {
            lo,
            cell,
            nx,
            ny,
            buckets,
        }
    }

    /// Triangle containing `x` and the barycentric coordinates.
    pub fn locate(&self, mesh: &Mesh, x: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let fi = (x[0] - self.lo[0]) / self.cell;
        let fj = (x[1] - self.lo[1]) / self.cell;
        if fi < 0.0 || fj < 0.0 {
            return None;
        }
        let (i, j) = (fi as usize, fj as usize);
        if i >= self.nx || j >= self.ny {
            return None;
        }
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &k in &self.buckets[j * self.nx + i] {
            let t = &mesh.triangles()[k];
            let lam = barycentric(&mesh.vertices, t, x);
            let worst = lam.iter().cloned().fold(f64::INFINITY, f64::min);
            if worst >= -1e-12 {
                return Some((k, lam));
            }
            if best.as_ref().is_none_or(|b| worst > b.2) {
                best = Some((k, lam, worst));
            }
        }
        best.filter(|b| b.2 > -1e-9).map(|b| (b.0, b.1))
    }

    /// P1 interpolation of nodal values at `x`.
    pub fn eval(&self, mesh: &Mesh, values: &[f64], x: [f64; 2]) -> Option<f64> {
        self.locate(mesh, x).map(|(k, lam)| {
            let t = &mesh.triangles()[k];
            lam[0] * values[t[0]] + lam[1] * values[t[1]] + lam[2] * values[t[2]]
        })
    }
}

fn barycentric(v: &[[f64; 2]], t: &[usize; 3], x: [f64; 2]) -> [f64; 3] {
    let (a, b, c) = (v[t[0]], v[t[1]], v[t[2]]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let l1 = ((x[0] - a[0]) * (c[1] - a[1]) - (x[1] - a[1]) * (c[0] - a[0])) / det;
    let l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (b[1] - a[1]) * (x[0] - a[0])) / det;
    [1.0 - l1 - l2, l1, l2]
}

/// Fourier coefficients `(a_k, b_k)`, `k = 1..=kmax`, of the periodic
/// piecewise-linear interpolant of `(theta_i, v_i)`, integrated exactly;
/// `a_k = (1/pi) int v cos k theta`. Also returns the mean `(1/2pi) int v`.
pub fn fourier_piecewise_linear(theta: &[f64], v: &[f64], kmax: usize) -> (f64, Vec<(f64, f64)>) {
    let m = theta.len();
    let mut mean = 0.0;
    let mut coef = vec![(0.0, 0.0); kmax];
    for i in 0..m {
        let j = (i + 1) % m;
        let t0 = theta[i];
        let mut t1 = theta[j];
        if t1 <= t0 {
            t1 += 2.0 * PI;
        }
        let (v0, v1) = (v[i], v[j]);
        let h = t1 - t0;
        mean += 0.5 * h * (v0 + v1);
        let slope = (v1 - v0) / h;
        for (k, c) in coef.iter_mut().enumerate() {
            let kf = (k + 1) as f64;
            // int (v0 + slope (t - t0)) e^{i k t} dt over [t0, t1]
            let (s0, c0) = (kf * t0).sin_cos();
            let (s1, c1) = (kf * t1).sin_cos();
            let int_cos = (v1 * s1 - v0 * s0) / kf + slope * (c1 - c0) / (kf * kf);
            let int_sin = -(v1 * c1 - v0 * c0) / kf + slope * (s1 - s0) / (kf * kf);
            c.0 += int_cos / PI;
            c.1 += int_sin / PI;
        }
    }
    (mean / (2.0 * PI), coef)
}

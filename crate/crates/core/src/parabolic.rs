//! Two-phase heat flow and its short-time diagnostics.
//!
//! Three discretizations share one backward Euler driver: radial finite volumes
//! in dimension `N`, a flat interface on the line, and planar P1 elements with
//! lumped capacity. All three give M-matrix steps on the grids built here, so
//! the discrete maximum principle holds for every step size; the driver still
//! checks it and halves the step on failure because perturbed planar meshes
//! may contain obtuse triangles.
//!
//! Time steps grow geometrically away from `t = 0`: the diagnostics are
//! short-time limits, and the initial layer needs `dt << t`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble, boundary_density, p1_gradients, Assembled, DirichletSolver, Locator, Mesh, Phase};
use crate::fv1d::{graded_nodes, interpolate_linear, uniform_nodes, Layered1d, Weight};
use crate::linalg::{CsrMatrix, Tridiagonal, TripletBuilder};
use crate::radial::Conductivity;
use crate::special::gauss_legendre;

/// Slack allowed in the maximum principle check (roundoff only).
pub const MONOTONICITY_TOL: f64 = 1e-12;

/// Target for the free-space Gaussian bound at the edge of a Cauchy box.
pub const BOX_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// `u = 1` on the outer boundary, `u = 0` initially.
    CauchyDirichlet,
    /// Whole space with an exterior medium, initial data the indicator of the exterior.
    Cauchy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HeatGeometry {
    /// Core `B_R` inside the unit ball of `R^dim`.
    Radial { r_inner: f64, dim: usize },
    /// Interface at `x = 0`; the shell phase fills `x < 0`, the medium `x > 0`.
    Flat,
    /// Planar mesh with phase tags (Dirichlet problems only).
    Planar { mesh: Mesh },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridOptions {
    /// Cells per unit length away from the graded layers.
    pub cells: usize,
    /// Smallest spacing, at the outer boundary (and the flat interface).
    pub h_min: f64,
    pub ratio: f64,
}

impl Default for GridOptions {
    fn default() -> Self {
        GridOptions {
            cells: 400,
            h_min: 1e-4,
            ratio: 1.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeStepping {
    /// Step used on the first block `[0, 16 dt_min]`.
    pub dt_min: f64,
    /// Later blocks `[a, 2a]` use `dt = rel_step * a`.
    pub rel_step: f64,
    pub dt_max: f64,
    /// Halving stops below this step.
    pub dt_floor: f64,
}

impl Default for TimeStepping {
    fn default() -> Self {
        TimeStepping {
            dt_min: 1e-9,
            rel_step: 1e-3,
            dt_max: 1e-3,
            dt_floor: 1e-15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatProblem {
    pub kind: ProblemKind,
    pub cond: Conductivity,
    pub geometry: HeatGeometry,
    /// Stored sample times, strictly increasing; the last one is the horizon.
    pub times: Vec<f64>,
    pub grid: GridOptions,
    pub stepping: TimeStepping,
    /// Width of the computational box beyond the interface (Cauchy problems);
    /// chosen from the Gaussian bound when absent.
    pub box_width: Option<f64>,
}

impl HeatProblem {
    pub fn radial_dirichlet(r_inner: f64, dim: usize, cond: Conductivity, times: Vec<f64>) -> Self {
        HeatProblem {
            kind: ProblemKind::CauchyDirichlet,
            cond,
            geometry: HeatGeometry::Radial { r_inner, dim },
            times,
            grid: GridOptions::default(),
            stepping: TimeStepping::default(),
            box_width: None,
        }
    }

    pub fn radial_cauchy(r_inner: f64, dim: usize, cond: Conductivity, times: Vec<f64>) -> Self {
        HeatProblem {
            kind: ProblemKind::Cauchy,
            ..HeatProblem::radial_dirichlet(r_inner, dim, cond, times)
        }
    }

    pub fn flat_cauchy(cond: Conductivity, times: Vec<f64>) -> Self {
        HeatProblem {
            kind: ProblemKind::Cauchy,
            cond,
            geometry: HeatGeometry::Flat,
            times,
            grid: GridOptions::default(),
            stepping: TimeStepping::default(),
            box_width: None,
        }
    }

    pub fn planar_dirichlet(mesh: Mesh, cond: Conductivity, times: Vec<f64>) -> Self {
        HeatProblem {
            kind: ProblemKind::CauchyDirichlet,
            cond,
            geometry: HeatGeometry::Planar { mesh },
            times,
            grid: GridOptions::default(),
            stepping: TimeStepping {
                dt_min: 1e-7,
                rel_step: 0.02,
                dt_max: 1e-2,
                dt_floor: 1e-13,
            },
            box_width: None,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Conductivity seen by the box edge.
    fn box_sigma(&self) -> f64 {
        match self.geometry {
            HeatGeometry::Flat => self.cond.sigma_s.max(self.cond.sigma_m),
            _ => self.cond.sigma_m,
        }
    }

    /// `exp(-W^2 / (4 sigma T))` at the edge of a box of width `W`.
    pub fn gaussian_bound(&self, width: f64) -> f64 {
        (-width * width / (4.0 * self.box_sigma() * self.horizon())).exp()
    }

    /// Box width actually used (Cauchy problems).
    pub fn effective_box_width(&self) -> f64 {
        self.box_width.unwrap_or_else(|| {
            let w = (4.0 * self.box_sigma() * self.horizon() * (1.0 / BOX_TOLERANCE).ln()).sqrt();
            (1.1 * w).max(0.5)
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.cond.validate()?;
        if self.times.is_empty() || self.times[0] <= 0.0 || !self.times.iter().all(|t| t.is_finite()) {
            return Err(Error::config("sample times must be positive and finite"));
        }
        if !self.times.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::config("sample times must be strictly increasing"));
        }
        let s = &self.stepping;
        if !(s.dt_min > 0.0 && s.rel_step > 0.0 && s.dt_max >= s.dt_min && s.dt_floor > 0.0) {
            return Err(Error::config("time stepping parameters must be positive with dt_max >= dt_min"));
        }
        let g = &self.grid;
        if g.cells < 4 || !(g.h_min > 0.0) || !(g.ratio >= 1.0) {
            return Err(Error::config("grid needs cells >= 4, h_min > 0 and ratio >= 1"));
        }
        match (&self.geometry, self.kind) {
            (HeatGeometry::Radial { r_inner, dim }, _) => {
                if !(*r_inner > 0.0 && *r_inner < 1.0) {
                    return Err(Error::config(format!("core radius must lie in (0,1), got {r_inner}")));
                }
                if *dim < 2 {
                    return Err(Error::config(format!("dimension must be >= 2, got {dim}")));
                }
            }
            (HeatGeometry::Flat, ProblemKind::CauchyDirichlet) => {
                return Err(Error::config("the flat interface geometry is a Cauchy problem"));
            }
            (HeatGeometry::Flat, ProblemKind::Cauchy) => {}
            (HeatGeometry::Planar { .. }, ProblemKind::Cauchy) => {
                return Err(Error::config("planar Cauchy problems are not supported"));
            }
            (HeatGeometry::Planar { mesh }, ProblemKind::CauchyDirichlet) => {
                if mesh.boundary.is_empty() {
                    return Err(Error::config("planar mesh has no boundary nodes"));
                }
            }
        }
        if self.kind == ProblemKind::Cauchy {
            let w = self.effective_box_width();
            let bound = self.gaussian_bound(w);
            if !(w > 0.0) || bound >= BOX_TOLERANCE {
                return Err(Error::config(format!(
                    "computational box of width {w} too small: Gaussian bound {bound:.2e} at T = {}",
                    self.horizon()
                )));
            }
        }
        Ok(())
    }
}

/// Which material a node belongs to; interface nodes carry their own tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Core,
    Shell,
    Medium,
    Interface,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum HeatSpace {
    Radial {
        grid: Layered1d,
        r_inner: f64,
        dim: usize,
        /// Node at `r = R`.
        interface: usize,
        /// Node at `r = 1`.
        boundary: usize,
    },
    Flat {
        grid: Layered1d,
        /// Node at `x = 0`.
        interface: usize,
    },
    Planar {
        mesh: Mesh,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatField {
    pub kind: ProblemKind,
    pub cond: Conductivity,
    pub space: HeatSpace,
    pub times: Vec<f64>,
    /// `u(x_i, 0+)`: the initial data with Dirichlet values imposed.
    pub initial: Vec<f64>,
    /// `values[j][i]` is `u(x_i, t_j)`.
    pub values: Vec<Vec<f64>>,
    /// Backward difference quotient of the last step before `t_j`.
    pub rates: Vec<Vec<f64>>,
    pub steps: usize,
    pub halvings: usize,
    /// Extremes over interior nodes and all accepted steps.
    pub min_interior: f64,
    pub max_interior: f64,
}

enum Disc {
    OneD {
        vol: Vec<f64>,
        stiff: Tridiagonal,
    },
    Planar {
        asm: Assembled,
    },
}

enum Factor {
    OneD(Tridiagonal),
    Planar(DirichletSolver),
}

/// Backward Euler stepper for one problem.
pub struct HeatStepper {
    disc: Disc,
    space: HeatSpace,
    initial: Vec<f64>,
    /// Nodes with prescribed values, and the values.
    dirichlet: Vec<(usize, f64)>,
    free: Vec<usize>,
}

/// Radial grid on `[0, 1]` (or `[0, 1 + exterior]`): uniform in the core,
/// graded towards `r = 1` from both sides. Returns the grid and the indices
/// of the nodes at `R` and at `1`.
pub(crate) fn radial_grid(
    r_inner: f64,
    dim: usize,
    c: &Conductivity,
    g: &GridOptions,
    exterior: Option<f64>,
) -> (Layered1d, usize, usize) {
    let nc = ((r_inner * g.cells as f64).ceil() as usize).max(4);
    let mut nodes = uniform_nodes(0.0, r_inner, nc);
    nodes.pop();
    let interface = nodes.len();
    nodes.extend(shell_nodes(r_inner, g));
    let boundary = nodes.len() - 1;
    if let Some(w) = exterior {
        let hmax = (w / g.cells as f64).max(1.0 / g.cells as f64) * 4.0;
        nodes.extend(graded_nodes(1.0, 1.0 + w, g.h_min, g.ratio, hmax).into_iter().skip(1));
    }
    let fv = Layered1d::from_rule(nodes, Weight::Radial(dim), |m| {
        if m < r_inner {
            c.sigma_c
        } else if m < 1.0 {
            c.sigma_s
        } else {
            c.sigma_m
        }
    });
    (fv, interface, boundary)
}

fn shell_nodes(r_inner: f64, g: &GridOptions) -> Vec<f64> {
    let depth = graded_nodes(0.0, 1.0 - r_inner, g.h_min, g.ratio, 1.0 / g.cells as f64);
    let mut s: Vec<f64> = depth.iter().rev().map(|d| 1.0 - d).collect();
    s[0] = r_inner;
    *s.last_mut().unwrap() = 1.0;
    s
}

impl HeatStepper {
    pub fn new(problem: &HeatProblem) -> Result<Self> {
        problem.validate()?;
        let c = &problem.cond;
        let g = &problem.grid;
        match &problem.geometry {
            HeatGeometry::Radial { r_inner, dim } => {
                let r = *r_inner;
                let exterior = (problem.kind == ProblemKind::Cauchy).then(|| problem.effective_box_width());
                let (fv, interface, boundary) = radial_grid(r, *dim, c, g, exterior);
                let n = fv.n_nodes();
                let mut initial = vec![0.0; n];
                let dirichlet = match problem.kind {
                    ProblemKind::CauchyDirichlet => {
                        initial[boundary] = 1.0;
                        vec![(boundary, 1.0)]
                    }
                    ProblemKind::Cauchy => {
                        initial.iter_mut().skip(boundary + 1).for_each(|v| *v = 1.0);
                        let (l, rr) = fv.half_volumes(boundary, 0);
                        initial[boundary] = rr / (l + rr);
                        vec![(n - 1, 1.0)]
                    }
                };
                let space = HeatSpace::Radial {
                    grid: fv.clone(),
                    r_inner: r,
                    dim: *dim,
                    interface,
                    boundary,
                };
                Ok(Self::one_d(fv, space, initial, dirichlet))
            }
            HeatGeometry::Flat => {
                let w = problem.effective_box_width();
                let hmax = (w / g.cells as f64).max(1.0 / g.cells as f64) * 4.0;
                let right = graded_nodes(0.0, w, g.h_min, g.ratio, hmax);
                let mut nodes: Vec<f64> = right.iter().rev().map(|x| -x).collect();
                let interface = nodes.len() - 1;
                nodes[interface] = 0.0;
                nodes.extend(right.iter().skip(1));
                let fv = Layered1d::from_rule(nodes, Weight::Flat, |m| if m < 0.0 { c.sigma_s } else { c.sigma_m });
                let n = fv.n_nodes();
                let mut initial: Vec<f64> = fv.nodes.iter().map(|&x| if x > 0.0 { 1.0 } else { 0.0 }).collect();
                let (l, rr) = fv.half_volumes(interface, 0);
                initial[interface] = rr / (l + rr);
                let space = HeatSpace::Flat {
                    grid: fv.clone(),
                    interface,
                };
                Ok(Self::one_d(fv, space, initial, vec![(0, 0.0), (n - 1, 1.0)]))
            }
            HeatGeometry::Planar { mesh } => {
                let asm = assemble(mesh, |p| match p {
                    Phase::Core => c.sigma_c,
                    Phase::Shell => c.sigma_s,
                });
                let n = mesh.n_nodes();
                let mut initial = vec![0.0; n];
                let mut dirichlet = Vec::with_capacity(mesh.boundary.len());
                for &b in &mesh.boundary {
                    initial[b] = 1.0;
                    dirichlet.push((b, 1.0));
                }
                let free = free_nodes(n, &dirichlet);
                Ok(HeatStepper {
                    disc: Disc::Planar { asm },
                    space: HeatSpace::Planar { mesh: mesh.clone() },
                    initial,
                    dirichlet,
                    free,
                })
            }
        }
    }

    fn one_d(fv: Layered1d, space: HeatSpace, initial: Vec<f64>, dirichlet: Vec<(usize, f64)>) -> Self {
        let vol = fv.volumes();
        let stiff = fv.stiffness();
        let free = free_nodes(fv.n_nodes(), &dirichlet);
        HeatStepper {
            disc: Disc::OneD { vol, stiff },
            space,
            initial,
            dirichlet,
            free,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.initial.len()
    }

    pub fn free_nodes(&self) -> &[usize] {
        &self.free
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Lumped capacities (control volumes, with the radial weight).
    pub fn capacity(&self) -> Vec<f64> {
        match &self.disc {
            Disc::OneD { vol, .. } => vol.clone(),
            Disc::Planar { asm } => asm.lumped.clone(),
        }
    }

    fn factor(&self, dt: f64) -> Result<Factor> {
        match &self.disc {
            Disc::OneD { vol, stiff, .. } => {
                let mut a = stiff.clone();
                for (d, v) in a.diag.iter_mut().zip(vol) {
                    *d += v / dt;
                }
                for &(i, _) in &self.dirichlet {
                    a.diag[i] = 1.0;
                    a.lower[i] = 0.0;
                    a.upper[i] = 0.0;
                }
                Ok(Factor::OneD(a))
            }
            Disc::Planar { asm } => {
                let n = asm.lumped.len();
                let mut t = TripletBuilder::with_capacity(n, n);
                for (i, m) in asm.lumped.iter().enumerate() {
                    t.add(i, i, m / dt);
                }
                let m: CsrMatrix = t.build();
                let a = asm.stiffness.axpby(1.0, &m, 1.0);
                let nodes: Vec<usize> = self.dirichlet.iter().map(|d| d.0).collect();
                Ok(Factor::Planar(DirichletSolver::new(a, &nodes)?))
            }
        }
    }

    fn step(&self, f: &Factor, u: &[f64], dt: f64, homogeneous: bool) -> Result<Vec<f64>> {
        let cap = match &self.disc {
            Disc::OneD { vol, .. } => vol,
            Disc::Planar { asm } => &asm.lumped,
        };
        let mut rhs: Vec<f64> = cap.iter().zip(u).map(|(m, v)| m / dt * v).collect();
        match f {
            Factor::OneD(a) => {
                for &(i, v) in &self.dirichlet {
                    rhs[i] = if homogeneous { 0.0 } else { v };
                }
                a.solve(&rhs)
            }
            Factor::Planar(s) => {
                let mut g = vec![0.0; u.len()];
                if !homogeneous {
                    for &(i, v) in &self.dirichlet {
                        g[i] = v;
                    }
                }
                Ok(s.solve(&rhs, &g))
            }
        }
    }

    pub fn space(&self) -> &HeatSpace {
        &self.space
    }

    /// Solves `div(sigma grad w) - lambda w = -lambda u(., 0+)` with the
    /// problem's Dirichlet values: one backward Euler step of size `1/lambda`.
    pub fn resolvent(&self, lambda: f64) -> Result<Vec<f64>> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::config(format!("lambda must be positive, got {lambda}")));
        }
        let dt = 1.0 / lambda;
        let f = self.factor(dt)?;
        self.step(&f, &self.initial, dt, false)
    }

    /// `steps` homogeneous steps of size `dt` applied to each free unit vector;
    /// column `k` is the image of the `k`-th free node, restricted to free nodes.
    pub fn solution_operator(&self, dt: f64, steps: usize) -> Result<Vec<Vec<f64>>> {
        let f = self.factor(dt)?;
        let n = self.n_nodes();
        self.free
            .iter()
            .map(|&k| {
                let mut u = vec![0.0; n];
                u[k] = 1.0;
                for _ in 0..steps {
                    u = self.step(&f, &u, dt, true)?;
                }
                Ok(self.free.iter().map(|&i| u[i]).collect())
            })
            .collect()
    }

    fn extremes(&self, u: &[f64]) -> (f64, f64) {
        self.free
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| (lo.min(u[i]), hi.max(u[i])))
    }
}

fn free_nodes(n: usize, dirichlet: &[(usize, f64)]) -> Vec<usize> {
    let mut fixed = vec![false; n];
    for &(i, _) in dirichlet {
        fixed[i] = true;
    }
    (0..n).filter(|&i| !fixed[i]).collect()
}

/// Blocks `(start, end, steps, stored index)` covering `[0, T]`.
fn time_blocks(times: &[f64], s: &TimeStepping) -> Vec<(f64, f64, usize, Option<usize>)> {
    let t_end = *times.last().unwrap();
    let mut marks: Vec<(f64, Option<usize>)> = times.iter().enumerate().map(|(j, &t)| (t, Some(j))).collect();
    let mut b = 16.0 * s.dt_min;
    while b < t_end {
        if times.iter().all(|&t| (t - b).abs() > 0.25 * b) {
            marks.push((b, None));
        }
        b *= 2.0;
    }
    marks.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out = Vec::with_capacity(marks.len());
    let mut a = 0.0;
    for (m, j) in marks {
        let dt = if a == 0.0 {
            s.dt_min
        } else {
            (s.rel_step * a).clamp(s.dt_min, s.dt_max)
        };
        let n = ((m - a) / dt).ceil().max(1.0) as usize;
        out.push((a, m, n, j));
        a = m;
    }
    out
}

/// Runs the problem to its horizon, storing the field at the sample times.
pub fn simulate(problem: &HeatProblem) -> Result<HeatField> {
    let stepper = HeatStepper::new(problem)?;
    let mut u = stepper.initial.clone();
    let nt = problem.times.len();
    let mut values = vec![Vec::new(); nt];
    let mut rates = vec![Vec::new(); nt];
    let (mut steps, mut halvings) = (0usize, 0usize);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (a, b, n0, store) in time_blocks(&problem.times, &problem.stepping) {
        let mut n = n0;
        loop {
            let dt = (b - a) / n as f64;
            if dt < problem.stepping.dt_floor {
                return Err(Error::numerical(
                    format!("monotonicity lost on [{a:.3e}, {b:.3e}] down to the step floor"),
                    dt,
                ));
            }
            let f = stepper.factor(dt)?;
            let mut v = u.clone();
            let mut prev = u.clone();
            let (mut blo, mut bhi) = (lo, hi);
            let mut ok = true;
            for _ in 0..n {
                let w = stepper.step(&f, &v, dt, false)?;
                let (l, h) = stepper.extremes(&w);
                if l < -MONOTONICITY_TOL || h > 1.0 + MONOTONICITY_TOL || !l.is_finite() || !h.is_finite() {
                    ok = false;
                    break;
                }
                blo = blo.min(l);
                bhi = bhi.max(h);
                prev = std::mem::replace(&mut v, w);
            }
            if ok {
                steps += n;
                lo = blo;
                hi = bhi;
                if let Some(j) = store {
                    rates[j] = v.iter().zip(&prev).map(|(x, y)| (x - y) / dt).collect();
                    values[j] = v.clone();
                }
                u = v;
                break;
            }
            n *= 2;
            halvings += 1;
        }
    }
    Ok(HeatField {
        kind: problem.kind,
        cond: problem.cond,
        times: problem.times.clone(),
        initial: stepper.initial.clone(),
        space: stepper.space,
        values,
        rates,
        steps,
        halvings,
        min_interior: lo,
        max_interior: hi,
    })
}

impl HeatField {
    pub fn dim(&self) -> usize {
        match &self.space {
            HeatSpace::Radial { dim, .. } => *dim,
            HeatSpace::Flat { .. } => 1,
            HeatSpace::Planar { .. } => 2,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.values.first().map_or(0, |v| v.len())
    }

    /// Material tag of every node.
    pub fn regions(&self) -> Vec<Region> {
        match &self.space {
            HeatSpace::Radial {
                grid,
                r_inner,
                interface,
                boundary,
                ..
            } => (0..grid.n_nodes())
                .map(|i| {
                    let r = grid.nodes[i];
                    if i == *interface || (self.kind == ProblemKind::Cauchy && i == *boundary) {
                        Region::Interface
                    } else if r < *r_inner {
                        Region::Core
                    } else if r < 1.0 {
                        Region::Shell
                    } else {
                        Region::Medium
                    }
                })
                .collect(),
            HeatSpace::Flat { grid, interface } => (0..grid.n_nodes())
                .map(|i| {
                    if i == *interface {
                        Region::Interface
                    } else if grid.nodes[i] < 0.0 {
                        Region::Shell
                    } else {
                        Region::Medium
                    }
                })
                .collect(),
            HeatSpace::Planar { mesh } => {
                let n = mesh.n_nodes();
                let mut core = vec![false; n];
                let mut shell = vec![false; n];
                for (e, t) in mesh.triangles().iter().enumerate() {
                    for &v in t {
                        match mesh.phase(e) {
                            Phase::Core => core[v] = true,
                            Phase::Shell => shell[v] = true,
                        }
                    }
                }
                (0..n)
                    .map(|i| match (core[i], shell[i]) {
                        (true, true) => Region::Interface,
                        (true, false) => Region::Core,
                        _ => Region::Shell,
                    })
                    .collect()
            }
        }
    }

    /// `int u(., t_j)` over the computational domain.
    pub fn mass(&self, j: usize) -> f64 {
        let u = &self.values[j];
        match &self.space {
            HeatSpace::Radial { grid, dim, .. } => {
                let s: f64 = grid.volumes().iter().zip(u).map(|(v, x)| v * x).sum();
                s * sphere_area(*dim)
            }
            HeatSpace::Flat { grid, .. } => grid.volumes().iter().zip(u).map(|(v, x)| v * x).sum(),
            HeatSpace::Planar { mesh } => {
                let mut m = vec![0.0; mesh.n_nodes()];
                for t in mesh.triangles() {
                    let a = crate::fem::signed_area(&mesh.vertices, t);
                    for &v in t {
                        m[v] += a / 3.0;
                    }
                }
                m.iter().zip(u).map(|(a, b)| a * b).sum()
            }
        }
    }

    /// Point evaluation at time index `j` (radial fields use `|x|`, flat fields `x[0]`).
    pub fn value_at(&self, j: usize, x: [f64; 2]) -> Result<f64> {
        let u = &self.values[j];
        match &self.space {
            HeatSpace::Radial { grid, .. } => Ok(interpolate_linear(&grid.nodes, u, x[0].hypot(x[1]))),
            HeatSpace::Flat { grid, .. } => Ok(interpolate_linear(&grid.nodes, u, x[0])),
            HeatSpace::Planar { mesh } => Locator::new(mesh)
                .eval(mesh, u, x)
                .ok_or_else(|| Error::Inadmissible(format!("point {x:?} lies outside the mesh"))),
        }
    }
}

/// Surface measure of the unit sphere in `R^n`.
pub fn sphere_area(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => 2.0 * PI.powf(n as f64 / 2.0) / gamma_half_integer(n),
    }
}

/// `Gamma(n/2)` for integer `n >= 1`.
fn gamma_half_integer(n: usize) -> f64 {
    let mut g = if n % 2 == 0 { 1.0 } else { PI.sqrt() };
    let mut k = if n % 2 == 0 { 2 } else { 1 };
    while k < n {
        g *= k as f64 / 2.0;
        k += 2;
    }
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Surface {
    /// The outer boundary of `Omega` (the interface with the medium for Cauchy problems).
    Boundary,
    /// Circle or sphere of the given radius about the origin.
    Circle { radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxTrace {
    pub surface: Surface,
    pub points: Vec<[f64; 2]>,
    pub times: Vec<f64>,
    /// `values[j][p]` is `sigma_s d_nu u` at point `p`, time `t_j`.
    pub values: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Max minus min over the points, per time.
    pub spread: Vec<f64>,
}

impl FluxTrace {
    /// Spread divided by the mean flux magnitude, per time.
    pub fn scaled_spread(&self) -> Vec<f64> {
        self.spread
            .iter()
            .zip(&self.mean)
            .map(|(s, m)| if m.abs() > 0.0 { s / m.abs() } else { *s })
            .collect()
    }

    pub fn max_scaled_spread(&self) -> f64 {
        self.scaled_spread().into_iter().fold(0.0, f64::max)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,d,spread")?;
        for j in 0..self.times.len() {
            writeln!(out, "{:.10e},{:.12e},{:.6e}", self.times[j], self.mean[j], self.spread[j])?;
        }
        Ok(())
    }
}

/// Derivative of `u` at `x` from the shell side, using half-cell balances
/// at nodes and midpoint slopes in between.
pub(crate) fn shell_derivative(fv: &Layered1d, u: &[f64], rate: &[f64], x: f64, shell_right_of: usize) -> f64 {
    let n = fv.n_nodes();
    let nodes = &fv.nodes;
    let tol = 1e-12 * x.abs().max(1.0);
    if let Some(i) = nodes.iter().position(|&r| (r - x).abs() <= tol) {
        let take_right = i == shell_right_of || i == 0;
        if take_right && i + 1 < n {
            let q = 0.75 * rate[i] + 0.25 * rate[i + 1];
            return fv.one_sided_derivatives(u, i, q).1.unwrap();
        }
        let q = 0.75 * rate[i] + 0.25 * rate[i - 1];
        return fv.one_sided_derivatives(u, i, q).0.unwrap();
    }
    let c = nodes.partition_point(|&r| r <= x).clamp(1, n - 1) - 1;
    let slope = |k: usize| (u[k + 1] - u[k]) / (nodes[k + 1] - nodes[k]);
    let m = fv.midpoint(c);
    let other = if x < m {
        (c > 0 && c != shell_right_of).then(|| c - 1)
    } else {
        (c + 2 < n && c + 1 != shell_right_of).then_some(c + 1)
    };
    match other {
        Some(o) => {
            let mo = fv.midpoint(o);
            let s = (x - m) / (mo - m);
            slope(c) * (1.0 - s) + slope(o) * s
        }
        None => slope(c),
    }
}

pub(crate) fn circle_points(radius: f64, count: usize) -> Vec<[f64; 2]> {
    (0..count)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / count as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

/// Number of sample points used on radial surfaces.
pub(crate) const RADIAL_FLUX_POINTS: usize = 16;

/// `sigma_s d_nu u` on `surface` at every stored time.
pub fn flux_trace(field: &HeatField, surface: Surface) -> Result<FluxTrace> {
    let ss = field.cond.sigma_s;
    let (points, values): (Vec<[f64; 2]>, Vec<Vec<f64>>) = match (&field.space, surface) {
        (HeatSpace::Radial { grid, r_inner, interface, .. }, s) => {
            let rho = match s {
                Surface::Boundary => 1.0,
                Surface::Circle { radius } => radius,
            };
            if rho < *r_inner || rho > 1.0 {
                return Err(Error::Inadmissible(format!(
                    "circle of radius {rho} is not in the closed shell [{r_inner}, 1]"
                )));
            }
            let vals = (0..field.times.len())
                .into_par_iter()
                .map(|j| {
                    let d = ss * shell_derivative(grid, &field.values[j], &field.rates[j], rho, *interface);
                    vec![d; RADIAL_FLUX_POINTS]
                })
                .collect();
            (circle_points(rho, RADIAL_FLUX_POINTS), vals)
        }
        (HeatSpace::Flat { grid, .. }, Surface::Boundary) => {
            // the shell is on the left of the interface node
            let vals = (0..field.times.len())
                .map(|j| vec![ss * shell_derivative(grid, &field.values[j], &field.rates[j], 0.0, usize::MAX)])
                .collect();
            (vec![[0.0, 0.0]], vals)
        }
        (HeatSpace::Flat { .. }, Surface::Circle { .. }) => {
            return Err(Error::Inadmissible("flat fields only carry the interface plane".into()));
        }
        (HeatSpace::Planar { mesh }, Surface::Boundary) => {
            let asm = assemble(mesh, |p| match p {
                Phase::Core => field.cond.sigma_c,
                Phase::Shell => field.cond.sigma_s,
            });
            let vals = (0..field.times.len())
                .into_par_iter()
                .map(|j| {
                    let ku = asm.stiffness.mul(&field.values[j]);
                    let loads: Vec<f64> = mesh
                        .boundary
                        .iter()
                        .map(|&b| ku[b] + asm.lumped[b] * field.rates[j][b])
                        .collect();
                    boundary_density(mesh, &loads)
                })
                .collect::<Result<Vec<_>>>()?;
            (mesh.boundary.iter().map(|&b| mesh.vertices[b]).collect(), vals)
        }
        (HeatSpace::Planar { mesh }, Surface::Circle { radius }) => {
            let core_max = mesh
                .interface
                .iter()
                .map(|&v| mesh.vertices[v][0].hypot(mesh.vertices[v][1]))
                .fold(0.0, f64::max);
            if radius <= core_max {
                return Err(Error::Inadmissible(format!(
                    "circle of radius {radius} intersects the core (max radius {core_max:.4})"
                )));
            }
            let pts = circle_points(radius, mesh.boundary.len());
            let loc = Locator::new(mesh);
            let located: Vec<usize> = pts
                .iter()
                .map(|&x| {
                    loc.locate(mesh, x)
                        .map(|(k, _)| k)
                        .ok_or_else(|| Error::Inadmissible(format!("point {x:?} lies outside the mesh")))
                })
                .collect::<Result<_>>()?;
            let vals = (0..field.times.len())
                .into_par_iter()
                .map(|j| {
                    pts.iter()
                        .zip(&located)
                        .map(|(x, &k)| {
                            let t = &mesh.triangles()[k];
                            let (g, _) = p1_gradients(&mesh.vertices, t);
                            let u = &field.values[j];
                            let grad = [0, 1].map(|d| (0..3).map(|a| g[a][d] * u[t[a]]).sum::<f64>());
                            ss * (grad[0] * x[0] + grad[1] * x[1]) / radius
                        })
                        .collect()
                })
                .collect();
            (pts, vals)
        }
    };
    let mean = values.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
    let spread = values
        .iter()
        .map(|v| {
            let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            hi - lo
        })
        .collect();
    Ok(FluxTrace {
        surface,
        points,
        times: field.times.clone(),
        values,
        mean,
        spread,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceMoment {
    pub point: [f64; 2],
    pub normal: [f64; 2],
    pub radius: f64,
    pub times: Vec<f64>,
    /// `int_{B_r(p)} u(y, t_j) (y - p) . nu dy`.
    pub values: Vec<f64>,
}

/// Quadrature size of the polar rule (radial midpoints, angles).
pub const BALLQ_RADIAL: usize = 48;
pub const BALLQ_ANGULAR: usize = 96;

fn segment_distance(x: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let s = if l2 > 0.0 {
        (((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (x[0] - a[0] - s * d[0]).hypot(x[1] - a[1] - s * d[1])
}

fn polygon_distance(v: &[[f64; 2]], ring: &[usize], x: [f64; 2]) -> f64 {
    let m = ring.len();
    (0..m)
        .map(|i| segment_distance(x, v[ring[i]], v[ring[(i + 1) % m]]))
        .fold(f64::INFINITY, f64::min)
}

fn polygon_contains(v: &[[f64; 2]], ring: &[usize], x: [f64; 2]) -> bool {
    let m = ring.len();
    let mut inside = false;
    for i in 0..m {
        let a = v[ring[i]];
        let b = v[ring[(i + 1) % m]];
        if (a[1] > x[1]) != (b[1] > x[1]) {
            let xc = a[0] + (x[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if x[0] < xc {
                inside = !inside;
            }
        }
    }
    inside
}

/// `(dist(p, boundary), dist(p, core))` for 2D fields; the core distance is
/// negative inside the core.
fn admissibility_distances(field: &HeatField, p: [f64; 2]) -> Result<(f64, f64)> {
    match &field.space {
        HeatSpace::Radial { r_inner, dim, .. } => {
            if *dim != 2 {
                return Err(Error::Inadmissible("ball diagnostics on radial fields need N = 2".into()));
            }
            let r = p[0].hypot(p[1]);
            Ok((1.0 - r, r - r_inner))
        }
        HeatSpace::Flat { .. } => Err(Error::Inadmissible("ball diagnostics need a planar or radial field".into())),
        HeatSpace::Planar { mesh } => {
            let v = &mesh.vertices;
            let db = if polygon_contains(v, &mesh.boundary, p) {
                polygon_distance(v, &mesh.boundary, p)
            } else {
                -polygon_distance(v, &mesh.boundary, p)
            };
            let dc = polygon_distance(v, &mesh.interface, p);
            let dc = if polygon_contains(v, &mesh.interface, p) { -dc } else { dc };
            Ok((db, dc))
        }
    }
}

/// Evaluates `f(y) * u(y, t_j)` summed with the polar rule about `center`.
fn polar_ball_sum(
    field: &HeatField,
    center: [f64; 2],
    r: f64,
    weight: impl Fn([f64; 2]) -> f64 + Sync,
) -> Result<Vec<f64>> {
    let dr = r / BALLQ_RADIAL as f64;
    let dphi = 2.0 * PI / BALLQ_ANGULAR as f64;
    let mut pts = Vec::with_capacity(BALLQ_RADIAL * BALLQ_ANGULAR);
    for i in 0..BALLQ_RADIAL {
        let rho = (i as f64 + 0.5) * dr;
        for k in 0..BALLQ_ANGULAR {
            let phi = k as f64 * dphi;
            let y = [center[0] + rho * phi.cos(), center[1] + rho * phi.sin()];
            pts.push((y, rho * dr * dphi * weight(y)));
        }
    }
    match &field.space {
        HeatSpace::Radial { grid, .. } => Ok(field
            .values
            .par_iter()
            .map(|u| {
                pts.iter()
                    .map(|(y, w)| w * interpolate_linear(&grid.nodes, u, y[0].hypot(y[1])))
                    .sum()
            })
            .collect()),
        HeatSpace::Planar { mesh } => {
            let loc = Locator::new(mesh);
            let located: Vec<(usize, [f64; 3], f64)> = pts
                .iter()
                .map(|(y, w)| {
                    loc.locate(mesh, *y)
                        .map(|(k, lam)| (k, lam, *w))
                        .ok_or_else(|| Error::Inadmissible(format!("quadrature point {y:?} lies outside the mesh")))
                })
                .collect::<Result<_>>()?;
            Ok(field
                .values
                .par_iter()
                .map(|u| {
                    located
                        .iter()
                        .map(|(k, lam, w)| {
                            let t = &mesh.triangles()[*k];
                            w * (lam[0] * u[t[0]] + lam[1] * u[t[1]] + lam[2] * u[t[2]])
                        })
                        .sum()
                })
                .collect())
        }
        HeatSpace::Flat { .. } => Err(Error::Inadmissible("ball diagnostics need a planar or radial field".into())),
    }
}

pub fn balance_moment(field: &HeatField, p: [f64; 2], nu: [f64; 2], r: f64) -> Result<BalanceMoment> {
    let (db, dc) = admissibility_distances(field, p)?;
    if !(r > 0.0 && r < db && r < dc) {
        return Err(Error::Inadmissible(format!(
            "ball of radius {r} at {p:?} is not admissible (boundary distance {db:.4}, core distance {dc:.4})"
        )));
    }
    let n = nu[0].hypot(nu[1]);
    if !(n > 0.0) {
        return Err(Error::config("normal must be nonzero"));
    }
    let nu = [nu[0] / n, nu[1] / n];
    let values = polar_ball_sum(field, p, r, |y| (y[0] - p[0]) * nu[0] + (y[1] - p[1]) * nu[1])?;
    Ok(BalanceMoment {
        point: p,
        normal: nu,
        radius: r,
        times: field.times.clone(),
        values,
    })
}

/// Spread of moments across points at each time.
pub fn moment_spread(moments: &[BalanceMoment]) -> Vec<f64> {
    let nt = moments.first().map_or(0, |m| m.times.len());
    (0..nt)
        .map(|j| {
            let (lo, hi) = moments
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), m| (a.min(m.values[j]), b.max(m.values[j])));
            hi - lo
        })
        .collect()
}

pub fn write_balance_csv<W: Write>(moments: &[BalanceMoment], mut out: W) -> std::io::Result<()> {
    writeln!(out, "t,moment,point")?;
    for (id, m) in moments.iter().enumerate() {
        for (t, v) in m.times.iter().zip(&m.values) {
            writeln!(out, "{t:.10e},{v:.12e},{id}")?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatContent {
    pub center: [f64; 2],
    pub radius: f64,
    pub dim: usize,
    pub times: Vec<f64>,
    /// `int_{B_r} u(., t_j)`.
    pub values: Vec<f64>,
    /// `t_j^{-(N+1)/4}` times the content.
    pub rescaled: Vec<f64>,
}

impl HeatContent {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,content,rescaled")?;
        for j in 0..self.times.len() {
            writeln!(out, "{:.10e},{:.12e},{:.12e}", self.times[j], self.values[j], self.rescaled[j])?;
        }
        Ok(())
    }
}

/// Measure of `{|y| = s} ∩ B_r(c)` in dimension `n`, with `d = |c|`.
fn sphere_cap_measure(n: usize, s: f64, d: f64, r: f64) -> f64 {
    let full = sphere_area(n) * s.powi(n as i32 - 1);
    if s + d <= r {
        return full;
    }
    if d == 0.0 || s <= 0.0 {
        return if s < r { full } else { 0.0 };
    }
    let c = ((s * s + d * d - r * r) / (2.0 * s * d)).clamp(-1.0, 1.0);
    match n {
        2 => 2.0 * s * c.acos(),
        3 => 2.0 * PI * s * s * (1.0 - c),
        _ => full * regularized_cap(n, c.acos()),
    }
}

/// Fraction of the unit sphere in `R^n` within angle `alpha` of a pole.
fn regularized_cap(n: usize, alpha: f64) -> f64 {
    let (x, w) = gauss_legendre(32);
    let m = n as i32 - 2;
    let int = |a: f64| -> f64 {
        x.iter()
            .zip(&w)
            .map(|(xi, wi)| {
                let th = 0.5 * a * (xi + 1.0);
                0.5 * a * wi * th.sin().powi(m)
            })
            .sum()
    };
    int(alpha) / int(PI)
}

/// Integral of a radial profile over `B_r(c)`. Cells of the grid are
/// integrated with Gauss rules; on the lens interval `[|d - r|, d + r]` the
/// substitution `s = m + h sin(phi)` absorbs the square-root edges of the
/// sphere-cap measure.
fn radial_ball_integral(nodes: &[f64], u: &[f64], n: usize, c: [f64; 2], r: f64) -> f64 {
    let d = c[0].hypot(c[1]);
    let lens_lo = (d - r).abs();
    let hi = d + r;
    let lo = if d >= r { d - r } else { 0.0 };
    let mut breaks = vec![lo, hi, lens_lo];
    breaks.extend(nodes.iter().copied().filter(|&s| s > lo && s < hi));
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let (x, w) = gauss_legendre(8);
    let f = |s: f64| interpolate_linear(nodes, u, s) * sphere_cap_measure(n, s, d, r);
    let (m, h) = (0.5 * (lens_lo + hi), 0.5 * (hi - lens_lo));
    let phi = |s: f64| ((s - m) / h).clamp(-1.0, 1.0).asin();
    breaks
        .windows(2)
        .map(|seg| {
            let (s0, s1) = (seg[0], seg[1]);
            if s1 <= lens_lo || h <= 0.0 {
                let half = 0.5 * (s1 - s0);
                x.iter()
                    .zip(&w)
                    .map(|(xi, wi)| half * wi * f(s0 + half * (xi + 1.0)))
                    .sum::<f64>()
            } else {
                let (p0, p1) = (phi(s0), phi(s1));
                let half = 0.5 * (p1 - p0);
                x.iter()
                    .zip(&w)
                    .map(|(xi, wi)| {
                        let p = p0 + half * (xi + 1.0);
                        half * wi * f(m + h * p.sin()) * h * p.cos()
                    })
                    .sum::<f64>()
            }
        })
        .sum()
}

/// Ball integrals of `u` at every stored time, and the rescaled series.
pub fn heat_content(field: &HeatField, center: [f64; 2], r: f64) -> Result<HeatContent> {
    if !(r > 0.0) {
        return Err(Error::config("ball radius must be positive"));
    }
    let dim = field.dim();
    let values = match &field.space {
        HeatSpace::Radial { grid, .. } => {
            let d = center[0].hypot(center[1]);
            if d + r > 1.0 + 1e-12 {
                return Err(Error::Inadmissible(format!("ball B_{r}({center:?}) leaves the unit ball")));
            }
            field
                .values
                .par_iter()
                .map(|u| radial_ball_integral(&grid.nodes, u, dim, center, r))
                .collect()
        }
        HeatSpace::Planar { .. } => polar_ball_sum(field, center, r, |_| 1.0)?,
        HeatSpace::Flat { .. } => {
            return Err(Error::Inadmissible("ball diagnostics need a planar or radial field".into()));
        }
    };
    let e = (dim as f64 + 1.0) / 4.0;
    let rescaled = field
        .times
        .iter()
        .zip(&values)
        .map(|(t, v): (&f64, &f64)| v * t.powf(-e))
        .collect();
    Ok(HeatContent {
        center,
        radius: r,
        dim,
        times: field.times.clone(),
        values,
        rescaled,
    })
}

/// Limit at `t -> 0` of `L + a sqrt(t) + b t` through the three samples with
/// the smallest times; `flagged` when the four smallest samples are not monotone.
pub fn richardson_sqrt(times: &[f64], values: &[f64]) -> Result<(f64, bool)> {
    if times.len() < 3 || times.len() != values.len() {
        return Err(Error::config("Richardson extrapolation needs at least three samples"));
    }
    let mut idx: Vec<usize> = (0..times.len()).collect();
    idx.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let (i0, i1, i2) = (idx[0], idx[1], idx[2]);
    let row = |i: usize| [1.0, times[i].sqrt(), times[i]];
    let a = [row(i0), row(i1), row(i2)];
    let b = [values[i0], values[i1], values[i2]];
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(a);
    let mut a0 = a;
    for k in 0..3 {
        a0[k][0] = b[k];
    }
    let limit = det3(a0) / det;
    let tail: Vec<f64> = idx.iter().take(4).map(|&i| values[i]).collect();
    let diffs: Vec<f64> = tail.windows(2).map(|w| w[1] - w[0]).filter(|d| d.abs() > 1e-12).collect();
    let monotone = diffs.iter().all(|&d| d > 0.0) || diffs.iter().all(|&d| d < 0.0);
    Ok((limit, !monotone || !limit.is_finite()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterfaceLimit {
    pub point: [f64; 2],
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub limit: f64,
    pub flagged: bool,
}

/// Extrapolated short-time value of `u` at points of the interface of a Cauchy field.
pub fn interface_limit(field: &HeatField, points: &[[f64; 2]]) -> Result<Vec<InterfaceLimit>> {
    if field.kind != ProblemKind::Cauchy {
        return Err(Error::config("interface limits need a Cauchy problem"));
    }
    let series: Vec<f64> = match &field.space {
        HeatSpace::Radial { boundary, .. } => field.values.iter().map(|u| u[*boundary]).collect(),
        HeatSpace::Flat { interface, .. } => field.values.iter().map(|u| u[*interface]).collect(),
        HeatSpace::Planar { .. } => unreachable!("planar Cauchy problems are rejected at validation"),
    };
    points
        .iter()
        .map(|&p| {
            let on = match &field.space {
                HeatSpace::Radial { .. } => (p[0].hypot(p[1]) - 1.0).abs() < 1e-9,
                _ => p[0].abs() < 1e-12,
            };
            if !on {
                return Err(Error::Inadmissible(format!("{p:?} is not on the interface")));
            }
            let (limit, flagged) = richardson_sqrt(&field.times, &series)?;
            Ok(InterfaceLimit {
                point: p,
                times: field.times.clone(),
                values: series.clone(),
                limit,
                flagged,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `log B`.
    pub log_b: f64,
    /// Fitted `b` in `u ~ B exp(-b/t)`; the slope of `log u` against `1/t` is `-b`.
    pub b: f64,
    pub samples: usize,
    pub rms_residual: f64,
}

/// Least-squares fit of `log u(x, t) = log B - b/t` over the stored times
/// where `u` is representable.
pub fn decay_fit(field: &HeatField, x: [f64; 2]) -> Result<DecayFit> {
    let mut pts = Vec::new();
    for (j, t) in field.times.iter().enumerate() {
        let v = field.value_at(j, x)?;
        if v > 1e-280 {
            pts.push((1.0 / t, v.ln()));
        }
    }
    if pts.len() < 3 {
        return Err(Error::numerical("fewer than three positive samples for the decay fit", pts.len() as f64));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (pts.iter().map(|p| (p.1 - icpt - slope * p.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(DecayFit {
        log_b: icpt,
        b: -slope,
        samples: pts.len(),
        rms_residual: rms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_hit_sample_times() {
        let times = vec![1e-4, 1e-3, 0.01];
        let b = time_blocks(&times, &TimeStepping::default());
        assert_eq!(b.first().unwrap().0, 0.0);
        for w in b.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
        let stored: Vec<f64> = b.iter().filter(|x| x.3.is_some()).map(|x| x.1).collect();
        assert_eq!(stored, times);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
        assert!((sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn cap_measure_full_and_empty() {
        assert!((sphere_cap_measure(2, 0.1, 0.0, 0.5) - 0.2 * PI).abs() < 1e-15);
        assert_eq!(sphere_cap_measure(3, 0.9, 0.0, 0.5), 0.0);
        // half circle when the ball centre sits on the circle with r = s sqrt(2)
        let m = sphere_cap_measure(2, 1.0, 1.0, 2f64.sqrt());
        assert!((m - PI).abs() < 1e-12);
    }

    #[test]
    fn ball_integral_of_constant_is_area() {
        let nodes = uniform_nodes(0.0, 1.0, 50);
        let u = vec![1.0; nodes.len()];
        for (c, r) in [([0.5, 0.0], 0.3), ([0.1, 0.2], 0.6), ([0.0, 0.0], 1.0)] {
            let v = radial_ball_integral(&nodes, &u, 2, c, r);
            assert!((v - PI * r * r).abs() < 1e-10, "{v}");
            let v3 = radial_ball_integral(&nodes, &u, 3, c, r);
            assert!((v3 - 4.0 / 3.0 * PI * r * r * r).abs() < 1e-10, "{v3}");
        }
    }

    #[test]
    fn richardson_recovers_model() {
        let t: Vec<f64> = (0..5).map(|k| 1e-3 * 0.25f64.powi(k)).collect();
        let v: Vec<f64> = t.iter().map(|t| 0.3 + 2.0 * t.sqrt() - 5.0 * t).collect();
        let (l, flag) = richardson_sqrt(&t, &v).unwrap();
        assert!((l - 0.3).abs() < 1e-12);
        assert!(!flag);
    }
}

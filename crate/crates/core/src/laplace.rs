//! Laplace transforms of heat fields.
//!
//! `w(x, lambda) = lambda int_0^inf e^{-lambda t} u(x, t) dt` solves
//! `div(sigma grad w) = lambda (w - u(., 0+))` with the boundary values of `u`.
//! Transforms of simulated fields are compared against direct solves of that
//! equation, and the large-`lambda` behaviour of the boundary flux is fitted
//! against the curvature of the boundary. The WKB barriers `w_-` and `w_+`
//! bracket `w` in a tube inside the boundary.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble, boundary_density, signed_area, DirichletSolver, Locator, Mesh, Phase};
use crate::fv1d::{interpolate_linear, Layered1d};
use crate::geometry::{distance_at, Curve};
use crate::linalg::{SkylineCholesky, TripletBuilder};
use crate::parabolic::{
    circle_points, GridOptions, HeatField, HeatGeometry, HeatProblem, HeatSpace, HeatStepper, ProblemKind,
    BOX_TOLERANCE, RADIAL_FLUX_POINTS,
};
use crate::radial::Conductivity;
use crate::shape::{build_mesh, DomainMap, Perturbation};
use crate::special::gauss_legendre;

/// Default bound on the neglected tail `e^{-lambda T}`.
pub const DEFAULT_TAIL_TOL: f64 = 1e-8;

/// Default bound on the error of the head interval `[0, t_0]` in `tilde_a`.
pub const DEFAULT_HEAD_TOL: f64 = 1e-6;

/// Scaled flux spread below which a trace counts as constant.
pub const CONSTANT_FLOW_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Transformed,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplaceField {
    pub lambda: f64,
    pub kind: ProblemKind,
    pub cond: Conductivity,
    pub space: HeatSpace,
    /// `u(., 0+)`, the source of the transformed equation.
    pub source: Vec<f64>,
    pub values: Vec<f64>,
    pub flux_points: Vec<[f64; 2]>,
    /// `sigma_s (d_nu w)_-` on the boundary of the shell, outward normal.
    pub flux: Vec<f64>,
    /// `sigma_m (d_nu w)_+` for Cauchy fields.
    pub flux_outer: Option<Vec<f64>>,
    /// Common flux value when the trace is constant.
    pub d0: Option<f64>,
    pub provenance: Provenance,
    /// Bound on the neglected tail of the time integral (0 for direct solves).
    pub tail_bound: f64,
    /// Weight `1 - e^{-lambda t_0}` of the interpolated head interval.
    pub head_weight: f64,
}

fn fixed_nodes(kind: ProblemKind, space: &HeatSpace) -> Vec<usize> {
    match space {
        HeatSpace::Radial { grid, boundary, .. } => match kind {
            ProblemKind::CauchyDirichlet => vec![*boundary],
            ProblemKind::Cauchy => vec![grid.n_nodes() - 1],
        },
        HeatSpace::Flat { grid, .. } => vec![0, grid.n_nodes() - 1],
        HeatSpace::Planar { mesh } => mesh.boundary.clone(),
    }
}

impl LaplaceField {
    /// Range of `w` over nodes without prescribed values.
    pub fn interior_range(&self) -> (f64, f64) {
        let fixed = fixed_nodes(self.kind, &self.space);
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| !fixed.contains(i))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &v)| (lo.min(v), hi.max(v)))
    }

    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        match &self.space {
            HeatSpace::Radial { grid, .. } => {
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                Ok(interpolate_linear(&grid.nodes, &self.values, r))
            }
            HeatSpace::Flat { grid, .. } => Ok(interpolate_linear(&grid.nodes, &self.values, x[0])),
            HeatSpace::Planar { mesh } => Locator::new(mesh)
                .eval(mesh, &self.values, [x[0], x[1]])
                .ok_or_else(|| Error::Inadmissible(format!("point {x:?} lies outside the mesh"))),
        }
    }

    /// Value on the shell boundary (radial and flat fields).
    pub fn boundary_value(&self) -> Result<f64> {
        match &self.space {
            HeatSpace::Radial { boundary, .. } => Ok(self.values[*boundary]),
            HeatSpace::Flat { interface, .. } => Ok(self.values[*interface]),
            HeatSpace::Planar { .. } => Err(Error::Inadmissible("planar fields carry a boundary trace".into())),
        }
    }

    /// `(max - min) / |mean|` of the inner flux trace.
    pub fn flux_spread(&self) -> f64 {
        scaled_spread(&self.flux)
    }
}

fn scaled_spread(v: &[f64]) -> f64 {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    (hi - lo) / mean.abs().max(f64::MIN_POSITIVE)
}

/// One-sided derivatives at node `i` of `div(sigma grad w) = lambda (w - s)`.
/// The source on each side is taken from that side, so the jump of `s` at an
/// interface node does not leak across.
fn side_derivatives(fv: &Layered1d, w: &[f64], s: &[f64], lambda: f64, i: usize) -> (Option<f64>, Option<f64>) {
    let n = fv.n_nodes();
    let left = (i > 0)
        .then(|| {
            let q = lambda * (0.75 * w[i] + 0.25 * w[i - 1] - s[i - 1]);
            fv.one_sided_derivatives(w, i, q).0
        })
        .flatten();
    let right = (i + 1 < n)
        .then(|| {
            let q = lambda * (0.75 * w[i] + 0.25 * w[i + 1] - s[i + 1]);
            fv.one_sided_derivatives(w, i, q).1
        })
        .flatten();
    (left, right)
}

type FluxData = (Vec<[f64; 2]>, Vec<f64>, Option<Vec<f64>>);

fn boundary_flux(
    kind: ProblemKind,
    cond: &Conductivity,
    space: &HeatSpace,
    w: &[f64],
    s: &[f64],
    lambda: f64,
) -> Result<FluxData> {
    let missing = || Error::numerical("one-sided derivative unavailable at the boundary node", f64::NAN);
    match space {
        HeatSpace::Radial { grid, boundary, .. } | HeatSpace::Flat { grid, interface: boundary } => {
            let (l, r) = side_derivatives(grid, w, s, lambda, *boundary);
            let inner = cond.sigma_s * l.ok_or_else(missing)?;
            let outer = match kind {
                ProblemKind::Cauchy => Some(cond.sigma_m * r.ok_or_else(missing)?),
                ProblemKind::CauchyDirichlet => None,
            };
            let (points, count) = match space {
                HeatSpace::Radial { .. } => (circle_points(1.0, RADIAL_FLUX_POINTS), RADIAL_FLUX_POINTS),
                _ => (vec![[0.0, 0.0]], 1),
            };
            Ok((points, vec![inner; count], outer.map(|o| vec![o; count])))
        }
        HeatSpace::Planar { mesh } => {
            if kind == ProblemKind::Cauchy {
                return Err(Error::config("planar fields are Cauchy-Dirichlet only"));
            }
            let asm = assemble(mesh, |p| match p {
                Phase::Core => cond.sigma_c,
                Phase::Shell => cond.sigma_s,
            });
            let kw = asm.stiffness.mul(w);
            let loads: Vec<f64> = mesh
                .boundary
                .iter()
                .map(|&b| kw[b] + lambda * asm.lumped[b] * (w[b] - s[b]))
                .collect();
            let q = boundary_density(mesh, &loads)?;
            Ok((mesh.boundary.iter().map(|&b| mesh.vertices[b]).collect(), q, None))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn build_field(
    lambda: f64,
    kind: ProblemKind,
    cond: Conductivity,
    space: HeatSpace,
    source: Vec<f64>,
    values: Vec<f64>,
    provenance: Provenance,
    tail_bound: f64,
    head_weight: f64,
) -> Result<LaplaceField> {
    let (flux_points, flux, flux_outer) = boundary_flux(kind, &cond, &space, &values, &source, lambda)?;
    let d0 = (scaled_spread(&flux) <= CONSTANT_FLOW_TOL).then(|| flux.iter().sum::<f64>() / flux.len() as f64);
    Ok(LaplaceField {
        lambda,
        kind,
        cond,
        space,
        source,
        values,
        flux_points,
        flux,
        flux_outer,
        d0,
        provenance,
        tail_bound,
        head_weight,
    })
}

/// `int_a^b lambda e^{-lambda t} p(t) dt` for the linear `p` with `p(a) = ua`,
/// `p(b) = ub`, returned as the pair of weights on `(ua, ub)`.
fn linear_weights(a: f64, b: f64, lambda: f64) -> (f64, f64) {
    let ea = (-lambda * a).exp();
    let x = lambda * (b - a);
    let one_minus = -(-x).exp_m1();
    // (1 - e^{-x})/x - e^{-x}, expanded for small x
    let slope = if x < 1e-3 {
        x / 2.0 - x * x / 3.0 + x * x * x / 8.0
    } else {
        one_minus / x - (-x).exp()
    };
    (ea * (one_minus - slope), ea * slope)
}

/// Transform of nodal samples: linear interpolation in `t` on `[0, t_0]`
/// (from `head`) and between samples, `u(T)` held beyond the horizon.
/// Returns the values and the tail weight `e^{-lambda T}`.
pub fn transform_samples(times: &[f64], head: &[f64], samples: &[Vec<f64>], lambda: f64) -> Result<(Vec<f64>, f64)> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!("lambda must be positive, got {lambda}")));
    }
    if times.is_empty() || times.len() != samples.len() || times[0] <= 0.0 || !times.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::config("need increasing positive times, one sample vector each"));
    }
    let n = head.len();
    if samples.iter().any(|s| s.len() != n) {
        return Err(Error::config("sample vectors differ in length"));
    }
    let mut w = vec![0.0; n];
    let mut prev_t = 0.0;
    let mut prev = head;
    for (t, u) in times.iter().zip(samples) {
        let (wa, wb) = linear_weights(prev_t, *t, lambda);
        for i in 0..n {
            w[i] += wa * prev[i] + wb * u[i];
        }
        prev_t = *t;
        prev = u;
    }
    let tail = (-lambda * prev_t).exp();
    for i in 0..n {
        w[i] += tail * prev[i];
    }
    Ok((w, tail))
}

/// Transform of a simulated field with the default tail tolerance.
pub fn transform_field(field: &HeatField, lambda: f64) -> Result<LaplaceField> {
    transform_field_with(field, lambda, DEFAULT_TAIL_TOL)
}

pub fn transform_field_with(field: &HeatField, lambda: f64, tail_tol: f64) -> Result<LaplaceField> {
    let horizon = *field.times.last().ok_or_else(|| Error::config("field has no samples"))?;
    let tail = (-lambda * horizon).exp();
    if tail > tail_tol {
        return Err(Error::Transform(format!(
            "extend horizon: e^(-lambda T) = {tail:.3e} > {tail_tol:.1e} at lambda = {lambda}, T = {horizon}"
        )));
    }
    let (values, tail) = transform_samples(&field.times, &field.initial, &field.values, lambda)?;
    let head_weight = -(-lambda * field.times[0]).exp_m1();
    build_field(
        lambda,
        field.kind,
        field.cond,
        field.space.clone(),
        field.initial.clone(),
        values,
        Provenance::Transformed,
        tail,
        head_weight,
    )
}

/// Box width for a Cauchy problem at `lambda`: the exterior decay
/// `e^{-sqrt(lambda/sigma) W}` is below the box tolerance.
pub fn elliptic_box_width(sigma: f64, lambda: f64) -> f64 {
    (1.1 * (sigma / lambda).sqrt() * (1.0 / BOX_TOLERANCE).ln()).max(0.5)
}

/// Grid suited to resolving `e^{-sqrt(lambda/sigma) delta}` up to `lambda_max`.
pub fn elliptic_grid(lambda_max: f64, sigma_min: f64) -> GridOptions {
    let layer = (sigma_min / lambda_max).sqrt();
    let h = (layer / 100.0).min(1e-3);
    GridOptions {
        cells: (1.0 / h).ceil() as usize,
        h_min: h / 10.0,
        ratio: 1.02,
    }
}

/// Radial problem description for direct solves.
pub fn radial_elliptic_problem(
    r_inner: f64,
    dim: usize,
    cond: Conductivity,
    kind: ProblemKind,
    lambda_min: f64,
    grid: GridOptions,
) -> HeatProblem {
    let w = elliptic_box_width(cond.sigma_m, lambda_min);
    // any horizon whose Gaussian bound passes the box check
    let t = w * w / (4.0 * cond.sigma_m * 2.0 * (1.0 / BOX_TOLERANCE).ln());
    let mut p = match kind {
        ProblemKind::CauchyDirichlet => HeatProblem::radial_dirichlet(r_inner, dim, cond, vec![t]),
        ProblemKind::Cauchy => HeatProblem::radial_cauchy(r_inner, dim, cond, vec![t]),
    };
    p.grid = grid;
    if kind == ProblemKind::Cauchy {
        p.box_width = Some(w);
    }
    p
}

/// Direct solve of `div(sigma grad w) - lambda w = -lambda u(., 0+)` on the
/// discretization `simulate` would use for `problem`. The sample times of the
/// problem only matter through the Cauchy box width.
pub fn solve_elliptic_lambda(problem: &HeatProblem, lambda: f64) -> Result<LaplaceField> {
    if let (ProblemKind::Cauchy, HeatGeometry::Radial { .. }) = (problem.kind, &problem.geometry) {
        let w = problem.effective_box_width();
        let decay = (-(lambda / problem.cond.sigma_m).sqrt() * w).exp();
        if decay > BOX_TOLERANCE {
            return Err(Error::config(format!(
                "box width {w} too small for lambda = {lambda} (exterior decay {decay:.2e})"
            )));
        }
    }
    let stepper = HeatStepper::new(problem)?;
    let values = stepper.resolvent(lambda)?;
    build_field(
        lambda,
        problem.kind,
        problem.cond,
        stepper.space().clone(),
        stepper.initial().to_vec(),
        values,
        Provenance::Direct,
        0.0,
        0.0,
    )
}

/// Direct solves over a sweep, in parallel.
pub fn solve_sweep(problem: &HeatProblem, lambdas: &[f64]) -> Result<Vec<LaplaceField>> {
    lambdas.par_iter().map(|&l| solve_elliptic_lambda(problem, l)).collect()
}

// ---------------------------------------------------------------------------
// Barriers

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TubeBoundary {
    /// Unit sphere in `R^dim`, tube inside it.
    Sphere { dim: usize },
    Curve(Curve),
}

/// Finite difference steps in tube coordinates.
const FD_S: f64 = 1e-3;
const FD_D: f64 = 1e-4;

/// Gauss points along a normal ray.
const RAY_GAUSS: usize = 16;

impl TubeBoundary {
    pub fn dim(&self) -> usize {
        match self {
            TubeBoundary::Sphere { dim } => *dim,
            TubeBoundary::Curve(_) => 2,
        }
    }

    /// Principal curvature (all equal on a sphere).
    fn kappa(&self, s: f64) -> f64 {
        match self {
            TubeBoundary::Sphere { .. } => 1.0,
            TubeBoundary::Curve(c) => c.curvature(s),
        }
    }

    fn multiplicity(&self) -> f64 {
        (self.dim() - 1) as f64
    }

    pub fn kappa_sum(&self, s: f64) -> f64 {
        self.multiplicity() * self.kappa(s)
    }

    pub fn kappa_max(&self) -> f64 {
        match self {
            TubeBoundary::Sphere { .. } => 1.0,
            TubeBoundary::Curve(c) => c.max_curvature(512),
        }
    }

    /// `Delta delta = -sum kappa_j / (1 - kappa_j delta)`.
    pub fn lap_delta(&self, s: f64, d: f64) -> f64 {
        let k = self.kappa(s);
        -self.multiplicity() * k / (1.0 - k * d)
    }

    pub fn a0(&self, s: f64, d: f64) -> f64 {
        (1.0 - self.kappa(s) * d).powf(-0.5 * self.multiplicity())
    }

    /// `exp(-1/2 int_tau^d Delta delta)` along the ray through `s`.
    fn ray_weight(&self, s: f64, tau: f64, d: f64) -> f64 {
        let k = self.kappa(s);
        ((1.0 - k * tau) / (1.0 - k * d)).powf(0.5 * self.multiplicity())
    }

    /// Line element `|dx/ds|` at depth `d`.
    fn metric(&self, c: &Curve, s: f64, d: f64) -> f64 {
        c.speed(s) * (1.0 - c.curvature(s) * d)
    }

    /// Laplacian in tube coordinates by second-order differences.
    pub fn laplacian(&self, f: &dyn Fn(f64, f64) -> f64, s: f64, d: f64) -> f64 {
        let (h, k) = (FD_S, FD_D);
        let f0 = f(s, d);
        let fd = (f(s, d + k) - f(s, d - k)) / (2.0 * k);
        let fdd = (f(s, d + k) - 2.0 * f0 + f(s, d - k)) / (k * k);
        match self {
            TubeBoundary::Sphere { dim } => fdd - (*dim as f64 - 1.0) / (1.0 - d) * fd,
            TubeBoundary::Curve(c) => {
                let m = self.metric(c, s, d);
                let ms_p = self.metric(c, s + 0.5 * h, d);
                let ms_m = self.metric(c, s - 0.5 * h, d);
                let md_p = self.metric(c, s, d + 0.5 * k);
                let md_m = self.metric(c, s, d - 0.5 * k);
                let ss = ((f(s + h, d) - f0) / ms_p - (f0 - f(s - h, d)) / ms_m) / (h * h);
                let dd = (md_p * (f(s, d + k) - f0) - md_m * (f0 - f(s, d - k))) / (k * k);
                (ss + dd) / m
            }
        }
    }

    pub fn lap_a0(&self, s: f64, d: f64) -> f64 {
        match self {
            TubeBoundary::Sphere { dim } => {
                let m = 0.5 * (*dim as f64 - 1.0);
                m * (m + 2.0 - *dim as f64) * (1.0 - d).powf(-m - 2.0)
            }
            TubeBoundary::Curve(_) => self.laplacian(&|s, d| self.a0(s, d), s, d),
        }
    }

    /// `(A_-, A_+)` by Gauss quadrature along the normal ray.
    pub fn a_pm(&self, s: f64, d: f64) -> (f64, f64) {
        if d == 0.0 {
            return (0.0, 0.0);
        }
        let (x, wq) = gauss_legendre(RAY_GAUSS);
        let (mut i0, mut i1) = (0.0, 0.0);
        for (xi, wi) in x.iter().zip(&wq) {
            let tau = 0.5 * d * (xi + 1.0);
            let wt = 0.5 * d * wi * self.ray_weight(s, tau, d);
            i0 += wt * 0.5 * self.lap_a0(s, tau);
            i1 += wt;
        }
        (i0 - i1, i0 + i1)
    }

    /// Tube coordinates of a point: angle-like parameter and inward depth.
    pub fn coords(&self, x: &[f64], delta0: f64) -> Result<(f64, f64)> {
        let (s, d) = match self {
            TubeBoundary::Sphere { dim } => {
                if x.len() != *dim && x.len() != 2 {
                    return Err(Error::config(format!("point {x:?} has the wrong dimension")));
                }
                let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
                (x[1].atan2(x[0]).rem_euclid(2.0 * PI), 1.0 - r)
            }
            TubeBoundary::Curve(c) => {
                if x.len() != 2 {
                    return Err(Error::config(format!("point {x:?} is not planar")));
                }
                let p = [x[0], x[1]];
                let (s, dist) = c.project(p)?;
                let d = if c.contains(p) { dist } else { -dist };
                (s, d)
            }
        };
        if !(d >= -1e-12 && d <= delta0 * (1.0 + 1e-12)) {
            return Err(Error::Inadmissible(format!(
                "point {x:?} lies outside the tube (depth {d:.4e}, half-width {delta0})"
            )));
        }
        Ok((s, d.clamp(0.0, delta0)))
    }

    pub fn point(&self, s: f64, d: f64) -> [f64; 2] {
        match self {
            TubeBoundary::Sphere { .. } => [(1.0 - d) * s.cos(), (1.0 - d) * s.sin()],
            TubeBoundary::Curve(c) => c.tube_point(s, d),
        }
    }
}

/// Harmonic function on the tube, 0 on the boundary and 2 on the inner edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corrector {
    /// Closed form on a spherical shell.
    Radial { dim: usize, delta0: f64 },
    /// Finite volumes on the `(s, delta)` grid; `values[i * n_s + j]` at
    /// `delta_i = i delta0 / n_d`, `s_j = 2 pi j / n_s`.
    Grid { n_s: usize, n_d: usize, delta0: f64, values: Vec<f64> },
}

impl Corrector {
    fn radial_profile(dim: usize, delta0: f64, d: f64) -> f64 {
        let r = 1.0 - d;
        let ri = 1.0 - delta0;
        if dim == 2 {
            2.0 * r.ln() / ri.ln()
        } else {
            let p = 2.0 - dim as f64;
            2.0 * (r.powf(p) - 1.0) / (ri.powf(p) - 1.0)
        }
    }

    fn solve_grid(c: &Curve, tube: &TubeBoundary, delta0: f64, n_s: usize, n_d: usize) -> Result<Self> {
        let ds = 2.0 * PI / n_s as f64;
        let dd = delta0 / n_d as f64;
        let rows = n_d - 1;
        let idx = |i: usize, j: usize| (i - 1) * n_s + j;
        let mut t = TripletBuilder::with_capacity(rows * n_s, 5 * rows * n_s);
        let mut rhs = vec![0.0; rows * n_s];
        for i in 1..n_d {
            let d = i as f64 * dd;
            for j in 0..n_s {
                let s = j as f64 * ds;
                let me = idx(i, j);
                let cs_p = dd / (tube.metric(c, s + 0.5 * ds, d) * ds);
                let cs_m = dd / (tube.metric(c, s - 0.5 * ds, d) * ds);
                let cd_p = tube.metric(c, s, d + 0.5 * dd) * ds / dd;
                let cd_m = tube.metric(c, s, d - 0.5 * dd) * ds / dd;
                t.add(me, me, cs_p + cs_m + cd_p + cd_m);
                t.add(me, idx(i, (j + 1) % n_s), -cs_p);
                t.add(me, idx(i, (j + n_s - 1) % n_s), -cs_m);
                if i + 1 < n_d {
                    t.add(me, idx(i + 1, j), -cd_p);
                } else {
                    rhs[me] += 2.0 * cd_p;
                }
                if i > 1 {
                    t.add(me, idx(i - 1, j), -cd_m);
                }
            }
        }
        let chol = SkylineCholesky::factor(&t.build())?;
        let x = chol.solve(&rhs);
        let mut values = vec![0.0; (n_d + 1) * n_s];
        for j in 0..n_s {
            values[n_d * n_s + j] = 2.0;
        }
        values[n_s..n_d * n_s].copy_from_slice(&x);
        Ok(Corrector::Grid {
            n_s,
            n_d,
            delta0,
            values,
        })
    }

    pub fn value(&self, s: f64, d: f64) -> f64 {
        match self {
            Corrector::Radial { dim, delta0 } => Self::radial_profile(*dim, *delta0, d),
            Corrector::Grid {
                n_s,
                n_d,
                delta0,
                values,
            } => {
                let ps = s.rem_euclid(2.0 * PI) / (2.0 * PI) * *n_s as f64;
                let pd = (d / delta0 * *n_d as f64).clamp(0.0, *n_d as f64);
                let j0 = (ps.floor() as usize).min(n_s - 1);
                let i0 = (pd.floor() as usize).min(n_d - 1);
                let (fs, fd) = (ps - j0 as f64, pd - i0 as f64);
                let j1 = (j0 + 1) % n_s;
                let v = |i: usize, j: usize| values[i * n_s + j];
                (1.0 - fd) * ((1.0 - fs) * v(i0, j0) + fs * v(i0, j1))
                    + fd * ((1.0 - fs) * v(i0 + 1, j0) + fs * v(i0 + 1, j1))
            }
        }
    }

    /// Outward normal derivative on the boundary.
    pub fn normal_derivative(&self, s: f64) -> f64 {
        match self {
            Corrector::Radial { dim, delta0 } => {
                let ri = 1.0 - delta0;
                if *dim == 2 {
                    2.0 / ri.ln()
                } else {
                    let p = 2.0 - *dim as f64;
                    2.0 * p / (ri.powf(p) - 1.0)
                }
            }
            Corrector::Grid { n_d, delta0, .. } => {
                let dd = delta0 / *n_d as f64;
                -(4.0 * self.value(s, dd) - self.value(s, 2.0 * dd)) / (2.0 * dd)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeSample {
    pub s: f64,
    pub delta: f64,
    pub x: [f64; 2],
    /// Nearest boundary point.
    pub y: [f64; 2],
    /// Curvatures at `y`, one per principal direction.
    pub kappa: Vec<f64>,
    pub a0: f64,
    pub a_minus: f64,
    pub a_plus: f64,
    pub psi: f64,
    /// `| |grad delta| - 1 |`.
    pub eikonal_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarrierData {
    pub boundary: TubeBoundary,
    pub sigma_s: f64,
    pub delta0: f64,
    pub kappa_max: f64,
    pub eta: f64,
    /// Set by `search_lambda0`.
    pub lambda0: Option<f64>,
    pub samples: Vec<TubeSample>,
    pub corrector: Corrector,
    /// Edge samples (`delta = delta0`) used for the decay condition.
    pub edge: Vec<f64>,
}

/// Grid of the corrector solve for curves.
pub const CORRECTOR_GRID: (usize, usize) = (256, 48);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierValues {
    pub f_minus: f64,
    pub f_plus: f64,
    pub w_minus: f64,
    pub w_plus: f64,
}

/// `sigma_s Delta f - lambda f` for both barriers at one point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DifferentialMargin {
    pub s: f64,
    pub delta: f64,
    /// Must be negative.
    pub plus: f64,
    /// Must be positive.
    pub minus: f64,
    /// Brackets `-2 k B_d - k Delta(delta) B + Delta B`, `f = e^{-k delta} B`.
    pub bracket_plus: f64,
    pub bracket_minus: f64,
}

impl BarrierData {
    /// Samples on an `n_s x n_d` grid of the tube `0 < delta <= delta0` with
    /// `delta0 = 0.4 / max kappa` and `eta = delta0 / (2 sqrt(sigma_s))`.
    pub fn new(boundary: TubeBoundary, sigma_s: f64, n_s: usize, n_d: usize) -> Result<Self> {
        if !(sigma_s > 0.0 && sigma_s.is_finite()) {
            return Err(Error::config(format!("sigma_s must be positive, got {sigma_s}")));
        }
        if let TubeBoundary::Sphere { dim } = boundary {
            if dim < 2 {
                return Err(Error::config(format!("dimension must be >= 2, got {dim}")));
            }
        }
        if n_s == 0 || n_d == 0 {
            return Err(Error::config("sample grid must be non-empty"));
        }
        let kappa_max = boundary.kappa_max();
        if !(kappa_max > 0.0) {
            return Err(Error::config("a closed boundary has positive maximal curvature"));
        }
        let delta0 = 0.4 / kappa_max;
        let eta = delta0 / (2.0 * sigma_s.sqrt());
        let corrector = match &boundary {
            TubeBoundary::Sphere { dim } => Corrector::Radial { dim: *dim, delta0 },
            TubeBoundary::Curve(c) => Corrector::solve_grid(c, &boundary, delta0, CORRECTOR_GRID.0, CORRECTOR_GRID.1)?,
        };
        let grid: Vec<(f64, f64)> = (0..n_s)
            .flat_map(|j| {
                let s = 2.0 * PI * j as f64 / n_s as f64;
                (1..=n_d).map(move |i| (s, delta0 * i as f64 / (n_d + 1) as f64))
            })
            .collect();
        let samples = grid
            .par_iter()
            .map(|&(s, d)| {
                let x = boundary.point(s, d);
                let (y, eik) = match &boundary {
                    TubeBoundary::Sphere { .. } => ([s.cos(), s.sin()], sphere_eikonal(x)),
                    TubeBoundary::Curve(c) => {
                        let ds = distance_at(c, x);
                        let g = ds.grad[0].hypot(ds.grad[1]);
                        (c.point(s), if ds.flagged { f64::INFINITY } else { (g - 1.0).abs() })
                    }
                };
                let (am, ap) = boundary.a_pm(s, d);
                TubeSample {
                    s,
                    delta: d,
                    x,
                    y,
                    kappa: vec![boundary.kappa(s); boundary.dim() - 1],
                    a0: boundary.a0(s, d),
                    a_minus: am,
                    a_plus: ap,
                    psi: corrector.value(s, d),
                    eikonal_error: eik,
                }
            })
            .collect();
        let edge = (0..n_s).map(|j| 2.0 * PI * j as f64 / n_s as f64).collect();
        Ok(BarrierData {
            boundary,
            sigma_s,
            delta0,
            kappa_max,
            eta,
            lambda0: None,
            samples,
            corrector,
            edge,
        })
    }

    pub fn max_eikonal_error(&self) -> f64 {
        self.samples.iter().map(|s| s.eikonal_error).fold(0.0, f64::max)
    }

    /// `max_j kappa_j(y) < 1/(2 delta0)` at every sample.
    pub fn curvature_bound_holds(&self) -> bool {
        self.samples
            .iter()
            .all(|s| s.kappa.iter().all(|&k| k < 1.0 / (2.0 * self.delta0)))
    }

    fn k(&self, lambda: f64) -> f64 {
        (lambda / self.sigma_s).sqrt()
    }

    fn b_pm(&self, s: f64, d: f64, lambda: f64) -> (f64, f64) {
        let k = self.k(lambda);
        let a0 = self.boundary.a0(s, d);
        let (am, ap) = self.boundary.a_pm(s, d);
        (a0 + am / k, a0 + ap / k)
    }

    fn values_at(&self, s: f64, d: f64, lambda: f64) -> BarrierValues {
        let e = (-self.k(lambda) * d).exp();
        let (bm, bp) = self.b_pm(s, d, lambda);
        let psi = self.corrector.value(s, d) * (-self.eta * lambda.sqrt()).exp();
        BarrierValues {
            f_minus: e * bm,
            f_plus: e * bp,
            w_minus: e * bm - psi,
            w_plus: e * bp + psi,
        }
    }

    pub fn margin(&self, s: f64, d: f64, lambda: f64) -> DifferentialMargin {
        let k = self.k(lambda);
        let ld = self.boundary.lap_delta(s, d);
        let bracket = |sign: usize| {
            let b = |s: f64, d: f64| {
                let v = self.b_pm(s, d, lambda);
                if sign == 0 {
                    v.0
                } else {
                    v.1
                }
            };
            let bd = (b(s, d + FD_D) - b(s, d - FD_D)) / (2.0 * FD_D);
            -2.0 * k * bd - k * ld * b(s, d) + self.boundary.laplacian(&b, s, d)
        };
        let (bm, bp) = (bracket(0), bracket(1));
        let e = self.sigma_s * (-k * d).exp();
        DifferentialMargin {
            s,
            delta: d,
            plus: e * bp,
            minus: e * bm,
            bracket_plus: bp,
            bracket_minus: bm,
        }
    }

    pub fn margins(&self, lambda: f64) -> Vec<DifferentialMargin> {
        self.samples.par_iter().map(|p| self.margin(p.s, p.delta, lambda)).collect()
    }

    /// Differential inequalities at every sample and `|f_+-| <= e^{-eta sqrt(lambda)}`
    /// on the inner edge.
    pub fn conditions_hold(&self, lambda: f64, w_edge: f64) -> bool {
        let bound = (-self.eta * lambda.sqrt()).exp();
        let diff = self.margins(lambda).iter().all(|m| m.bracket_plus < 0.0 && m.bracket_minus > 0.0);
        let edge = self.edge.iter().all(|&s| {
            let v = self.values_at(s, self.delta0, lambda);
            v.f_minus.abs() <= bound && v.f_plus.abs() <= bound
        });
        diff && edge && w_edge <= bound
    }

    /// Smallest `lambda0` on `grid` such that the conditions hold there and at
    /// every larger grid value. `w_edge(lambda)` is the maximum of `w` on the
    /// inner edge of the tube.
    pub fn search_lambda0(&mut self, grid: &[f64], w_edge: impl Fn(f64) -> Result<f64> + Sync) -> Result<f64> {
        if grid.is_empty() || !grid.windows(2).all(|w| w[1] > w[0]) || grid[0] <= 0.0 {
            return Err(Error::config("lambda grid must be positive and increasing"));
        }
        let ok = grid
            .par_iter()
            .map(|&l| Ok(self.conditions_hold(l, w_edge(l)?)))
            .collect::<Result<Vec<bool>>>()?;
        let first = ok.iter().rposition(|&b| !b).map_or(0, |i| i + 1);
        if first == grid.len() {
            return Err(Error::numerical(
                format!("barrier conditions fail at the largest lambda {}", grid[grid.len() - 1]),
                f64::NAN,
            ));
        }
        self.lambda0 = Some(grid[first]);
        Ok(grid[first])
    }

    /// Lower and upper bounds for `d0/sigma_s - sqrt(lambda/sigma_s)` at `y(s)`.
    pub fn bound_chain(&self, s: f64, lambda: f64) -> (f64, f64) {
        let r = (self.sigma_s / lambda).sqrt();
        let half_ld = 0.5 * self.boundary.lap_delta(s, 0.0);
        let la0 = 0.5 * self.boundary.lap_a0(s, 0.0);
        let psi = self.corrector.normal_derivative(s) * (-self.eta * lambda.sqrt()).exp();
        (half_ld - r * (la0 + 1.0) + psi, half_ld - r * (la0 - 1.0) - psi)
    }

    /// Largest violation of `w_- <= w <= w_+` over the samples (0 when it holds).
    pub fn sandwich_violation(&self, lambda: f64, w: impl Fn([f64; 2]) -> Result<f64> + Sync) -> Result<f64> {
        let v = self
            .samples
            .par_iter()
            .map(|p| {
                let b = self.values_at(p.s, p.delta, lambda);
                let wv = w(p.x)?;
                Ok((b.w_minus - wv).max(wv - b.w_plus).max(0.0))
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(v.into_iter().fold(0.0, f64::max))
    }
}

fn sphere_eikonal(x: [f64; 2]) -> f64 {
    let h = 1e-5;
    let d = |p: [f64; 2]| 1.0 - p[0].hypot(p[1]);
    let g = [0, 1].map(|a| {
        let at = |t: f64| {
            let mut p = x;
            p[a] += t;
            d(p)
        };
        (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
    });
    (g[0].hypot(g[1]) - 1.0).abs()
}

/// Barrier values at `x`, which must lie in the tube.
pub fn barrier_eval(bdata: &BarrierData, x: &[f64], lambda: f64) -> Result<BarrierValues> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!("lambda must be positive, got {lambda}")));
    }
    let (s, d) = bdata.boundary.coords(x, bdata.delta0)?;
    Ok(bdata.values_at(s, d, lambda))
}

// ---------------------------------------------------------------------------
// Flux asymptotics

/// Least squares fit of `y` against `1, x, x^2` (or `1, x` for three points).
/// Returns coefficients, residuals and the standard error of the constant.
fn fit_inverse_powers(x: &[f64], y: &[f64]) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let n = x.len();
    let p = match n {
        0..=2 => return Err(Error::config("need at least three samples to fit")),
        3 => 2,
        _ => 3,
    };
    let mut ata = vec![vec![0.0; p]; p];
    let mut aty = vec![0.0; p];
    for (xi, yi) in x.iter().zip(y) {
        let row: Vec<f64> = (0..p).map(|k| xi.powi(k as i32)).collect();
        for a in 0..p {
            aty[a] += row[a] * yi;
            for b in 0..p {
                ata[a][b] += row[a] * row[b];
            }
        }
    }
    let inv = invert_small(&ata)?;
    let coef: Vec<f64> = (0..p).map(|a| (0..p).map(|b| inv[a][b] * aty[b]).sum()).collect();
    let res: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(xi, yi)| yi - (0..p).map(|k| coef[k] * xi.powi(k as i32)).sum::<f64>())
        .collect();
    let dof = n - p;
    let stderr = if dof > 0 {
        let s2 = res.iter().map(|r| r * r).sum::<f64>() / dof as f64;
        (s2 * inv[0][0]).sqrt()
    } else {
        0.0
    };
    Ok((coef, res, stderr))
}

fn invert_small(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut row = r.clone();
            row.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            row
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        if m[piv][c].abs() < 1e-300 {
            return Err(Error::numerical("singular fit matrix", 0.0));
        }
        m.swap(c, piv);
        let d = m[c][c];
        m[c].iter_mut().for_each(|v| *v /= d);
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                let pivot_row = m[c].clone();
                m[r].iter_mut().zip(&pivot_row).for_each(|(v, p)| *v -= f * p);
            }
        }
    }
    Ok(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// `true` when `|y_i - limit|` does not decrease along the sweep.
fn non_monotone(y: &[f64], limit: f64) -> bool {
    y.windows(2).any(|w| (w[1] - limit).abs() > (w[0] - limit).abs() * (1.0 + 1e-9) + 1e-14)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxAsymptotics {
    pub sigma_s: f64,
    pub lambdas: Vec<f64>,
    pub d0: Vec<f64>,
    /// `d0/sigma_s - sqrt(lambda/sigma_s)`.
    pub middle: Vec<f64>,
    /// Limit of `middle` from the fit `C + a/sqrt(lambda) + b/lambda`.
    pub constant: f64,
    pub stderr: f64,
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `-1/2 sum kappa_j` when the boundary is the unit sphere.
    pub target: Option<f64>,
    pub relative_error: Option<f64>,
    pub flagged: bool,
}

impl FluxAsymptotics {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "lambda,d0,fitted_constant,target")?;
        for (l, d) in self.lambdas.iter().zip(&self.d0) {
            let t = self.target.map_or(String::new(), |t| format!("{t:.12e}"));
            writeln!(out, "{l:.6e},{d:.12e},{:.12e},{t}", self.constant)?;
        }
        Ok(())
    }
}

pub fn flux_asymptotics(sweep: &[LaplaceField]) -> Result<FluxAsymptotics> {
    if sweep.len() < 4 {
        return Err(Error::config(format!("need at least 4 lambda values, got {}", sweep.len())));
    }
    if !sweep.windows(2).all(|w| w[1].lambda > w[0].lambda) {
        return Err(Error::config("lambda sweep must be increasing"));
    }
    let sigma_s = sweep[0].cond.sigma_s;
    if sweep.iter().any(|f| f.cond.sigma_s != sigma_s) {
        return Err(Error::config("sweep mixes conductivities"));
    }
    let d0 = sweep
        .iter()
        .map(|f| {
            f.d0.ok_or_else(|| {
                Error::Inadmissible(format!(
                    "flux trace is not constant at lambda = {} (scaled spread {:.2e})",
                    f.lambda,
                    f.flux_spread()
                ))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let lambdas: Vec<f64> = sweep.iter().map(|f| f.lambda).collect();
    let middle: Vec<f64> = lambdas
        .iter()
        .zip(&d0)
        .map(|(l, d)| d / sigma_s - (l / sigma_s).sqrt())
        .collect();
    let x: Vec<f64> = lambdas.iter().map(|l| 1.0 / l.sqrt()).collect();
    let (coefficients, residuals, stderr) = fit_inverse_powers(&x, &middle)?;
    let constant = coefficients[0];
    let target = match (&sweep[0].space, sweep[0].kind) {
        (HeatSpace::Radial { dim, .. }, ProblemKind::CauchyDirichlet) => Some(-0.5 * (*dim as f64 - 1.0)),
        _ => None,
    };
    Ok(FluxAsymptotics {
        sigma_s,
        relative_error: target.map(|t| ((constant - t) / t).abs()),
        flagged: non_monotone(&middle, constant),
        lambdas,
        d0,
        middle,
        constant,
        stderr,
        coefficients,
        residuals,
        target,
    })
}

// ---------------------------------------------------------------------------
// Cauchy data

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformedBoundaryData {
    pub lambdas: Vec<f64>,
    pub values: Vec<f64>,
    /// Bounds on the error of the head `[0, t_0]` and of the tail.
    pub head_bound: Vec<f64>,
    pub tail_bound: Vec<f64>,
}

impl TransformedBoundaryData {
    /// Boundary values of directly solved (or transformed) Cauchy fields.
    pub fn from_fields(fields: &[LaplaceField]) -> Result<Self> {
        let mut values = Vec::with_capacity(fields.len());
        for f in fields {
            if f.kind != ProblemKind::Cauchy {
                return Err(Error::config("boundary data needs Cauchy fields"));
            }
            values.push(f.boundary_value()?);
        }
        Self::checked(
            fields.iter().map(|f| f.lambda).collect(),
            values,
            fields.iter().map(|f| f.head_weight).collect(),
            fields.iter().map(|f| f.tail_bound).collect(),
        )
    }

    fn checked(lambdas: Vec<f64>, values: Vec<f64>, head_bound: Vec<f64>, tail_bound: Vec<f64>) -> Result<Self> {
        if let Some((l, v)) = lambdas.iter().zip(&values).find(|(_, v)| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::numerical(format!("transformed boundary value {v} at lambda = {l} is not in (0,1)"), *v));
        }
        Ok(TransformedBoundaryData {
            lambdas,
            values,
            head_bound,
            tail_bound,
        })
    }
}

/// Transform of a boundary time series `a(t)`, `0 < a < 1`. The head
/// `[0, t_0]` uses `a(t_0)` and the tail `a(T)`; both errors are bounded by
/// the weight of the interval because `a` takes values in `(0, 1)`.
pub fn tilde_a(times: &[f64], a: &[f64], lambdas: &[f64]) -> Result<TransformedBoundaryData> {
    tilde_a_with(times, a, lambdas, DEFAULT_HEAD_TOL, DEFAULT_TAIL_TOL)
}

pub fn tilde_a_with(
    times: &[f64],
    a: &[f64],
    lambdas: &[f64],
    head_tol: f64,
    tail_tol: f64,
) -> Result<TransformedBoundaryData> {
    if times.len() != a.len() || times.is_empty() {
        return Err(Error::config("need one value per sample time"));
    }
    if a.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(Error::config("boundary values must lie in (0,1)"));
    }
    let samples: Vec<Vec<f64>> = a.iter().map(|v| vec![*v]).collect();
    let mut values = Vec::with_capacity(lambdas.len());
    let mut heads = Vec::with_capacity(lambdas.len());
    let mut tails = Vec::with_capacity(lambdas.len());
    for &l in lambdas {
        let head = -(-l * times[0]).exp_m1();
        if head > head_tol {
            return Err(Error::Transform(format!(
                "refine near t=0: head weight {head:.2e} > {head_tol:.1e} at lambda = {l}, t_0 = {}",
                times[0]
            )));
        }
        let (w, tail) = transform_samples(times, &[a[0]], &samples, l)?;
        if tail > tail_tol {
            return Err(Error::Transform(format!(
                "extend horizon: e^(-lambda T) = {tail:.3e} > {tail_tol:.1e} at lambda = {l}"
            )));
        }
        values.push(w[0]);
        heads.push(head);
        tails.push(tail);
    }
    TransformedBoundaryData::checked(lambdas.to_vec(), values, heads, tails)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureEstimate {
    pub lambdas: Vec<f64>,
    /// Right-hand side of the curvature formula at each `lambda`.
    pub estimates: Vec<f64>,
    /// Extrapolated `sum kappa_j`.
    pub limit: f64,
    pub stderr: f64,
    pub flagged: bool,
    /// Largest relative mismatch of the transmission identity.
    pub transmission_mismatch: f64,
}

/// Right-hand side of `sum kappa_j = 2 (a sqrt(s) - (1-a) sqrt(m)) / (m (1-a) + s a) sqrt(lambda)`.
pub fn curvature_formula(a: f64, lambda: f64, cond: &Conductivity) -> f64 {
    let (s, m) = (cond.sigma_s, cond.sigma_m);
    2.0 * (a * s.sqrt() - (1.0 - a) * m.sqrt()) / (m * (1.0 - a) + s * a) * lambda.sqrt()
}

/// Evaluates the curvature formula over the sweep and extrapolates
/// `E(lambda) = K + c/sqrt(lambda) + d/lambda`. `inner` and `outer` are
/// `sigma_s (d_nu w)_-` and `sigma_m (d_nu w)_+` at the same point, one per
/// `lambda`; they must agree to the relative tolerance `tol`.
pub fn cauchy_curvature_formula(
    tbd: &TransformedBoundaryData,
    inner: &[f64],
    outer: &[f64],
    cond: &Conductivity,
    tol: f64,
) -> Result<CurvatureEstimate> {
    let n = tbd.lambdas.len();
    if inner.len() != n || outer.len() != n {
        return Err(Error::config("need one inner and one outer flux per lambda"));
    }
    let mut mismatch = 0.0_f64;
    for ((i, o), l) in inner.iter().zip(outer).zip(&tbd.lambdas) {
        let m = (i - o).abs() / i.abs().max(o.abs()).max(f64::MIN_POSITIVE);
        if !(m <= tol) {
            return Err(Error::Inadmissible(format!(
                "transmission identity violated at lambda = {l}: inner {i:.6e}, outer {o:.6e}"
            )));
        }
        mismatch = mismatch.max(m);
    }
    let estimates: Vec<f64> = tbd
        .values
        .iter()
        .zip(&tbd.lambdas)
        .map(|(a, l)| curvature_formula(*a, *l, cond))
        .collect();
    let x: Vec<f64> = tbd.lambdas.iter().map(|l| 1.0 / l.sqrt()).collect();
    let (coef, _, stderr) = fit_inverse_powers(&x, &estimates)?;
    Ok(CurvatureEstimate {
        lambdas: tbd.lambdas.clone(),
        flagged: non_monotone(&estimates, coef[0]),
        estimates,
        limit: coef[0],
        stderr,
        transmission_mismatch: mismatch,
    })
}

/// Triangulated disk of radius `box_radius` whose core is
/// `Omega = {r < 1 + omega(theta)}`.
pub fn cauchy_mesh(omega: &Perturbation, box_radius: f64, resolution: usize) -> Result<Mesh> {
    if (omega.base_radius - 1.0).abs() > 1e-14 {
        return Err(Error::config("the boundary perturbation must live on the unit circle"));
    }
    if !(box_radius > 1.0) {
        return Err(Error::config(format!("box radius must exceed 1, got {box_radius}")));
    }
    let l = box_radius;
    let f = Perturbation {
        modes: omega.scaled(1.0 / l).modes,
        base_radius: 1.0 / l,
    };
    let map = DomainMap::new(&f, &Perturbation::zero(1, 1.0))?;
    let mut mesh = build_mesh(&map, resolution)?;
    mesh.vertices.iter_mut().for_each(|v| *v = [l * v[0], l * v[1]]);
    mesh.jtau.iter_mut().for_each(|j| *j *= l);
    Ok(mesh)
}

/// Transformed Cauchy data at the interface nodes of a planar two-phase mesh.
/// `values[j][i]`, `inner[j][i]`, `outer[j][i]` belong to `lambdas[j]` and
/// interface node `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarCauchyData {
    pub lambdas: Vec<f64>,
    pub points: Vec<[f64; 2]>,
    pub values: Vec<Vec<f64>>,
    pub inner: Vec<Vec<f64>>,
    pub outer: Vec<Vec<f64>>,
}

/// Direct solves of `div(sigma grad w) = lambda (w - chi)` on a mesh from
/// [`cauchy_mesh`]: `sigma_s` in the core, `sigma_m` outside, `chi` the
/// indicator of the medium and `w = 1` on the outer circle. Interface fluxes
/// are the variational loads of each side divided by the lumped arc length.
pub fn planar_cauchy_sweep(mesh: &Mesh, cond: &Conductivity, lambdas: &[f64]) -> Result<PlanarCauchyData> {
    cond.validate()?;
    if lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::config("lambda values must be positive"));
    }
    let n = mesh.n_nodes();
    let full = assemble(mesh, |p| match p {
        Phase::Core => cond.sigma_s,
        Phase::Shell => cond.sigma_m,
    });
    let core = assemble(mesh, |p| match p {
        Phase::Core => cond.sigma_s,
        Phase::Shell => 0.0,
    });
    let mut m_core = vec![0.0; n];
    let mut m_med = vec![0.0; n];
    for (k, t) in mesh.triangles().iter().enumerate() {
        let a = signed_area(&mesh.vertices, t) / 3.0;
        let target = match mesh.phase(k) {
            Phase::Core => &mut m_core,
            Phase::Shell => &mut m_med,
        };
        t.iter().for_each(|&v| target[v] += a);
    }
    let m_tot: Vec<f64> = m_core.iter().zip(&m_med).map(|(a, b)| a + b).collect();
    let iface = &mesh.interface;
    let ni = iface.len();
    let arc: Vec<f64> = (0..ni)
        .map(|i| {
            let p = mesh.vertices[iface[i]];
            let half = |q: [f64; 2]| 0.5 * (q[0] - p[0]).hypot(q[1] - p[1]);
            half(mesh.vertices[iface[(i + 1) % ni]]) + half(mesh.vertices[iface[(i + ni - 1) % ni]])
        })
        .collect();
    let mut g = vec![0.0; n];
    mesh.boundary.iter().for_each(|&b| g[b] = 1.0);
    let per_lambda = lambdas
        .par_iter()
        .map(|&l| {
            let mut t = TripletBuilder::with_capacity(n, n);
            m_tot.iter().enumerate().for_each(|(i, m)| t.add(i, i, l * m));
            let a = full.stiffness.axpby(1.0, &t.build(), 1.0);
            let solver = DirichletSolver::new(a, &mesh.boundary)?;
            let rhs: Vec<f64> = m_med.iter().map(|m| l * m).collect();
            let w = solver.solve(&rhs, &g);
            let kw = full.stiffness.mul(&w);
            let kcw = core.stiffness.mul(&w);
            let mut vals = Vec::with_capacity(ni);
            let mut inner = Vec::with_capacity(ni);
            let mut outer = Vec::with_capacity(ni);
            for (k, &v) in iface.iter().enumerate() {
                let core_load = kcw[v] + l * m_core[v] * w[v];
                let med_load = (kw[v] - kcw[v]) + l * m_med[v] * (w[v] - 1.0);
                vals.push(w[v]);
                inner.push(core_load / arc[k]);
                outer.push(-med_load / arc[k]);
            }
            Ok((vals, inner, outer))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut data = PlanarCauchyData {
        lambdas: lambdas.to_vec(),
        points: iface.iter().map(|&v| mesh.vertices[v]).collect(),
        values: Vec::new(),
        inner: Vec::new(),
        outer: Vec::new(),
    };
    for (v, i, o) in per_lambda {
        data.values.push(v);
        data.inner.push(i);
        data.outer.push(o);
    }
    Ok(data)
}

impl PlanarCauchyData {
    pub fn boundary_data(&self, point: usize) -> Result<TransformedBoundaryData> {
        let k = self.lambdas.len();
        TransformedBoundaryData::checked(
            self.lambdas.clone(),
            self.values.iter().map(|v| v[point]).collect(),
            vec![0.0; k],
            vec![0.0; k],
        )
    }

    /// Curvature estimate at every interface node.
    pub fn curvature_estimates(&self, cond: &Conductivity, tol: f64) -> Result<Vec<CurvatureEstimate>> {
        (0..self.points.len())
            .map(|i| {
                let inner: Vec<f64> = self.inner.iter().map(|v| v[i]).collect();
                let outer: Vec<f64> = self.outer.iter().map(|v| v[i]).collect();
                cauchy_curvature_formula(&self.boundary_data(i)?, &inner, &outer, cond, tol)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_weights_integrate_polynomials() {
        let (a, b, l) = (0.3, 0.9, 2.5);
        let (wa, wb) = linear_weights(a, b, l);
        let e = |t: f64| (-l * t).exp();
        assert!((wa + wb - (e(a) - e(b))).abs() < 1e-15);
        // int_a^b l e^{-lt} t dt
        let exact = a * e(a) - b * e(b) + (e(a) - e(b)) / l;
        assert!((wa * a + wb * b - exact).abs() < 1e-14);
        let b = 1.0 + 1e-9;
        let (wa, wb) = linear_weights(1.0, b, 3.0);
        let exact = -(-3.0 * (b - 1.0)).exp_m1() * (-3.0_f64).exp();
        assert!(((wa + wb) - exact).abs() < 1e-15 * exact);
        assert!((wa - wb).abs() < 1e-6 * exact);
    }

    #[test]
    fn fit_recovers_quadratic() {
        let x = [0.1, 0.05, 0.025, 0.0125, 0.00625];
        let y: Vec<f64> = x.iter().map(|v| -0.5 + 0.3 * v - 2.0 * v * v).collect();
        let (c, r, _) = fit_inverse_powers(&x, &y).unwrap();
        assert!((c[0] + 0.5).abs() < 1e-12 && (c[1] - 0.3).abs() < 1e-10 && (c[2] + 2.0).abs() < 1e-8);
        assert!(r.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sphere_lap_a0_matches_differences() {
        for dim in [2, 3, 4] {
            let t = TubeBoundary::Sphere { dim };
            for d in [0.0, 0.1, 0.3] {
                let fd = t.laplacian(&|s, d| t.a0(s, d), 0.0, d);
                assert!((fd - t.lap_a0(0.0, d)).abs() < 1e-5, "dim {dim} d {d}: {fd}");
            }
        }
    }

    #[test]
    fn radial_corrector_is_harmonic() {
        for dim in [2, 3] {
            let c = Corrector::Radial { dim, delta0: 0.4 };
            let t = TubeBoundary::Sphere { dim };
            assert_eq!(c.value(0.0, 0.0), 0.0);
            assert!((c.value(0.0, 0.4) - 2.0).abs() < 1e-14);
            let lap = t.laplacian(&|s, d| c.value(s, d), 0.0, 0.2);
            assert!(lap.abs() < 1e-5);
            let h = 1e-6;
            let fd = -(c.value(0.0, h) - c.value(0.0, 0.0)) / h;
            assert!((fd - c.normal_derivative(0.0)).abs() < 1e-4);
        }
    }
}

//! Overdetermined two-phase problem on perturbed disks.
//!
//! The core `D_f` has boundary `r = R + f(theta)` and the conductor `Omega_g`
//! has boundary `r = 1 + g(theta)`. The residual
//! `Psi(f, g) = (sigma_s d_nu u + Lambda) J_tau` vanishes exactly when the
//! outer flux is constant. Given `g`, [`newton_solve`] finds `f` by
//! quasi-Newton steps with the diagonal modal Jacobian `sigma_s s_k'(1)` of
//! the radial configuration.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{assemble, boundary_density, fourier_piecewise_linear, DirichletSolver, Mesh, Phase, ReferenceMesh};
use crate::linalg::TripletBuilder;
use crate::radial::{
    invertibility_report, solve_base_radial, Conductivity, EllipticParams, RadialConfig, RadialSolution,
    DEFAULT_FLAG_THRESHOLD,
};

/// Zero-mean boundary displacement `sum a_k cos k theta + b_k sin k theta`,
/// `k = 1..=K`, of a circle of radius `base_radius`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// `modes[k-1] = (a_k, b_k)`.
    pub modes: Vec<(f64, f64)>,
    pub base_radius: f64,
}

impl Perturbation {
    pub fn zero(k: usize, base_radius: f64) -> Self {
        Perturbation {
            modes: vec![(0.0, 0.0); k],
            base_radius,
        }
    }

    /// `amplitude * cos(k theta)` padded to `kmax` modes.
    pub fn cosine(k: usize, amplitude: f64, kmax: usize, base_radius: f64) -> Self {
        let mut p = Perturbation::zero(kmax.max(k), base_radius);
        p.modes[k - 1].0 = amplitude;
        p
    }

    pub fn kmax(&self) -> usize {
        self.modes.len()
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.modes
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                let (s, c) = ((i + 1) as f64 * theta).sin_cos();
                a * c + b * s
            })
            .sum()
    }

    pub fn eval_derivative(&self, theta: f64) -> f64 {
        self.modes
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                let k = (i + 1) as f64;
                let (s, c) = (k * theta).sin_cos();
                k * (b * c - a * s)
            })
            .sum()
    }

    /// Sup norm of the displacement, sampled finely enough to resolve all modes.
    pub fn sup_norm(&self) -> f64 {
        let m = 64 * self.kmax().max(1);
        (0..m)
            .map(|i| self.eval(2.0 * PI * i as f64 / m as f64).abs())
            .fold(0.0, f64::max)
    }

    /// Euclidean norm of the coefficient vector.
    pub fn coefficient_norm(&self) -> f64 {
        self.modes.iter().map(|(a, b)| a * a + b * b).sum::<f64>().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|&(a, b)| a == 0.0 && b == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_radius > 0.0) {
            return Err(Error::config("perturbation base radius must be positive"));
        }
        if self.modes.iter().any(|(a, b)| !a.is_finite() || !b.is_finite()) {
            return Err(Error::config("perturbation coefficients must be finite"));
        }
        let s = self.sup_norm();
        if s >= 0.25 * self.base_radius {
            return Err(Error::PerturbationTooLarge(format!(
                "sup |displacement| = {s:.4} exceeds base_radius/4 = {:.4}",
                0.25 * self.base_radius
            )));
        }
        Ok(())
    }

    fn padded(&self, k: usize) -> Vec<(f64, f64)> {
        let mut m = self.modes.clone();
        m.resize(k.max(m.len()), (0.0, 0.0));
        m
    }

    pub fn add_scaled(&self, other: &Perturbation, s: f64) -> Perturbation {
        let k = self.kmax().max(other.kmax());
        let a = self.padded(k);
        let b = other.padded(k);
        Perturbation {
            modes: a.iter().zip(&b).map(|(x, y)| (x.0 + s * y.0, x.1 + s * y.1)).collect(),
            base_radius: self.base_radius,
        }
    }

    pub fn scaled(&self, s: f64) -> Perturbation {
        Perturbation {
            modes: self.modes.iter().map(|(a, b)| (s * a, s * b)).collect(),
            base_radius: self.base_radius,
        }
    }
}

/// Quintic smoothstep `6t^5 - 15t^4 + 10t^3` on `[0, 1]` and its derivative.
fn smoothstep(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0)
    } else {
        (t * t * t * (10.0 - 15.0 * t + 6.0 * t * t), 30.0 * t * t * (1.0 - t) * (1.0 - t))
    }
}

/// Maximum slope of the quintic smoothstep.
const SMOOTHSTEP_MAX_SLOPE: f64 = 1.875;

/// Radial cutoff profiles. The interface displacement is carried by a bump
/// equal to 1 at `r = R` that decays to 0 at `R - inner_left` and
/// `R + inner_right`; the outer displacement by a ramp rising over
/// `outer_width` to 1 at `r = 1`. Both are quintic with flat ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blend {
    pub inner_left: f64,
    pub inner_right: f64,
    pub outer_width: f64,
}

impl Blend {
    /// Widest profiles: the bump spans `(0, 1)` and the ramp `(R, 1)`.
    pub fn for_radius(r_inner: f64) -> Self {
        Blend {
            inner_left: r_inner,
            inner_right: 1.0 - r_inner,
            outer_width: 1.0 - r_inner,
        }
    }
}

/// Radial map `r e(theta) -> (r + f(theta) chi_f(r) + g(theta) chi_g(r)) e(theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMap {
    pub inner: Perturbation,
    pub outer: Perturbation,
    pub blend: Blend,
}

impl DomainMap {
    fn chi_inner(&self, r: f64) -> (f64, f64) {
        let d = r - self.inner.base_radius;
        let w = if d < 0.0 { self.blend.inner_left } else { self.blend.inner_right };
        let (s, ds) = smoothstep(1.0 - d.abs() / w);
        (s, -d.signum() * ds / w)
    }

    fn chi_outer(&self, r: f64) -> (f64, f64) {
        let w = self.blend.outer_width;
        let (s, ds) = smoothstep((r - (1.0 - w)) / w);
        (s, ds / w)
    }

    /// New radius and `d(new radius)/dr` at reference polar point `(r, theta)`.
    fn radial(&self, r: f64, f: f64, g: f64) -> (f64, f64) {
        let (ci, dci) = self.chi_inner(r);
        let (co, dco) = self.chi_outer(r);
        (r + f * ci + g * co, 1.0 + f * dci + g * dco)
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let r = p[0].hypot(p[1]);
        if r == 0.0 {
            return p;
        }
        let th = p[1].atan2(p[0]);
        let (rho, _) = self.radial(r, self.inner.eval(th), self.outer.eval(th));
        let s = rho / r;
        [p[0] * s, p[1] * s]
    }

    /// Jacobian determinant `(d rho/dr)(rho/r)` at a reference point.
    pub fn jacobian_det(&self, r: f64, theta: f64) -> f64 {
        let (rho, drho) = self.radial(r, self.inner.eval(theta), self.outer.eval(theta));
        if r == 0.0 {
            drho * drho
        } else {
            drho * rho / r
        }
    }

    /// Smallest Jacobian determinant over a polar sampling grid.
    pub fn min_jacobian(&self, n_r: usize, n_theta: usize) -> f64 {
        let mut worst = f64::INFINITY;
        for j in 0..n_theta {
            let th = 2.0 * PI * j as f64 / n_theta as f64;
            let f = self.inner.eval(th);
            let g = self.outer.eval(th);
            for i in 0..=n_r {
                let r = i as f64 / n_r as f64;
                let (rho, drho) = self.radial(r, f, g);
                let det = if r == 0.0 { drho * drho } else { drho * rho / r };
                worst = worst.min(det);
            }
        }
        worst
    }
}

/// Builds the blended map and checks that it is a bijection.
pub fn extend_perturbation(f: &Perturbation, g: &Perturbation) -> Result<DomainMap> {
    f.validate()?;
    g.validate()?;
    DomainMap::new(f, g)
}

impl DomainMap {
    /// Like [`extend_perturbation`] but without the small-amplitude bound on
    /// `f`; Newton iterates are only required to give a bijective map.
    pub fn new(f: &Perturbation, g: &Perturbation) -> Result<DomainMap> {
        DomainMap::build(f, g)
    }

    fn build(f: &Perturbation, g: &Perturbation) -> Result<DomainMap> {
    if (g.base_radius - 1.0).abs() > 1e-14 {
        return Err(Error::config("outer perturbation must live on the unit circle"));
    }
    if !(f.base_radius > 0.0 && f.base_radius < 1.0) {
        return Err(Error::config("inner base radius must lie in (0, 1)"));
    }
    let map = DomainMap {
        inner: f.clone(),
        outer: g.clone(),
        blend: Blend::for_radius(f.base_radius),
    };
    let slope = f.sup_norm() * SMOOTHSTEP_MAX_SLOPE / map.blend.inner_left.min(map.blend.inner_right)
        + g.sup_norm() * SMOOTHSTEP_MAX_SLOPE / map.blend.outer_width;
    let kmax = f.kmax().max(g.kmax()).max(1);
    let det = map.min_jacobian(400, 64 * kmax);
    if det <= 0.0 {
        return Err(Error::PerturbationTooLarge(format!(
            "domain map Jacobian determinant reaches {det:.3e} (cutoff slope bound {slope:.3})"
        )));
    }
    Ok(map)
    }
}

/// Sweeps `eps` over the given amplitudes of `eps cos(k theta)` on the outer
/// boundary and returns the first amplitude rejected by [`extend_perturbation`].
pub fn bijectivity_sweep(k: usize, r_inner: f64, amplitudes: &[f64]) -> Option<f64> {
    let f = Perturbation::zero(k, r_inner);
    amplitudes.iter().copied().find(|&eps| {
        let g = Perturbation::cosine(k, eps, k, 1.0);
        extend_perturbation(&f, &g).is_err()
    })
}

pub const DEFAULT_MIN_ANGLE_DEG: f64 = 5.0;

/// Fitted triangulation of `Omega_g` with interface `D_f`.
pub fn build_mesh(map: &DomainMap, resolution: usize) -> Result<Mesh> {
    let reference = Arc::new(ReferenceMesh::disk(map.inner.base_radius, resolution)?);
    build_mesh_on(reference, map, DEFAULT_MIN_ANGLE_DEG)
}

/// Maps a prebuilt reference triangulation; used to remesh Newton iterates.
pub fn build_mesh_on(reference: Arc<ReferenceMesh>, map: &DomainMap, min_angle_deg: f64) -> Result<Mesh> {
    if (reference.r_inner - map.inner.base_radius).abs() > 1e-14 {
        return Err(Error::config("reference mesh and domain map disagree on the core radius"));
    }
    let mesh = Mesh::from_reference(reference, |p| map.apply(p))?;
    mesh.check_quality(min_angle_deg)?;
    let chi = mesh.euler_characteristic();
    if chi != 1 {
        return Err(Error::Meshing(format!("triangulation has Euler characteristic {chi}")));
    }
    Ok(mesh)
}

/// Discrete solution with its outer boundary flux density `sigma_s d_nu u`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub mesh: Mesh,
    pub values: Vec<f64>,
    /// Flux at the nodes listed in `mesh.boundary`.
    pub flux: Vec<f64>,
    pub cond: Conductivity,
    pub params: EllipticParams,
}

fn phase_sigma(cond: &Conductivity) -> impl Fn(Phase) -> f64 + '_ {
    move |ph| match ph {
        Phase::Core => cond.sigma_c,
        Phase::Shell => cond.sigma_s,
    }
}

/// P1 solution of `div(sigma grad u) = beta u - gamma`, `u = c` on the boundary.
pub fn solve_transmission(mesh: &Mesh, cond: &Conductivity, params: &EllipticParams) -> Result<Field> {
    cond.validate()?;
    params.validate()?;
    if params.dim != 2 {
        return Err(Error::config("finite element solves are planar (dim = 2)"));
    }
    let asm = assemble(mesh, phase_sigma(cond));
    let a = asm.stiffness.axpby(1.0, &asm.mass, params.beta);
    let ones = vec![1.0; mesh.n_nodes()];
    let load: Vec<f64> = asm.mass.mul(&ones).iter().map(|m| params.gamma * m).collect();
    let mut g = vec![0.0; mesh.n_nodes()];
    for &b in &mesh.boundary {
        g[b] = params.c_bdry;
    }
    let solver = DirichletSolver::new(a.clone(), &mesh.boundary)?;
    let u = solver.solve(&load, &g);
    let au = a.mul(&u);
    // The weak residual at boundary rows is the outward flux load.
    let loads: Vec<f64> = mesh.boundary.iter().map(|&b| au[b] - load[b]).collect();
    let flux = boundary_density(mesh, &loads)?;
    let mut res = 0.0_f64;
    for (i, r) in au.iter().zip(&load).map(|(x, y)| x - y).enumerate() {
        if !mesh.boundary.contains(&i) {
            res = res.max(r.abs());
        }
    }
    let scale = load.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if !(res / scale < 1e-8) {
        return Err(Error::numerical("finite element solve inaccurate", res / scale));
    }
    Ok(Field {
        mesh: mesh.clone(),
        values: u,
        flux,
        cond: *cond,
        params: *params,
    })
}

impl Field {
    /// `int_Omega u` by the consistent mass.
    pub fn integral(&self) -> f64 {
        let mut s = 0.0;
        for t in self.mesh.triangles() {
            let a = crate::fem::signed_area(&self.mesh.vertices, t);
            s += a * (self.values[t[0]] + self.values[t[1]] + self.values[t[2]]) / 3.0;
        }
        s
    }

    /// `Lambda = (gamma |Omega| - beta int u) / |partial Omega|`.
    pub fn lambda(&self) -> f64 {
        (self.params.gamma * self.mesh.area() - self.params.beta * self.integral()) / self.mesh.boundary_length()
    }

    pub fn write_boundary_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "theta,x,y,flux")?;
        for (i, &b) in self.mesh.boundary.iter().enumerate() {
            let p = self.mesh.vertices[b];
            writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{:.17e}",
                self.mesh.boundary_angles[i], p[0], p[1], self.flux[i]
            )?;
        }
        Ok(())
    }
}

/// The overdetermined residual on the outer boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub theta: Vec<f64>,
    pub nodal: Vec<f64>,
    /// `(a_k, b_k)` for `k = 1..=K`.
    pub modal: Vec<(f64, f64)>,
    /// `(1/2 pi) int Psi d theta`.
    pub mean: f64,
    /// Sup norm of the truncated Fourier series.
    pub sup_norm: f64,
    /// Sup over the boundary nodes, including unresolved modes.
    pub nodal_sup: f64,
    pub lambda: f64,
}

pub const DEFAULT_MODES: usize = 8;

pub fn residual(field: &Field, kmax: usize) -> Residual {
    let mesh = &field.mesh;
    let lambda = field.lambda();
    let nodal: Vec<f64> = field
        .flux
        .iter()
        .zip(&mesh.jtau)
        .map(|(q, j)| (q + lambda) * j)
        .collect();
    let (mean, modal) = fourier_piecewise_linear(&mesh.boundary_angles, &nodal, kmax);
    let series = Perturbation {
        modes: modal.clone(),
        base_radius: 1.0,
    };
    let sup_norm = series.sup_norm();
    let nodal_sup = nodal.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    Residual {
        theta: mesh.boundary_angles.clone(),
        nodal,
        modal,
        mean,
        sup_norm,
        nodal_sup,
        lambda,
    }
}

impl Residual {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "theta,psi")?;
        for (t, p) in self.theta.iter().zip(&self.nodal) {
            writeln!(out, "{t:.17e},{p:.17e}")?;
        }
        Ok(())
    }
}

/// Multiplies modal coefficients by the diagonal Jacobian.
pub fn apply_frozen_jacobian(p: &Perturbation, diag: &[f64]) -> Vec<(f64, f64)> {
    p.modes
        .iter()
        .zip(diag)
        .map(|(&(a, b), &d)| (a * d, b * d))
        .collect()
}

/// Divides the modal residual by the diagonal Jacobian entries.
pub fn apply_inverse_frozen_jacobian(modal: &[(f64, f64)], diag: &[f64], base_radius: f64) -> Result<Perturbation> {
    apply_inverse_with_threshold(modal, diag, base_radius, DEFAULT_FLAG_THRESHOLD)
}

pub fn apply_inverse_with_threshold(
    modal: &[(f64, f64)],
    diag: &[f64],
    base_radius: f64,
    threshold: f64,
) -> Result<Perturbation> {
    if diag.len() < modal.len() {
        return Err(Error::config("fewer Jacobian entries than residual modes"));
    }
    let mut modes = Vec::with_capacity(modal.len());
    for (i, (&(a, b), &d)) in modal.iter().zip(diag).enumerate() {
        if d.abs() <= threshold {
            return Err(Error::NotInvertible { k: i + 1, value: d.abs() });
        }
        modes.push((a / d, b / d));
    }
    Ok(Perturbation { modes, base_radius })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub kmax: usize,
    pub resolution: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Cells of the radial grid used for the frozen Jacobian.
    pub radial_cells: usize,
    pub min_angle_deg: f64,
    /// Number of previous iterates mixed into each step (Anderson
    /// acceleration of the frozen-Jacobian map); 0 gives plain steps.
    pub anderson_depth: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            kmax: DEFAULT_MODES,
            resolution: 48,
            tol: 1e-6,
            max_iter: 10,
            radial_cells: 2048,
            min_angle_deg: DEFAULT_MIN_ANGLE_DEG,
            anderson_depth: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonReport {
    pub converged: bool,
    pub iterations: usize,
    /// `sup_norm(Psi) / |Lambda(0,0)|` after each residual evaluation.
    pub history: Vec<f64>,
    /// Ratios of consecutive entries of `history`.
    pub contraction: Vec<f64>,
    pub nodal_history: Vec<f64>,
    pub modal_mean: Vec<f64>,
    pub lambda_reference: f64,
    /// `sigma_s s_k'(1)`, `k = 1..=K`.
    pub jacobian: Vec<f64>,
    pub f: Perturbation,
    /// Whether `f` satisfies the small-amplitude bound `sup |f| < R/4`.
    pub f_small: bool,
    pub g: Perturbation,
    pub final_residual: Residual,
}

/// Frozen modal Jacobian `sigma_s s_k'(1)` from the radial configuration.
pub fn frozen_jacobian(
    r_inner: f64,
    cond: &Conductivity,
    params: &EllipticParams,
    kmax: usize,
    radial_cells: usize,
) -> Result<(RadialSolution, Vec<f64>)> {
    let cfg = RadialConfig::uniform(r_inner, radial_cells)?;
    let base = solve_base_radial(params, cond, &cfg)?;
    let rep = invertibility_report(&base, kmax)?;
    if let Some(e) = rep.entries.iter().find(|e| e.flagged) {
        return Err(Error::NotInvertible {
            k: e.k,
            value: e.deriv_at_one.abs(),
        });
    }
    let diag = rep.derivs().iter().map(|d| cond.sigma_s * d).collect();
    Ok((base, diag))
}

/// Solves on the mapped mesh for the pair `(f, g)`.
pub fn evaluate(
    reference: &Arc<ReferenceMesh>,
    f: &Perturbation,
    g: &Perturbation,
    cond: &Conductivity,
    params: &EllipticParams,
    min_angle_deg: f64,
) -> Result<Field> {
    let map = DomainMap::new(f, g)?;
    let mesh = build_mesh_on(reference.clone(), &map, min_angle_deg)?;
    solve_transmission(&mesh, cond, params)
}

/// Quasi-Newton iteration `f <- f - J^{-1} Psi(f, g)` with the frozen
/// diagonal Jacobian, starting from `f = 0`.
pub fn newton_solve(
    g: &Perturbation,
    r_inner: f64,
    cond: &Conductivity,
    params: &EllipticParams,
    opts: &NewtonOptions,
) -> Result<NewtonReport> {
    let (base, jac) = frozen_jacobian(r_inner, cond, params, opts.kmax, opts.radial_cells)?;
    let reference = Arc::new(ReferenceMesh::disk(r_inner, opts.resolution)?);
    newton_solve_with(g, &reference, cond, params, opts, base.lambda_serrin, &jac)
}

/// [`newton_solve`] with a prebuilt reference mesh and Jacobian.
pub fn newton_solve_with(
    g: &Perturbation,
    reference: &Arc<ReferenceMesh>,
    cond: &Conductivity,
    params: &EllipticParams,
    opts: &NewtonOptions,
    lambda_reference: f64,
    jac: &[f64],
) -> Result<NewtonReport> {
    g.validate()?;
    let scale = lambda_reference.abs().max(f64::MIN_POSITIVE);
    let mut f = Perturbation::zero(opts.kmax, reference.r_inner);
    let mut history = Vec::new();
    let mut nodal_history = Vec::new();
    let mut modal_mean = Vec::new();
    let mut growth = 0;
    let mut iterations = 0;
    let mut mixer = Anderson::new(opts.anderson_depth);
    loop {
        let field = match evaluate(reference, &f, g, cond, params, opts.min_angle_deg) {
            Ok(field) => field,
            // an iterate that can no longer be meshed has left the neighborhood
            Err(Error::PerturbationTooLarge(_) | Error::Meshing(_)) if iterations > 0 => {
                return Err(Error::Divergence { iterations });
            }
            Err(e) => return Err(e),
        };
        let res = residual(&field, opts.kmax);
        iterations += 1;
        let rel = res.sup_norm / scale;
        if let Some(&prev) = history.last() {
            if rel > prev {
                growth += 1;
            } else {
                growth = 0;
            }
        }
        history.push(rel);
        nodal_history.push(res.nodal_sup / scale);
        modal_mean.push(res.mean);
        if growth >= 3 {
            return Err(Error::Divergence { iterations });
        }
        let converged = rel <= opts.tol;
        if converged || iterations > opts.max_iter {
            let contraction = history.windows(2).map(|w| w[1] / w[0]).collect();
            return Ok(NewtonReport {
                converged,
                iterations: iterations - 1,
                history,
                contraction,
                nodal_history,
                modal_mean,
                lambda_reference,
                jacobian: jac.to_vec(),
                f_small: f.validate().is_ok(),
                f,
                g: g.clone(),
                final_residual: res,
            });
        }
        let step = apply_inverse_frozen_jacobian(&res.modal, jac, reference.r_inner)?;
        let next = mixer.next(&to_vec(&f), &to_vec(&step.scaled(-1.0)));
        f = from_vec(&next, reference.r_inner);
    }
}

fn to_vec(p: &Perturbation) -> Vec<f64> {
    p.modes.iter().flat_map(|&(a, b)| [a, b]).collect()
}

fn from_vec(v: &[f64], base_radius: f64) -> Perturbation {
    Perturbation {
        modes: v.chunks(2).map(|c| (c[0], c[1])).collect(),
        base_radius,
    }
}

/// Anderson mixing for the fixed-point map `x -> x + r(x)`.
struct Anderson {
    depth: usize,
    xs: Vec<Vec<f64>>,
    rs: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Anderson {
            depth,
            xs: Vec::new(),
            rs: Vec::new(),
        }
    }

    /// Next iterate from the current point and its update `r`.
    fn next(&mut self, x: &[f64], r: &[f64]) -> Vec<f64> {
        let plain: Vec<f64> = x.iter().zip(r).map(|(a, b)| a + b).collect();
        if self.depth == 0 {
            return plain;
        }
        self.xs.push(x.to_vec());
        self.rs.push(r.to_vec());
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.rs.remove(0);
        }
        let m = self.xs.len() - 1;
        if m == 0 {
            return plain;
        }
        // Columns dR_j = r_{j+1} - r_j, dG_j = dX_j + dR_j, orthogonalized
        // together by modified Gram-Schmidt on dR.
        let diff = |v: &[Vec<f64>], j: usize| -> Vec<f64> { v[j + 1].iter().zip(&v[j]).map(|(a, b)| a - b).collect() };
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut gcols: Vec<Vec<f64>> = Vec::with_capacity(m);
        for j in 0..m {
            let mut dr = diff(&self.rs, j);
            let dx = diff(&self.xs, j);
            let mut dg: Vec<f64> = dx.iter().zip(&dr).map(|(a, b)| a + b).collect();
            for (qi, gi) in q.iter().zip(&gcols) {
                let c = crate::linalg::dot(qi, &dr);
                dr.iter_mut().zip(qi).for_each(|(v, w)| *v -= c * w);
                dg.iter_mut().zip(gi).for_each(|(v, w)| *v -= c * w);
            }
            let n = crate::linalg::dot(&dr, &dr).sqrt();
            if n < 1e-14 * crate::linalg::dot(r, r).sqrt().max(f64::MIN_POSITIVE) {
                continue;
            }
            q.push(dr.iter().map(|v| v / n).collect());
            gcols.push(dg.iter().map(|v| v / n).collect());
        }
        let mut out = plain;
        for (qi, gi) in q.iter().zip(&gcols) {
            let c = crate::linalg::dot(qi, r);
            out.iter_mut().zip(gi).for_each(|(v, w)| *v -= c * w);
        }
        out
    }
}

impl NewtonReport {
    /// Largest `|coefficient|` of mode `k` relative to all other modes.
    pub fn dominance(&self, k: usize) -> f64 {
        let amp = |(a, b): (f64, f64)| a.hypot(b);
        let main = amp(self.f.modes[k - 1]);
        let other = self
            .f
            .modes
            .iter()
            .enumerate()
            .filter(|(i, _)| i + 1 != k)
            .map(|(_, &m)| amp(m))
            .fold(0.0, f64::max);
        main / other.max(f64::MIN_POSITIVE)
    }
}

/// Outcome of the first-order consistency sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderSweep {
    pub eps: Vec<f64>,
    /// `||f(eps g0) - eps f_lin||` in coefficient norm.
    pub deviation: Vec<f64>,
    /// Least-squares slope of `log deviation` against `log eps`.
    pub slope: f64,
    pub f_lin: Perturbation,
}

/// Checks `f(eps g0) = eps f_lin + O(eps^2)`; `f_lin` is the derivative of
/// `eps -> f(eps g0)` at 0, taken by a central difference with step `eta`.
pub fn first_order_sweep(
    g0: &Perturbation,
    r_inner: f64,
    cond: &Conductivity,
    params: &EllipticParams,
    opts: &NewtonOptions,
    eps: &[f64],
    eta: f64,
) -> Result<FirstOrderSweep> {
    let (base, jac) = frozen_jacobian(r_inner, cond, params, opts.kmax, opts.radial_cells)?;
    let reference = Arc::new(ReferenceMesh::disk(r_inner, opts.resolution)?);
    let solve = |s: f64| -> Result<Perturbation> {
        newton_solve_with(&g0.scaled(s), &reference, cond, params, opts, base.lambda_serrin, &jac).and_then(|r| {
            if r.converged {
                Ok(r.f)
            } else {
                Err(Error::numerical("first-order sweep: Newton did not converge", *r.history.last().unwrap()))
            }
        })
    };
    let mut amps = vec![eta, -eta];
    amps.extend_from_slice(eps);
    let sols: Vec<Result<Perturbation>> = amps.par_iter().map(|&s| solve(s)).collect();
    let sols: Vec<Perturbation> = sols.into_iter().collect::<Result<_>>()?;
    let f_lin = sols[0].add_scaled(&sols[1], -1.0).scaled(0.5 / eta);
    let deviation: Vec<f64> = eps
        .iter()
        .zip(&sols[2..])
        .map(|(&e, f)| f.add_scaled(&f_lin, -e).coefficient_norm())
        .collect();
    let slope = log_log_slope(eps, &deviation);
    Ok(FirstOrderSweep {
        eps: eps.to_vec(),
        deviation,
        slope,
        f_lin,
    })
}

pub(crate) fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

/// Shape derivative `u'` of the transmission problem for an interface
/// perturbation `f`, on the unperturbed mesh of `base`.
///
/// `u' = z` in the shell and `z - E` in the core, where `E` is the P1 lift of
/// the jump `u'(R-) - u'(R+)` times `f` supported on the core side of the
/// interface and `z` is continuous.
pub fn shape_derivative_direct(f: &Perturbation, base: &Field, radial: &RadialSolution) -> Result<Field> {
    let mesh = &base.mesh;
    let cond = &base.cond;
    let params = &base.params;
    let n = mesh.n_nodes();
    let jump = radial.interface_jump();
    let mut lift = vec![0.0; n];
    for (i, &v) in mesh.interface.iter().enumerate() {
        lift[v] = jump * f.eval(mesh.interface_angles[i]);
    }
    let asm = assemble(mesh, phase_sigma(cond));
    let a = asm.stiffness.axpby(1.0, &asm.mass, params.beta);

    // Core-only operator applied to the lift.
    let mut core = TripletBuilder::with_capacity(n, 9 * mesh.triangles().len());
    for (e, t) in mesh.triangles().iter().enumerate() {
        if mesh.phase(e) != Phase::Core {
            continue;
        }
        let (gr, area) = crate::fem::p1_gradients(&mesh.vertices, t);
        for p in 0..3 {
            for q in 0..3 {
                let k = cond.sigma_c * area * (gr[p][0] * gr[q][0] + gr[p][1] * gr[q][1]);
                let m = area * if p == q { 1.0 / 6.0 } else { 1.0 / 12.0 };
                core.add(t[p], t[q], k + params.beta * m);
            }
        }
    }
    let rhs = core.build().mul(&lift);
    let solver = DirichletSolver::new(a.clone(), &mesh.boundary)?;
    let z = solver.solve(&rhs, &vec![0.0; n]);
    let az = a.mul(&z);
    let loads: Vec<f64> = mesh.boundary.iter().map(|&b| az[b] - rhs[b]).collect();
    let flux = boundary_density(mesh, &loads)?;

    // Nodal values: interface nodes carry the shell trace z; the core trace
    // is z - E there.
    let values = z;
    Ok(Field {
        mesh: mesh.clone(),
        values,
        flux,
        cond: *cond,
        params: *params,
    })
}

/// Comparison of the direct shape derivative with the modal prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeDerivativeCheck {
    pub k: usize,
    pub predicted: f64,
    /// Relative L2 difference between `d_nu u'` and `s_k'(1) cos k theta`.
    pub relative_l2: f64,
    /// Largest modal coefficient of the flux outside mode `k`, relative to mode `k`.
    pub cross_mode: f64,
}

pub fn check_shape_derivative(k: usize, base: &Field, radial: &RadialSolution, s_prime: f64) -> Result<ShapeDerivativeCheck> {
    let f = Perturbation::cosine(k, 1.0, k, radial.config.r_inner);
    let du = shape_derivative_direct(&f, base, radial)?;
    let mesh = &base.mesh;
    let sigma_s = base.cond.sigma_s;
    let dn: Vec<f64> = du.flux.iter().map(|q| q / sigma_s).collect();
    let pred: Vec<f64> = mesh.boundary_angles.iter().map(|&t| s_prime * (k as f64 * t).cos()).collect();
    let m = dn.len() as f64;
    let num: f64 = dn.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / m;
    let den: f64 = pred.iter().map(|b| b * b).sum::<f64>() / m;
    let (_, modes) = fourier_piecewise_linear(&mesh.boundary_angles, &dn, 2 * k + 4);
    let main = modes[k - 1].0.hypot(modes[k - 1].1);
    let cross = modes
        .iter()
        .enumerate()
        .filter(|(i, _)| i + 1 != k)
        .map(|(_, c)| c.0.hypot(c.1))
        .fold(0.0, f64::max);
    Ok(ShapeDerivativeCheck {
        k,
        predicted: s_prime,
        relative_l2: (num / den).sqrt(),
        cross_mode: cross / main,
    })
}

/// `L2` distance between `u'` and the difference quotient `(u_{tf} - u)/t`,
/// over the reference nodes farther than `t |f| + 2h` from the interface.
///
/// `u_{tf}(x)` is read off the co-moving node `y = x + t phi(x)` of the
/// perturbed mesh with the first-order correction `-grad u (y - x)`, using the
/// radial gradient; plain P1 interpolation at `x` would add an `O(t h)` error
/// that does not vanish after division by `t`.
pub fn difference_quotient_error(
    f: &Perturbation,
    t: f64,
    base: &Field,
    du: &Field,
    radial: &RadialSolution,
) -> Result<f64> {
    let mesh = &base.mesh;
    let reference = mesh.reference.clone();
    let r_inner = reference.r_inner;
    let g = Perturbation::zero(f.kmax(), 1.0);
    let pert = evaluate(&reference, &f.scaled(t), &g, &base.cond, &base.params, 0.0)?;
    let band = t * f.sup_norm() + 2.0 * reference.h();
    let mut lumped = vec![0.0; mesh.n_nodes()];
    for tri in mesh.triangles() {
        let a = crate::fem::signed_area(&mesh.vertices, tri);
        for &v in tri {
            lumped[v] += a / 3.0;
        }
    }
    let mut num = 0.0;
    let mut wsum = 0.0;
    for (v, &x) in mesh.vertices.iter().enumerate() {
        let r = x[0].hypot(x[1]);
        if (r - r_inner).abs() < band || r == 0.0 {
            continue;
        }
        let y = pert.mesh.vertices[v];
        let ur = crate::fv1d::interpolate_linear(&radial.config.grid, &radial.deriv, r);
        let shift = ur * ((y[0] - x[0]) * x[0] + (y[1] - x[1]) * x[1]) / r;
        let q = (pert.values[v] - shift - base.values[v]) / t;
        // the lift only lives on interface nodes, which the band excludes
        let d = du.values[v] - q;
        num += lumped[v] * d * d;
        wsum += lumped[v];
    }
    Ok((num / wsum).sqrt())
}

/// Polyline of a perturbed circle for plotting.
pub fn write_polyline_csv<W: Write>(p: &Perturbation, samples: usize, mut out: W) -> std::io::Result<()> {
    writeln!(out, "theta,x,y")?;
    for i in 0..=samples {
        let t = 2.0 * PI * i as f64 / samples as f64;
        let r = p.base_radius + p.eval(t);
        writeln!(out, "{t:.17e},{:.17e},{:.17e}", r * t.cos(), r * t.sin())?;
    }
    Ok(())
}

//! Concentric two-phase elliptic problems on the unit ball.
//!
//! The base problem is `div(sigma grad u) = beta u - gamma` in `B_1` with
//! `sigma = sigma_c` in `B_R` and `sigma_s` in the shell, `u = c` on the sphere.
//! The mode problems are the radial parts of the shape derivative: for each
//! spherical harmonic degree `k` the profile `s_k` solves
//! `sigma (s'' + (N-1)/r s' - k(k+N-2)/r^2 s) = beta s` in each phase, jumps by
//! `u'(R-) - u'(R+)` across the interface with continuous flux, and vanishes at
//! `r = 0` and `r = 1`.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fv1d::{uniform_nodes, Layered1d, Weight};
use crate::linalg::Tridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conductivity {
    pub sigma_c: f64,
    pub sigma_s: f64,
    pub sigma_m: f64,
}

impl Conductivity {
    pub fn new(sigma_c: f64, sigma_s: f64, sigma_m: f64) -> Result<Self> {
        let c = Conductivity {
            sigma_c,
            sigma_s,
            sigma_m,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("sigma_c", self.sigma_c),
            ("sigma_s", self.sigma_s),
            ("sigma_m", self.sigma_m),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn is_two_phase(&self) -> bool {
        self.sigma_c != self.sigma_s
    }
}

impl Default for Conductivity {
    fn default() -> Self {
        Conductivity {
            sigma_c: 1.0,
            sigma_s: 1.0,
            sigma_m: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipticParams {
    pub beta: f64,
    pub gamma: f64,
    pub c_bdry: f64,
    pub dim: usize,
}

impl EllipticParams {
    pub fn torsion(dim: usize) -> Self {
        EllipticParams {
            beta: 0.0,
            gamma: 1.0,
            c_bdry: 0.0,
            dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::config(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !self.c_bdry.is_finite() {
            return Err(Error::config("c_bdry must be finite"));
        }
        if self.dim < 2 {
            return Err(Error::config(format!("dimension must be >= 2, got {}", self.dim)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialConfig {
    pub r_inner: f64,
    pub r_outer: f64,
    pub grid: Vec<f64>,
    interface: usize,
}

impl RadialConfig {
    pub fn new(r_inner: f64, grid: Vec<f64>) -> Result<Self> {
        if !(r_inner > 0.0 && r_inner < 1.0) {
            return Err(Error::config(format!("core radius must lie in (0,1), got {r_inner}")));
        }
        if grid.len() < 3 || grid[0] != 0.0 || *grid.last().unwrap() != 1.0 {
            return Err(Error::config("grid must run from 0 to 1 with at least 3 nodes"));
        }
        if !grid.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::config("grid must be strictly increasing"));
        }
        let interface = grid
            .iter()
            .position(|&r| r == r_inner)
            .ok_or_else(|| Error::config(format!("core radius {r_inner} is not a grid node")))?;
        Ok(RadialConfig {
            r_inner,
            r_outer: 1.0,
            grid,
            interface,
        })
    }

    /// Piecewise uniform grid with about `cells` cells, split between the phases
    /// in proportion to their widths.
    pub fn uniform(r_inner: f64, cells: usize) -> Result<Self> {
        if !(r_inner > 0.0 && r_inner < 1.0) {
            return Err(Error::config(format!("core radius must lie in (0,1), got {r_inner}")));
        }
        let nc = ((cells as f64 * r_inner).round() as usize).max(1);
        let ns = cells.saturating_sub(nc).max(1);
        let mut grid = uniform_nodes(0.0, r_inner, nc);
        grid.pop();
        grid.extend(uniform_nodes(r_inner, 1.0, ns));
        Self::new(r_inner, grid)
    }

    /// Bisects every cell.
    pub fn refine(&self) -> Self {
        let mut grid = Vec::with_capacity(2 * self.grid.len());
        for w in self.grid.windows(2) {
            grid.push(w[0]);
            grid.push(0.5 * (w[0] + w[1]));
        }
        grid.push(1.0);
        RadialConfig {
            r_inner: self.r_inner,
            r_outer: 1.0,
            interface: 2 * self.interface,
            grid,
        }
    }

    pub fn interface_index(&self) -> usize {
        self.interface
    }

    pub fn max_spacing(&self) -> f64 {
        self.grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    pub(crate) fn layered(&self, cond: &Conductivity, dim: usize) -> Layered1d {
        let r_in = self.r_inner;
        Layered1d::from_rule(self.grid.clone(), Weight::Radial(dim), |r| {
            if r < r_in {
                cond.sigma_c
            } else {
                cond.sigma_s
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSolution {
    pub config: RadialConfig,
    pub params: EllipticParams,
    pub cond: Conductivity,
    pub values: Vec<f64>,
    /// `u'(r_i)`; at the interface node this is the core-side value.
    pub deriv: Vec<f64>,
    /// `(u'(R-), u'(R+))`.
    pub interface_deriv: (f64, f64),
    pub lambda_serrin: f64,
    /// `sigma_s u'(1)`.
    pub boundary_flux: f64,
    /// Relative residual of the discrete equations.
    pub residual: f64,
    /// Infinity-norm condition number of the linear system.
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSolution {
    pub k: usize,
    pub eig: f64,
    /// `s_k(r_i)`; at the interface node this is the core-side value.
    pub values: Vec<f64>,
    /// `s_k(R+)`.
    pub value_shell_side: f64,
    /// `(s_k'(R-), s_k'(R+))`.
    pub interface_deriv: (f64, f64),
    pub deriv_at_one: f64,
    /// Jump `s_k(R+) - s_k(R-)` that was imposed.
    pub jump: f64,
    pub condition: f64,
}

pub fn solve_base_radial(
    params: &EllipticParams,
    cond: &Conductivity,
    config: &RadialConfig,
) -> Result<RadialSolution> {
    params.validate()?;
    cond.validate()?;
    let n = params.dim;
    let fv = config.layered(cond, n);
    let nn = fv.n_nodes();
    let last = nn - 1;
    let vol = fv.volumes();
    let mut a = fv.stiffness();
    for (d, v) in a.diag.iter_mut().zip(&vol) {
        *d += params.beta * v;
    }
    let mut rhs: Vec<f64> = vol.iter().map(|v| params.gamma * v).collect();

    // Dirichlet row at r = 1 eliminated into the last free equation.
    let free = Tridiagonal {
        lower: a.lower[..last].to_vec(),
        diag: a.diag[..last].to_vec(),
        upper: a.upper[..last].to_vec(),
    };
    rhs[last - 1] -= a.upper[last - 1] * params.c_bdry;
    rhs.truncate(last);
    let mut u = free.solve(&rhs)?;
    u.push(params.c_bdry);

    let au = free.mul(&u[..last]);
    let mut res = 0.0_f64;
    let mut scale = 0.0_f64;
    for i in 0..last {
        let ri = au[i] + if i == last - 1 { a.upper[i] * params.c_bdry } else { 0.0 } - params.gamma * vol[i];
        res = res.max(ri.abs());
        scale = scale.max((params.gamma * vol[i]).abs());
    }
    let residual = res / scale.max(f64::MIN_POSITIVE);
    if !residual.is_finite() || residual > 1e-8 {
        return Err(Error::numerical("radial base solve inaccurate", residual));
    }
    let condition = free.condition_inf_mmatrix()?;

    let src = |i: usize| params.beta * u[i] - params.gamma;
    let mut deriv = vec![0.0; nn];
    let mut interface_deriv = (0.0, 0.0);
    let ii = config.interface_index();
    for i in 1..nn {
        let (l, r) = fv.one_sided_derivatives(&u, i, src(i));
        deriv[i] = match (l, r) {
            (Some(l), Some(r)) => {
                if i == ii {
                    interface_deriv = (l, r);
                    l
                } else {
                    0.5 * (l + r)
                }
            }
            (Some(l), None) => l,
            (None, Some(r)) => r,
            (None, None) => 0.0,
        };
    }
    let boundary_flux = cond.sigma_s * deriv[last];
    let integral: f64 = u.iter().zip(&vol).map(|(u, v)| u * v).sum();
    let lambda_serrin = params.gamma / n as f64 - params.beta * integral;

    Ok(RadialSolution {
        config: config.clone(),
        params: *params,
        cond: *cond,
        values: u,
        deriv,
        interface_deriv,
        lambda_serrin,
        boundary_flux,
        residual,
        condition,
    })
}

impl RadialSolution {
    /// Interface jump data `u'(R-) - u'(R+)` for the mode problems.
    pub fn interface_jump(&self) -> f64 {
        self.interface_deriv.0 - self.interface_deriv.1
    }

    /// Value at radius `r` by linear interpolation.
    pub fn value_at(&self, r: f64) -> f64 {
        crate::fv1d::interpolate_linear(&self.config.grid, &self.values, r)
    }

    /// `int_{B_1} u` divided by the area of the unit sphere.
    pub fn weighted_integral(&self) -> f64 {
        let fv = self.config.layered(&self.cond, self.params.dim);
        fv.volumes().iter().zip(&self.values).map(|(v, u)| v * u).sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "r,phase,value,derivative")?;
        let ii = self.config.interface_index();
        for (i, &r) in self.config.grid.iter().enumerate() {
            let phase = if i <= ii { "core" } else { "shell" };
            writeln!(out, "{r:.17e},{phase},{:.17e},{:.17e}", self.values[i], self.deriv[i])?;
            if i == ii {
                writeln!(out, "{r:.17e},shell,{:.17e},{:.17e}", self.values[i], self.interface_deriv.1)?;
            }
        }
        Ok(())
    }
}

/// Mode solve on the base grid and its bisection, with the boundary
/// derivative extrapolated between the two.
pub fn solve_mode(
    k: usize,
    base: &RadialSolution,
    params: &EllipticParams,
    cond: &Conductivity,
) -> Result<ModeSolution> {
    if k == 0 {
        return Err(Error::config("mode k = 0 is excluded (perturbations have zero mean)"));
    }
    if params != &base.params || cond != &base.cond {
        return Err(Error::config("mode solve parameters differ from the base solution"));
    }
    let coarse = solve_mode_with_jump(k, base, base.interface_jump())?;
    let fine_cfg = base.config.refine();
    let fine_base = solve_base_radial(params, cond, &fine_cfg)?;
    let fine = solve_mode_with_jump(k, &fine_base, fine_base.interface_jump())?;
    let mut out = coarse;
    out.deriv_at_one = (4.0 * fine.deriv_at_one - out.deriv_at_one) / 3.0;
    Ok(out)
}

/// Single-grid mode solve with prescribed jump `s(R+) - s(R-)`.
pub fn solve_mode_with_jump(k: usize, base: &RadialSolution, jump: f64) -> Result<ModeSolution> {
    if k == 0 {
        return Err(Error::config("mode k = 0 is excluded (perturbations have zero mean)"));
    }
    let dim = base.params.dim;
    let beta = base.params.beta;
    let eig = (k * (dim + k - 2)) as f64;
    let fv = base.config.layered(&base.cond, dim);
    let nn = fv.n_nodes();
    let last = nn - 1;
    let ii = base.config.interface_index();

    // Unknowns are nodes 1..last-1; s(0) = 0 and s(1) = 0.
    let m = last - 1;
    let mut a = Tridiagonal::zeros(m);
    let mut rhs = vec![0.0; m];
    let mut react_half = vec![(0.0, 0.0); nn];
    for i in 1..last {
        let (vl, vr) = fv.half_volumes(i, 0);
        let (wl, wr) = fv.half_volumes(i, -2);
        let cl = beta * vl + fv.cell_sigma[i - 1] * eig * wl;
        let cr = beta * vr + fv.cell_sigma[i] * eig * wr;
        react_half[i] = (cl, cr);
        let row = i - 1;
        let fl = fv.face(i - 1);
        let fr = fv.face(i);
        a.diag[row] = fl + fr + cl + cr;
        if i > 1 {
            a.lower[row] = -fl;
        }
        if i + 1 < last {
            a.upper[row] = -fr;
        }
    }
    let fr = fv.face(ii);
    rhs[ii - 1] -= (fr + react_half[ii].1) * jump;
    if ii + 1 < last {
        rhs[ii] += fr * jump;
    }
    let s_inner = a.solve(&rhs)?;
    let condition = a.condition_inf_mmatrix()?;
    let mut s = Vec::with_capacity(nn);
    s.push(0.0);
    s.extend_from_slice(&s_inner);
    s.push(0.0);

    // One-sided derivatives from half-cell balances; the shell side uses s(R+).
    let (cl, cr) = react_half[ii];
    let w_r = fv.weight.at(base.config.r_inner);
    let s_minus = s[ii];
    let s_plus = s_minus + jump;
    let flux_left = fv.face(ii - 1) * (s_minus - s[ii - 1]) + cl * s_minus;
    let flux_right = fv.face(ii) * (s[ii + 1] - s_plus) - cr * s_plus;
    let interface_deriv = (
        flux_left / (fv.cell_sigma[ii - 1] * w_r),
        flux_right / (fv.cell_sigma[ii] * w_r),
    );
    let face_last = if last - 1 == ii {
        fv.face(last - 1) * (0.0 - s_plus)
    } else {
        fv.face(last - 1) * (0.0 - s[last - 1])
    };
    let deriv_at_one = face_last / fv.cell_sigma[last - 1];

    Ok(ModeSolution {
        k,
        eig,
        values: s,
        value_shell_side: s_plus,
        interface_deriv,
        deriv_at_one,
        jump,
        condition,
    })
}

impl ModeSolution {
    pub fn write_csv<W: Write>(&self, config: &RadialConfig, mut out: W) -> std::io::Result<()> {
        writeln!(out, "r,phase,value,derivative")?;
        let ii = config.interface_index();
        let g = &config.grid;
        let last = g.len() - 1;
        for (i, &r) in g.iter().enumerate() {
            let phase = if i <= ii { "core" } else { "shell" };
            let d = if i == ii {
                self.interface_deriv.0
            } else if i == last {
                self.deriv_at_one
            } else if i == 0 {
                0.0
            } else {
                let left = if i - 1 == ii { self.value_shell_side } else { self.values[i - 1] };
                (self.values[i + 1] - left) / (g[i + 1] - g[i - 1])
            };
            writeln!(out, "{r:.17e},{phase},{:.17e},{d:.17e}", self.values[i])?;
            if i == ii {
                writeln!(
                    out,
                    "{r:.17e},shell,{:.17e},{:.17e}",
                    self.value_shell_side, self.interface_deriv.1
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertibilityEntry {
    pub k: usize,
    pub deriv_at_one: f64,
    pub flagged: bool,
    pub condition: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvertibilityReport {
    pub threshold: f64,
    pub entries: Vec<InvertibilityEntry>,
}

impl InvertibilityReport {
    pub fn any_flagged(&self) -> bool {
        self.entries.iter().any(|e| e.flagged)
    }

    pub fn all_flagged(&self) -> bool {
        self.entries.iter().all(|e| e.flagged)
    }

    pub fn derivs(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.deriv_at_one).collect()
    }
}

pub const DEFAULT_FLAG_THRESHOLD: f64 = 1e-8;
pub const MAX_K: usize = 64;

pub fn invertibility_report(base: &RadialSolution, k_max: usize) -> Result<InvertibilityReport> {
    invertibility_report_with_threshold(base, k_max, DEFAULT_FLAG_THRESHOLD)
}

pub fn invertibility_report_with_threshold(
    base: &RadialSolution,
    k_max: usize,
    threshold: f64,
) -> Result<InvertibilityReport> {
    if k_max == 0 {
        return Err(Error::config("k_max must be >= 1"));
    }
    if k_max > MAX_K {
        return Err(Error::config(format!("k_max is capped at {MAX_K}")));
    }
    let fine_cfg = base.config.refine();
    let fine_base = solve_base_radial(&base.params, &base.cond, &fine_cfg)?;
    let entries = (1..=k_max)
        .into_par_iter()
        .map(|k| {
            let c = solve_mode_with_jump(k, base, base.interface_jump())?;
            let f = solve_mode_with_jump(k, &fine_base, fine_base.interface_jump())?;
            let d = (4.0 * f.deriv_at_one - c.deriv_at_one) / 3.0;
            Ok(InvertibilityEntry {
                k,
                deriv_at_one: d,
                flagged: d.abs() < threshold,
                condition: c.condition.max(f.condition),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(InvertibilityReport { threshold, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_phase_torsion_is_exact() {
        let cfg = RadialConfig::uniform(0.5, 40).unwrap();
        let cond = Conductivity::default();
        let sol = solve_base_radial(&EllipticParams::torsion(2), &cond, &cfg).unwrap();
        for (r, u) in cfg.grid.iter().zip(&sol.values) {
            assert!((u - (1.0 - r * r) / 4.0).abs() < 1e-13);
        }
        assert!((sol.boundary_flux + 0.5).abs() < 1e-13);
        assert!((sol.lambda_serrin - 0.5).abs() < 1e-14);
    }

    #[test]
    fn interface_must_be_a_node() {
        assert!(RadialConfig::new(0.3, vec![0.0, 0.5, 1.0]).is_err());
    }

    #[test]
    fn lambda_equals_minus_boundary_flux() {
        let cfg = RadialConfig::uniform(0.4, 64).unwrap();
        let cond = Conductivity::new(3.0, 1.0, 1.0).unwrap();
        let p = EllipticParams {
            beta: 2.0,
            gamma: 1.5,
            c_bdry: 0.0,
            dim: 3,
        };
        let sol = solve_base_radial(&p, &cond, &cfg).unwrap();
        assert!((sol.lambda_serrin + sol.boundary_flux).abs() < 1e-13);
    }

    #[test]
    fn mode_zero_rejected() {
        let cfg = RadialConfig::uniform(0.5, 20).unwrap();
        let cond = Conductivity::new(2.0, 1.0, 1.0).unwrap();
        let p = EllipticParams::torsion(2);
        let base = solve_base_radial(&p, &cond, &cfg).unwrap();
        assert!(matches!(solve_mode(0, &base, &p, &cond), Err(Error::Config(_))));
    }

    #[test]
    fn refine_keeps_interface() {
        let cfg = RadialConfig::uniform(0.3, 10).unwrap().refine();
        assert_eq!(cfg.grid[cfg.interface_index()], 0.3);
    }
}

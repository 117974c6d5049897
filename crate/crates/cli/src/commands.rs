use std::f64::consts::PI;
use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};
use twophase::geometry::{curvatures, fit_weingarten, Boundary, BoundaryPoint, Curve};
use twophase::laplace::{
    elliptic_grid, flux_asymptotics, radial_elliptic_problem, solve_elliptic_lambda, solve_sweep, transform_field,
    BarrierData, LaplaceField, TubeBoundary,
};
use twophase::parabolic::{
    balance_moment, flux_trace, heat_content, interface_limit, moment_spread, richardson_sqrt, simulate, HeatField,
    HeatProblem, ProblemKind, Surface,
};
use twophase::radial::{invertibility_report_with_threshold, solve_base_radial, EllipticParams, RadialConfig};
use twophase::shape::{build_mesh, newton_solve, DomainMap, NewtonOptions, Perturbation};
use twophase::Conductivity;

use crate::config::*;
use crate::expr::parse_perturbation;
use crate::manifest::Outputs;
use crate::CliError;

/// What goes into the manifest besides the artifact list.
pub struct RunInfo {
    pub grid: Value,
    pub tolerances: Value,
}

fn geometric(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![t0];
    }
    let q = (t1 / t0).powf(1.0 / (n - 1) as f64);
    (0..n).map(|k| if k + 1 == n { t1 } else { t0 * q.powi(k as i32) }).collect()
}

fn csv_f64(v: f64) -> String {
    format!("{v:.17e}")
}

pub fn radial_defaults() -> RadialOpts {
    RadialOpts {
        sigma_s: Some(1.0),
        kmax: Some(8),
        beta: Some(0.0),
        gamma: Some(1.0),
        c_bdry: Some(0.0),
        cells: Some(4096),
        threshold: Some(twophase::radial::DEFAULT_FLAG_THRESHOLD),
        ..Default::default()
    }
}

pub fn radial(o: &RadialOpts, out: &mut Outputs) -> Result<RunInfo, CliError> {
    let (n, sigma_c, r) = (need(&o.n, "--n")?, need(&o.sigma_c, "--sigma-c")?, need(&o.r, "--r")?);
    let cond = Conductivity::new(sigma_c, need(&o.sigma_s, "--sigma-s")?, 1.0)?;
    let params = EllipticParams {
        beta: need(&o.beta, "--beta")?,
        gamma: need(&o.gamma, "--gamma")?,
        c_bdry: need(&o.c_bdry, "--c-bdry")?,
        dim: n,
    };
    let cells = need(&o.cells, "--cells")?;
    let cfg = RadialConfig::uniform(r, cells)?;
    let base = solve_base_radial(&params, &cond, &cfg)?;
    let threshold = need(&o.threshold, "--threshold")?;
    let rep = invertibility_report_with_threshold(&base, need(&o.kmax, "--kmax")?, threshold)?;
    out.write_csv("base.csv", |w| base.write_csv(w))?;
    out.write_csv("modes.csv", |w| {
        writeln!(w, "k,s_prime_at_one,condition,flagged")?;
        for e in &rep.entries {
            writeln!(w, "{},{},{},{}", e.k, csv_f64(e.deriv_at_one), csv_f64(e.condition), e.flagged)?;
        }
        Ok(())
    })?;
    out.write_json(
        "report.json",
        &json!({
            "boundary_flux": base.boundary_flux,
            "lambda_serrin": base.lambda_serrin,
            "interface_derivatives": [base.interface_deriv.0, base.interface_deriv.1],
            "invertibility": rep,
            "any_flagged": rep.any_flagged(),
        }),
    )?;
    Ok(RunInfo {
        grid: json!({ "cells": cells, "nodes": cfg.grid.len() }),
        tolerances: json!({ "flag_threshold": threshold }),
    })
}

pub fn counterexample_defaults() -> CounterexampleOpts {
    let d = NewtonOptions::default();
    CounterexampleOpts {
        r: Some(0.5),
        sigma_c: Some(2.0),
        sigma_s: Some(1.0),
        beta: Some(0.0),
        gamma: Some(1.0),
        kmax: Some(d.kmax),
        resolution: Some(d.resolution),
        tol: Some(d.tol),
        max_iter: Some(d.max_iter),
        anderson_depth: Some(d.anderson_depth),
        ..Default::default()
    }
}

#[derive(Serialize)]
struct CounterexampleReport<'a> {
    converged: bool,
    iterations: usize,
    residual_history: &'a [f64],
    nodal_history: &'a [f64],
    contraction: &'a [f64],
    lambda_reference: f64,
    jacobian: &'a [f64],
    g: &'a Perturbation,
    f: &'a Perturbation,
    modal_mean: &'a [f64],
}

pub fn counterexample(o: &CounterexampleOpts, out: &mut Outputs) -> Result<RunInfo, CliError> {
    let expr = need(&o.g, "--g")?;
    let kmax = need(&o.kmax, "--kmax")?;
    let g = parse_perturbation(&expr, kmax).map_err(CliError::Usage)?;
    let cond = Conductivity::new(need(&o.sigma_c, "--sigma-c")?, need(&o.sigma_s, "--sigma-s")?, 1.0)?;
    let params = EllipticParams {
        beta: need(&o.beta, "--beta")?,
        gamma: need(&o.gamma, "--gamma")?,
        c_bdry: 0.0,
        dim: 2,
    };
    let opts = NewtonOptions {
        kmax,
        resolution: need(&o.resolution, "--resolution")?,
        tol: need(&o.tol, "--tol")?,
        max_iter: need(&o.max_iter, "--max-iter")?,
        anderson_depth: need(&o.anderson_depth, "--anderson-depth")?,
        ..NewtonOptions::default()
    };
    let rep = newton_solve(&g, need(&o.r, "--r")?, &cond, &params, &opts)?;
    out.write_json(
        "report.json",
        &CounterexampleReport {
            converged: rep.converged,
            iterations: rep.iterations,
            residual_history: &rep.history,
            nodal_history: &rep.nodal_history,
            contraction: &rep.contraction,
            lambda_reference: rep.lambda_reference,
            jacobian: &rep.jacobian,
            g: &g,
            f: &rep.f,
            modal_mean: &rep.modal_mean,
        },
    )?;
    out.write_csv("residuals.csv", |w| {
        writeln!(w, "evaluation,residual,nodal")?;
        for (i, (a, b)) in rep.history.iter().zip(&rep.nodal_history).enumerate() {
            writeln!(w, "{i},{},{}", csv_f64(*a), csv_f64(*b))?;
        }
        Ok(())
    })?;
    out.write_csv("f_modes.csv", |w| {
        writeln!(w, "k,cos,sin")?;
        for (k, (a, b)) in rep.f.modes.iter().enumerate() {
            writeln!(w, "{},{},{}", k + 1, csv_f64(*a), csv_f64(*b))?;
        }
        Ok(())
    })?;
    if !rep.converged {
        return Err(CliError::NotConverged(format!(
            "no convergence in {} iterations (last residual {:.3e}); see report.json",
            rep.iterations,
            rep.history.last().copied().unwrap_or(f64::NAN)
        )));
    }
    Ok(RunInfo {
        grid: json!({ "resolution": opts.resolution, "radial_cells": opts.radial_cells, "kmax": kmax }),
        tolerances: json!({ "tol": opts.tol, "max_iter": opts.max_iter, "min_angle_deg": opts.min_angle_deg }),
    })
}

pub fn heatsim_defaults() -> HeatsimOpts {
    HeatsimOpts {
        problem: Some("radial-dirichlet".into()),
        n: Some(2),
        r: Some(0.5),
        sigma_c: Some(2.0),
        sigma_s: Some(1.0),
        sigma_m: Some(1.0),
        eps: Some(0.0),
        resolution: Some(32),
        t0: Some(1e-3),
        t1: Some(1.0),
        nt: Some(7),
        rel_step: Some(twophase::parabolic::TimeStepping::default().rel_step),
        ball: Some(0.15),
        ..Default::default()
    }
}

fn ring_moments(f: &HeatField, rho: f64, r: f64) -> twophase::Result<Vec<twophase::parabolic::BalanceMoment>> {
    (0..8)
        .map(|k| {
            let a = k as f64 * PI / 4.0;
            let nu = [a.cos(), a.sin()];
            balance_moment(f, [rho * nu[0], rho * nu[1]], nu, r)
        })
        .collect()
}

pub fn heatsim(o: &HeatsimOpts, out: &mut Outputs) -> Result<RunInfo, CliError> {
    let cond = Conductivity::new(
        need(&o.sigma_c, "--sigma-c")?,
        need(&o.sigma_s, "--sigma-s")?,
        need(&o.sigma_m, "--sigma-m")?,
    )?;
    let times = match &o.times {
        Some(t) => t.clone(),
        None => geometric(need(&o.t0, "--t0")?, need(&o.t1, "--t1")?, need(&o.nt, "--nt")?),
    };
    let (n, r) = (need(&o.n, "--n")?, need(&o.r, "--r")?);
    let kind = need(&o.problem, "--problem")?;
    let mut p = match kind.as_str() {
        "radial-dirichlet" => HeatProblem::radial_dirichlet(r, n, cond, times),
        "radial-cauchy" => HeatProblem::radial_cauchy(r, n, cond, times),
        "flat-cauchy" => HeatProblem::flat_cauchy(cond, times),
        "planar-dirichlet" => {
            let eps = need(&o.eps, "--eps")?;
            let f = if eps == 0.0 { Perturbation::zero(8, r) } else { Perturbation::cosine(2, eps, 8, r) };
            let map = DomainMap::new(&f, &Perturbation::zero(8, 1.0))?;
            HeatProblem::planar_dirichlet(build_mesh(&map, need(&o.resolution, "--resolution")?)?, cond, times)
        }
        other => return Err(CliError::Usage(format!("unknown problem '{other}'"))),
    };
    p.stepping.rel_step = need(&o.rel_step, "--rel-step")?;
    let field = simulate(&p)?;

    let mut summary = json!({
        "steps": field.steps,
        "halvings": field.halvings,
        "min_interior": field.min_interior,
        "max_interior": field.max_interior,
    });
    let trace = flux_trace(&field, Surface::Boundary)?;
    out.write_csv("flux.csv", |w| trace.write_csv(w))?;
    summary["flux_max_scaled_spread"] = json!(trace.max_scaled_spread());
    if kind == "radial-cauchy" || kind == "flat-cauchy" {
        let pts: Vec<[f64; 2]> = if kind == "flat-cauchy" {
            vec![[0.0, 0.0]]
        } else {
            (0..4).map(|k| [(k as f64 * PI / 2.0).cos(), (k as f64 * PI / 2.0).sin()]).collect()
        };
        let lim = interface_limit(&field, &pts)?;
        out.write_csv("interface.csv", |w| {
            writeln!(w, "x,y,t,value")?;
            for l in &lim {
                for (t, v) in l.times.iter().zip(&l.values) {
                    writeln!(w, "{},{},{},{}", l.point[0], l.point[1], csv_f64(*t), csv_f64(*v))?;
                }
            }
            Ok(())
        })?;
        summary["interface_limits"] = json!(lim.iter().map(|l| json!({"point": l.point, "limit": l.limit, "flagged": l.flagged})).collect::<Vec<_>>());
    } else {
        let ball = need(&o.ball, "--ball")?;
        let ms = ring_moments(&field, 0.95 - ball, ball)?;
        out.write_csv("balance.csv", |w| twophase::parabolic::write_balance_csv(&ms, w))?;
        summary["moment_spread"] = json!(moment_spread(&ms));
    }
    out.write_json("report.json", &summary)?;
    Ok(RunInfo {
        grid: json!({ "grid": p.grid, "nodes": field.values.first().map(|v| v.len()) }),
        tolerances: json!({ "stepping": p.stepping }),
    })
}

pub fn asymptotics_defaults() -> AsymptoticsOpts {
    AsymptoticsOpts {
        r_small: Some(0.2),
        r_large: Some(0.3),
        r_core: Some(0.25),
        sigma_c: Some(2.0),
        sigma_s: Some(1.0),
        t0: Some(1e-6),
        ratio: Some(4.0),
        nt: Some(6),
        h_min: Some(1e-5),
    }
}

pub fn asymptotics(o: &AsymptoticsOpts, out: &mut Outputs) -> Result<RunInfo, CliError> {
    let (r1, r2) = (need(&o.r_small, "--r-small")?, need(&o.r_large, "--r-large")?);
    if !(r1 > 0.0 && r1 < r2 && r2 < 1.0) {
        return Err(CliError::Usage("need 0 < r-small < r-large < 1".into()));
    }
    let cond = Conductivity::new(need(&o.sigma_c, "--sigma-c")?, need(&o.sigma_s, "--sigma-s")?, 1.0)?;
    let (t0, q, nt) = (need(&o.t0, "--t0")?, need(&o.ratio, "--ratio")?, need(&o.nt, "--nt")?);
    let times: Vec<f64> = (0..nt).map(|k| t0 * q.powi(k as i32)).collect();
    let mut p = HeatProblem::radial_dirichlet(need(&o.r_core, "--r-core")?, 2, cond, times);
    p.grid.h_min = need(&o.h_min, "--h-min")?;
    let f = simulate(&p)?;
    let small = heat_content(&f, [1.0 - r1, 0.0], r1)?;
    let large = heat_content(&f, [1.0 - r2, 0.0], r2)?;
    let ratio: Vec<f64> = small.rescaled.iter().zip(&large.rescaled).map(|(a, b)| a / b).collect();
    let (limit, flagged) = richardson_sqrt(&f.times, &ratio)?;
    // rescaled content ~ Pi^{-1/2} with Pi = 1/r - kappa on the unit circle
    let target = ((1.0 / r2 - 1.0) / (1.0 / r1 - 1.0)).sqrt();
    out.write_csv("content.csv", |w| {
        writeln!(w, "t,content_small,content_large,rescaled_ratio")?;
        for (j, t) in f.times.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                csv_f64(*t),
                csv_f64(small.values[j]),
                csv_f64(large.values[j]),
                csv_f64(ratio[j])
            )?;
        }
        Ok(())
    })?;
    out.write_json(
        "report.json",
        &json!({
            "limit": limit,
            "target": target,
            "relative_error": (limit - target).abs() / target,
            "flagged": flagged,
        }),
    )?;
    Ok(RunInfo {
        grid: json!({ "grid": p.grid }),
        tolerances: json!({ "stepping": p.stepping }),
    })
}

pub fn laplace_defaults() -> LaplaceOpts {
    LaplaceOpts {
        n: Some(2),
        r: Some(0.5),
        sigma_c: Some(2.0),
        sigma_s: Some(1.0),
        lambdas: Some(vec![100.0, 400.0, 1600.0, 6400.0]),
        method: Some("direct".into()),
        barrier: Some(true),
    }
}

pub fn laplace(o: &LaplaceOpts, out: &mut Outputs) -> Result<RunInfo, CliError> {
    let (n, r) = (need(&o.n, "--n")?, need(&o.r, "--r")?);
    let cond = Conductivity::new(need(&o.sigma_c, "--sigma-c")?, need(&o.sigma_s, "--sigma-s")?, 1.0)?;
    let lambdas = need(&o.lambdas, "--lambdas")?;
    if lambdas.is_empty() || lambdas.iter().any(|l| !(*l > 0.0)) {
        return Err(CliError::Usage("lambdas must be positive".into()));
    }
    let lmin = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let lmax = lambdas.iter().cloned().fold(0.0, f64::max);
    let grid = elliptic_grid(lmax.max(100.0), cond.sigma_s);
    let problem = radial_elliptic_problem(r, n, cond, ProblemKind::CauchyDirichlet, lmin, grid);
    let method = need(&o.method, "--method")?;
    let fields: Vec<LaplaceField> = match method.as_str() {
        "direct" => solve_sweep(&problem, &lambdas)?,
        "transform" => {
            let horizon = 20.0 / lmin;
            let mut p = HeatProblem::radial_dirichlet(r, n, cond, Vec::new());
            p.grid = grid;
            // the flux is a difference over h_min, so the head [0, t0] must be
            // negligible on that scale
            let mut t = 1e-2 * grid.h_min * grid.h_min / cond.sigma_s.max(cond.sigma_c);
            while t < horizon {
                p.times.push(t);
                t *= 1.01;
            }
            p.times.push(horizon);
            p.stepping.dt_min = p.times[0] / 10.0;
            let field = simulate(&p)?;
            lambdas.iter().map(|&l| transform_field(&field, l)).collect::<twophase::Result<_>>()?
        }
        other => return Err(CliError::Usage(format!("unknown method '{other}'"))),
    };
    let fit = flux_asymptotics(&fields)?;
    out.write_csv("flux_asymptotics.csv", |w| fit.write_csv(w))?;
    let mut report = json!({ "fit": fit });
    if need(&o.barrier, "--barrier")? {
        let mut b = BarrierData::new(TubeBoundary::Sphere { dim: n }, cond.sigma_s, 4, 24)?;
        let delta0 = b.delta0;
        let lgrid: Vec<f64> = (0..17).map(|k| 2f64.powi(k)).collect();
        let edge = |l: f64| {
            let p = radial_elliptic_problem(r, n, cond, ProblemKind::CauchyDirichlet, l, elliptic_grid(l.max(100.0), cond.sigma_s));
            solve_elliptic_lambda(&p, l)?.value_at(&[1.0 - delta0, 0.0])
        };
        let l0 = b.search_lambda0(&lgrid, edge)?;
        let mut checks = Vec::new();
        for f in fields.iter().filter(|f| f.lambda >= l0) {
            let v = b.sandwich_violation(f.lambda, |x| f.value_at(&x))?;
            let (lo, hi) = b.bound_chain(0.0, f.lambda);
            checks.push(json!({ "lambda": f.lambda, "sandwich_violation": v, "bound_chain": [lo, hi] }));
        }
        report["barrier"] = json!({
            "delta0": b.delta0,
            "eta": b.eta,
            "lambda0": l0,
            "eikonal_error": b.max_eikonal_error(),
            "checks": checks,
        });
    }
    out.write_json("report.json", &report)?;
    Ok(RunInfo {
        grid: json!({ "grid": grid }),
        tolerances: json!({ "tail_tol": twophase::laplace::DEFAULT_TAIL_TOL }),
    })
}

pub fn geometry_defaults() -> GeometryOpts {
    GeometryOpts {
        shape: Some("ellipse".into()),
        a: Some(2.0),
        b: Some(1.0),
        rho: Some(1.0),
        samples: Some(16),
        ball: Some(0.05),
        radii: Some(vec![0.04, 0.02, 0.01]),
    }
}

pub fn geometry(o: &GeometryOpts, out: &mut Outputs) -> Result<RunInfo, CliError> {
    let shape = need(&o.shape, "--shape")?;
    let curve = match shape.as_str() {
        "circle" => Curve::circle([0.0, 0.0], need(&o.rho, "--rho")?),
        "ellipse" => Curve::ellipse(need(&o.a, "--a")?, need(&o.b, "--b")?, 129)?,
        other => return Err(CliError::Usage(format!("unknown shape '{other}'"))),
    };
    let b = Boundary::Curve(curve);
    let m = need(&o.samples, "--samples")?;
    let params: Vec<f64> = (0..m).map(|i| 2.0 * PI * i as f64 / m as f64).collect();
    let data = curvatures(&b, &params, need(&o.ball, "--ball")?);
    out.write_csv("curvature.csv", |w| data.write_csv(w))?;
    let radii = need(&o.radii, "--radii")?;
    let fits = params
        .iter()
        .map(|&s| fit_weingarten(&b, BoundaryPoint::Param(s), &radii))
        .collect::<twophase::Result<Vec<_>>>()?;
    out.write_csv("weingarten.csv", |w| {
        writeln!(w, "param,c,flagged")?;
        for (s, f) in params.iter().zip(&fits) {
            writeln!(w, "{},{},{}", csv_f64(*s), csv_f64(f.c), f.flagged)?;
        }
        Ok(())
    })?;
    let max = fits.iter().map(|f| f.c).fold(f64::MIN, f64::max);
    let min = fits.iter().map(|f| f.c).fold(f64::MAX, f64::min);
    out.write_json(
        "report.json",
        &json!({
            "c_min": min,
            "c_max": max,
            "relative_variation": (max - min) / max.abs(),
            "any_flagged": fits.iter().any(|f| f.flagged),
        }),
    )?;
    Ok(RunInfo {
        grid: json!({ "samples": m, "radii": radii }),
        tolerances: json!({}),
    })
}

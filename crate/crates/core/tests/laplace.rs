mod common;

use proptest::prelude::*;
use twophase::fem::fourier_piecewise_linear;
use twophase::geometry::Curve;
use twophase::laplace::*;
use twophase::parabolic::*;
use twophase::radial::{solve_base_radial, EllipticParams, RadialConfig};
use twophase::shape::Perturbation;
use twophase::special::bessel_i01_scaled;
use twophase::{Conductivity, Error};

fn cond(sc: f64, ss: f64, sm: f64) -> Conductivity {
    Conductivity::new(sc, ss, sm).unwrap()
}

fn geometric(t0: f64, t1: f64, q: f64) -> Vec<f64> {
    let mut v = vec![t0];
    while *v.last().unwrap() < t1 {
        let t = v.last().unwrap() * q;
        v.push(t);
    }
    v
}

const SWEEP: [f64; 4] = [100.0, 400.0, 1600.0, 6400.0];

fn dirichlet_problem(dim: usize, c: Conductivity, lambda_max: f64) -> HeatProblem {
    radial_elliptic_problem(
        0.5,
        dim,
        c,
        ProblemKind::CauchyDirichlet,
        1.0,
        elliptic_grid(lambda_max.max(100.0), c.sigma_s),
    )
}

fn dirichlet_sweep(dim: usize, c: Conductivity) -> Vec<LaplaceField> {
    solve_sweep(&dirichlet_problem(dim, c, 6400.0), &SWEEP).unwrap()
}

fn radial_boundary_series(f: &HeatField) -> Vec<f64> {
    let b = match &f.space {
        HeatSpace::Radial { boundary, .. } => *boundary,
        HeatSpace::Flat { interface, .. } => *interface,
        HeatSpace::Planar { .. } => unreachable!(),
    };
    f.values.iter().map(|u| u[b]).collect()
}

#[test]
fn bessel_series_oracle_agrees_with_library() {
    for x in [1e-3, 0.5, 2.0, 10.0, 40.0] {
        let (i0, i1) = bessel_i01_scaled(x);
        let e = (-x).exp();
        assert!((common::bessel_i_series(0, x) * e - i0).abs() < 1e-13 * i0.max(1e-300) + 1e-15);
        assert!((common::bessel_i_series(1, x) * e - i1).abs() < 1e-13 * i1.max(1e-300) + 1e-15);
    }
    // I_0'' + I_0'/x - I_0 = 0
    let (x, h) = (3.0, 1e-4);
    let i = |x: f64| common::bessel_i_series(0, x);
    let res = (i(x + h) - 2.0 * i(x) + i(x - h)) / (h * h) + (i(x + h) - i(x - h)) / (2.0 * h * x) - i(x);
    assert!(res.abs() < 1e-6);
}

#[test]
fn disk_profile_is_modified_bessel() {
    let c = cond(1.0, 1.0, 1.0);
    for lambda in [1.0, 100.0] {
        let f = solve_elliptic_lambda(&dirichlet_problem(2, c, lambda), lambda).unwrap();
        let k = f64::sqrt(lambda);
        let i0k = common::bessel_i_series(0, k);
        for r in [0.0, 0.3, 0.6, 0.9, 0.99] {
            let exact = common::bessel_i_series(0, k * r) / i0k;
            let got = f.value_at(&[r, 0.0]).unwrap();
            assert!((got - exact).abs() < 2e-5, "lambda {lambda} r {r}: {got} vs {exact}");
        }
        let d0 = k * common::bessel_i_series(1, k) / i0k;
        assert!((f.d0.unwrap() - d0).abs() < 1e-5 * d0, "lambda {lambda}: {} vs {d0}", f.d0.unwrap());
    }
}

#[test]
fn sphere_profile_is_sinh() {
    let c = cond(1.0, 1.0, 1.0);
    for lambda in [1.0, 100.0] {
        let f = solve_elliptic_lambda(&dirichlet_problem(3, c, lambda), lambda).unwrap();
        let k = f64::sqrt(lambda);
        for r in [0.05, 0.3, 0.6, 0.9, 0.99] {
            let exact = (k * r).sinh() / (r * k.sinh());
            let got = f.value_at(&[r, 0.0, 0.0]).unwrap();
            assert!((got - exact).abs() < 2e-5, "lambda {lambda} r {r}: {got} vs {exact}");
        }
        let d0 = k / k.tanh() - 1.0;
        assert!((f.d0.unwrap() - d0).abs() < 1e-5 * d0, "lambda {lambda}: {} vs {d0}", f.d0.unwrap());
    }
}

#[test]
fn small_lambda_gives_constant() {
    let f = solve_elliptic_lambda(&dirichlet_problem(2, cond(2.0, 1.0, 1.0), 1.0), 1e-8).unwrap();
    let (lo, hi) = f.interior_range();
    assert!(lo > 1.0 - 1e-8 && hi <= 1.0);
    assert!(f.d0.unwrap().abs() < 1e-8);
}

#[test]
fn two_phase_transmission_at_core() {
    let c = cond(2.0, 1.0, 1.0);
    let lambda = 30.0;
    let f = solve_elliptic_lambda(&dirichlet_problem(2, c, lambda), lambda).unwrap();
    let HeatSpace::Radial { grid, interface: i, .. } = &f.space else { unreachable!() };
    let w = &f.values;
    let ql = lambda * (0.75 * w[*i] + 0.25 * w[i - 1]);
    let qr = lambda * (0.75 * w[*i] + 0.25 * w[i + 1]);
    let left = grid.one_sided_derivatives(w, *i, ql).0.unwrap();
    let right = grid.one_sided_derivatives(w, *i, qr).1.unwrap();
    assert!((c.sigma_c * left - c.sigma_s * right).abs() < 1e-5 * (c.sigma_s * right).abs());
    assert!(right > 0.0);
}

#[test]
fn transform_of_held_boundary_value_is_one() {
    let times = geometric(1e-6, 40.0, 1.1);
    let samples = vec![vec![1.0, 1.0]; times.len()];
    for lambda in [0.5, 1.0, 100.0] {
        let (w, tail) = transform_samples(&times, &[1.0, 1.0], &samples, lambda).unwrap();
        assert!(w.iter().all(|v| (v - 1.0).abs() < 1e-14));
        assert!(tail <= (-lambda * 40.0_f64).exp() * 1.0000001);
    }
}

#[test]
fn transform_of_exponential_decay() {
    let phi = [0.2, 0.7, 1.0];
    let times = geometric(1e-6, 40.0, 1.01);
    let samples: Vec<Vec<f64>> = times.iter().map(|t| phi.iter().map(|p| 1.0 - (-t).exp() * p).collect()).collect();
    let head: Vec<f64> = phi.iter().map(|p| 1.0 - p).collect();
    for lambda in [1.0, 3.0, 50.0] {
        let (w, _) = transform_samples(&times, &head, &samples, lambda).unwrap();
        for (wi, p) in w.iter().zip(&phi) {
            let exact = 1.0 - lambda / (lambda + 1.0) * p;
            assert!((wi - exact).abs() < 1e-5, "lambda {lambda}: {wi} vs {exact}");
        }
    }
}

#[test]
fn transformed_heat_flow_matches_elliptic_at_lambda_one() {
    let c = cond(2.0, 1.0, 1.0);
    let p = HeatProblem::radial_dirichlet(0.5, 2, c, geometric(1e-7, 25.0, 1.01));
    let field = simulate(&p).unwrap();
    let w = transform_field(&field, 1.0).unwrap();
    assert_eq!(w.provenance, Provenance::Transformed);
    let params = EllipticParams {
        beta: 1.0,
        gamma: 1.0,
        c_bdry: 0.0,
        dim: 2,
    };
    let v = solve_base_radial(&params, &c, &RadialConfig::uniform(0.5, 4096).unwrap()).unwrap();
    let err = v
        .config
        .grid
        .iter()
        .zip(&v.values)
        .map(|(r, vv)| (1.0 - w.value_at(&[*r, 0.0]).unwrap() - vv).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-4, "sup |1 - w - v| = {err:.3e}");
}

#[test]
fn transform_commutes_with_direct_solve() {
    let c = cond(2.0, 1.0, 1.0);
    let mut p = HeatProblem::radial_dirichlet(0.5, 2, c, geometric(1e-9, 20.0, 1.02));
    p.stepping.dt_min = 1e-10;
    let field = simulate(&p).unwrap();
    for lambda in [1.0, 10.0, 100.0] {
        let w = transform_field(&field, lambda).unwrap();
        let d = solve_elliptic_lambda(&p, lambda).unwrap();
        assert_eq!(d.provenance, Provenance::Direct);
        let diff = w.values.iter().zip(&d.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff <= 1e-4 + w.tail_bound, "lambda {lambda}: {diff:.3e}");
        let (lo, hi) = w.interior_range();
        assert!(lo >= 0.0 && hi < 1.0);
    }
}

#[test]
fn short_horizon_is_rejected() {
    let p = HeatProblem::radial_dirichlet(0.5, 2, cond(2.0, 1.0, 1.0), vec![0.01, 0.1, 1.0]);
    let field = simulate(&p).unwrap();
    match transform_field(&field, 1.0) {
        Err(Error::Transform(m)) => assert!(m.contains("extend horizon")),
        other => panic!("expected a horizon error, got {other:?}"),
    }
    assert!(transform_field(&field, 50.0).is_ok());
}

#[test]
fn direct_fields_stay_between_zero_and_one() {
    for (dim, c) in [(2, cond(2.0, 1.0, 1.0)), (3, cond(0.5, 1.0, 1.0))] {
        for f in dirichlet_sweep(dim, c) {
            let (lo, hi) = f.interior_range();
            assert!(lo >= 0.0 && hi < 1.0, "lambda {}: [{lo}, {hi}]", f.lambda);
        }
    }
    let p = radial_elliptic_problem(0.5, 2, cond(2.0, 1.0, 4.0), ProblemKind::Cauchy, 10.0, GridOptions::default());
    let f = solve_elliptic_lambda(&p, 10.0).unwrap();
    let (lo, hi) = f.interior_range();
    assert!(lo > 0.0 && hi < 1.0);
}

#[test]
fn boundary_flux_grows_with_lambda() {
    let sweep = dirichlet_sweep(2, cond(2.0, 1.0, 1.0));
    let d0: Vec<f64> = sweep.iter().map(|f| f.d0.unwrap()).collect();
    assert!(d0[0] > 0.0);
    assert!(d0.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn flux_limit_on_unit_disk() {
    let fit = flux_asymptotics(&dirichlet_sweep(2, cond(1.0, 1.0, 1.0))).unwrap();
    assert_eq!(fit.target, Some(-0.5));
    assert!(fit.relative_error.unwrap() <= 0.02, "{fit:?}");
    assert!(!fit.flagged);
    // d0 - sqrt(lambda) = sqrt(lambda) (I_1/I_0 - 1) from the Bessel oracle
    for (l, m) in fit.lambdas.iter().zip(&fit.middle) {
        let k = l.sqrt();
        let exact = k * (common::bessel_i_series(1, k) / common::bessel_i_series(0, k) - 1.0);
        assert!((m - exact).abs() < 1e-3);
    }
}

#[test]
fn flux_limit_on_unit_sphere() {
    let fit = flux_asymptotics(&dirichlet_sweep(3, cond(1.0, 1.0, 1.0))).unwrap();
    assert_eq!(fit.target, Some(-1.0));
    assert!(fit.relative_error.unwrap() <= 0.02, "{fit:?}");
}

#[test]
fn flux_limit_ignores_the_core() {
    let a = flux_asymptotics(&dirichlet_sweep(2, cond(0.5, 1.0, 1.0))).unwrap();
    let b = flux_asymptotics(&dirichlet_sweep(2, cond(2.0, 1.0, 1.0))).unwrap();
    assert!((a.constant - b.constant).abs() < 1e-3, "{} vs {}", a.constant, b.constant);
    assert!(a.relative_error.unwrap() <= 0.02 && b.relative_error.unwrap() <= 0.02);
}

#[test]
fn flux_fit_needs_four_values() {
    let sweep = dirichlet_sweep(2, cond(1.0, 1.0, 1.0));
    assert!(matches!(flux_asymptotics(&sweep[..3]), Err(Error::Config(_))));
    let mut rev = sweep.clone();
    rev.reverse();
    assert!(flux_asymptotics(&rev).is_err());
}

#[test]
fn flux_fit_csv_header() {
    let fit = flux_asymptotics(&dirichlet_sweep(2, cond(1.0, 1.0, 1.0))).unwrap();
    let mut out = Vec::new();
    fit.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with("lambda,d0,fitted_constant,target\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn barrier_boundary_values() {
    let b = BarrierData::new(TubeBoundary::Sphere { dim: 2 }, 1.0, 4, 8).unwrap();
    assert!((b.delta0 - 0.4).abs() < 1e-15);
    for s in [0.0_f64, 1.0, 4.0] {
        let x = [s.cos(), s.sin()];
        let v = barrier_eval(&b, &x, 50.0).unwrap();
        assert!((v.f_minus - 1.0).abs() < 1e-12 && (v.f_plus - 1.0).abs() < 1e-12);
        assert!((v.w_minus - 1.0).abs() < 1e-12 && (v.w_plus - 1.0).abs() < 1e-12);
    }
    for p in &b.samples {
        assert!((p.a0 - (1.0 - p.delta).powf(-0.5)).abs() < 1e-14);
        assert!(p.a_minus < p.a_plus);
    }
    assert!(b.curvature_bound_holds());
    assert!(b.max_eikonal_error() < 1e-8);
}

#[test]
fn barrier_rejects_points_outside_tube() {
    let b = BarrierData::new(TubeBoundary::Sphere { dim: 2 }, 1.0, 4, 8).unwrap();
    assert!(matches!(barrier_eval(&b, &[0.3, 0.0], 10.0), Err(Error::Inadmissible(_))));
    assert!(matches!(barrier_eval(&b, &[1.1, 0.0], 10.0), Err(Error::Inadmissible(_))));
    let e = BarrierData::new(TubeBoundary::Curve(Curve::ellipse(1.2, 0.8, 64).unwrap()), 1.0, 8, 4).unwrap();
    assert!(barrier_eval(&e, &[0.0, 0.0], 10.0).is_err());
    assert!(barrier_eval(&e, &[1.25, 0.0], 10.0).is_err());
    assert!(barrier_eval(&e, &[1.15, 0.0], 10.0).is_ok());
}

#[test]
fn barrier_residual_matches_wkb_identity() {
    // sigma Delta f -+ lambda f = sigma e^{-k delta} (-+2 + Delta A_+- / k): the
    // correction times k settles as lambda grows
    let b = BarrierData::new(TubeBoundary::Sphere { dim: 2 }, 1.0, 1, 6).unwrap();
    let p = &b.samples[3];
    let corr = |l: f64| {
        let m = b.margin(p.s, p.delta, l);
        ((m.bracket_plus + 2.0) * l.sqrt(), (m.bracket_minus - 2.0) * l.sqrt())
    };
    let (a1, b1) = corr(1e4);
    let (a2, b2) = corr(4e4);
    assert!((a1 - a2).abs() < 0.05 * a1.abs() && (b1 - b2).abs() < 0.05 * b1.abs());
}

fn radial_edge(dim: usize, c: Conductivity, delta0: f64) -> impl Fn(f64) -> twophase::Result<f64> + Sync {
    move |l: f64| {
        let f = solve_elliptic_lambda(&dirichlet_problem(dim, c, l), l)?;
        f.value_at(&[1.0 - delta0, 0.0])
    }
}

#[test]
fn barriers_sandwich_the_radial_solution() {
    let c = cond(2.0, 1.0, 1.0);
    let grid: Vec<f64> = (0..17).map(|k| 2f64.powi(k)).collect();
    for dim in [2, 3] {
        let mut b = BarrierData::new(TubeBoundary::Sphere { dim }, 1.0, 4, 24).unwrap();
        let l0 = b.search_lambda0(&grid, radial_edge(dim, c, b.delta0)).unwrap();
        assert_eq!(b.lambda0, Some(l0));
        assert!(l0 <= 100.0);
        let mut lambdas = vec![l0, 2.0 * l0, 4.0 * l0];
        lambdas.extend(SWEEP.iter().filter(|&&l| l >= l0));
        for l in lambdas {
            let f = solve_elliptic_lambda(&dirichlet_problem(dim, c, l), l).unwrap();
            let v = b.sandwich_violation(l, |x| f.value_at(&x)).unwrap();
            assert_eq!(v, 0.0, "dim {dim} lambda {l}");
            assert!(b.margins(l).iter().all(|m| m.plus < 0.0 && m.minus > 0.0));
            let (lo, hi) = b.bound_chain(0.0, l);
            let mid = f.d0.unwrap() - l.sqrt();
            assert!(lo <= mid && mid <= hi, "dim {dim} lambda {l}: {lo} {mid} {hi}");
        }
    }
}

#[test]
fn sandwich_detects_the_wrong_solution() {
    let c = cond(2.0, 1.0, 1.0);
    let b = BarrierData::new(TubeBoundary::Sphere { dim: 2 }, 1.0, 4, 24).unwrap();
    let f = solve_elliptic_lambda(&dirichlet_problem(2, c, 800.0), 800.0).unwrap();
    assert!(b.sandwich_violation(400.0, |x| f.value_at(&x)).unwrap() > 1e-3);
}

#[test]
fn circle_curve_reproduces_sphere_barriers() {
    let s = BarrierData::new(TubeBoundary::Sphere { dim: 2 }, 1.0, 6, 6).unwrap();
    let c = BarrierData::new(TubeBoundary::Curve(Curve::circle([0.0, 0.0], 1.0)), 1.0, 6, 6).unwrap();
    assert!((s.delta0 - c.delta0).abs() < 1e-12);
    for (a, b) in s.samples.iter().zip(&c.samples) {
        assert!((a.a0 - b.a0).abs() < 1e-12);
        assert!((a.a_plus - b.a_plus).abs() < 1e-6 && (a.a_minus - b.a_minus).abs() < 1e-6);
        assert!((a.psi - b.psi).abs() < 2e-3, "corrector {} vs {}", a.psi, b.psi);
    }
    let (lo_s, hi_s) = s.bound_chain(0.0, 400.0);
    let (lo_c, hi_c) = c.bound_chain(1.0, 400.0);
    assert!((lo_s - lo_c).abs() < 1e-3 && (hi_s - hi_c).abs() < 1e-3);
}

#[test]
fn ellipse_tube_data() {
    let e = Curve::ellipse(1.2, 0.8, 64).unwrap();
    let mut b = BarrierData::new(TubeBoundary::Curve(e), 1.0, 16, 6).unwrap();
    assert!(b.curvature_bound_holds());
    assert!(b.max_eikonal_error() < 1e-8, "{}", b.max_eikonal_error());
    for p in &b.samples {
        assert!((p.a0 - (1.0 - p.kappa[0] * p.delta).powf(-0.5)).abs() < 1e-14);
        assert!(p.psi > 0.0 && p.psi < 2.0);
    }
    // w is only needed through its edge bound here; 0 passes it
    let grid: Vec<f64> = (0..17).map(|k| 2f64.powi(k)).collect();
    let l0 = b.search_lambda0(&grid, |_| Ok(0.0)).unwrap();
    assert!(b.margins(4.0 * l0).iter().all(|m| m.plus < 0.0 && m.minus > 0.0));
}

#[test]
fn tilde_a_of_constant() {
    let times = geometric(1e-12, 30.0, 1.2);
    let a = vec![0.37; times.len()];
    let t = tilde_a(&times, &a, &[1.0, 10.0, 1000.0]).unwrap();
    assert!(t.values.iter().all(|v| (v - 0.37).abs() < 1e-14));
}

#[test]
fn tilde_a_of_square_root() {
    let times = geometric(1e-12, 20.0, 1.01);
    let (c1, c2) = (0.3, 0.1);
    let a: Vec<f64> = times.iter().map(|t| c1 + c2 * t.sqrt()).collect();
    let lambdas = [1.0, 10.0, 100.0, 1000.0];
    let t = tilde_a(&times, &a, &lambdas).unwrap();
    for (l, v) in lambdas.iter().zip(&t.values) {
        let exact = c1 + c2 * std::f64::consts::PI.sqrt() / 2.0 / l.sqrt();
        assert!((v - exact).abs() < 1e-5 * exact, "lambda {l}: {v} vs {exact}");
    }
}

#[test]
fn tilde_a_resolution_errors() {
    let times = geometric(1e-4, 30.0, 1.1);
    let a = vec![0.5; times.len()];
    match tilde_a(&times, &a, &[1e4]) {
        Err(Error::Transform(m)) => assert!(m.contains("refine near t=0")),
        other => panic!("expected a head error, got {other:?}"),
    }
    let short = geometric(1e-9, 1.0, 1.1);
    match tilde_a(&short, &vec![0.5; short.len()], &[1.0]) {
        Err(Error::Transform(m)) => assert!(m.contains("extend horizon")),
        other => panic!("expected a tail error, got {other:?}"),
    }
    assert!(matches!(tilde_a(&times, &vec![1.0; times.len()], &[1.0]), Err(Error::Config(_))));
}

#[test]
fn tilde_a_of_flat_interface_is_two_thirds() {
    let mut p = HeatProblem::flat_cauchy(cond(1.0, 1.0, 4.0), geometric(1e-10, 2.0, 1.05));
    p.stepping.dt_min = 1e-11;
    let f = simulate(&p).unwrap();
    let a = radial_boundary_series(&f);
    let t = tilde_a(&f.times, &a, &[10.0, 100.0, 1000.0]).unwrap();
    for v in &t.values {
        assert!((v - 2.0 / 3.0).abs() < 1e-4, "{v}");
    }
}

#[test]
fn curvature_formula_vanishes_for_equal_media() {
    let c = cond(1.0, 2.0, 2.0);
    let times = geometric(1e-12, 30.0, 1.5);
    let tbd = tilde_a(&times, &vec![0.5; times.len()], &SWEEP).unwrap();
    let flux = [1.0; 4];
    let est = cauchy_curvature_formula(&tbd, &flux, &flux, &c, 1e-9).unwrap();
    assert!(est.estimates.iter().all(|e| e.abs() < 1e-12));
    assert!(est.limit.abs() < 1e-12);
}

fn radial_cauchy_estimate(dim: usize, rho: f64) -> CurvatureEstimate {
    let c = cond(2.0, 1.0, 4.0);
    // a ball of radius rho at lambda equals the unit ball at lambda rho^2
    let lam: Vec<f64> = SWEEP.iter().map(|l| l * rho * rho).collect();
    let p = radial_elliptic_problem(0.5, dim, c, ProblemKind::Cauchy, lam[0], elliptic_grid(lam[3], c.sigma_s));
    let sweep = solve_sweep(&p, &lam).unwrap();
    let mut tbd = TransformedBoundaryData::from_fields(&sweep).unwrap();
    tbd.lambdas = SWEEP.to_vec();
    let inner: Vec<f64> = sweep.iter().map(|f| f.flux[0]).collect();
    let outer: Vec<f64> = sweep.iter().map(|f| f.flux_outer.as_ref().unwrap()[0]).collect();
    cauchy_curvature_formula(&tbd, &inner, &outer, &c, 1e-5).unwrap()
}

#[test]
fn curvature_formula_on_radial_cauchy_data() {
    for dim in [2, 3] {
        for rho in [1.0, 2.0] {
            let est = radial_cauchy_estimate(dim, rho);
            let target = (dim as f64 - 1.0) / rho;
            assert!((est.limit - target).abs() < 0.01 * target, "dim {dim} rho {rho}: {est:?}");
            assert!(est.transmission_mismatch < 1e-5);
        }
    }
}

#[test]
fn curvature_formula_from_transformed_simulation() {
    let c = cond(2.0, 1.0, 4.0);
    let times = geometric(1e-10, 0.25, 1.02);
    let mut p = HeatProblem::radial_cauchy(0.5, 2, c, times);
    p.stepping.dt_min = 1e-11;
    let f = simulate(&p).unwrap();
    let fields: Vec<LaplaceField> = SWEEP.iter().map(|&l| transform_field(&f, l).unwrap()).collect();
    let tbd = TransformedBoundaryData::from_fields(&fields).unwrap();
    let via_tilde_a = tilde_a(&f.times, &radial_boundary_series(&f), &SWEEP).unwrap();
    for (a, b) in tbd.values.iter().zip(&via_tilde_a.values) {
        assert!((a - b).abs() < 1e-6);
    }
    let inner: Vec<f64> = fields.iter().map(|f| f.flux[0]).collect();
    let outer: Vec<f64> = fields.iter().map(|f| f.flux_outer.as_ref().unwrap()[0]).collect();
    let est = cauchy_curvature_formula(&tbd, &inner, &outer, &c, 1e-3).unwrap();
    assert!((est.limit - 1.0).abs() < 0.02, "{est:?}");
}

#[test]
fn transmission_violation_is_rejected() {
    let times = geometric(1e-12, 30.0, 1.5);
    let tbd = tilde_a(&times, &vec![0.6; times.len()], &SWEEP).unwrap();
    let inner = [1.0, 2.0, 3.0, 4.0];
    let outer = [1.0, 2.0, 3.3, 4.0];
    let r = cauchy_curvature_formula(&tbd, &inner, &outer, &cond(1.0, 1.0, 4.0), 1e-3);
    assert!(matches!(r, Err(Error::Inadmissible(_))));
}

fn planar_mode2(eps: f64) -> (f64, f64) {
    let c = cond(1.0, 1.0, 1.0);
    let mesh = cauchy_mesh(&Perturbation::cosine(2, eps, 2, 1.0), 2.0, 64).unwrap();
    let data = planar_cauchy_sweep(&mesh, &c, &[25.0, 50.0, 100.0]).unwrap();
    let est = data.curvature_estimates(&c, 1e-8).unwrap();
    let limits: Vec<f64> = est.iter().map(|e| e.limit).collect();
    let (mean, modes) = fourier_piecewise_linear(&mesh.interface_angles, &limits, 4);
    (mean, modes[1].0)
}

#[test]
fn perturbed_boundary_shows_in_planar_estimates() {
    let (mean0, a0) = planar_mode2(0.0);
    let (_, a1) = planar_mode2(0.05);
    assert!((mean0 - 1.0).abs() < 0.05);
    // curvature of r = 1 + eps cos 2 theta is 1 + 3 eps cos 2 theta to first order
    assert!(a0.abs() < 1e-6);
    assert!((a1 - 0.15).abs() < 0.03, "mode-2 coefficient {a1}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tilde_a_stays_in_unit_interval(c in 0.01f64..0.99, d in -0.3f64..0.3, l in 1.0f64..1e4) {
        let times = geometric(1e-12, 30.0, 1.3);
        let a: Vec<f64> = times.iter().map(|t| (c + d * (-t).exp()).clamp(0.005, 0.995)).collect();
        let t = tilde_a(&times, &a, &[l]).unwrap();
        prop_assert!(t.values[0] > 0.0 && t.values[0] < 1.0);
    }

    #[test]
    fn direct_radial_fields_are_bounded(sc in 0.2f64..5.0, ss in 0.2f64..5.0, l in 0.1f64..500.0) {
        let c = cond(sc, ss, 1.0);
        let mut p = dirichlet_problem(2, c, 100.0);
        p.grid = GridOptions::default();
        let f = solve_elliptic_lambda(&p, l).unwrap();
        let (lo, hi) = f.interior_range();
        prop_assert!(lo >= 0.0 && hi < 1.0);
        prop_assert!(f.d0.unwrap() > 0.0);
    }

    #[test]
    fn barriers_equal_one_on_ellipse(s in 0.0f64..6.28, l in 10.0f64..1e4) {
        let e = Curve::ellipse(1.2, 0.8, 64).unwrap();
        let b = BarrierData::new(TubeBoundary::Curve(e.clone()), 1.0, 1, 1).unwrap();
        let y = e.point(s);
        let v = barrier_eval(&b, &y, l).unwrap();
        prop_assert!((v.f_plus - 1.0).abs() < 1e-9 && (v.f_minus - 1.0).abs() < 1e-9);
        prop_assert!((v.w_plus - 1.0).abs() < 1e-9 && (v.w_minus - 1.0).abs() < 1e-9);
    }
}

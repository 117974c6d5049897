mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use twophase::parabolic::*;
use twophase::shape::{build_mesh, DomainMap, Perturbation};
use twophase::{Conductivity, Error};

fn cond(sc: f64, ss: f64, sm: f64) -> Conductivity {
    Conductivity::new(sc, ss, sm).unwrap()
}

fn geometric(t0: f64, q: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| t0 * q.powi(k as i32)).collect()
}

/// Flat two-medium similarity solution: `a erfc(-x / 2 sqrt(ss t))` for
/// `x < 0`, `1 - b erfc(x / 2 sqrt(sm t))` for `x > 0`.
fn flat_similarity(x: f64, t: f64, ss: f64, sm: f64) -> f64 {
    let a = sm.sqrt() / (ss.sqrt() + sm.sqrt());
    if x < 0.0 {
        a * libm::erfc(-x / (2.0 * (ss * t).sqrt()))
    } else {
        1.0 - (1.0 - a) * libm::erfc(x / (2.0 * (sm * t).sqrt()))
    }
}

fn disk_error(cells: usize, rel: f64) -> f64 {
    let mut p = HeatProblem::radial_dirichlet(0.5, 2, cond(1.0, 1.0, 1.0), vec![0.01, 0.1, 1.0]);
    p.grid.cells = cells;
    p.stepping.rel_step = rel;
    let f = simulate(&p).unwrap();
    let mut err: f64 = 0.0;
    for j in 0..3 {
        for r in [0.0, 0.2, 0.5, 0.7, 0.9, 0.97] {
            let e = f.value_at(j, [r, 0.0]).unwrap() - common::disk_heat_series(r, f.times[j], 1.0);
            err = err.max(e.abs());
        }
    }
    err
}

fn planar_field(eps: f64) -> HeatField {
    let f = if eps == 0.0 {
        Perturbation::zero(8, 0.5)
    } else {
        Perturbation::cosine(2, eps, 8, 0.5)
    };
    let map = DomainMap::new(&f, &Perturbation::zero(8, 1.0)).unwrap();
    let mesh = build_mesh(&map, 32).unwrap();
    simulate(&HeatProblem::planar_dirichlet(mesh, cond(2.0, 1.0, 1.0), vec![0.01, 0.02, 0.05, 0.1, 0.2])).unwrap()
}

fn ring_moments(field: &HeatField, rho: f64, r: f64) -> Vec<BalanceMoment> {
    (0..8)
        .map(|k| {
            let a = k as f64 * PI / 4.0;
            let nu = [a.cos(), a.sin()];
            balance_moment(field, [rho * nu[0], rho * nu[1]], nu, r).unwrap()
        })
        .collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

#[test]
fn bessel_series_oracle_is_consistent() {
    // boundary value, late-time limit and the integrated decay rate
    assert!((common::disk_heat_series(1.0, 0.05, 1.0) - 1.0).abs() < 1e-12);
    assert!((common::disk_heat_series(0.3, 20.0, 1.0) - 1.0).abs() < 1e-12);
    let j1 = twophase::special::bessel_j0_zeros(1)[0];
    let t = 1.0;
    let lead = 2.0 / (j1 * twophase::special::bessel_j1(j1)) * (-j1 * j1 * t).exp();
    assert!((1.0 - common::disk_heat_series(0.0, t, 1.0) - lead).abs() < 1e-12);
}

#[test]
fn one_phase_disk_matches_bessel_series() {
    let err = disk_error(400, 1e-3);
    assert!(err < 1e-4, "max error {err:.3e}");
}

#[test]
fn disk_error_decreases_at_first_order() {
    let e: Vec<f64> = [(100, 8e-3), (200, 4e-3), (400, 2e-3)].iter().map(|&(c, r)| disk_error(c, r)).collect();
    for w in e.windows(2) {
        let ratio = w[0] / w[1];
        assert!(ratio > 1.6 && ratio < 2.6, "errors {e:?}");
    }
}

#[test]
fn similarity_solution_satisfies_transmission() {
    let (ss, sm, t) = (1.0, 4.0, 0.3);
    let h = 1e-6;
    let left = flat_similarity(-1e-12, t, ss, sm);
    let right = flat_similarity(1e-12, t, ss, sm);
    assert!((left - right).abs() < 1e-9);
    let dl = (flat_similarity(-1e-12, t, ss, sm) - flat_similarity(-h, t, ss, sm)) / h;
    let dr = (flat_similarity(h, t, ss, sm) - flat_similarity(1e-12, t, ss, sm)) / h;
    assert!((ss * dl - sm * dr).abs() < 1e-4 * dl.abs());
    // heat equation in each phase
    for (x, s) in [(-0.4, ss), (0.7, sm)] {
        let k = 1e-3;
        let ut = (flat_similarity(x, t + k, ss, sm) - flat_similarity(x, t - k, ss, sm)) / (2.0 * k);
        let uxx = (flat_similarity(x + k, t, ss, sm) - 2.0 * flat_similarity(x, t, ss, sm) + flat_similarity(x - k, t, ss, sm))
            / (k * k);
        assert!((ut - s * uxx).abs() < 1e-5, "{ut} {uxx}");
    }
}

#[test]
fn flat_interface_value_is_time_independent() {
    let times = geometric(1e-4, 10f64.sqrt(), 9);
    let f = simulate(&HeatProblem::flat_cauchy(cond(1.0, 1.0, 4.0), times)).unwrap();
    let HeatSpace::Flat { interface, grid } = &f.space else {
        unreachable!()
    };
    for (j, t) in f.times.iter().enumerate() {
        assert!((f.values[j][*interface] - 2.0 / 3.0).abs() < 1e-3, "t = {t}");
        let sw = 2.0 * t.sqrt();
        for x in [-2.0 * sw, -0.5 * sw, 0.5 * sw, 2.0 * sw] {
            let e = grid.interpolate(&f.values[j], x) - flat_similarity(x, *t, 1.0, 4.0);
            assert!(e.abs() < 1e-3, "x = {x}, t = {t}, error {e}");
        }
    }
}

#[test]
fn interface_limits_follow_the_conductivity_ratio() {
    for (ss, sm, want) in [(1.0, 1.0, 0.5), (1.0, 4.0, 2.0 / 3.0), (4.0, 1.0, 1.0 / 3.0)] {
        let f = simulate(&HeatProblem::flat_cauchy(cond(1.0, ss, sm), geometric(1e-5, 4.0, 6))).unwrap();
        let lim = interface_limit(&f, &[[0.0, 0.0]]).unwrap();
        assert!((lim[0].limit - want).abs() < 1e-3, "{ss} {sm}: {}", lim[0].limit);
    }
}

#[test]
fn radial_cauchy_interface_limit() {
    let f = simulate(&HeatProblem::radial_cauchy(0.25, 2, cond(2.0, 1.0, 4.0), geometric(1e-6, 4.0, 6))).unwrap();
    let pts = [[1.0, 0.0], [0.0, -1.0], [0.6, 0.8]];
    for l in interface_limit(&f, &pts).unwrap() {
        assert!(!l.flagged);
        assert!((l.limit - 2.0 / 3.0).abs() < 1e-3, "{}", l.limit);
    }
    assert!(matches!(interface_limit(&f, &[[0.5, 0.0]]), Err(Error::Inadmissible(_))));
}

#[test]
fn interface_limit_needs_a_cauchy_field() {
    let f = simulate(&HeatProblem::radial_dirichlet(0.5, 2, cond(1.0, 1.0, 1.0), vec![0.01, 0.02, 0.04])).unwrap();
    assert!(matches!(interface_limit(&f, &[[1.0, 0.0]]), Err(Error::Config(_))));
}

#[test]
fn interior_values_decay_like_exp_minus_b_over_t() {
    let times = geometric(2e-3, 1.25, 12);
    let f = simulate(&HeatProblem::radial_dirichlet(0.25, 2, cond(2.0, 1.0, 1.0), times)).unwrap();
    let fit = decay_fit(&f, [0.5, 0.0]).unwrap();
    assert!(fit.b > 0.0, "{fit:?}");
    // distance 1/2 to the boundary: Gaussian rate d^2 / 4 sigma = 1/16
    assert!(fit.b > 0.03 && fit.b < 0.1, "{fit:?}");
}

#[test]
fn maximum_principle_and_mass_monotonicity() {
    for (sc, dim) in [(0.25, 2), (4.0, 2), (2.0, 3)] {
        let f = simulate(&HeatProblem::radial_dirichlet(0.4, dim, cond(sc, 1.0, 1.0), geometric(1e-4, 2.0, 12))).unwrap();
        assert!(f.min_interior >= -MONOTONICITY_TOL && f.max_interior <= 1.0 + MONOTONICITY_TOL);
        assert!(f.max_interior < 1.0);
        let m: Vec<f64> = (0..f.times.len()).map(|j| f.mass(j)).collect();
        assert!(m.windows(2).all(|w| w[1] >= w[0]), "{m:?}");
    }
}

#[test]
fn cauchy_solution_operator_is_mass_symmetric() {
    let small = GridOptions {
        cells: 6,
        h_min: 0.05,
        ratio: 1.4,
    };
    let mut radial = HeatProblem::radial_cauchy(0.4, 2, cond(3.0, 1.0, 0.5), vec![0.1]);
    radial.grid = small;
    let mut flat = HeatProblem::flat_cauchy(cond(1.0, 1.0, 4.0), vec![0.1]);
    flat.grid = small;
    for p in [radial, flat] {
        let s = HeatStepper::new(&p).unwrap();
        let cols = s.solution_operator(0.01, 5).unwrap();
        let cap = s.capacity();
        let free = s.free_nodes();
        let n = free.len();
        assert!(n > 10);
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in 0..n {
                let ab = cap[free[a]] * cols[b][a];
                let ba = cap[free[b]] * cols[a][b];
                worst = worst.max((ab - ba).abs() / ab.abs().max(ba.abs()).max(1e-300));
            }
        }
        assert!(worst < 1e-10, "asymmetry {worst:e}");
    }
}

#[test]
fn radial_flux_is_constant_on_concentric_circles() {
    for sc in [2.0, 1.0] {
        let f = simulate(&HeatProblem::radial_dirichlet(0.5, 2, cond(sc, 1.0, 1.0), vec![0.01, 0.05, 0.2])).unwrap();
        for rho in [0.5, 0.75, 1.0] {
            let tr = flux_trace(&f, Surface::Circle { radius: rho }).unwrap();
            assert!(tr.max_scaled_spread() <= 1e-6);
            assert!(tr.spread.iter().all(|&s| s >= 0.0));
        }
        let b = flux_trace(&f, Surface::Boundary).unwrap();
        assert!(b.mean.iter().all(|&d| d > 0.0));
        assert!(matches!(flux_trace(&f, Surface::Circle { radius: 0.3 }), Err(Error::Inadmissible(_))));
    }
}

#[test]
fn boundary_flux_balances_mass_growth() {
    // d/dt int u = int_{dOmega} sigma_s d_nu u
    let times = vec![0.1, 0.1005, 0.101];
    let f = simulate(&HeatProblem::radial_dirichlet(0.5, 2, cond(2.0, 1.0, 1.0), times)).unwrap();
    let tr = flux_trace(&f, Surface::Boundary).unwrap();
    let dm = (f.mass(2) - f.mass(0)) / 0.001;
    let flux = 2.0 * PI * tr.mean[1];
    assert!((dm - flux).abs() < 1e-3 * flux, "{dm} {flux}");
}

#[test]
fn radial_moments_agree_on_a_circle() {
    let f = simulate(&HeatProblem::radial_dirichlet(0.25, 2, cond(2.0, 1.0, 1.0), vec![0.01, 0.05, 0.2])).unwrap();
    let ms = ring_moments(&f, 0.8, 0.15);
    let sp = moment_spread(&ms);
    for (j, s) in sp.iter().enumerate() {
        assert!(*s <= 1e-12 * ms[0].values[j].abs().max(1e-12), "{sp:?}");
    }
    let mut flat = f.clone();
    flat.values.iter_mut().for_each(|u| u.iter_mut().for_each(|v| *v = 0.7));
    let m = balance_moment(&flat, [0.6, 0.0], [1.0, 0.0], 0.2).unwrap();
    assert!(m.values.iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn inadmissible_balls_are_rejected() {
    let f = simulate(&HeatProblem::radial_dirichlet(0.5, 2, cond(2.0, 1.0, 1.0), vec![0.01])).unwrap();
    // exits the domain, touches the core
    for (p, r) in [([0.8, 0.0], 0.25), ([0.6, 0.0], 0.15)] {
        assert!(matches!(balance_moment(&f, p, [1.0, 0.0], r), Err(Error::Inadmissible(_))));
    }
}

#[test]
fn perturbed_core_breaks_constant_flow_and_balance() {
    let base = planar_field(0.0);
    let pert = planar_field(0.05);
    assert!(pert.min_interior >= -MONOTONICITY_TOL && pert.max_interior <= 1.0);
    let tol_flux = flux_trace(&base, Surface::Boundary).unwrap().max_scaled_spread();
    let tol_mom = max_of(&moment_spread(&ring_moments(&base, 0.8, 0.15)));
    let flux = flux_trace(&pert, Surface::Boundary).unwrap().max_scaled_spread();
    let mom = max_of(&moment_spread(&ring_moments(&pert, 0.8, 0.15)));
    assert!(tol_flux < 1e-5 && tol_mom < 1e-7, "baseline {tol_flux:e} {tol_mom:e}");
    assert!(flux > 10.0 * tol_flux, "{flux:e} vs {tol_flux:e}");
    assert!(mom > 10.0 * tol_mom, "{mom:e} vs {tol_mom:e}");
}

#[test]
fn planar_matches_radial_solution() {
    let times = vec![0.02, 0.1];
    let planar = planar_field(0.0);
    let radial = simulate(&HeatProblem::radial_dirichlet(0.5, 2, cond(2.0, 1.0, 1.0), vec![0.01, 0.02, 0.05, 0.1, 0.2])).unwrap();
    for (j, _) in times.iter().enumerate() {
        for x in [[0.0, 0.0], [0.3, 0.2], [-0.7, 0.1], [0.1, -0.85]] {
            let a = planar.value_at(j, x).unwrap();
            let b = radial.value_at(j, x).unwrap();
            assert!((a - b).abs() < 5e-3, "{x:?}: {a} {b}");
        }
    }
}

#[test]
fn tangent_ball_contents_have_the_curvature_ratio() {
    let times = geometric(1e-6, 4.0, 6);
    let mut p = HeatProblem::radial_dirichlet(0.25, 2, cond(2.0, 1.0, 1.0), times);
    p.grid.h_min = 1e-5;
    let f = simulate(&p).unwrap();
    let small = heat_content(&f, [0.8, 0.0], 0.2).unwrap();
    let large = heat_content(&f, [0.7, 0.0], 0.3).unwrap();
    let ratio: Vec<f64> = small.rescaled.iter().zip(&large.rescaled).map(|(a, b)| a / b).collect();
    let (lim, flagged) = richardson_sqrt(&f.times, &ratio).unwrap();
    let want = (7.0f64 / 12.0).sqrt();
    assert!(!flagged);
    assert!((lim - want).abs() < 0.05 * want, "{lim} vs {want}");
    assert!((ratio[0] - want).abs() < 0.05 * want);

    let osc = heat_content(&f, [0.0, 0.0], 1.0).unwrap();
    assert!(osc.rescaled.windows(2).all(|w| w[0] > w[1]), "{:?}", osc.rescaled);
    // content ~ t^{1/2}, so the rescaled series grows like t^{-1/4}
    let growth = osc.rescaled[0] / osc.rescaled[5];
    assert!((growth / 1024f64.powf(0.25) - 1.0).abs() < 0.1, "{growth}");

    let inner = heat_content(&f, [0.0, 0.0], 0.3).unwrap();
    assert!(inner.rescaled[..4].iter().all(|&v| v < 1e-30), "{:?}", inner.rescaled);
}

#[test]
fn heat_content_of_planar_field_matches_radial() {
    let planar = planar_field(0.0);
    let radial = simulate(&HeatProblem::radial_dirichlet(0.5, 2, cond(2.0, 1.0, 1.0), vec![0.01, 0.02, 0.05, 0.1, 0.2])).unwrap();
    let a = heat_content(&planar, [0.75, 0.0], 0.2).unwrap();
    let b = heat_content(&radial, [0.75, 0.0], 0.2).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!((x - y).abs() < 2e-2 * y, "{x} {y}");
    }
}

#[test]
fn invalid_problems_are_rejected() {
    let mut p = HeatProblem::flat_cauchy(cond(1.0, 1.0, 1.0), vec![0.5, 1.0]);
    p.box_width = Some(2.0);
    assert!(matches!(simulate(&p), Err(Error::Config(_))));
    p.box_width = None;
    assert!(simulate(&p).is_ok_and(|f| f.steps > 0));

    let bad_times = HeatProblem::radial_dirichlet(0.5, 2, cond(1.0, 1.0, 1.0), vec![0.1, 0.05]);
    assert!(matches!(simulate(&bad_times), Err(Error::Config(_))));

    let mut flat_dirichlet = HeatProblem::flat_cauchy(cond(1.0, 1.0, 1.0), vec![0.1]);
    flat_dirichlet.kind = ProblemKind::CauchyDirichlet;
    assert!(matches!(simulate(&flat_dirichlet), Err(Error::Config(_))));

    let mesh = build_mesh(&DomainMap::new(&Perturbation::zero(4, 0.5), &Perturbation::zero(4, 1.0)).unwrap(), 8).unwrap();
    let mut planar = HeatProblem::planar_dirichlet(mesh, cond(1.0, 1.0, 1.0), vec![0.1]);
    planar.kind = ProblemKind::Cauchy;
    assert!(matches!(simulate(&planar), Err(Error::Config(_))));
}

#[test]
fn csv_outputs_have_headers() {
    let f = simulate(&HeatProblem::radial_dirichlet(0.5, 2, cond(2.0, 1.0, 1.0), vec![0.01, 0.02])).unwrap();
    let mut buf = Vec::new();
    flux_trace(&f, Surface::Boundary).unwrap().write_csv(&mut buf).unwrap();
    let s = String::from_utf8(buf).unwrap();
    assert!(s.starts_with("t,d,spread\n") && s.lines().count() == 3);
    let mut buf = Vec::new();
    write_balance_csv(&ring_moments(&f, 0.8, 0.1), &mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 8 * 2);
    let mut buf = Vec::new();
    heat_content(&f, [0.8, 0.0], 0.2).unwrap().write_csv(&mut buf).unwrap();
    assert!(String::from_utf8(buf).unwrap().starts_with("t,content,rescaled"));
}

fn quick(problem: &mut HeatProblem) {
    problem.grid = GridOptions {
        cells: 40,
        h_min: 1e-3,
        ratio: 1.2,
    };
    problem.stepping.rel_step = 0.05;
    problem.stepping.dt_min = 1e-6;
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn radial_steps_respect_the_maximum_principle(
        sc in 0.1f64..10.0, ss in 0.1f64..10.0, r in 0.1f64..0.9, dim in 2usize..4,
    ) {
        let mut p = HeatProblem::radial_dirichlet(r, dim, cond(sc, ss, 1.0), vec![1e-3, 1e-2, 0.1]);
        quick(&mut p);
        let f = simulate(&p).unwrap();
        prop_assert!(f.min_interior >= -MONOTONICITY_TOL);
        prop_assert!(f.max_interior <= 1.0 + MONOTONICITY_TOL);
        prop_assert!(f.mass(0) <= f.mass(1) && f.mass(1) <= f.mass(2));
    }

    #[test]
    fn flat_interface_value_for_any_pair(ss in 0.1f64..10.0, sm in 0.1f64..10.0) {
        let mut p = HeatProblem::flat_cauchy(cond(1.0, ss, sm), vec![1e-3, 1e-2]);
        quick(&mut p);
        p.grid.h_min = 1e-4;
        let f = simulate(&p).unwrap();
        let HeatSpace::Flat { interface, .. } = &f.space else { unreachable!() };
        let want = sm.sqrt() / (ss.sqrt() + sm.sqrt());
        for u in &f.values {
            prop_assert!((u[*interface] - want).abs() < 5e-3);
        }
    }

    #[test]
    fn ball_integral_of_constant_is_the_ball_area(
        d in 0.0f64..0.7, r in 0.01f64..0.3, a in 0.0f64..6.3,
    ) {
        let mut p = HeatProblem::radial_dirichlet(0.5, 2, cond(1.0, 1.0, 1.0), vec![1e-3]);
        quick(&mut p);
        let mut f = simulate(&p).unwrap();
        f.values[0].iter_mut().for_each(|v| *v = 1.0);
        let c = heat_content(&f, [d * a.cos(), d * a.sin()], r).unwrap();
        prop_assert!((c.values[0] - PI * r * r).abs() < 1e-10 * r * r);
    }
}

use std::f64::consts::PI;

use proptest::prelude::*;
use twophase::geometry::*;

/// Exterior moment of a disk of radius rho at a boundary point, by direct
/// polar integration: the circle |x - p| = t meets the disk boundary at angle
/// alpha(t) from the outward normal with cos(alpha) = -t/(2 rho).
fn circle_moment_oracle(rho: f64, r: f64) -> f64 {
    let n = 20_000;
    let h = r / n as f64;
    (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            let alpha = (-t / (2.0 * rho)).acos();
            2.0 * t * t * alpha.sin() * h
        })
        .sum()
}

#[test]
fn circle_moment_matches_direct_integral() {
    let c = Boundary::Curve(Curve::circle([0.0, 0.0], 2.0));
    for r in [0.4, 0.1] {
        let m = exterior_moment(&c, BoundaryPoint::Param(1.0), r).unwrap();
        assert!((m - circle_moment_oracle(2.0, r)).abs() < 1e-9 * m, "{m}");
    }
}

#[test]
fn exterior_volume_small_radius_expansion() {
    // Elementary integration for a disk of curvature kappa:
    // |ext cap B_r| = pi r^2/2 + kappa r^3/3 + O(r^5).
    for rho in [1.0, 2.0] {
        let c = Boundary::Curve(Curve::circle([0.0, 0.0], rho));
        let kappa = 1.0 / rho;
        for r in [0.05, 0.02] {
            let v = exterior_volume(&c, BoundaryPoint::Param(0.3), r).unwrap();
            let e = PI * r * r / 2.0 + kappa * r.powi(3) / 3.0;
            assert!((v - e).abs() < 0.05 * kappa.powi(3) * r.powi(5) + 1e-15, "rho={rho} r={r} {v} {e}");
        }
    }
}

#[test]
fn flat_moment_is_two_thirds_r_cubed() {
    let m = exterior_moment(&Boundary::Flat(2), BoundaryPoint::Pole, 0.7).unwrap();
    assert!((m - 2.0 * 0.343 / 3.0).abs() < 1e-14);
}

#[test]
fn weingarten_on_circles_converges() {
    for rho in [1.0, 2.0] {
        let c = Boundary::Curve(Curve::circle([0.0, 0.0], rho));
        let radii: Vec<f64> = [0.2, 0.1, 0.05].iter().map(|r| r * rho).collect();
        let fit = fit_weingarten(&c, BoundaryPoint::Param(0.0), &radii).unwrap();
        let target = 3.0 / (rho * rho);
        assert!((fit.c - target).abs() / target < 0.03, "{fit:?}");
        assert!(!fit.flagged);
    }
}

#[test]
fn weingarten_on_sphere() {
    let s = Boundary::Spheroid(Spheroid { a: 1.0, c: 1.0 });
    let fit = fit_weingarten(&s, BoundaryPoint::Pole, &[0.2, 0.1, 0.05]).unwrap();
    assert!((fit.c - 8.0).abs() / 8.0 < 0.03, "{fit:?}");
}

#[test]
fn weingarten_varies_on_ellipse() {
    let e = Boundary::Curve(Curve::ellipse(2.0, 1.0, 129).unwrap());
    let radii = [0.04, 0.02, 0.01];
    let cs: Vec<f64> = [0.0, PI / 4.0, PI / 2.0]
        .iter()
        .map(|&s| fit_weingarten(&e, BoundaryPoint::Param(s), &radii).unwrap().c)
        .collect();
    // 3 kappa^2 with kappa = 2 at the major vertex and 1/4 at the minor vertex
    assert!((cs[0] - 12.0).abs() / 12.0 < 0.03, "{cs:?}");
    assert!((cs[2] - 0.1875).abs() / 0.1875 < 0.05, "{cs:?}");
    let max = cs.iter().cloned().fold(f64::MIN, f64::max);
    let min = cs.iter().cloned().fold(f64::MAX, f64::min);
    assert!((max - min) / max > 0.2);
}

#[test]
fn moment_expansion_remainder_is_second_order() {
    let rho = 1.0;
    let c = Boundary::Curve(Curve::circle([0.0, 0.0], rho));
    let cc = 3.0 / (rho * rho);
    let rel: Vec<f64> = [0.2, 0.1, 0.05]
        .iter()
        .map(|&r| {
            let m = exterior_moment(&c, BoundaryPoint::Param(0.0), r).unwrap();
            let flat = flat_moment(2, r);
            let correction = flat * cc * r * r / 40.0;
            (m - (flat - correction)).abs() / correction
        })
        .collect();
    let slope = (rel[0] / rel[2]).ln() / 4f64.ln();
    assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
}

#[test]
fn distance_identities_on_ellipse() {
    let e = Curve::ellipse(2.0, 1.0, 129).unwrap();
    let delta0 = 0.4 / e.max_curvature(512);
    let samples = distance_field(&e, delta0, 16, 4).unwrap();
    for d in &samples {
        assert!(!d.flagged);
        let g = d.grad[0].hypot(d.grad[1]);
        assert!((g - 1.0).abs() < 1e-8, "|grad| = {g}");
        let rec = [d.x[0] - d.delta * d.grad[0], d.x[1] - d.delta * d.grad[1]];
        assert!((rec[0] - d.y[0]).hypot(rec[1] - d.y[1]) < 1e-10);
    }
}

#[test]
fn unit_circle_distance() {
    let c = Curve::circle([0.0, 0.0], 1.0);
    let d = distance_at(&c, [0.0, 0.7]);
    assert!((d.delta - 0.3).abs() < 1e-14);
    assert!((d.laplacian + 1.0 / 0.7).abs() < 1e-12);
}

#[test]
fn distance_laplacian_matches_finite_differences() {
    let e = Curve::ellipse(1.5, 1.0, 129).unwrap();
    let x = e.tube_point(0.6, 0.2);
    let h = 1e-3;
    let del = |p: [f64; 2]| e.project(p).unwrap().1;
    let lap = (del([x[0] + h, x[1]]) + del([x[0] - h, x[1]]) + del([x[0], x[1] + h]) + del([x[0], x[1] - h])
        - 4.0 * del(x))
        / (h * h);
    assert!((distance_at(&e, x).laplacian - lap).abs() < 1e-5);
}

#[test]
fn tube_width_is_checked() {
    let e = Curve::ellipse(2.0, 1.0, 65).unwrap();
    assert!(distance_field(&e, 0.3, 4, 2).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn orientation_flip(s in 0.0f64..6.28, r in 0.02f64..0.2) {
        let e = Curve::ellipse(1.5, 1.0, 65).unwrap();
        let rev = e.reversed();
        let a = Boundary::Curve(e);
        let b = Boundary::Curve(rev);
        let m1 = exterior_moment(&a, BoundaryPoint::Param(s), r).unwrap();
        let m2 = exterior_moment(&b, BoundaryPoint::Param(-s), r).unwrap();
        prop_assert!((m1 + m2).abs() < 1e-12);
        let v1 = exterior_volume(&a, BoundaryPoint::Param(s), r).unwrap();
        let v2 = exterior_volume(&b, BoundaryPoint::Param(-s), r).unwrap();
        prop_assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn circle_points_are_equivalent(s1 in 0.0f64..6.28, s2 in 0.0f64..6.28, r in 0.02f64..0.3) {
        let c = Boundary::Curve(Curve::circle([0.1, 0.2], 1.3));
        let v1 = exterior_volume(&c, BoundaryPoint::Param(s1), r).unwrap();
        let v2 = exterior_volume(&c, BoundaryPoint::Param(s2), r).unwrap();
        prop_assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn circle_curvature_data(rho in 0.3f64..5.0, r in 0.01f64..0.2) {
        let d = curvatures(&Boundary::Curve(Curve::circle([0.0, 0.0], rho)), &[0.0, 1.0, 2.5], r);
        for s in &d.samples {
            prop_assert!((s.kappa[0] - 1.0 / rho).abs() < 1e-8 / rho);
            prop_assert!((s.pi - (1.0 / r - 1.0 / rho)).abs() < 1e-8 / r);
            if r <= rho {
                prop_assert!(s.pi >= 0.0);
            }
        }
    }
}

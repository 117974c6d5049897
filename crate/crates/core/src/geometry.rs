//! Curvature, distance and exterior-set integrals for smooth boundaries.
//!
//! Planar boundaries are trigonometric interpolants of sampled closed curves.
//! Curvatures are taken with respect to the inward normal, so convex curves
//! have positive curvature regardless of the direction of parametrization.
//! The normal `nu` follows the parametrization (right-hand normal of the
//! tangent); it is outward for counter-clockwise curves.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::gauss_legendre;

/// Closed planar curve `s -> X(s)`, `s` in `[0, 2 pi)`, given by its
/// trigonometric interpolant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    /// `x(s) = ax[0] + sum_k ax[k] cos ks + bx[k] sin ks`, likewise for `y`.
    ax: Vec<f64>,
    bx: Vec<f64>,
    ay: Vec<f64>,
    by: Vec<f64>,
}

impl Curve {
    /// Interpolant through equispaced samples `s_j = 2 pi j / M`. For even `M`
    /// the Nyquist term is dropped.
    pub fn from_samples(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let m = xs.len();
        if m < 5 || ys.len() != m {
            return Err(Error::config("curve needs at least 5 samples in x and y"));
        }
        let kmax = (m - 1) / 2;
        let mut ax = vec![0.0; kmax + 1];
        let mut bx = vec![0.0; kmax + 1];
        let mut ay = vec![0.0; kmax + 1];
        let mut by = vec![0.0; kmax + 1];
        for k in 0..=kmax {
            let mut sums = [0.0; 4];
            for j in 0..m {
                let s = 2.0 * PI * (j * k % m) as f64 / m as f64;
                let (sn, cs) = s.sin_cos();
                sums[0] += xs[j] * cs;
                sums[1] += xs[j] * sn;
                sums[2] += ys[j] * cs;
                sums[3] += ys[j] * sn;
            }
            let f = if k == 0 { 1.0 / m as f64 } else { 2.0 / m as f64 };
            ax[k] = f * sums[0];
            bx[k] = f * sums[1];
            ay[k] = f * sums[2];
            by[k] = f * sums[3];
        }
        let c = Curve { ax, bx, ay, by };
        for j in 0..4 * m {
            let s = 2.0 * PI * j as f64 / (4 * m) as f64;
            let d = c.d1(s);
            if d[0].hypot(d[1]) < 1e-10 {
                return Err(Error::config("curve has a vanishing tangent"));
            }
        }
        Ok(c)
    }

    pub fn from_fn(m: usize, f: impl Fn(f64) -> [f64; 2]) -> Result<Self> {
        let (xs, ys): (Vec<f64>, Vec<f64>) = (0..m)
            .map(|j| {
                let p = f(2.0 * PI * j as f64 / m as f64);
                (p[0], p[1])
            })
            .unzip();
        Self::from_samples(&xs, &ys)
    }

    pub fn circle(center: [f64; 2], rho: f64) -> Self {
        Self::from_fn(9, |s| [center[0] + rho * s.cos(), center[1] + rho * s.sin()]).expect("valid circle")
    }

    /// Ellipse `x = a cos s, y = b sin s` sampled with `m` points.
    pub fn ellipse(a: f64, b: f64, m: usize) -> Result<Self> {
        Self::from_fn(m, |s| [a * s.cos(), b * s.sin()])
    }

    /// Polar curve `r(s) = r0 + sum eps_k cos(k s)`.
    pub fn polar(m: usize, r: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(m, |s| {
            let rr = r(s);
            [rr * s.cos(), rr * s.sin()]
        })
    }

    /// Same curve traversed backwards: `s -> X(-s)`.
    pub fn reversed(&self) -> Self {
        Curve {
            ax: self.ax.clone(),
            bx: self.bx.iter().map(|v| -v).collect(),
            ay: self.ay.clone(),
            by: self.by.iter().map(|v| -v).collect(),
        }
    }

    fn eval(&self, s: f64, order: u32) -> [f64; 2] {
        let mut x = if order == 0 { self.ax[0] } else { 0.0 };
        let mut y = if order == 0 { self.ay[0] } else { 0.0 };
        for k in 1..self.ax.len() {
            let kf = k as f64;
            let (sn, cs) = (kf * s).sin_cos();
            let p = kf.powi(order as i32);
            // d^n/ds^n of (a cos + b sin) cycles through four patterns.
            let (c_cos, c_sin) = match order % 4 {
                0 => ((1.0, 0.0), (0.0, 1.0)),
                1 => ((0.0, -1.0), (1.0, 0.0)),
                2 => ((-1.0, 0.0), (0.0, -1.0)),
                _ => ((0.0, 1.0), (-1.0, 0.0)),
            };
            // a cos^(n) = a (c_cos.0 cos + c_cos.1 sin), b sin^(n) = b (c_sin.0 cos + c_sin.1 sin)
            x += p * (self.ax[k] * (c_cos.0 * cs + c_cos.1 * sn) + self.bx[k] * (c_sin.0 * cs + c_sin.1 * sn));
            y += p * (self.ay[k] * (c_cos.0 * cs + c_cos.1 * sn) + self.by[k] * (c_sin.0 * cs + c_sin.1 * sn));
        }
        [x, y]
    }

    pub fn point(&self, s: f64) -> [f64; 2] {
        self.eval(s, 0)
    }

    pub fn d1(&self, s: f64) -> [f64; 2] {
        self.eval(s, 1)
    }

    pub fn d2(&self, s: f64) -> [f64; 2] {
        self.eval(s, 2)
    }

    pub fn speed(&self, s: f64) -> f64 {
        let d = self.d1(s);
        d[0].hypot(d[1])
    }

    /// +1 for counter-clockwise, -1 for clockwise (sign of the enclosed area).
    pub fn orientation(&self) -> f64 {
        // Area = pi * sum_k k (ax_k by_k - bx_k ay_k).
        let a: f64 = (1..self.ax.len())
            .map(|k| k as f64 * (self.ax[k] * self.by[k] - self.bx[k] * self.ay[k]))
            .sum();
        if a >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn area(&self) -> f64 {
        PI * (1..self.ax.len())
            .map(|k| k as f64 * (self.ax[k] * self.by[k] - self.bx[k] * self.ay[k]))
            .sum::<f64>()
            .abs()
    }

    /// Right-hand unit normal of the parametrization.
    pub fn normal(&self, s: f64) -> [f64; 2] {
        let d = self.d1(s);
        let l = d[0].hypot(d[1]);
        [d[1] / l, -d[0] / l]
    }

    /// Geometric outward unit normal.
    pub fn outward_normal(&self, s: f64) -> [f64; 2] {
        let n = self.normal(s);
        let o = self.orientation();
        [o * n[0], o * n[1]]
    }

    /// Curvature with respect to the inward normal.
    pub fn curvature(&self, s: f64) -> f64 {
        let d = self.d1(s);
        let dd = self.d2(s);
        let l = d[0].hypot(d[1]);
        self.orientation() * (d[0] * dd[1] - d[1] * dd[0]) / (l * l * l)
    }

    /// Point at signed inward distance `delta` from `X(s)`.
    pub fn tube_point(&self, s: f64, delta: f64) -> [f64; 2] {
        let p = self.point(s);
        let n = self.outward_normal(s);
        [p[0] - delta * n[0], p[1] - delta * n[1]]
    }

    pub fn max_curvature(&self, samples: usize) -> f64 {
        (0..samples)
            .map(|j| self.curvature(2.0 * PI * j as f64 / samples as f64))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Nearest boundary parameter to `x`, by Newton on `(X(s) - x) . X'(s) = 0`
    /// from the best of a coarse scan. Returns `(s, |X(s) - x|)`.
    pub fn project(&self, x: [f64; 2]) -> Result<(f64, f64)> {
        let scan = 64 * self.ax.len().max(8);
        let dist2 = |s: f64| {
            let p = self.point(s);
            (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2)
        };
        let mut best = 0.0;
        let mut bd = f64::INFINITY;
        for j in 0..scan {
            let s = 2.0 * PI * j as f64 / scan as f64;
            let d = dist2(s);
            if d < bd {
                bd = d;
                best = s;
            }
        }
        let mut s = best;
        let ds_max = 2.0 * PI / scan as f64;
        for it in 0..60 {
            let p = self.point(s);
            let d1 = self.d1(s);
            let d2 = self.d2(s);
            let r = [p[0] - x[0], p[1] - x[1]];
            let g = r[0] * d1[0] + r[1] * d1[1];
            let gp = d1[0] * d1[0] + d1[1] * d1[1] + r[0] * d2[0] + r[1] * d2[1];
            if gp <= 0.0 {
                return Err(Error::numerical("projection Newton lost convexity", g.abs()));
            }
            let step = (g / gp).clamp(-ds_max, ds_max);
            s -= step;
            if step.abs() < 1e-15 {
                break;
            }
            if it == 59 {
                return Err(Error::numerical("projection Newton did not converge", step.abs()));
            }
        }
        let s = s.rem_euclid(2.0 * PI);
        Ok((s, dist2(s).sqrt()))
    }

    /// Winding-number test.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let m = 16 * self.ax.len().max(16);
        let mut wind = 0.0;
        let mut prev = self.point(0.0);
        for j in 1..=m {
            let p = self.point(2.0 * PI * j as f64 / m as f64);
            let a0 = (prev[1] - x[1]).atan2(prev[0] - x[0]);
            let a1 = (p[1] - x[1]).atan2(p[0] - x[0]);
            let mut da = a1 - a0;
            if da > PI {
                da -= 2.0 * PI;
            } else if da < -PI {
                da += 2.0 * PI;
            }
            wind += da;
            prev = p;
        }
        wind.abs() > PI
    }
}

/// Ellipsoid of revolution `(x^2 + y^2)/a^2 + z^2/c^2 = 1`, profile
/// `u -> (a sin u, c cos u)`, `u` in `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spheroid {
    pub a: f64,
    pub c: f64,
}

impl Spheroid {
    /// Principal curvatures (meridian, parallel) at profile parameter `u`.
    pub fn curvatures(&self, u: f64) -> [f64; 2] {
        let (a, c) = (self.a, self.c);
        let (su, cu) = u.sin_cos();
        let q = a * a * cu * cu + c * c * su * su;
        [a * c / q.powf(1.5), c / (a * q.sqrt())]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    Curve(Curve),
    Spheroid(Spheroid),
    /// Half-space in dimension `N`.
    Flat(usize),
}

impl Boundary {
    pub fn dim(&self) -> usize {
        match self {
            Boundary::Curve(_) => 2,
            Boundary::Spheroid(_) => 3,
            Boundary::Flat(n) => *n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub param: f64,
    pub point: Vec<f64>,
    pub kappa: Vec<f64>,
    pub kappa_sum: f64,
    /// `prod_j (1/r - kappa_j)`.
    pub pi: f64,
    /// `3 sum kappa_i^2 + 2 sum_{i<j} kappa_i kappa_j`.
    pub weingarten: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureData {
    pub r: f64,
    pub samples: Vec<CurvatureSample>,
    /// Parameters rejected for a near-degenerate tangent.
    pub rejected: Vec<f64>,
}

impl CurvatureData {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "param,kappa_sum,pi,weingarten")?;
        for s in &self.samples {
            writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e}", s.param, s.kappa_sum, s.pi, s.weingarten)?;
        }
        Ok(())
    }
}

pub fn weingarten_quantity(kappa: &[f64]) -> f64 {
    let mut c = 0.0;
    for (i, ki) in kappa.iter().enumerate() {
        c += 3.0 * ki * ki;
        for kj in &kappa[i + 1..] {
            c += 2.0 * ki * kj;
        }
    }
    c
}

fn sample_of(param: f64, point: Vec<f64>, kappa: Vec<f64>, r: f64) -> CurvatureSample {
    CurvatureSample {
        param,
        point,
        kappa_sum: kappa.iter().sum(),
        pi: kappa.iter().map(|k| 1.0 / r - k).product(),
        weingarten: weingarten_quantity(&kappa),
        kappa,
    }
}

/// Curvature data at the given parameters (curve parameter `s`, or profile
/// parameter `u` for spheroids), with `Pi` evaluated at ball radius `r`.
pub fn curvatures(b: &Boundary, params: &[f64], r: f64) -> CurvatureData {
    let mut samples = Vec::new();
    let mut rejected = Vec::new();
    for &s in params {
        match b {
            Boundary::Curve(c) => {
                if c.speed(s) < 1e-8 {
                    rejected.push(s);
                    continue;
                }
                let p = c.point(s);
                samples.push(sample_of(s, p.to_vec(), vec![c.curvature(s)], r));
            }
            Boundary::Spheroid(sp) => {
                let (su, cu) = s.sin_cos();
                let p = vec![sp.a * su, 0.0, sp.c * cu];
                samples.push(sample_of(s, p, sp.curvatures(s).to_vec(), r));
            }
            Boundary::Flat(n) => samples.push(sample_of(s, vec![0.0; *n], vec![0.0; n - 1], r)),
        }
    }
    CurvatureData { r, samples, rejected }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSample {
    pub x: [f64; 2],
    pub delta: f64,
    pub grad: [f64; 2],
    /// Nearest boundary point `y(x)`.
    pub y: [f64; 2],
    pub param: f64,
    /// `Delta delta = -kappa/(1 - kappa delta)`.
    pub laplacian: f64,
    pub flagged: bool,
}

/// Distance data on the inner tube `{0 < delta < delta0}` of a planar curve,
/// sampled on an `n_s x n_d` grid of (parameter, depth).
pub fn distance_field(c: &Curve, delta0: f64, n_s: usize, n_d: usize) -> Result<Vec<DistanceSample>> {
    let kmax = c.max_curvature(512);
    if kmax > 0.0 && delta0 >= 1.0 / (2.0 * kmax) {
        return Err(Error::Inadmissible(format!(
            "tube half-width {delta0} violates max curvature bound 1/(2*{kmax})"
        )));
    }
    let mut out = Vec::with_capacity(n_s * n_d);
    for i in 0..n_s {
        let s = 2.0 * PI * i as f64 / n_s as f64;
        for j in 1..=n_d {
            let d = delta0 * j as f64 / (n_d + 1) as f64;
            out.push(distance_at(c, c.tube_point(s, d)));
        }
    }
    Ok(out)
}

/// Distance data at a single interior point.
pub fn distance_at(c: &Curve, x: [f64; 2]) -> DistanceSample {
    let dist = |p: [f64; 2]| c.project(p).map(|(_, d)| d);
    let h = 1e-5;
    let mut grad = [0.0; 2];
    let mut flagged = false;
    for (axis, g) in grad.iter_mut().enumerate() {
        let shifted = |t: f64| {
            let mut p = x;
            p[axis] += t;
            dist(p)
        };
        match (shifted(2.0 * h), shifted(h), shifted(-h), shifted(-2.0 * h)) {
            (Ok(a), Ok(b), Ok(cc), Ok(d)) => *g = (-a + 8.0 * b - 8.0 * cc + d) / (12.0 * h),
            _ => flagged = true,
        }
    }
    match c.project(x) {
        Ok((s, delta)) => {
            let kappa = c.curvature(s);
            DistanceSample {
                x,
                delta,
                grad,
                y: c.point(s),
                param: s,
                laplacian: -kappa / (1.0 - kappa * delta),
                flagged,
            }
        }
        Err(_) => DistanceSample {
            x,
            delta: f64::NAN,
            grad,
            y: [f64::NAN; 2],
            param: f64::NAN,
            laplacian: f64::NAN,
            flagged: true,
        },
    }
}

/// Where the exterior-set integrals are centred.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryPoint {
    /// Curve parameter.
    Param(f64),
    /// North pole of a spheroid, or any point of a flat boundary.
    Pole,
}

const RADIAL_GAUSS: usize = 32;

fn flat_sphere_measure(n: usize) -> f64 {
    // |S^{n-2}| = 2 pi^{(n-1)/2} / Gamma((n-1)/2)
    let half = (n - 1) as f64 / 2.0;
    2.0 * PI.powf(half) / gamma_half_integer(half)
}

fn gamma_half_integer(x: f64) -> f64 {
    // x is a positive multiple of 1/2
    let mut g = if (x.fract() - 0.5).abs() < 1e-12 { PI.sqrt() } else { 1.0 };
    let mut t = if (x.fract() - 0.5).abs() < 1e-12 { 0.5 } else { 1.0 };
    while t < x - 1e-12 {
        g *= t;
        t += 1.0;
    }
    g
}

fn ball_volume(n: usize, r: f64) -> f64 {
    PI.powf(n as f64 / 2.0) / gamma_half_integer(n as f64 / 2.0 + 1.0) * r.powi(n as i32)
}

/// Leading term `omega_{N-1}/(N^2-1) r^{N+1}` of the exterior moment, which is
/// the exact value for a flat boundary.
pub fn flat_moment(n: usize, r: f64) -> f64 {
    flat_sphere_measure(n) / ((n * n - 1) as f64) * r.powi(n as i32 + 1)
}

/// Crossing angles `(alpha_minus, alpha_plus)` of the circle `|x - p| = rho`
/// with the curve, measured from the outward normal at `p`.
fn curve_crossings(c: &Curve, s0: f64, rho: f64) -> Result<(f64, f64)> {
    let p = c.point(s0);
    let n = c.outward_normal(s0);
    let f = |s: f64| {
        let q = c.point(s);
        (q[0] - p[0]).hypot(q[1] - p[1]) - rho
    };
    let speed = c.speed(s0);
    let step = 0.25 * rho / speed;
    let mut angles = [0.0; 2];
    for (slot, dir) in [(0usize, -1.0), (1, 1.0)] {
        let mut a = s0;
        let mut b = s0 + dir * step;
        let mut tries = 0;
        while f(b) < 0.0 {
            a = b;
            b += dir * step;
            tries += 1;
            if tries > 10_000 || (b - s0).abs() > PI {
                return Err(Error::Inadmissible(format!("radius {rho} too large for the curve")));
            }
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if f(m) < 0.0 {
                a = m;
            } else {
                b = m;
            }
            if (b - a).abs() < 1e-15 {
                break;
            }
        }
        let q = c.point(0.5 * (a + b));
        let v = [q[0] - p[0], q[1] - p[1]];
        let cos = v[0] * n[0] + v[1] * n[1];
        let sin = n[0] * v[1] - n[1] * v[0];
        angles[slot] = sin.atan2(cos);
    }
    let (lo, hi) = if angles[0] < angles[1] {
        (angles[0], angles[1])
    } else {
        (angles[1], angles[0])
    };
    Ok((lo, hi))
}

fn spheroid_polar_angle(sp: &Spheroid, rho: f64) -> Result<f64> {
    let p = [0.0, sp.c];
    let f = |u: f64| (sp.a * u.sin() - p[0]).hypot(sp.c * u.cos() - p[1]) - rho;
    if f(PI) < 0.0 {
        return Err(Error::Inadmissible(format!("radius {rho} too large for the spheroid")));
    }
    let (mut a, mut b) = (0.0, PI);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    let u = 0.5 * (a + b);
    let v = [sp.a * u.sin(), sp.c * u.cos() - sp.c];
    // Angle from the outward axis +z.
    Ok(v[0].atan2(v[1]))
}

/// `|Omega^c cap B_r(p)|`.
pub fn exterior_volume(b: &Boundary, p: BoundaryPoint, r: f64) -> Result<f64> {
    radial_quadrature(r, |rho| match (b, p) {
        (Boundary::Curve(c), BoundaryPoint::Param(s)) => {
            let (lo, hi) = curve_crossings(c, s, rho)?;
            Ok(rho * (hi - lo))
        }
        (Boundary::Spheroid(sp), BoundaryPoint::Pole) => {
            let th = spheroid_polar_angle(sp, rho)?;
            Ok(2.0 * PI * (1.0 - th.cos()) * rho * rho)
        }
        (Boundary::Flat(n), _) => Ok(0.5 * ball_volume(*n, 1.0) * *n as f64 * rho.powi(*n as i32 - 1)),
        _ => Err(Error::Inadmissible("exterior integrals on spheroids are available at the pole only".into())),
    })
}

/// `nu(p) . int_{Omega^c cap B_r(p)} (x - p) dx`, with `nu` the normal of the
/// parametrization.
pub fn exterior_moment(b: &Boundary, p: BoundaryPoint, r: f64) -> Result<f64> {
    radial_quadrature(r, |rho| match (b, p) {
        (Boundary::Curve(c), BoundaryPoint::Param(s)) => {
            let (lo, hi) = curve_crossings(c, s, rho)?;
            Ok(c.orientation() * rho * rho * (hi.sin() - lo.sin()))
        }
        (Boundary::Spheroid(sp), BoundaryPoint::Pole) => {
            let th = spheroid_polar_angle(sp, rho)?;
            Ok(PI * th.sin().powi(2) * rho.powi(3))
        }
        (Boundary::Flat(n), _) => Ok(flat_moment(*n, 1.0) * (*n + 1) as f64 * rho.powi(*n as i32)),
        _ => Err(Error::Inadmissible("exterior integrals on spheroids are available at the pole only".into())),
    })
}

fn radial_quadrature(r: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    if !(r > 0.0) {
        return Err(Error::config("radius must be positive"));
    }
    let (x, w) = gauss_legendre(RADIAL_GAUSS);
    let mut s = 0.0;
    for (xi, wi) in x.iter().zip(&w) {
        s += wi * f(0.5 * r * (xi + 1.0))?;
    }
    Ok(0.5 * r * s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeingartenFit {
    pub radii: Vec<f64>,
    /// Raw estimates `8(N+3)(1 - M/M_flat)/r^2` per radius.
    pub raw: Vec<f64>,
    /// Extrapolated `C(p)`.
    pub c: f64,
    /// `|raw - c|` per radius.
    pub residuals: Vec<f64>,
    /// Set when the residuals do not decrease under refinement.
    pub flagged: bool,
}

/// Extracts `C(p)` from `M(r) = M_flat(r) (1 - C r^2/(8(N+3)) + O(r^4))` over a
/// decreasing sequence of radii (at least two). The raw estimates carry an
/// `O(r^2)` error, removed by Richardson extrapolation on the last two radii.
pub fn fit_weingarten(b: &Boundary, p: BoundaryPoint, radii: &[f64]) -> Result<WeingartenFit> {
    if radii.len() < 2 || radii.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::config("need at least two strictly decreasing radii"));
    }
    let n = b.dim();
    let k = 8.0 * (n + 3) as f64;
    let raw = radii
        .iter()
        .map(|&r| Ok(k * (1.0 - exterior_moment(b, p, r)? / flat_moment(n, r)) / (r * r)))
        .collect::<Result<Vec<f64>>>()?;
    let m = radii.len();
    let (r1, r2) = (radii[m - 2], radii[m - 1]);
    let (y1, y2) = (raw[m - 2], raw[m - 1]);
    let c = (y2 * r1 * r1 - y1 * r2 * r2) / (r1 * r1 - r2 * r2);
    let residuals: Vec<f64> = raw.iter().map(|y| (y - c).abs()).collect();
    let scale = c.abs().max(1.0);
    let flagged = residuals.windows(2).any(|w| w[1] > w[0] && w[1] > 1e-9 * scale);
    Ok(WeingartenFit {
        radii: radii.to_vec(),
        raw,
        c,
        residuals,
        flagged,
    })
}

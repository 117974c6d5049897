//! Independent reference solutions used only by the integration tests.
#![allow(dead_code)]

/// Dormand-Prince 5(4) with componentwise relative error control,
/// integrating `y' = f(t, y)` from `a` to `b`.
pub fn rk45<F>(f: F, y0: &[f64], a: f64, b: f64, tol: f64) -> Vec<f64>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = a;
    let dir = (b - a).signum();
    let mut h = (b - a) * 1e-3;
    while (b - t) * dir > 0.0 {
        if (t + h - b) * dir > 0.0 {
            h = b - t;
        }
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        for s in 0..7 {
            let mut ys = y.clone();
            for (j, kj) in k.iter().enumerate() {
                for i in 0..n {
                    ys[i] += h * A[s][j] * kj[i];
                }
            }
            k.push(f(t + C[s] * h, &ys));
        }
        let mut y5 = y.clone();
        let mut err = 0.0_f64;
        for i in 0..n {
            let mut d5 = 0.0;
            let mut d4 = 0.0;
            for s in 0..7 {
                d5 += B5[s] * k[s][i];
                d4 += B4[s] * k[s][i];
            }
            y5[i] += h * d5;
            let sc = tol * y[i].abs().max(y5[i].abs()).max(1e-300);
            err = err.max((h * (d5 - d4)).abs() / sc);
        }
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= fac;
    }
    y
}

/// Closed-form two-phase torsion profile (beta = 0, zero boundary value).
pub fn torsion_two_phase(r: f64, big_r: f64, sc: f64, ss: f64, gamma: f64, n: usize) -> f64 {
    let nn = 2.0 * n as f64;
    if r <= big_r {
        gamma * (1.0 - big_r * big_r) / (nn * ss) + gamma * (big_r * big_r - r * r) / (nn * sc)
    } else {
        gamma * (1.0 - r * r) / (nn * ss)
    }
}

fn solve3(m: [[f64; 3]; 3], b: [f64; 3]) -> [f64; 3] {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(m);
    let mut x = [0.0; 3];
    for c in 0..3 {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = b[r];
        }
        x[c] = det(mc) / d;
    }
    x
}

/// beta = 0 mode solution by power functions `r^k` (core) and
/// `B r^k + C r^{2-N-k}` (shell). Returns `(A, B, C, s_k'(1))`.
pub fn mode_power_oracle(n: usize, k: usize, sc: f64, ss: f64, big_r: f64, gamma: f64) -> (f64, f64, f64, f64) {
    let nn = n as f64;
    let kk = k as f64;
    let q = 2.0 - nn - kk;
    // u'(R-) - u'(R+) for the torsion profile.
    let jump = -gamma * big_r / (nn * sc) + gamma * big_r / (nn * ss);
    // Unknowns A, B, C.
    let m = [
        [-big_r.powf(kk), big_r.powf(kk), big_r.powf(q)],
        [sc * kk * big_r.powf(kk - 1.0), -ss * kk * big_r.powf(kk - 1.0), -ss * q * big_r.powf(q - 1.0)],
        [0.0, 1.0, 1.0],
    ];
    let [a, b, c] = solve3(m, [jump, 0.0, 0.0]);
    (a, b, c, b * kk + c * q)
}

/// Shooting reference for the base profile and mode `k` with beta >= 0.
/// Returns `(u'(R-), u'(R+), s_k'(1))`.
pub fn shooting_oracle(n: usize, k: usize, beta: f64, gamma: f64, sc: f64, ss: f64, big_r: f64) -> (f64, f64, f64) {
    let nn = n as f64;
    let tol = 1e-13;
    let r0 = 1e-5;
    // Base: (sigma r^{N-1} u')' = r^{N-1}(beta u - gamma); state (u, sigma r^{N-1} u').
    let base_rhs = |sig: f64, inhom: f64| {
        move |r: f64, y: &[f64]| vec![y[1] / (sig * r.powf(nn - 1.0)), r.powf(nn - 1.0) * (beta * y[0] - inhom * gamma)]
    };
    // Regular start u(r) = u0 + c2 r^2 with 2N sigma c2 = beta u0 - gamma.
    let start = |u0: f64, inhom: f64| {
        let c2 = (beta * u0 - inhom * gamma) / (2.0 * nn * sc);
        vec![u0 + c2 * r0 * r0, sc * r0.powf(nn - 1.0) * 2.0 * c2 * r0]
    };
    let hom = rk45(base_rhs(sc, 0.0), &start(1.0, 0.0), r0, big_r, tol);
    let par = rk45(base_rhs(sc, 1.0), &start(0.0, 1.0), r0, big_r, tol);
    // Shell from R with state (u, flux): homogeneous basis and a particular part.
    let h1 = rk45(base_rhs(ss, 0.0), &[1.0, 0.0], big_r, 1.0, tol);
    let h2 = rk45(base_rhs(ss, 0.0), &[0.0, 1.0], big_r, 1.0, tol);
    let hp = rk45(base_rhs(ss, 1.0), &[0.0, 0.0], big_r, 1.0, tol);
    // Continuity of u and flux at R: shell = u_R * h1 + F_R * h2 + hp, u(1) = 0.
    // u_R = a hom0 + par0, F_R = a hom1 + par1.
    let a = -(par[0] * h1[0] + par[1] * h2[0] + hp[0]) / (hom[0] * h1[0] + hom[1] * h2[0]);
    let flux_r = a * hom[1] + par[1];
    let rn = big_r.powf(nn - 1.0);
    let du_minus = flux_r / (sc * rn);
    let du_plus = flux_r / (ss * rn);
    let jump = du_minus - du_plus;

    // Mode: (sigma r^{N-1} s')' = (beta r^{N-1} + sigma lam r^{N-3}) s.
    let lam = (k * (n + k - 2)) as f64;
    let mode_rhs = |sig: f64| {
        move |r: f64, y: &[f64]| {
            vec![y[1] / (sig * r.powf(nn - 1.0)), (beta * r.powf(nn - 1.0) + sig * lam * r.powf(nn - 3.0)) * y[0]]
        }
    };
    let kk = k as f64;
    let m0 = rk45(mode_rhs(sc), &[r0.powf(kk), sc * r0.powf(nn - 1.0) * kk * r0.powf(kk - 1.0)], r0, big_r, tol);
    let g1 = rk45(mode_rhs(ss), &[1.0, 0.0], big_r, 1.0, tol);
    let g2 = rk45(mode_rhs(ss), &[0.0, 1.0], big_r, 1.0, tol);
    // s(R+) = A m0 + jump, flux(R+) = A m1; s(1) = 0 fixes A.
    let amp = -(jump * g1[0]) / (m0[0] * g1[0] + m0[1] * g2[0]);
    let s_plus = amp * m0[0] + jump;
    let f_plus = amp * m0[1];
    let flux_one = s_plus * g1[1] + f_plus * g2[1];
    (du_minus, du_plus, flux_one / ss)
}

/// One-phase unit disk, u = 1 on the boundary, u = 0 initially:
/// `u = 1 - sum 2 J0(j r) / (j J1(j)) exp(-j^2 sigma t)`.
pub fn disk_heat_series(r: f64, t: f64, sigma: f64) -> f64 {
    let zeros = twophase::special::bessel_j0_zeros(400);
    let mut s = 0.0;
    for j in zeros {
        let e = (-j * j * sigma * t).exp();
        if e < 1e-300 {
            break;
        }
        let (_, j1) = twophase::special::bessel_j01(j);
        s += 2.0 * twophase::special::bessel_j0(j * r) / (j * j1) * e;
    }
    1.0 - s
}

/// First-order change of the overdetermined residual when the outer circle
/// moves by `cos k theta` (planar, beta = 0): `sigma_s (u_rr(1) + d_r u'(1))`
/// with `u'` harmonic in each phase and `u' = -u_r(1) cos k theta` on r = 1.
pub fn outer_mode_sensitivity(k: usize, sc: f64, ss: f64, big_r: f64, gamma: f64) -> f64 {
    let kk = k as f64;
    let u_r = -gamma / (2.0 * ss);
    let u_rr = -gamma / ss - u_r;
    // shell B r^k + C r^-k, core A r^k with C = -B (sc - ss) R^{2k} / (sc + ss)
    let c_over_b = -(sc - ss) * big_r.powf(2.0 * kk) / (sc + ss);
    let b = -u_r / (1.0 + c_over_b);
    let c = c_over_b * b;
    ss * (u_rr + kk * (b - c))
}

/// Modified Bessel function `I_nu(x)` for integer `nu` by its power series.
/// All terms are positive, so the sum is accurate up to moderate `x`.
pub fn bessel_i_series(nu: u32, x: f64) -> f64 {
    let h = 0.5 * x;
    let mut term = (1..=nu).fold(1.0, |t, k| t * h / k as f64);
    let mut sum = term;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= h * h / (k * (k + nu as f64));
        sum += term;
        if term < 1e-17 * sum {
            return sum;
        }
    }
}

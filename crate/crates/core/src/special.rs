//! Bessel functions, Bessel zeros and Gauss-Legendre rules.

use std::f64::consts::PI;

/// `J_0(x)` and `J_1(x)` by Miller's backward recurrence normalized with
/// `J_0 + 2 sum J_{2k} = 1`. Accurate to a few ulps times the starting order.
pub fn bessel_j01(x: f64) -> (f64, f64) {
    let ax = x.abs();
    if ax < 1e-8 {
        return (1.0 - 0.25 * x * x, 0.5 * x);
    }
    let mut m = (ax + 15.0 * ax.powf(1.0 / 3.0) + 30.0) as usize;
    if m % 2 == 1 {
        m += 1;
    }
    let mut jp1 = 0.0_f64;
    let mut j = 1e-300_f64;
    let mut sum = 0.0_f64;
    let mut j0 = 0.0;
    let mut j1 = 0.0;
    for k in (1..=m).rev() {
        let jm1 = 2.0 * k as f64 / ax * j - jp1;
        jp1 = j;
        j = jm1;
        // after the update, j holds J_{k-1}
        if (k - 1) % 2 == 0 && k > 1 {
            sum += 2.0 * j;
        }
        if k == 2 {
            j1 = j;
        }
        if k == 1 {
            j0 = j;
            sum += j;
        }
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp1 *= 1e-250;
            sum *= 1e-250;
            j1 *= 1e-250;
        }
    }
    let j1 = if x < 0.0 { -j1 / sum } else { j1 / sum };
    (j0 / sum, j1)
}

pub fn bessel_j0(x: f64) -> f64 {
    bessel_j01(x).0
}

pub fn bessel_j1(x: f64) -> f64 {
    bessel_j01(x).1
}

/// The first `n` positive zeros of `J_0`.
pub fn bessel_j0_zeros(n: usize) -> Vec<f64> {
    (1..=n)
        .map(|k| {
            let beta = (k as f64 - 0.25) * PI;
            let mut z = beta + 1.0 / (8.0 * beta) - 31.0 / (384.0 * beta.powi(3));
            for _ in 0..50 {
                let (j0, j1) = bessel_j01(z);
                let step = j0 / (-j1);
                z -= step;
                if step.abs() < 1e-15 * z {
                    break;
                }
            }
            z
        })
        .collect()
}

/// Exponentially scaled modified Bessel functions `e^{-x} I_0(x)` and
/// `e^{-x} I_1(x)` for `x >= 0`, by Miller's recurrence normalized with
/// `I_0 + 2 sum I_k = e^x`.
pub fn bessel_i01_scaled(x: f64) -> (f64, f64) {
    assert!(x >= 0.0, "bessel_i01_scaled requires x >= 0");
    if x < 1e-8 {
        return (1.0 - x, 0.5 * x);
    }
    let m = (2.0 * x + 10.0 * x.sqrt() + 40.0) as usize;
    let mut ip1 = 0.0_f64;
    let mut i = 1e-300_f64;
    let mut sum = 0.0_f64;
    let mut i0 = 0.0;
    let mut i1 = 0.0;
    for k in (1..=m).rev() {
        let im1 = 2.0 * k as f64 / x * i + ip1;
        ip1 = i;
        i = im1;
        if k == 2 {
            i1 = i;
        }
        if k > 1 {
            sum += 2.0 * i;
        } else {
            i0 = i;
            sum += i;
        }
        if i > 1e250 {
            i *= 1e-250;
            ip1 *= 1e-250;
            sum *= 1e-250;
            i1 *= 1e-250;
        }
    }
    (i0 / sum, i1 / sum)
}

/// Ratio `I_1(x)/I_0(x)`.
pub fn bessel_i1_over_i0(x: f64) -> f64 {
    let (i0, i1) = bessel_i01_scaled(x);
    i1 / i0
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        dp = if d != 0.0 { d } else { dp };
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let (p, pm1) = if n == 0 { (1.0, 0.0) } else { (p1, p0) };
    let d = n as f64 * (z * p - pm1) / (z * z - 1.0);
    (p, d)
}

/// Composite Gauss-Legendre rule with `panels` equal panels on `[a, b]`.
pub fn composite_gauss(a: f64, b: f64, panels: usize, order: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * order);
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((c + 0.5 * h * xi, 0.5 * h * wi));
        }
    }
    out
}

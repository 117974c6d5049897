//! Vertex-centred finite volumes on a 1D grid with piecewise constant
//! conductivity, either with the radial weight `r^{N-1}` or flat.
//!
//! Node `i` owns the control volume between the neighbouring cell midpoints.
//! Conductivity is constant per cell, so material interfaces must sit on nodes.
//! The flux through the face at midpoint `m` is `sigma * w(m) * (u_{i+1} - u_i) / h`,
//! which is exact for quadratic profiles.

use serde::{Deserialize, Serialize};

use crate::linalg::Tridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Weight {
    /// Radial symmetry in dimension `N`, weight `r^{N-1}`.
    Radial(usize),
    /// Planar slab, weight 1.
    Flat,
}

impl Weight {
    pub fn at(&self, r: f64) -> f64 {
        match *self {
            Weight::Radial(n) => r.powi(n as i32 - 1),
            Weight::Flat => 1.0,
        }
    }

    /// `int_a^b w(r) r^{shift} dr`.
    pub fn integral(&self, a: f64, b: f64, shift: i32) -> f64 {
        let p = match *self {
            Weight::Radial(n) => n as i32 - 1 + shift,
            Weight::Flat => shift,
        };
        power_integral(a, b, p)
    }
}

/// `int_a^b r^p dr`, exact.
pub fn power_integral(a: f64, b: f64, p: i32) -> f64 {
    if p == -1 {
        if a <= 0.0 {
            return f64::INFINITY;
        }
        (b / a).ln()
    } else {
        let q = p + 1;
        if q < 0 && a <= 0.0 {
            return f64::INFINITY;
        }
        (b.powi(q) - a.powi(q)) / q as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layered1d {
    pub nodes: Vec<f64>,
    pub weight: Weight,
    /// Conductivity of cell `[nodes[i], nodes[i+1]]`.
    pub cell_sigma: Vec<f64>,
}

impl Layered1d {
    pub fn new(nodes: Vec<f64>, weight: Weight, cell_sigma: Vec<f64>) -> Self {
        assert_eq!(cell_sigma.len() + 1, nodes.len());
        debug_assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        Layered1d {
            nodes,
            weight,
            cell_sigma,
        }
    }

    /// Builds cell conductivities from a rule on the cell midpoint.
    pub fn from_rule(nodes: Vec<f64>, weight: Weight, sigma: impl Fn(f64) -> f64) -> Self {
        let cell_sigma = nodes.windows(2).map(|w| sigma(0.5 * (w[0] + w[1]))).collect();
        Layered1d::new(nodes, weight, cell_sigma)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn midpoint(&self, cell: usize) -> f64 {
        0.5 * (self.nodes[cell] + self.nodes[cell + 1])
    }

    /// Face transmissibility of cell `c`.
    pub fn face(&self, c: usize) -> f64 {
        let h = self.nodes[c + 1] - self.nodes[c];
        self.cell_sigma[c] * self.weight.at(self.midpoint(c)) / h
    }

    /// Left and right halves of the control volume of node `i`, weighted by
    /// `w(r) r^{shift}`.
    pub fn half_volumes(&self, i: usize, shift: i32) -> (f64, f64) {
        let n = self.n_nodes();
        let r = self.nodes[i];
        let left = if i == 0 {
            0.0
        } else {
            self.weight.integral(self.midpoint(i - 1), r, shift)
        };
        let right = if i + 1 == n {
            0.0
        } else {
            self.weight.integral(r, self.midpoint(i), shift)
        };
        (left, right)
    }

    pub fn volumes(&self) -> Vec<f64> {
        (0..self.n_nodes())
            .map(|i| {
                let (l, r) = self.half_volumes(i, 0);
                l + r
            })
            .collect()
    }

    /// Matrix of `-d/dr(sigma w du/dr)` integrated over control volumes (no
    /// boundary conditions; natural zero flux at both ends).
    pub fn stiffness(&self) -> Tridiagonal {
        let n = self.n_nodes();
        let mut a = Tridiagonal::zeros(n);
        for c in 0..n - 1 {
            let f = self.face(c);
            a.diag[c] += f;
            a.diag[c + 1] += f;
            a.upper[c] -= f;
            a.lower[c + 1] -= f;
        }
        a
    }

    /// Flux `sigma w u'` through the face of cell `c`.
    pub fn face_flux(&self, u: &[f64], c: usize) -> f64 {
        self.face(c) * (u[c + 1] - u[c])
    }

    /// One-sided derivatives at node `i` reconstructed from half-cell balances,
    /// given the source density `q_i` (so that `(sigma w u')' = q w` on each half).
    /// Returns `(left, right)`; a missing side is `None`.
    pub fn one_sided_derivatives(&self, u: &[f64], i: usize, q: f64) -> (Option<f64>, Option<f64>) {
        let n = self.n_nodes();
        let w = self.weight.at(self.nodes[i]);
        let (vl, vr) = self.half_volumes(i, 0);
        let left = (i > 0 && w > 0.0).then(|| {
            let f = self.face_flux(u, i - 1);
            (f + q * vl) / (self.cell_sigma[i - 1] * w)
        });
        let right = (i + 1 < n && w > 0.0).then(|| {
            let f = self.face_flux(u, i);
            (f - q * vr) / (self.cell_sigma[i] * w)
        });
        (left, right)
    }

    /// Piecewise-linear interpolation of nodal values at `r`.
    pub fn interpolate(&self, u: &[f64], r: f64) -> f64 {
        interpolate_linear(&self.nodes, u, r)
    }
}

/// Piecewise-linear interpolation, clamped at the ends.
pub fn interpolate_linear(x: &[f64], y: &[f64], t: f64) -> f64 {
    let n = x.len();
    if t <= x[0] {
        return y[0];
    }
    if t >= x[n - 1] {
        return y[n - 1];
    }
    let j = x.partition_point(|&v| v <= t).clamp(1, n - 1);
    let (x0, x1) = (x[j - 1], x[j]);
    let s = (t - x0) / (x1 - x0);
    y[j - 1] * (1.0 - s) + y[j] * s
}

/// Nodes on `[a, b]` with spacing growing geometrically from `h0` at `a`
/// until it reaches `hmax`; the last cell is merged so that `b` is hit exactly.
pub fn graded_nodes(a: f64, b: f64, h0: f64, ratio: f64, hmax: f64) -> Vec<f64> {
    let mut x = vec![a];
    let mut h = h0;
    let mut t = a;
    while t + h < b - 0.5 * h {
        t += h;
        x.push(t);
        h = (h * ratio).min(hmax);
    }
    x.push(b);
    x
}

/// Uniform nodes on `[a, b]` with `cells` cells.
pub fn uniform_nodes(a: f64, b: f64, cells: usize) -> Vec<f64> {
    (0..=cells)
        .map(|i| {
            if i == cells {
                b
            } else {
                a + (b - a) * i as f64 / cells as f64
            }
        })
        .collect()
}

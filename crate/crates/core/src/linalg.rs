//! Small direct and iterative solvers used by the discretizations.
//!
//! The radial problems produce tridiagonal M-matrices (Thomas algorithm), the
//! planar finite element problems produce symmetric positive definite sparse
//! matrices which are factored with an envelope Cholesky after a reverse
//! Cuthill-McKee reordering.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Tridiagonal matrix stored by diagonals. `lower[i]` multiplies `x[i-1]` in row
/// `i` and `upper[i]` multiplies `x[i+1]`; `lower[0]` and `upper[n-1]` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Tridiagonal {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Thomas algorithm. Fails on a vanishing pivot.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::config("tridiagonal solve: dimension mismatch"));
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let scale = self
            .diag
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
            .max(f64::MIN_POSITIVE);
        let mut piv = self.diag[0];
        if piv.abs() <= 1e-300 * scale.max(1.0) {
            return Err(Error::numerical("zero pivot in tridiagonal solve", 0.0));
        }
        c[0] = self.upper[0] / piv;
        d[0] = rhs[0] / piv;
        for i in 1..n {
            piv = self.diag[i] - self.lower[i] * c[i - 1];
            if piv.abs() <= 1e-300 * scale.max(1.0) || !piv.is_finite() {
                return Err(Error::numerical(
                    format!("zero pivot in tridiagonal solve at row {i}"),
                    piv.abs(),
                ));
            }
            c[i] = if i + 1 < n { self.upper[i] / piv } else { 0.0 };
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / piv;
        }
        let mut x = d;
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(x)
    }

    /// Infinity-norm of the matrix.
    pub fn norm_inf(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i].abs();
                if i > 0 {
                    s += self.lower[i].abs();
                }
                if i + 1 < n {
                    s += self.upper[i].abs();
                }
                s
            })
            .fold(0.0, f64::max)
    }

    /// Exact infinity-norm condition number for an M-matrix: `A^{-1}` is
    /// entrywise nonnegative, so `||A^{-1}||_inf = max_i (A^{-1} 1)_i`.
    /// For matrices that are not M-matrices the value is a lower bound.
    pub fn condition_inf_mmatrix(&self) -> Result<f64> {
        let ones = vec![1.0; self.len()];
        let y = self.solve(&ones)?;
        let inv_norm = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(self.norm_inf() * inv_norm)
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

/// Accumulates `(row, col, value)` triplets; duplicates are summed.
#[derive(Debug, Clone, Default)]
pub struct TripletBuilder {
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(n: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::new(),
        }
    }

    pub fn with_capacity(n: usize, cap: usize) -> Self {
        TripletBuilder {
            n,
            entries: Vec::with_capacity(cap),
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.n && j < self.n);
        self.entries.push((i, j, v));
    }

    pub fn build(mut self) -> CsrMatrix {
        self.entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut indptr = vec![0usize; self.n + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut data: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in self.entries {
            if last == Some((i, j)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(j);
                data.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.n {
            indptr[i + 1] += indptr[i];
        }
        CsrMatrix {
            n: self.n,
            indptr,
            indices,
            data,
        }
    }
}

impl CsrMatrix {
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_into(x, &mut y);
        y
    }

    pub fn mul_into(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.indptr[i]..self.indptr[i + 1] {
                s += self.data[p] * x[self.indices[p]];
            }
            y[i] = s;
        }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |p| (self.indices[p], self.data[p]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map(|(_, v)| v)
            .unwrap_or(0.0)
    }

    /// Linear combination `a*self + b*other`; both must share dimension.
    pub fn axpby(&self, a: f64, other: &CsrMatrix, b: f64) -> CsrMatrix {
        let mut t = TripletBuilder::with_capacity(self.n, self.data.len() + other.data.len());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                t.add(i, j, a * v);
            }
            for (j, v) in other.row(i) {
                t.add(i, j, b * v);
            }
        }
        t.build()
    }

    /// Restriction to the rows and columns flagged `keep`; returns the matrix
    /// and the map from original to reduced index.
    pub fn restrict(&self, keep: &[bool]) -> (CsrMatrix, Vec<Option<usize>>) {
        let mut map = vec![None; self.n];
        let mut m = 0;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                map[i] = Some(m);
                m += 1;
            }
        }
        let mut t = TripletBuilder::new(m);
        for i in 0..self.n {
            if let Some(ri) = map[i] {
                for (j, v) in self.row(i) {
                    if let Some(rj) = map[j] {
                        t.add(ri, rj, v);
                    }
                }
            }
        }
        (t.build(), map)
    }
}

/// Reverse Cuthill-McKee ordering of the (symmetric) sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n;
    let degree: Vec<usize> = (0..n).map(|i| a.indptr[i + 1] - a.indptr[i]).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    loop {
        // Start each component from a minimum-degree unvisited node, then move to
        // a pseudo-peripheral node by repeated BFS.
        let start = match (0..n).filter(|&i| !visited[i]).min_by_key(|&i| degree[i]) {
            Some(s) => s,
            None => break,
        };
        let mut root = start;
        let mut last_depth = 0;
        for _ in 0..4 {
            let (far, depth) = bfs_farthest(a, root, &visited, &degree);
            if depth <= last_depth {
                break;
            }
            last_depth = depth;
            root = far;
        }
        let mut queue = VecDeque::new();
        visited[root] = true;
        queue.push_back(root);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = a
                .row(v)
                .map(|(j, _)| j)
                .filter(|&j| j != v && !visited[j])
                .collect();
            nbrs.sort_unstable_by_key(|&j| (degree[j], j));
            nbrs.dedup();
            for j in nbrs {
                if !visited[j] {
                    visited[j] = true;
                    queue.push_back(j);
                }
            }
        }
    }
    order.reverse();
    order
}

fn bfs_farthest(a: &CsrMatrix, root: usize, blocked: &[bool], degree: &[usize]) -> (usize, usize) {
    let n = a.n;
    let mut level = vec![usize::MAX; n];
    level[root] = 0;
    let mut queue = VecDeque::from([root]);
    let mut far = root;
    while let Some(v) = queue.pop_front() {
        let lv = level[v];
        if lv > level[far] || (lv == level[far] && degree[v] < degree[far]) {
            far = v;
        }
        for (j, _) in a.row(v) {
            if !blocked[j] && level[j] == usize::MAX {
                level[j] = lv + 1;
                queue.push_back(j);
            }
        }
    }
    (far, level[far])
}

/// Envelope (skyline) Cholesky factorization `P A P^T = L L^T`.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    n: usize,
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    values: Vec<f64>,
}

impl SkylineCholesky {
    /// Factor a symmetric positive definite matrix given with its full pattern.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with_perm(a, perm)
    }

    pub fn factor_with_perm(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let n = a.n;
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old_i in 0..n {
            let i = inv[old_i];
            for (old_j, _) in a.row(old_i) {
                let j = inv[old_j];
                if j < i {
                    first[i] = first[i].min(j);
                } else if i < j {
                    first[j] = first[j].min(i);
                }
            }
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i] + 1);
        }
        let mut values = vec![0.0; offset[n]];
        for old_i in 0..n {
            let i = inv[old_i];
            for (old_j, v) in a.row(old_i) {
                let j = inv[old_j];
                if j <= i {
                    values[offset[i] + (j - first[i])] += v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let row_i = offset[i];
            for j in fi..=i {
                let fj = first[j];
                let row_j = offset[j];
                let k0 = fi.max(fj);
                let mut s = values[row_i + (j - fi)];
                for k in k0..j {
                    s -= values[row_i + (k - fi)] * values[row_j + (k - fj)];
                }
                if j < i {
                    let d = values[row_j + (j - fj)];
                    values[row_i + (j - fi)] = s / d;
                } else {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::numerical(
                            format!("matrix not positive definite at pivot {i}"),
                            s,
                        ));
                    }
                    values[row_i + (i - fi)] = s.sqrt();
                }
            }
        }
        Ok(SkylineCholesky {
            n,
            perm,
            first,
            offset,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y: Vec<f64> = (0..n).map(|i| b[self.perm[i]]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = self.offset[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.values[row + (k - fi)] * y[k];
            }
            y[i] = s / self.values[row + (i - fi)];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = self.offset[i];
            y[i] /= self.values[row + (i - fi)];
            let yi = y[i];
            for k in fi..i {
                y[k] -= self.values[row + (k - fi)] * yi;
            }
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        x
    }
}

/// Conjugate gradients for a symmetric positive definite operator.
/// Returns the solution and the final relative residual.
pub fn conjugate_gradient<F>(apply: F, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0.0));
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::numerical("CG: operator not positive definite", rr.sqrt() / bnorm));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new = dot(&r, &r);
        if rr_new.sqrt() <= tol * bnorm {
            return Ok((x, rr_new.sqrt() / bnorm));
        }
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    Err(Error::numerical("CG did not converge", rr.sqrt() / bnorm))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

//! Dense complex matrices sized for Milnor-rank problems.
//!
//! Everything in the crate works with matrices of rank at most a dozen or
//! so, but needs machinery that general-purpose linear-algebra crates do
//! not expose: characteristic polynomials with simultaneous root finding,
//! eigenvalue clustering that is honest about multiple eigenvalues, and
//! generalized spectral projectors good enough to evaluate jets of analytic
//! functions on non-semisimple operators.  At these sizes LU with partial
//! pivoting plus the Aberth iteration is both simpler and easier to audit
//! than pulling in an external solver.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C = Complex64;

/// Unconjugated dot product `sum_i a_i b_i`.
///
/// All pairings in this crate are bilinear, never sesquilinear, so this is
/// the only product we need.
pub fn dot(a: &[C], b: &[C]) -> C {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Evaluate a polynomial with ascending coefficients by Horner's rule.
pub fn poly_eval(p: &[C], x: C) -> C {
    p.iter().rev().fold(C::new(0.0, 0.0), |acc, &c| acc * x + c)
}

/// Derivative of a polynomial with ascending coefficients.
pub fn poly_deriv(p: &[C]) -> Vec<C> {
    if p.len() <= 1 {
        return vec![C::new(0.0, 0.0)];
    }
    p.iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| c * k as f64)
        .collect()
}

/// Product of two polynomials with ascending coefficients.
pub fn poly_mul(a: &[C], b: &[C]) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Coefficients of `p(c + u)` as a polynomial in `u` (Taylor shift by
/// repeated synthetic division).
fn taylor_shift(p: &[C], c: C) -> Vec<C> {
    let mut a = p.to_vec();
    let d = a.len() - 1;
    for i in 0..=d {
        for j in (i..d).rev() {
            let t = a[j + 1] * c;
            a[j] += t;
        }
    }
    a
}

/// Multiplicative inverse of a power series `g` (with `g[0] != 0`) to
/// `m` terms.
fn series_inv(g: &[C], m: usize) -> Vec<C> {
    let mut h = vec![C::new(0.0, 0.0); m];
    h[0] = 1.0 / g[0];
    for k in 1..m {
        let mut s = C::new(0.0, 0.0);
        for j in 1..=k {
            if j < g.len() {
                s += g[j] * h[k - j];
            }
        }
        h[k] = -s / g[0];
    }
    h
}

/// Roots of a monic polynomial (ascending coefficients) via the
/// Aberth-Ehrlich simultaneous iteration.
///
/// Multiple roots come back as a numerically scattered cluster; callers
/// that care about multiplicities should pass the result through
/// [`cluster_roots`].
pub fn poly_roots(p: &[C]) -> Result<Vec<C>> {
    let n = p.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    debug_assert!((p[n] - C::new(1.0, 0.0)).norm() < 1e-9, "monic expected");
    let bound = 1.0 + p[..n].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut z: Vec<C> = (0..n)
        .map(|k| {
            // asymmetric starting circle so symmetric spectra do not stall
            let th = 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.43;
            let r = bound * (0.55 + 0.25 * ((k % 4) as f64) / 4.0);
            C::from_polar(r, th)
        })
        .collect();
    let dp = poly_deriv(p);
    for _ in 0..600 {
        let mut settled = true;
        for k in 0..n {
            let pv = poly_eval(p, z[k]);
            // backward-stable residual bound: |p| evaluated at |z|
            let mag: f64 = p
                .iter()
                .enumerate()
                .map(|(j, c)| c.norm() * z[k].norm().powi(j as i32))
                .sum();
            if pv.norm() <= 8.0 * f64::EPSILON * mag {
                continue;
            }
            let dv = poly_eval(&dp, z[k]);
            let newton = if dv.norm() > 1e-290 { pv / dv } else { pv };
            let mut s = C::new(0.0, 0.0);
            for j in 0..n {
                if j != k {
                    let mut d = z[k] - z[j];
                    if d.norm() < 1e-290 {
                        d = C::new(1e-12, 1e-12);
                    }
                    s += 1.0 / d;
                }
            }
            let denom = C::new(1.0, 0.0) - newton * s;
            let w = if denom.norm() > 1e-290 { newton / denom } else { newton };
            z[k] -= w;
            if w.norm() > 1e-14 * (1.0 + z[k].norm()) {
                settled = false;
            }
        }
        if settled {
            return Ok(z);
        }
    }
    // final acceptance check: every approximant sits at a backward-stable
    // residual even if corrections kept jittering (multiple-root clusters do)
    let ok = z.iter().all(|&zk| {
        let mag: f64 = p
            .iter()
            .enumerate()
            .map(|(j, c)| c.norm() * zk.norm().powi(j as i32))
            .sum();
        poly_eval(p, zk).norm() <= 1e3 * f64::EPSILON * mag.max(1e-300)
    });
    if ok {
        Ok(z)
    } else {
        Err(Error::NoConvergence("aberth root finding"))
    }
}

/// Group numerically scattered root approximants into clusters and return
/// `(centroid, multiplicity)` pairs ordered by `(re, im)`.
///
/// A root of multiplicity `m` computed in double precision scatters over a
/// disc of radius roughly `eps^(1/m)`, so whether a set of approximants is
/// one multiple root can only be judged against the scatter bound for its
/// own size.  We therefore split top-down: a tentative cluster of size `m`
/// whose diameter exceeds the bound for an `m`-fold root is cut at the
/// largest edge of its minimum spanning tree, recursively.  Centroids of
/// genuine clusters stay accurate; callers that need full precision should
/// polish with [`refine_root`].
pub fn cluster_roots(roots: &[C]) -> Vec<(C, usize)> {
    let scale = 1.0 + roots.iter().map(|r| r.norm()).fold(0.0, f64::max);
    // admissible diameter for an m-fold root, relative to scale
    let diam_limit =
        |m: usize| -> f64 { (1e-10f64).powf(1.0 / m as f64).min(0.25) * scale };

    fn centroid(idx: &[usize], roots: &[C]) -> C {
        idx.iter().map(|&k| roots[k]).sum::<C>() / idx.len() as f64
    }

    fn split(
        idx: Vec<usize>,
        roots: &[C],
        diam_limit: &dyn Fn(usize) -> f64,
        out: &mut Vec<(C, usize)>,
    ) {
        let m = idx.len();
        if m == 1 {
            out.push((roots[idx[0]], 1));
            return;
        }
        let diam = idx
            .iter()
            .flat_map(|&i| idx.iter().map(move |&j| (roots[i] - roots[j]).norm()))
            .fold(0.0, f64::max);
        if diam <= diam_limit(m) {
            out.push((centroid(&idx, roots), m));
            return;
        }
        // minimum spanning tree (Prim), then cut the largest edge
        let mut in_tree = vec![false; m];
        let mut best_dist = vec![f64::INFINITY; m];
        let mut best_from = vec![0usize; m];
        in_tree[0] = true;
        for k in 0..m {
            best_dist[k] = (roots[idx[k]] - roots[idx[0]]).norm();
        }
        let mut edges: Vec<(f64, usize, usize)> = Vec::new();
        for _ in 1..m {
            let next = (0..m)
                .filter(|&k| !in_tree[k])
                .min_by(|&a, &b| best_dist[a].partial_cmp(&best_dist[b]).unwrap())
                .unwrap();
            in_tree[next] = true;
            edges.push((best_dist[next], best_from[next], next));
            for k in 0..m {
                if !in_tree[k] {
                    let d = (roots[idx[k]] - roots[idx[next]]).norm();
                    if d < best_dist[k] {
                        best_dist[k] = d;
                        best_from[k] = next;
                    }
                }
            }
        }
        let cut = edges
            .iter()
            .enumerate()
            .max_by(|a, b| a.1 .0.partial_cmp(&b.1 .0).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        // components of the tree with the cut edge removed
        let mut adj = vec![Vec::new(); m];
        for (e, &(_, a, b)) in edges.iter().enumerate() {
            if e != cut {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut side = vec![false; m];
        let mut stack = vec![0usize];
        let mut seen = vec![false; m];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            side[v] = true;
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for k in 0..m {
            if side[k] {
                left.push(idx[k]);
            } else {
                right.push(idx[k]);
            }
        }
        split(left, roots, diam_limit, out);
        split(right, roots, diam_limit, out);
    }

    let mut clusters = Vec::new();
    split((0..roots.len()).collect(), roots, &diam_limit, &mut clusters);
    clusters.sort_by(|a, b| {
        (a.0.re, a.0.im)
            .partial_cmp(&(b.0.re, b.0.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    clusters
}

/// Polish an approximate root of multiplicity `m` by Newton iteration on
/// the `(m-1)`-st derivative, where the root is simple.
pub fn refine_root(p: &[C], z0: C, m: usize) -> C {
    let mut d = p.to_vec();
    for _ in 1..m {
        d = poly_deriv(&d);
    }
    let dd = poly_deriv(&d);
    let mut z = z0;
    for _ in 0..60 {
        let f = poly_eval(&d, z);
        let g = poly_eval(&dd, z);
        if g.norm() < 1e-290 {
            break;
        }
        let w = f / g;
        let next = z - w;
        // a refinement that wanders off is worse than none
        if (next - z0).norm() > 0.1 * (1.0 + z0.norm()) {
            break;
        }
        z = next;
        if w.norm() <= 1e-16 * (1.0 + z.norm()) {
            break;
        }
    }
    z
}

/// Square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMat {
    n: usize,
    a: Vec<C>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat { n, a: vec![C::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = C::new(1.0, 0.0);
        }
        m
    }

    pub fn diag(d: &[C]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &x) in d.iter().enumerate() {
            m[(i, i)] = x;
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "square matrix expected");
        Self::from_fn(n, |i, j| rows[i][j])
    }

    pub fn from_real(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "square matrix expected");
        Self::from_fn(n, |i, j| C::new(rows[i][j], 0.0))
    }

    pub fn from_int(rows: &[Vec<i64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "square matrix expected");
        Self::from_fn(n, |i, j| C::new(rows[i][j] as f64, 0.0))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[C] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    pub fn col(&self, j: usize) -> Vec<C> {
        (0..self.n).map(|i| self[(i, j)]).collect()
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn scale(&self, s: C) -> Self {
        CMat { n: self.n, a: self.a.iter().map(|&x| x * s).collect() }
    }

    pub fn add(&self, o: &Self) -> Self {
        assert_eq!(self.n, o.n);
        CMat {
            n: self.n,
            a: self.a.iter().zip(&o.a).map(|(&x, &y)| x + y).collect(),
        }
    }

    pub fn sub(&self, o: &Self) -> Self {
        assert_eq!(self.n, o.n);
        CMat {
            n: self.n,
            a: self.a.iter().zip(&o.a).map(|(&x, &y)| x - y).collect(),
        }
    }

    pub fn matmul(&self, o: &Self) -> Self {
        assert_eq!(self.n, o.n);
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self[(i, k)];
                if aik.norm() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += aik * o[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[C]) -> Vec<C> {
        assert_eq!(self.n, v.len());
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    /// Row-vector action `v^T M`.
    pub fn vecmat(&self, v: &[C]) -> Vec<C> {
        assert_eq!(self.n, v.len());
        (0..self.n)
            .map(|j| (0..self.n).map(|i| v[i] * self[(i, j)]).sum())
            .collect()
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::identity(self.n);
        for _ in 0..k {
            out = out.matmul(self);
        }
        out
    }

    pub fn trace(&self) -> C {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    pub fn norm_max(&self) -> f64 {
        self.a.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self, tol: f64) -> bool {
        self.norm_max() <= tol
    }

    /// LU decomposition with partial pivoting.
    pub fn lu(&self) -> Result<Lu> {
        let n = self.n;
        let mut lu = self.clone();
        let mut piv: Vec<usize> = (0..n).collect();
        let mut parity = 1.0;
        let scale = self.norm_max().max(1.0);
        for k in 0..n {
            let (pr, pm) = (k..n)
                .map(|i| (i, lu[(i, k)].norm()))
                .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
                .unwrap();
            if pm < 1e-13 * scale {
                return Err(Error::Singular("lu factorization"));
            }
            if pr != k {
                for j in 0..n {
                    let t = lu[(k, j)];
                    lu[(k, j)] = lu[(pr, j)];
                    lu[(pr, j)] = t;
                }
                piv.swap(k, pr);
                parity = -parity;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                for j in k + 1..n {
                    let s = f * lu[(k, j)];
                    lu[(i, j)] -= s;
                }
            }
        }
        Ok(Lu { lu, piv, parity })
    }

    pub fn solve_vec(&self, b: &[C]) -> Result<Vec<C>> {
        Ok(self.lu()?.solve_vec(b))
    }

    pub fn solve_mat(&self, b: &CMat) -> Result<CMat> {
        Ok(self.lu()?.solve_mat(b))
    }

    pub fn inverse(&self) -> Result<CMat> {
        self.solve_mat(&CMat::identity(self.n))
    }

    pub fn det(&self) -> C {
        match self.lu() {
            Ok(f) => f.det(),
            Err(_) => C::new(0.0, 0.0),
        }
    }

    /// Monic characteristic polynomial `det(x I - A)`, ascending
    /// coefficients, by the Faddeev-LeVerrier recurrence.
    pub fn charpoly(&self) -> Vec<C> {
        let n = self.n;
        let mut coeff = vec![C::new(0.0, 0.0); n + 1];
        coeff[n] = C::new(1.0, 0.0);
        let mut m = CMat::identity(n);
        for k in 1..=n {
            let am = self.matmul(&m);
            let c = -am.trace() / k as f64;
            coeff[n - k] = c;
            m = am.add(&CMat::identity(n).scale(c));
        }
        coeff
    }

    /// All eigenvalues with multiplicity, as scattered approximants.
    pub fn eigenvalues(&self) -> Result<Vec<C>> {
        poly_roots(&self.charpoly())
    }

    /// Generalized spectral decomposition `A = sum_i (eig_i P_i + N_i)`.
    pub fn spectral(&self) -> Result<Spectral> {
        let n = self.n;
        let charpoly = self.charpoly();
        let mut clustered = cluster_roots(&poly_roots(&charpoly)?);
        for c in clustered.iter_mut() {
            c.0 = refine_root(&charpoly, c.0, c.1);
        }
        let mut proj = Vec::new();
        let mut nil = Vec::new();
        if clustered.len() == 1 {
            proj.push(CMat::identity(n));
            nil.push(self.sub(&CMat::identity(n).scale(clustered[0].0)));
        } else {
            for (i, &(li, mi)) in clustered.iter().enumerate() {
                // q_i = prod_{j != i} (X - eig_j)^{m_j}
                let mut q = vec![C::new(1.0, 0.0)];
                for (j, &(lj, mj)) in clustered.iter().enumerate() {
                    if j != i {
                        for _ in 0..mj {
                            q = poly_mul(&q, &[-lj, C::new(1.0, 0.0)]);
                        }
                    }
                }
                // r_i = Taylor expansion of 1/q_i at eig_i, m_i terms
                let shifted = taylor_shift(&q, li);
                let r = series_inv(&shifted, mi);
                // p_i(X) = q_i(X) * sum_l r[l] (X - eig_i)^l
                let mut rpoly = vec![C::new(0.0, 0.0)];
                let mut pow = vec![C::new(1.0, 0.0)];
                for &rl in &r {
                    let mut term = pow.clone();
                    for t in term.iter_mut() {
                        *t = *t * rl;
                    }
                    rpoly = poly_add(&rpoly, &term);
                    pow = poly_mul(&pow, &[-li, C::new(1.0, 0.0)]);
                }
                let p = poly_mul(&q, &rpoly);
                let pi = self.poly_apply(&p);
                nil.push(self.sub(&CMat::identity(n).scale(li)).matmul(&pi));
                proj.push(pi);
            }
        }
        let spec = Spectral {
            eigs: clustered.iter().map(|c| c.0).collect(),
            mult: clustered.iter().map(|c| c.1).collect(),
            proj,
            nil,
        };
        // sanity: projectors resolve the identity and nilpotents vanish at
        // their multiplicity
        let mut sum = CMat::zeros(n);
        for p in &spec.proj {
            sum = sum.add(p);
        }
        let scale = self.norm_max().max(1.0);
        if sum.sub(&CMat::identity(n)).norm_max() > 1e-7 * scale {
            return Err(Error::SpectralSplit);
        }
        for (k, nk) in spec.nil.iter().enumerate() {
            if nk.pow(spec.mult[k] as u32).norm_max() > 1e-6 * scale.powi(spec.mult[k] as i32)
            {
                return Err(Error::SpectralSplit);
            }
        }
        Ok(spec)
    }

    /// Evaluate a polynomial (ascending coefficients) at this matrix.
    pub fn poly_apply(&self, p: &[C]) -> CMat {
        let n = self.n;
        let mut out = CMat::zeros(n);
        for &c in p.iter().rev() {
            out = out.matmul(self).add(&CMat::identity(n).scale(c));
        }
        out
    }

    /// Evaluate an analytic function on the matrix through its spectral
    /// decomposition.  `jet(x, m)` must return the derivatives
    /// `[f(x), f'(x), ..., f^(m-1)(x)]`.
    pub fn matfun<F>(&self, mut jet: F) -> Result<CMat>
    where
        F: FnMut(C, usize) -> Result<Vec<C>>,
    {
        let spec = self.spectral()?;
        let n = self.n;
        let mut out = CMat::zeros(n);
        for i in 0..spec.eigs.len() {
            let m = spec.mult[i];
            let j = jet(spec.eigs[i], m)?;
            assert!(j.len() >= m, "jet too short");
            out = out.add(&spec.proj[i].scale(j[0]));
            let mut npow = spec.nil[i].clone();
            let mut fact = 1.0;
            for l in 1..m {
                fact *= l as f64;
                out = out.add(&npow.scale(j[l] / fact));
                npow = npow.matmul(&spec.nil[i]);
            }
        }
        Ok(out)
    }
}

fn poly_add(a: &[C], b: &[C]) -> Vec<C> {
    let mut out = vec![C::new(0.0, 0.0); a.len().max(b.len())];
    for (i, &x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, &x) in b.iter().enumerate() {
        out[i] += x;
    }
    out
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C;
    fn index(&self, (i, j): (usize, usize)) -> &C {
        &self.a[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C {
        &mut self.a[i * self.n + j]
    }
}

/// LU factors with the pivot permutation.
pub struct Lu {
    lu: CMat,
    piv: Vec<usize>,
    parity: f64,
}

impl Lu {
    pub fn solve_vec(&self, b: &[C]) -> Vec<C> {
        let n = self.lu.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<C> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 1..n {
            for k in 0..i {
                let t = self.lu[(i, k)] * x[k];
                x[i] -= t;
            }
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let t = self.lu[(i, k)] * x[k];
                x[i] -= t;
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }

    pub fn solve_mat(&self, b: &CMat) -> CMat {
        let n = self.lu.n;
        let mut out = CMat::zeros(n);
        for j in 0..n {
            let x = self.solve_vec(&b.col(j));
            for i in 0..n {
                out[(i, j)] = x[i];
            }
        }
        out
    }

    pub fn det(&self) -> C {
        let mut d = C::new(self.parity, 0.0);
        for i in 0..self.lu.n {
            d *= self.lu[(i, i)];
        }
        d
    }
}

/// Distinct eigenvalues with multiplicities, generalized projectors, and
/// nilpotent parts.
pub struct Spectral {
    pub eigs: Vec<C>,
    pub mult: Vec<usize>,
    pub proj: Vec<CMat>,
    pub nil: Vec<CMat>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn lu_solve_round_trip() {
        let a = CMat::from_rows(&[
            vec![c(2.0, 1.0), c(0.0, -1.0), c(1.0, 0.0)],
            vec![c(0.0, 0.0), c(3.0, 0.0), c(-1.0, 2.0)],
            vec![c(1.0, 1.0), c(0.5, 0.0), c(4.0, -1.0)],
        ]);
        let b = vec![c(1.0, 0.0), c(0.0, 1.0), c(-2.0, 3.0)];
        let x = a.solve_vec(&b).unwrap();
        let r = a.matvec(&x);
        for i in 0..3 {
            assert!((r[i] - b[i]).norm() < 1e-12);
        }
        let inv = a.inverse().unwrap();
        assert!(a.matmul(&inv).sub(&CMat::identity(3)).norm_max() < 1e-12);
    }

    #[test]
    fn determinant_of_triangular() {
        let a = CMat::from_rows(&[
            vec![c(2.0, 0.0), c(5.0, 0.0)],
            vec![c(0.0, 0.0), c(-3.0, 0.0)],
        ]);
        assert!((a.det() - c(-6.0, 0.0)).norm() < 1e-13);
    }

    #[test]
    fn charpoly_of_coxeter_rotation() {
        // cyclic rotation of order 3 has x^2 + x + 1
        let a = CMat::from_int(&[vec![0, -1], vec![1, -1]]);
        let p = a.charpoly();
        let expect = [c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        for (got, want) in p.iter().zip(expect.iter()) {
            assert!((got - want).norm() < 1e-12);
        }
        assert!(a.pow(3).sub(&CMat::identity(2)).norm_max() < 1e-12);
    }

    #[test]
    fn roots_of_cubic() {
        // (x-1)(x-2)(x-3)
        let p = vec![c(-6.0, 0.0), c(11.0, 0.0), c(-6.0, 0.0), c(1.0, 0.0)];
        let mut roots = poly_roots(&p).unwrap();
        roots.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        for (r, want) in roots.iter().zip([1.0, 2.0, 3.0]) {
            assert!((r - c(want, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn clustered_double_root() {
        // (x-1)^2 (x+2)
        let p = vec![c(2.0, 0.0), c(-3.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let roots = poly_roots(&p).unwrap();
        let clusters = cluster_roots(&roots);
        assert_eq!(clusters.len(), 2);
        let double = clusters.iter().find(|c| c.1 == 2).unwrap();
        assert!((double.0 - c(1.0, 0.0)).norm() < 1e-6);
        let polished = refine_root(&p, double.0, 2);
        assert!((polished - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn spectral_split_of_semisimple() {
        let a = CMat::from_int(&[vec![0, -1], vec![1, -1]]);
        let s = a.spectral().unwrap();
        assert_eq!(s.eigs.len(), 2);
        for n in &s.nil {
            assert!(n.norm_max() < 1e-9);
        }
        // A = sum eig_i P_i
        let mut rebuilt = CMat::zeros(2);
        for i in 0..2 {
            rebuilt = rebuilt.add(&s.proj[i].scale(s.eigs[i]));
        }
        assert!(rebuilt.sub(&a).norm_max() < 1e-9);
    }

    #[test]
    fn spectral_split_of_jordan_block() {
        let a = CMat::from_int(&[vec![1, 1], vec![0, 1]]);
        let s = a.spectral().unwrap();
        assert_eq!(s.eigs.len(), 1);
        assert_eq!(s.mult[0], 2);
        assert!(s.proj[0].sub(&CMat::identity(2)).norm_max() < 1e-10);
        assert!((s.nil[0][(0, 1)] - c(1.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn matfun_exponential() {
        // exp of a Jordan block J(1/2) plus a semisimple eigenvalue 2
        let a = CMat::from_real(&[
            vec![0.5, 1.0, 0.0],
            vec![0.0, 0.5, 0.0],
            vec![0.0, 0.0, 2.0],
        ]);
        let e = a
            .matfun(|x, m| Ok(vec![x.exp(); m]))
            .unwrap();
        let h = (0.5f64).exp();
        assert!((e[(0, 0)] - c(h, 0.0)).norm() < 1e-10);
        assert!((e[(0, 1)] - c(h, 0.0)).norm() < 1e-10);
        assert!((e[(1, 1)] - c(h, 0.0)).norm() < 1e-10);
        assert!((e[(2, 2)] - c(2.0f64.exp(), 0.0)).norm() < 1e-10);
        assert!(e[(1, 0)].norm() < 1e-12);
    }

    #[test]
    fn taylor_shift_matches_direct_expansion() {
        // p(x) = x^3 - 2x + 5 at c = 2: p(2+u) = 9 + 10u + 6u^2 + u^3
        let p = vec![c(5.0, 0.0), c(-2.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let s = taylor_shift(&p, c(2.0, 0.0));
        let want = [9.0, 10.0, 6.0, 1.0];
        for (got, w) in s.iter().zip(want.iter()) {
            assert!((got - c(*w, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn triple_eigenvalue_clusters_cleanly() {
        // -I with a rank-3 block: charpoly (x+1)^3
        let a = CMat::from_int(&[vec![-1, 0, 0], vec![0, -1, 0], vec![0, 0, -1]]);
        let s = a.spectral().unwrap();
        assert_eq!(s.eigs.len(), 1);
        assert_eq!(s.mult[0], 3);
        assert!((s.eigs[0] - c(-1.0, 0.0)).norm() < 1e-9);
    }
}

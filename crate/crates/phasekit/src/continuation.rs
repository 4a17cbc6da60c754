//! Continuation of period vectors over the deformation space of the
//! built-in one-variable families, and line integrals of the phase form
//! along paths there.
//!
//! Each family carries its multiplication tables in flat coordinates, an
//! Euler field, and the grading operator matching the spectrum.  Period
//! vectors are continued with an adaptive embedded Runge-Kutta scheme
//! applied to the first-order systems in the spectral and deformation
//! directions; the step size is capped by the distance to the critical
//! values.  A root-tracking oracle provides independent period values
//! straight from the defining polynomial.
//!
//! Cycle labels always refer to the straight-line homotopy from the
//! undeformed point: roots are labelled by tracking them from the
//! unperturbed fiber, and the checks pick parameters for which that
//! labelling is unambiguous.

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::linalg::{poly_deriv, poly_eval, poly_roots, CMat, C};
use crate::phase::PhaseContext;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Local error tolerances of the embedded Runge-Kutta scheme.
const RTOL: f64 = 1e-11;
const ATOL: f64 = 1e-13;

fn zero() -> C {
    C::new(0.0, 0.0)
}

fn one() -> C {
    C::new(1.0, 0.0)
}

// ---------------------------------------------------------------------------
// Frobenius structures of the built-in families
// ---------------------------------------------------------------------------

/// Multiplication tables, Euler field, grading operator, and defining
/// polynomial of one of the built-in deformation families `A1`..`A3`,
/// all in flat coordinates.
#[derive(Clone, Debug)]
pub struct FrobeniusData {
    lat: Lattice,
    mu: usize,
}

impl FrobeniusData {
    pub fn a_type(mu: usize) -> Result<Self> {
        if !(1..=3).contains(&mu) {
            return Err(Error::Domain(format!(
                "multiplication tables are built in for ranks 1..3 only, got {mu}"
            )));
        }
        Ok(FrobeniusData {
            lat: Lattice::a_type(mu),
            mu,
        })
    }

    /// Look up a family by its label, e.g. `"A2"`.
    pub fn builtin(label: &str) -> Result<Self> {
        match label {
            "A1" => Self::a_type(1),
            "A2" => Self::a_type(2),
            "A3" => Self::a_type(3),
            other => Err(Error::Parse(format!("unknown builtin family {other:?}"))),
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lat
    }

    /// Dimension of the deformation space (= rank of the lattice).
    pub fn dim(&self) -> usize {
        self.mu
    }

    /// Index of the unit element in the flat basis.
    pub fn identity_index(&self) -> usize {
        0
    }

    pub fn spectrum(&self) -> Vec<f64> {
        self.lat
            .spectrum()
            .iter()
            .map(|s| *s.numer() as f64 / *s.denom() as f64)
            .collect()
    }

    /// Diagonal grading operator; entry `j` is `-1/2 - s_j`.
    pub fn theta(&self) -> CMat {
        let d: Vec<C> = self
            .spectrum()
            .iter()
            .map(|s| C::new(-0.5 - s, 0.0))
            .collect();
        CMat::diag(&d)
    }

    /// Quasi-homogeneous weights of the flat coordinates.
    pub fn coordinate_degrees(&self) -> Vec<f64> {
        (0..self.mu)
            .map(|j| 1.0 - j as f64 / (self.mu as f64 + 1.0))
            .collect()
    }

    /// Product `phi_i . phi_j` at the point `t`, in flat coordinates.
    fn basis_product(&self, t: &[C], i: usize, j: usize) -> Vec<C> {
        let n = self.mu;
        assert!(t.len() == n && i < n && j < n);
        let mut out = vec![zero(); n];
        // the unit element multiplies trivially
        if i == 0 || j == 0 {
            out[i + j] = one();
            return out;
        }
        match (n, i.min(j), i.max(j)) {
            (2, 1, 1) => {
                // x . x = -t2
                out[0] = -t[1];
            }
            (3, 1, 1) => {
                // x . x = phi3 - t3
                out[2] = one();
                out[0] = -t[2];
            }
            (3, 1, 2) => {
                // x . phi3 = -t3 x - t2
                out[1] = -t[2];
                out[0] = -t[1];
            }
            (3, 2, 2) => {
                // phi3 . phi3 = -t2 x + t3^2
                out[1] = -t[1];
                out[0] = t[2] * t[2];
            }
            _ => unreachable!("rank checked in the constructor"),
        }
        out
    }

    /// Matrix of multiplication by the element with flat coordinates `v`.
    pub fn mult_matrix(&self, t: &[C], v: &[C]) -> CMat {
        let n = self.mu;
        assert_eq!(v.len(), n);
        let mut m = CMat::zeros(n);
        for i in 0..n {
            if v[i] == zero() {
                continue;
            }
            for j in 0..n {
                let col = self.basis_product(t, i, j);
                for (r, &x) in col.iter().enumerate() {
                    m[(r, j)] += v[i] * x;
                }
            }
        }
        m
    }

    /// Product of two elements given in flat coordinates.
    pub fn multiply(&self, t: &[C], a: &[C], b: &[C]) -> Vec<C> {
        self.mult_matrix(t, a).matvec(b)
    }

    /// Flat coordinates of the Euler field at `t`.
    pub fn euler_class(&self, t: &[C]) -> Vec<C> {
        self.coordinate_degrees()
            .iter()
            .zip(t)
            .map(|(d, &x)| x * *d)
            .collect()
    }

    /// Matrix of multiplication by the Euler field.
    pub fn euler_mult(&self, t: &[C]) -> CMat {
        self.mult_matrix(t, &self.euler_class(t))
    }

    /// Residue pairing in the flat basis: the antidiagonal form.
    pub fn flat_pair(&self, a: &[C], b: &[C]) -> C {
        let n = self.mu;
        assert!(a.len() == n && b.len() == n);
        (0..n).map(|i| a[i] * b[n - 1 - i]).sum()
    }

    /// Ascending coefficients of the deformed polynomial `F(x, t)`.
    pub fn deformation_poly(&self, t: &[C]) -> Vec<C> {
        match self.mu {
            1 => vec![t[0], zero(), C::new(0.5, 0.0)],
            2 => vec![t[0], t[1], zero(), C::new(1.0 / 3.0, 0.0)],
            3 => vec![
                t[0] + t[2] * t[2] * 0.5,
                t[1],
                t[2],
                zero(),
                C::new(0.25, 0.0),
            ],
            _ => unreachable!(),
        }
    }

    /// Ascending coefficients of the basis polynomial representing
    /// `phi_{j+1}` at `t`, i.e. `dF/dt_{j+1}`.  Not a plain monomial in
    /// general: for `mu = 3` the quadratic basis element is `x^2 + t_3`.
    pub fn basis_poly(&self, t: &[C], j: usize) -> Vec<C> {
        let mut p = vec![zero(); j + 1];
        p[j] = one();
        if self.mu == 3 && j == 2 {
            p[0] = t[2];
        }
        p
    }

    /// Critical values of `F(., t)`, in the order produced by the root
    /// solver.
    pub fn critical_values(&self, t: &[C]) -> Result<Vec<C>> {
        let f = self.deformation_poly(t);
        let fx = poly_deriv(&f);
        let crit = poly_roots(&fx)?;
        Ok(crit.iter().map(|&x| poly_eval(&f, x)).collect())
    }

    /// Semisimple frame at `t`: canonical coordinates (eigenvalues of the
    /// Euler multiplication), the squared normalizations of the frame
    /// fields, and the idempotent basis in flat coordinates.
    pub fn canonical_coordinates(&self, t: &[C]) -> Result<CanonicalFrame> {
        let em = self.euler_mult(t);
        let u = em.eigenvalues()?;
        let n = self.mu;
        let scale = 1.0 + u.iter().map(|x| x.norm()).fold(0.0, f64::max);
        // A double eigenvalue of the characteristic polynomial splits by
        // O(sqrt(eps)), so the collision threshold must sit well above that.
        for i in 0..n {
            for j in i + 1..n {
                let gap = (u[i] - u[j]).norm();
                if gap < 1e-6 * scale {
                    return Err(Error::MultipleRoot(gap));
                }
            }
        }
        let mut idempotents = Vec::with_capacity(n);
        let mut delta = Vec::with_capacity(n);
        for i in 0..n {
            let mut v = vec![zero(); n];
            v[0] = one();
            for j in 0..n {
                if j == i {
                    continue;
                }
                let w = em.matvec(&v);
                for r in 0..n {
                    v[r] = (w[r] - u[j] * v[r]) / (u[i] - u[j]);
                }
            }
            let inv = self.flat_pair(&v, &v);
            if inv.norm() == 0.0 {
                return Err(Error::Singular("canonical frame normalization"));
            }
            delta.push(inv.inv());
            idempotents.push(v);
        }
        Ok(CanonicalFrame {
            u,
            delta,
            idempotents,
        })
    }
}

/// Canonical coordinates and the associated orthogonal frame data at a
/// semisimple point.
#[derive(Clone, Debug)]
pub struct CanonicalFrame {
    /// Canonical coordinates: eigenvalues of the Euler multiplication,
    /// equal to the critical values of the deformed polynomial.
    pub u: Vec<C>,
    /// `delta[i]` is the squared length normalization of the `i`-th
    /// frame field; `1/delta[i]` is the self-pairing of the idempotent.
    pub delta: Vec<C>,
    /// Idempotent basis in flat coordinates.
    pub idempotents: Vec<Vec<C>>,
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

/// Polyline in the deformation space, with the minimum admissible
/// distance between the spectral parameters in use and the critical
/// values along the way.
#[derive(Clone, Debug)]
pub struct DeformPath {
    pub points: Vec<Vec<C>>,
    pub clearance: f64,
}

impl DeformPath {
    pub fn new(points: Vec<Vec<C>>, clearance: f64) -> Self {
        DeformPath { points, clearance }
    }

    /// Straight segment between two deformation points.
    pub fn segment(from: Vec<C>, to: Vec<C>, clearance: f64) -> Self {
        DeformPath {
            points: vec![from, to],
            clearance,
        }
    }
}

/// One analytic piece of a path in the spectral plane.
#[derive(Clone, Debug)]
pub enum LambdaLeg {
    Line {
        from: C,
        to: C,
    },
    /// Circular arc `center + radius * exp(i (start_angle + turn * s))`
    /// for `s` in `[0, 1]`; positive `turn` is counterclockwise.
    Arc {
        center: C,
        radius: f64,
        start_angle: f64,
        turn: f64,
    },
}

impl LambdaLeg {
    /// Position and velocity at parameter `s` in `[0, 1]`.
    pub fn at(&self, s: f64) -> (C, C) {
        match *self {
            LambdaLeg::Line { from, to } => (from + (to - from) * s, to - from),
            LambdaLeg::Arc {
                center,
                radius,
                start_angle,
                turn,
            } => {
                let ang = start_angle + turn * s;
                let pos = center + C::from_polar(radius, ang);
                let vel = C::new(0.0, turn) * C::from_polar(radius, ang);
                (pos, vel)
            }
        }
    }

    pub fn start(&self) -> C {
        self.at(0.0).0
    }

    pub fn end(&self) -> C {
        self.at(1.0).0
    }
}

/// Legs of a loop that walks from `base` straight toward `center`, stops
/// at the given radius, circles once counterclockwise, and returns.
pub fn ray_circle_legs(center: C, radius: f64, base: C) -> Result<Vec<LambdaLeg>> {
    let off = base - center;
    if off.norm() <= radius {
        return Err(Error::Domain(
            "loop base point lies inside the requested circle".into(),
        ));
    }
    let angle = off.arg();
    let p = center + C::from_polar(radius, angle);
    Ok(vec![
        LambdaLeg::Line { from: base, to: p },
        LambdaLeg::Arc {
            center,
            radius,
            start_angle: angle,
            turn: TWO_PI,
        },
        LambdaLeg::Line { from: p, to: base },
    ])
}

/// Loop around the `i`-th critical value at `t` (in the ordering of
/// [`FrobeniusData::critical_values`]), with the circle radius set to a
/// tenth of the smallest gap between critical values.  Returns the legs
/// together with the circled value and the radius.
pub fn vanishing_loop_legs(
    fd: &FrobeniusData,
    t: &[C],
    base: C,
    i: usize,
) -> Result<(Vec<LambdaLeg>, C, f64)> {
    let u = fd.critical_values(t)?;
    if i >= u.len() {
        return Err(Error::Domain(format!(
            "critical value index {i} out of range for rank {}",
            u.len()
        )));
    }
    let mut gap = f64::INFINITY;
    for a in 0..u.len() {
        for b in a + 1..u.len() {
            gap = gap.min((u[a] - u[b]).norm());
        }
    }
    if u.len() == 1 {
        gap = 1.0 + u[0].norm();
    }
    if gap == 0.0 {
        return Err(Error::MultipleRoot(0.0));
    }
    let radius = 0.1 * gap;
    let legs = ray_circle_legs(u[i], radius, base)?;
    Ok((legs, u[i], radius))
}

// ---------------------------------------------------------------------------
// Adaptive Runge-Kutta core
// ---------------------------------------------------------------------------

fn axpy(y: &mut [C], a: f64, k: &[C]) {
    for (yi, ki) in y.iter_mut().zip(k) {
        *yi += *ki * a;
    }
}

/// Dormand-Prince 5(4) over `s` in `[0, 1]`.  `hmax` returns the step
/// ceiling at an accepted point and enforces the clearance.
fn dp45<R, H>(rhs: &R, hmax: &H, y0: Vec<C>) -> Result<Vec<C>>
where
    R: Fn(f64, &[C]) -> Result<Vec<C>>,
    H: Fn(f64) -> Result<f64>,
{
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const NODES: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let mut s = 0.0f64;
    let mut y = y0;
    let mut h = hmax(0.0)?.min(0.05);
    let mut steps = 0usize;
    while s < 1.0 - 1e-14 {
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::NoConvergence("adaptive continuation"));
        }
        if h < 1e-14 {
            return Err(Error::NoConvergence("continuation step size"));
        }
        let hh = h.min(1.0 - s);
        let mut k: Vec<Vec<C>> = Vec::with_capacity(7);
        k.push(rhs(s, &y)?);
        let mut y5 = Vec::new();
        for i in 0..6 {
            let mut yt = y.clone();
            for (j, kj) in k.iter().enumerate() {
                if A[i][j] != 0.0 {
                    axpy(&mut yt, hh * A[i][j], kj);
                }
            }
            if i == 5 {
                y5 = yt.clone();
            }
            k.push(rhs(s + NODES[i] * hh, &yt)?);
        }
        let mut y4 = y.clone();
        for (j, kj) in k.iter().enumerate() {
            if B4[j] != 0.0 {
                axpy(&mut y4, hh * B4[j], kj);
            }
        }
        let mut err = 0.0f64;
        for i in 0..y.len() {
            let sc = ATOL + RTOL * y[i].norm().max(y5[i].norm());
            err = err.max((y5[i] - y4[i]).norm() / sc);
        }
        if err <= 1.0 {
            s += hh;
            y = y5;
            let fac = (0.9 * err.max(1e-12).powf(-0.2)).clamp(0.2, 4.0);
            h = hh * fac;
            if s < 1.0 {
                h = h.min(hmax(s)?);
            }
        } else {
            h = hh * (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
        }
    }
    Ok(y)
}

// ---------------------------------------------------------------------------
// Picard-Fuchs continuation
// ---------------------------------------------------------------------------

/// Result of transporting a pair of period vectors while accumulating
/// the phase-form line integral.
#[derive(Clone, Debug)]
pub struct PairTransport {
    /// First period vector at the end of the path (spectral offset `xi`).
    pub pa: Vec<C>,
    /// Second period vector at the end of the path (spectral offset 0).
    pub pb: Vec<C>,
    /// Accumulated line integral of the phase form.
    pub integral: C,
}

/// Grading factors `theta_j - k - 1/2` as a vector.
fn grading_factors(fd: &FrobeniusData, k: i64) -> Vec<C> {
    fd.spectrum()
        .iter()
        .map(|s| C::new(-1.0 - s - k as f64, 0.0))
        .collect()
}

/// Shared integrator along spectral-plane legs.  State `i` is continued
/// at spectral value `x(s) + shifts[i]`; when `with_quad` is set the two
/// first states feed the running integral of the pulled-back phase form
/// (only the first flat coordinate moves along such paths, so the
/// integrand collapses to the flat pairing of the two states).
fn run_legs(
    fd: &FrobeniusData,
    t: &[C],
    k: i64,
    shifts: &[C],
    states: &[Vec<C>],
    legs: &[LambdaLeg],
    clearance: f64,
    with_quad: bool,
) -> Result<(Vec<Vec<C>>, C)> {
    let n = fd.dim();
    assert_eq!(shifts.len(), states.len());
    for st in states {
        assert_eq!(st.len(), n);
    }
    let em = fd.euler_mult(t);
    let gf = grading_factors(fd, k);
    let ucrit = fd.critical_values(t)?;
    let nst = states.len();
    let dim = nst * n + usize::from(with_quad);

    let mut y: Vec<C> = Vec::with_capacity(dim);
    for st in states {
        y.extend_from_slice(st);
    }
    if with_quad {
        y.push(zero());
    }

    for leg in legs {
        if let LambdaLeg::Line { from, to } = leg {
            if (to - from).norm() == 0.0 {
                continue;
            }
        }
        let rhs = |s: f64, y: &[C]| -> Result<Vec<C>> {
            let (x, dx) = leg.at(s);
            let mut out = vec![zero(); dim];
            for (i, shift) in shifts.iter().enumerate() {
                let v = &y[i * n..(i + 1) * n];
                let w: Vec<C> = (0..n).map(|r| gf[r] * v[r]).collect();
                let mut m = em.scale(C::new(-1.0, 0.0));
                for r in 0..n {
                    m[(r, r)] += x + shift;
                }
                let sol = m.solve_vec(&w)?;
                for r in 0..n {
                    out[i * n + r] = sol[r] * dx;
                }
            }
            if with_quad {
                out[dim - 1] = -fd.flat_pair(&y[0..n], &y[n..2 * n]) * dx;
            }
            Ok(out)
        };
        let hmax = |s: f64| -> Result<f64> {
            let (x, dx) = leg.at(s);
            let mut dist = f64::INFINITY;
            for shift in shifts {
                for u in &ucrit {
                    dist = dist.min((x + shift - u).norm());
                }
            }
            if dist < clearance {
                return Err(Error::NearDiscriminant);
            }
            Ok((0.2 * dist / (dx.norm() + 1e-300)).min(0.2))
        };
        y = dp45(&rhs, &hmax, y)?;
    }

    let ends: Vec<Vec<C>> = (0..nst).map(|i| y[i * n..(i + 1) * n].to_vec()).collect();
    let q = if with_quad { y[dim - 1] } else { zero() };
    Ok((ends, q))
}

/// Continue period vectors of jet order `k` along a polyline in the
/// spectral plane at a fixed deformation point.
pub fn pf_continue_lambda(
    fd: &FrobeniusData,
    t: &[C],
    k: i64,
    states: &[Vec<C>],
    points: &[C],
    clearance: f64,
) -> Result<Vec<Vec<C>>> {
    if points.len() < 2 {
        return Err(Error::Domain("a path needs at least two points".into()));
    }
    let legs: Vec<LambdaLeg> = points
        .windows(2)
        .map(|w| LambdaLeg::Line {
            from: w[0],
            to: w[1],
        })
        .collect();
    pf_continue_lambda_legs(fd, t, k, states, &legs, clearance)
}

/// Same as [`pf_continue_lambda`] over explicit legs.
pub fn pf_continue_lambda_legs(
    fd: &FrobeniusData,
    t: &[C],
    k: i64,
    states: &[Vec<C>],
    legs: &[LambdaLeg],
    clearance: f64,
) -> Result<Vec<Vec<C>>> {
    let shifts = vec![zero(); states.len()];
    let (ends, _) = run_legs(fd, t, k, &shifts, states, legs, clearance, false)?;
    Ok(ends)
}

/// Transport the pair `(pa, pb)` along spectral legs, `pa` at spectral
/// offset `xi` and `pb` at offset 0, accumulating the loop integral of
/// the pulled-back phase form.
pub fn transport_pair(
    fd: &FrobeniusData,
    t: &[C],
    xi: C,
    pa: &[C],
    pb: &[C],
    legs: &[LambdaLeg],
    clearance: f64,
) -> Result<PairTransport> {
    let shifts = vec![xi, zero()];
    let states = vec![pa.to_vec(), pb.to_vec()];
    let (ends, q) = run_legs(fd, t, 0, &shifts, &states, legs, clearance, true)?;
    Ok(PairTransport {
        pa: ends[0].clone(),
        pb: ends[1].clone(),
        integral: q,
    })
}

/// Shared integrator along a deformation polyline.  State `i` is kept at
/// the fixed spectral value `spectrals[i]`; `with_quad` accumulates the
/// phase-form line integral of the first two states.
fn run_t(
    fd: &FrobeniusData,
    spectrals: &[C],
    k: i64,
    states: &[Vec<C>],
    path: &DeformPath,
    with_quad: bool,
) -> Result<(Vec<Vec<C>>, C)> {
    let n = fd.dim();
    assert_eq!(spectrals.len(), states.len());
    if path.points.len() < 2 {
        return Err(Error::Domain("a path needs at least two points".into()));
    }
    for p in &path.points {
        if p.len() != n {
            return Err(Error::Domain(format!(
                "deformation points must have {n} coordinates"
            )));
        }
    }
    let gf = grading_factors(fd, k);
    let nst = states.len();
    let dim = nst * n + usize::from(with_quad);

    let mut y: Vec<C> = Vec::with_capacity(dim);
    for st in states {
        assert_eq!(st.len(), n);
        y.extend_from_slice(st);
    }
    if with_quad {
        y.push(zero());
    }

    for seg in path.points.windows(2) {
        let (a, b) = (&seg[0], &seg[1]);
        let d: Vec<C> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        if d.iter().map(|x| x.norm()).sum::<f64>() == 0.0 {
            continue;
        }
        let t_at = |s: f64| -> Vec<C> { a.iter().zip(&d).map(|(x, dx)| x + dx * s).collect() };
        let rhs = |s: f64, y: &[C]| -> Result<Vec<C>> {
            let t = t_at(s);
            let em = fd.euler_mult(&t);
            let mdir = fd.mult_matrix(&t, &d);
            let mut out = vec![zero(); dim];
            for (i, lam) in spectrals.iter().enumerate() {
                let v = &y[i * n..(i + 1) * n];
                let w: Vec<C> = (0..n).map(|r| gf[r] * v[r]).collect();
                let mut m = em.scale(C::new(-1.0, 0.0));
                for r in 0..n {
                    m[(r, r)] += lam;
                }
                let sol = mdir.matvec(&m.solve_vec(&w)?);
                for r in 0..n {
                    out[i * n + r] = -sol[r];
                }
            }
            if with_quad {
                let prod = fd.multiply(&t, &y[0..n], &y[n..2 * n]);
                // component against phi_j is the (n-j)-th product entry
                out[dim - 1] = (0..n).map(|j| prod[n - 1 - j] * d[j]).sum();
            }
            Ok(out)
        };
        let speed: f64 = d.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        let hmax = |s: f64| -> Result<f64> {
            let u = fd.critical_values(&t_at(s))?;
            let mut dist = f64::INFINITY;
            for lam in spectrals {
                for ui in &u {
                    dist = dist.min((lam - ui).norm());
                }
            }
            if dist < path.clearance {
                return Err(Error::NearDiscriminant);
            }
            // finite-difference estimate of how fast the critical values move
            let delta = 1e-4;
            let s2 = (s + delta).min(1.0);
            let mut du = 0.0f64;
            if s2 > s {
                let u2 = fd.critical_values(&t_at(s2))?;
                for ui in &u {
                    let nearest = u2.iter().map(|v| (v - ui).norm()).fold(f64::INFINITY, f64::min);
                    du = du.max(nearest / (s2 - s));
                }
            }
            Ok((0.2 * dist / (du + speed + 1e-300)).min(0.2))
        };
        y = dp45(&rhs, &hmax, y)?;
    }

    let ends: Vec<Vec<C>> = (0..nst).map(|i| y[i * n..(i + 1) * n].to_vec()).collect();
    let q = if with_quad { y[dim - 1] } else { zero() };
    Ok((ends, q))
}

/// Continue period vectors of jet order `k` along a deformation
/// polyline at a fixed spectral value.
pub fn pf_continue_t(
    fd: &FrobeniusData,
    lambda: C,
    k: i64,
    states: &[Vec<C>],
    path: &DeformPath,
) -> Result<Vec<Vec<C>>> {
    let spectrals = vec![lambda; states.len()];
    let (ends, _) = run_t(fd, &spectrals, k, states, path, false)?;
    Ok(ends)
}

/// Covector of the phase form at `t` from the two period vectors: the
/// component against the `j`-th coordinate direction is the residue
/// pairing of the product `pa . pb` with `phi_j`.
pub fn phase_form(fd: &FrobeniusData, t: &[C], pa: &[C], pb: &[C]) -> Vec<C> {
    let n = fd.dim();
    let prod = fd.multiply(t, pa, pb);
    (0..n).map(|j| prod[n - 1 - j]).collect()
}

/// Line integral of the phase form along a deformation polyline, with
/// `pa` carried at spectral value 0 and `pb` at `xi`.
pub fn integrate_phase_form(
    fd: &FrobeniusData,
    xi: C,
    pa: &[C],
    pb: &[C],
    path: &DeformPath,
) -> Result<PairTransport> {
    let spectrals = vec![zero(), xi];
    let states = vec![pa.to_vec(), pb.to_vec()];
    let (ends, q) = run_t(fd, &spectrals, 0, &states, path, true)?;
    Ok(PairTransport {
        pa: ends[0].clone(),
        pb: ends[1].clone(),
        integral: q,
    })
}

// ---------------------------------------------------------------------------
// Root oracle
// ---------------------------------------------------------------------------

/// Newton-polish `z0` against `p`, refusing moves beyond `max_move`.
fn newton_root(p: &[C], dp: &[C], z0: C, max_move: f64) -> Option<C> {
    let mut z = z0;
    for _ in 0..60 {
        let d = poly_eval(dp, z);
        if d.norm() == 0.0 {
            return None;
        }
        let step = poly_eval(p, z) / d;
        z -= step;
        if (z - z0).norm() > max_move {
            return None;
        }
        if step.norm() < 1e-13 * (1.0 + z.norm()) {
            return Some(z);
        }
    }
    None
}

/// Continue the labelled root tuple of a monic family `poly_at(s)` from
/// `s = 0` to `s = 1`, keeping the labels by small steps.
fn continue_roots(poly_at: &dyn Fn(f64) -> Vec<C>, z0: &[C]) -> Result<Vec<C>> {
    let mut z = z0.to_vec();
    let mut s = 0.0f64;
    let mut h = 0.25f64;
    let scale = 1.0 + z.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let min_gap = |z: &[C]| -> f64 {
        let mut g = f64::INFINITY;
        for i in 0..z.len() {
            for j in i + 1..z.len() {
                g = g.min((z[i] - z[j]).norm());
            }
        }
        g
    };
    while s < 1.0 - 1e-14 {
        let hh = h.min(1.0 - s);
        let p = poly_at(s + hh);
        let dp = poly_deriv(&p);
        let gap = if z.len() > 1 { min_gap(&z) } else { scale };
        let limit = 0.35 * gap;
        let mut znew = Vec::with_capacity(z.len());
        let mut ok = true;
        for &zi in &z {
            match newton_root(&p, &dp, zi, limit) {
                Some(w) => znew.push(w),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok && znew.len() > 1 && min_gap(&znew) < 1e-9 * scale {
            ok = false;
        }
        if !ok {
            h = hh * 0.5;
            if h < 1e-10 {
                return Err(Error::MultipleRoot(min_gap(&z)));
            }
            continue;
        }
        z = znew;
        s += hh;
        h = (hh * 2.0).min(0.25);
    }
    Ok(z)
}

/// Monic version of the fiber polynomial `F(., t) - lambda`.
fn fiber_poly(fd: &FrobeniusData, t: &[C], lambda: C) -> Vec<C> {
    let mut p = fd.deformation_poly(t);
    p[0] -= lambda;
    let lead = (fd.dim() + 1) as f64;
    for c in p.iter_mut() {
        *c *= lead;
    }
    p
}

/// Labelled roots of `F(., t) = lambda`: label `m` carries the root that
/// deforms from `((mu+1) lambda)^(1/(mu+1)) zeta^m` of the unperturbed
/// fiber along the straight homotopy `s t`.  When that homotopy
/// degenerates (most importantly at spectral value 0, where the
/// unperturbed reference fiber collapses to one multiple root), the
/// labels are defined instead by entering from a large real spectral
/// value: the same reference there, the deformation homotopy at fixed
/// large spectral value, then a straight spectral segment down to
/// `lambda`.
pub fn labeled_roots(fd: &FrobeniusData, t: &[C], lambda: C) -> Result<Vec<C>> {
    if lambda.norm() == 0.0 && t.iter().all(|x| x.norm() == 0.0) {
        return Err(Error::MultipleRoot(0.0));
    }
    if lambda.norm() > 0.0 {
        if let Ok(z) = labeled_roots_direct(fd, t, lambda) {
            return Ok(z);
        }
    }
    // Coefficient bound on every critical value along the homotopy s t:
    // absolute-value coefficients dominate those of s t for s in [0, 1].
    let tabs: Vec<C> = t.iter().map(|z| C::new(z.norm(), 0.0)).collect();
    let fabs = fd.deformation_poly(&tabs);
    let dabs = poly_deriv(&fabs);
    let lead = dabs.last().unwrap().re;
    let bx = 1.0
        + dabs[..dabs.len() - 1]
            .iter()
            .map(|c| c.re / lead)
            .fold(0.0, f64::max);
    let m_bound = poly_eval(&fabs, C::new(bx, 0.0)).re;
    let big = 2.0 * (1.0 + m_bound + lambda.norm());
    let z = labeled_roots_direct(fd, t, C::new(big, 0.0))?;
    track_roots(fd, t, &z, &[C::new(big, 0.0), lambda])
}

fn labeled_roots_direct(fd: &FrobeniusData, t: &[C], lambda: C) -> Result<Vec<C>> {
    let n1 = fd.dim() + 1;
    let w = (lambda * n1 as f64).ln() / n1 as f64;
    let zeta = C::from_polar(1.0, TWO_PI / n1 as f64);
    let mut z: Vec<C> = (0..n1).map(|m| w.exp() * zeta.powu(m as u32)).collect();
    let tv = t.to_vec();
    let poly_at = move |s: f64| -> Vec<C> {
        let ts: Vec<C> = tv.iter().map(|x| x * s).collect();
        fiber_poly(fd, &ts, lambda)
    };
    z = continue_roots(&poly_at, &z)?;
    Ok(z)
}

/// Track a labelled root tuple along a spectral polyline at fixed `t`.
pub fn track_roots(
    fd: &FrobeniusData,
    t: &[C],
    roots: &[C],
    points: &[C],
) -> Result<Vec<C>> {
    let mut z = roots.to_vec();
    for seg in points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let tv = t.to_vec();
        let poly_at = move |s: f64| -> Vec<C> { fiber_poly(fd, &tv, a + (b - a) * s) };
        z = continue_roots(&poly_at, &z)?;
    }
    Ok(z)
}

/// Track a labelled root tuple along spectral legs at fixed `t`.
pub fn track_roots_legs(
    fd: &FrobeniusData,
    t: &[C],
    roots: &[C],
    legs: &[LambdaLeg],
) -> Result<Vec<C>> {
    let mut z = roots.to_vec();
    for leg in legs {
        let leg = leg.clone();
        let tv = t.to_vec();
        let poly_at = move |s: f64| -> Vec<C> { fiber_poly(fd, &tv, leg.at(s).0) };
        z = continue_roots(&poly_at, &z)?;
    }
    Ok(z)
}

// truncated power-series helpers for the root jets

fn ser_mul(a: &[C], b: &[C], n: usize) -> Vec<C> {
    let mut out = vec![zero(); n];
    for i in 0..a.len().min(n) {
        for j in 0..b.len().min(n - i) {
            out[i + j] += a[i] * b[j];
        }
    }
    out
}

fn ser_recip(a: &[C], n: usize) -> Result<Vec<C>> {
    if a.is_empty() || a[0].norm() == 0.0 {
        return Err(Error::Singular("series reciprocal"));
    }
    let mut out = vec![zero(); n];
    out[0] = a[0].inv();
    for k in 1..n {
        let mut s = zero();
        for j in 1..=k.min(a.len() - 1) {
            s += a[j] * out[k - j];
        }
        out[k] = -s / a[0];
    }
    Ok(out)
}

fn ser_eval_poly(p: &[C], x: &[C], n: usize) -> Vec<C> {
    let mut acc = vec![zero(); n];
    for &c in p.iter().rev() {
        acc = ser_mul(&acc, x, n);
        acc[0] += c;
    }
    acc
}

/// Taylor jet of the root branch through `z`: `x(eps)` with
/// `F(x(eps)) = F(z) + eps`, truncated at order `n`.
fn root_series(fpoly: &[C], fprime: &[C], z: C, n: usize) -> Result<Vec<C>> {
    let len = n + 1;
    let fz = poly_eval(fpoly, z);
    let mut x = vec![zero(); len];
    x[0] = z;
    let iters = (usize::BITS - len.leading_zeros()) as usize + 2;
    for _ in 0..iters {
        let mut resid = ser_eval_poly(fpoly, &x, len);
        resid[0] -= fz;
        if len > 1 {
            resid[1] -= one();
        }
        let dfx = ser_eval_poly(fprime, &x, len);
        let corr = ser_mul(&resid, &ser_recip(&dfx, len)?, len);
        for i in 0..len {
            x[i] -= corr[i];
        }
    }
    Ok(x)
}

/// Period vector of `cycle` at jet order `k` straight from the labelled
/// roots.  For `k >= 0` the components come from the implicit
/// derivatives of the root differences; negative orders follow by the
/// downward recursion through the Euler multiplication.
pub fn root_jet(
    fd: &FrobeniusData,
    t: &[C],
    roots: &[C],
    cycle: &[i64],
    k: i64,
) -> Result<Vec<C>> {
    let n = fd.dim();
    assert_eq!(roots.len(), n + 1);
    let coeff = fd.lattice().root_coefficients(cycle)?;
    if k >= 0 {
        let ord = k as usize;
        let len = ord + 1;
        let fpoly = fd.deformation_poly(t);
        let fprime = poly_deriv(&fpoly);
        let mut d = vec![vec![zero(); len]; n];
        for (m, &cm) in coeff.iter().enumerate() {
            if cm == 0 {
                continue;
            }
            let x = root_series(&fpoly, &fprime, roots[m], ord)?;
            let dfx = ser_eval_poly(&fprime, &x, len);
            let inv = ser_recip(&dfx, len)?;
            for j in 0..n {
                let bp = ser_eval_poly(&fd.basis_poly(t, j), &x, len);
                let g = ser_mul(&bp, &inv, len);
                for (slot, &gi) in d[j].iter_mut().zip(&g) {
                    *slot -= gi * cm as f64;
                }
            }
        }
        let fact: f64 = (1..=ord).map(|v| v as f64).product();
        Ok((0..n).map(|i| d[n - 1 - i][ord] * fact).collect())
    } else {
        let lambda = poly_eval(&fd.deformation_poly(t), roots[0]);
        let mut v = root_jet(fd, t, roots, cycle, 0)?;
        let em = fd.euler_mult(t);
        let s = fd.spectrum();
        let mut m = -1i64;
        while m >= k {
            let w: Vec<C> = {
                let ev = em.matvec(&v);
                (0..n).map(|r| v[r] * lambda - ev[r]).collect()
            };
            v = (0..n)
                .map(|r| w[r] / C::new(-1.0 - s[r] - m as f64, 0.0))
                .collect();
            m -= 1;
        }
        Ok(v)
    }
}

/// Convenience: labelled roots plus [`root_jet`] in one call.
pub fn root_oracle_jet(
    fd: &FrobeniusData,
    cycle: &[i64],
    k: i64,
    t: &[C],
    lambda: C,
) -> Result<Vec<C>> {
    let roots = labeled_roots(fd, t, lambda)?;
    root_jet(fd, t, &roots, cycle, k)
}

/// Vanishing cycle at the critical value `center` as seen from `base`:
/// the two roots that collide when walking straight from `base` to the
/// circle of the given radius around `center` determine the class.
pub fn vanishing_cycle_at(
    fd: &FrobeniusData,
    t: &[C],
    base: C,
    center: C,
    radius: f64,
) -> Result<Vec<i64>> {
    let off = base - center;
    if off.norm() <= radius {
        return Err(Error::Domain(
            "base point lies inside the collision circle".into(),
        ));
    }
    let p = center + C::from_polar(radius, off.arg());
    let r0 = labeled_roots(fd, t, base)?;
    let rp = track_roots(fd, t, &r0, &[base, p])?;
    let mut pair = (0usize, 1usize);
    let mut best = f64::INFINITY;
    for i in 0..rp.len() {
        for j in i + 1..rp.len() {
            let g = (rp[i] - rp[j]).norm();
            if g < best {
                best = g;
                pair = (i, j);
            }
        }
    }
    let n = fd.dim();
    let mut c = vec![0i64; n + 1];
    c[pair.0] = 1;
    c[pair.1] = -1;
    // cumulative sums convert point coefficients back to the basis
    let mut e = vec![0i64; n];
    let mut acc = 0i64;
    for j in 0..n {
        acc += c[j];
        e[j] = acc;
    }
    debug_assert_eq!(fd.lattice().intersection(&e, &e), 2);
    Ok(e)
}

// ---------------------------------------------------------------------------
// Monodromy and loop checks
// ---------------------------------------------------------------------------

/// Integer monodromy matrix of a spectral loop at fixed `t`, computed by
/// continuing the full period frame and solving for the change of
/// basis.  Returns the rounded matrix and the rounding residual.
pub fn frame_monodromy(
    fd: &FrobeniusData,
    t: &[C],
    legs: &[LambdaLeg],
    clearance: f64,
) -> Result<(Vec<Vec<i64>>, f64)> {
    let n = fd.dim();
    if legs.is_empty() {
        return Err(Error::Domain("a loop needs at least one leg".into()));
    }
    let x0 = legs[0].start();
    let roots = labeled_roots(fd, t, x0)?;
    let mut states = Vec::with_capacity(n);
    for m in 0..n {
        let mut e = vec![0i64; n];
        e[m] = 1;
        states.push(root_jet(fd, t, &roots, &e, 0)?);
    }
    let ends = pf_continue_lambda_legs(fd, t, 0, &states, legs, clearance)?;
    let f0 = CMat::from_fn(n, |i, j| states[j][i]);
    let f1 = CMat::from_fn(n, |i, j| ends[j][i]);
    let w = f0.solve_mat(&f1)?;
    let mut wi = vec![vec![0i64; n]; n];
    let mut resid = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let entry = w[(i, j)];
            let r = entry.re.round();
            wi[i][j] = r as i64;
            resid = resid.max((entry - C::new(r, 0.0)).norm());
        }
    }
    Ok((wi, resid))
}

/// Apply an integer matrix to a class.
pub fn apply_monodromy(w: &[Vec<i64>], a: &[i64]) -> Vec<i64> {
    let n = w.len();
    (0..n).map(|i| (0..n).map(|j| w[i][j] * a[j]).sum()).collect()
}

/// The pairing at a deformation point `t`, together with the continued
/// period pair at the endpoint of the defining path.
#[derive(Clone, Debug)]
pub struct PhaseAt {
    /// `Omega_{alpha,beta}(t, lambda, mu)`.
    pub omega: C,
    /// Continued period of `alpha`; equals `I^{(0)}_alpha(t, lambda)`.
    pub pa: Vec<C>,
    /// Continued period of `beta`; equals `I^{(0)}_beta(t, mu)`.
    pub pb: Vec<C>,
}

/// Pairing at a general deformation point: the value at the cone point
/// plus the phase-form line integral along the straight segment, with
/// the base periods taken on the principal branch.
pub fn phase_at(
    pc: &PhaseContext,
    fd: &FrobeniusData,
    alpha: &[i64],
    beta: &[i64],
    t: &[C],
    lambda: C,
    mu: C,
    clearance: f64,
) -> Result<PhaseAt> {
    let n = fd.dim();
    if t.len() != n {
        return Err(Error::Domain(format!(
            "deformation point must have {n} coordinates"
        )));
    }
    let base = pc.omega_closed_form(alpha, beta, lambda, mu)?;
    let xi = mu - lambda;
    // d Omega/dt_j telescopes to (I_alpha(t,lambda) . I_beta(t,mu), phi_j),
    // so along the shifted segment the beta state carries the offset xi.
    let pa0 = pc.period_data().period_jet(alpha, 0, lambda)?;
    let pb0 = pc.period_data().period_jet(beta, 0, mu)?;
    let mut start = vec![zero(); n];
    start[0] = -lambda;
    let mut end = t.to_vec();
    end[0] -= lambda;
    let path = DeformPath::segment(start, end, clearance);
    let run = integrate_phase_form(fd, xi, &pa0, &pb0, &path)?;
    Ok(PhaseAt {
        omega: base.omega + run.integral,
        pa: run.pa,
        pb: run.pb,
    })
}

/// Everything measured along one spectral loop: the loop integral of the
/// pulled-back phase form, the integer monodromy, the pairings before
/// and after the loop action, and the extracted winding integer.
#[derive(Clone, Debug)]
pub struct LoopReport {
    /// Loop integral of the pulled-back phase form.
    pub integral: C,
    /// Integer monodromy matrix of the loop on classes.
    pub monodromy: Vec<Vec<i64>>,
    /// Rounding residual of the monodromy matrix.
    pub monodromy_residual: f64,
    /// `alpha` after the loop action.
    pub moved_alpha: Vec<i64>,
    /// `beta` after the loop action.
    pub moved_beta: Vec<i64>,
    /// Pairing of the original classes at `t`.
    pub omega_base: C,
    /// Pairing of the moved classes at `t`.
    pub omega_moved: C,
    /// The combination `(integral - omega_moved + omega_base) / (2 pi i)`.
    pub ratio: C,
    /// Nearest integer to `ratio`.
    pub integer: i64,
    /// Distance of `ratio` from the integer.
    pub residual: f64,
}

/// Loop integrality check: the loop integral of the phase form differs
/// from the jump `Omega_moved - Omega_base` by an integer multiple of
/// `2 pi i`.  The loop must be based at the spectral point `lambda`.
pub fn integrality_check(
    pc: &PhaseContext,
    fd: &FrobeniusData,
    alpha: &[i64],
    beta: &[i64],
    t: &[C],
    lambda: C,
    mu: C,
    legs: &[LambdaLeg],
    clearance: f64,
) -> Result<LoopReport> {
    let base = phase_at(pc, fd, alpha, beta, t, lambda, mu, clearance)?;
    let xi = mu - lambda;
    // The loop jump of Omega is the integral with the beta state carrying
    // the spectral offset, and transport_pair shifts its first argument.
    let run = transport_pair(fd, t, xi, &base.pb, &base.pa, legs, clearance)?;
    let (w, wres) = frame_monodromy(fd, t, legs, clearance)?;
    let wa = apply_monodromy(&w, alpha);
    let wb = apply_monodromy(&w, beta);
    let moved = phase_at(pc, fd, &wa, &wb, t, lambda, mu, clearance)?;
    let ratio = (run.integral - moved.omega + base.omega) / C::new(0.0, TWO_PI);
    let int = ratio.re.round();
    Ok(LoopReport {
        integral: run.integral,
        monodromy: w,
        monodromy_residual: wres,
        moved_alpha: wa,
        moved_beta: wb,
        omega_base: base.omega,
        omega_moved: moved.omega,
        ratio,
        integer: int as i64,
        residual: (ratio - C::new(int, 0.0)).norm(),
    })
}

/// Loop integral of the phase form for the vanishing cycle of the
/// `i`-th critical value paired with itself, and its relative distance
/// from the universal value `-4 pi i`.
pub fn vanishing_loop_check(
    fd: &FrobeniusData,
    t: &[C],
    i: usize,
    lambda: C,
    mu: C,
) -> Result<(C, f64)> {
    let (legs, center, radius) = vanishing_loop_legs(fd, t, lambda, i)?;
    let phi = vanishing_cycle_at(fd, t, lambda, center, radius)?;
    let xi = mu - lambda;
    let roots_mu = labeled_roots(fd, t, mu)?;
    let roots_l = labeled_roots(fd, t, lambda)?;
    let pa0 = root_jet(fd, t, &roots_mu, &phi, 0)?;
    let pb0 = root_jet(fd, t, &roots_l, &phi, 0)?;
    let run = transport_pair(fd, t, xi, &pa0, &pb0, &legs, 0.4 * radius)?;
    let target = C::new(0.0, -2.0 * TWO_PI);
    let rel = (run.integral - target).norm() / target.norm();
    Ok((run.integral, rel))
}

//! Scalar and operator-valued polylogarithms with explicit branch tracking.
//!
//! Principal values are computed by two overlapping methods: the defining
//! power series on `|x| <= 1/2`, and the zeta/log expansion of
//! `Li_p(e^u)` everywhere else in the working domain.  Analytic
//! continuation along a path never re-expands anything: the path is walked
//! once with a continuously tracked logarithm, each crossing of the cut
//! `(1, oo)` deposits an explicit polynomial correction, and the continued
//! value is `principal + corrections` at the endpoint.  The same walk
//! drives the operator-valued version, which reduces to scalar
//! polylogarithms along root-of-unity rotated routes.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use once_cell::sync::Lazy;
use serde::{Deserialize, Serialize};
use std::sync::Mutex;

use crate::error::{Error, Result};
use crate::linalg::{C, CMat};
use crate::opcalc::{nilpotent_power, operator_power, MonodromySplit};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

// ---------------------------------------------------------------------------
// Bernoulli numbers and friends
// ---------------------------------------------------------------------------

static BERNOULLI: Lazy<Mutex<Vec<BigRational>>> = Lazy::new(|| {
    Mutex::new(vec![
        BigRational::one(),
        BigRational::new(BigInt::from(-1), BigInt::from(2)),
    ])
});

/// Exact Bernoulli number `B_n` (convention `B_1 = -1/2`).
pub fn bernoulli(n: usize) -> BigRational {
    let mut cache = BERNOULLI.lock().unwrap();
    while cache.len() <= n {
        let m = cache.len();
        // sum_{j<m} C(m+1, j) B_j = 0
        let mut acc = BigRational::zero();
        let mut binom = BigInt::one(); // C(m+1, 0)
        for (j, b) in cache.iter().enumerate() {
            acc += BigRational::from_integer(binom.clone()) * b;
            binom = binom * BigInt::from(m as i64 + 1 - j as i64) / BigInt::from(j as i64 + 1);
        }
        let next = -acc / BigRational::from_integer(BigInt::from(m as i64 + 1));
        cache.push(next);
    }
    cache[n].clone()
}

pub fn bernoulli_f64(n: usize) -> f64 {
    if n > 1 && n % 2 == 1 {
        return 0.0;
    }
    bernoulli(n).to_f64().unwrap_or(f64::INFINITY)
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn harmonic(n: usize) -> f64 {
    (1..=n).map(|k| 1.0 / k as f64).sum()
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    let mut b = 1.0;
    for j in 0..k {
        b = b * (n - j) as f64 / (j + 1) as f64;
    }
    b
}

/// Bernoulli polynomial `B_p(z)`.
pub fn bernoulli_poly(p: usize, z: C) -> C {
    let mut sum = C::new(0.0, 0.0);
    for k in 0..=p {
        sum += binomial_f64(p, k) * bernoulli_f64(k) * z.powu((p - k) as u32);
    }
    sum
}

// ---------------------------------------------------------------------------
// Integer zeta values
// ---------------------------------------------------------------------------

/// Alternating zeta `eta(p) = sum (-1)^(k-1) k^(-p)` by the
/// Cohen-Villegas-Zagier acceleration.
fn eta_accelerated(p: i64) -> f64 {
    let n = 32i32;
    let sqrt8 = 8.0f64.sqrt();
    let d = ((3.0 + sqrt8).powi(n) + (3.0 - sqrt8).powi(n)) / 2.0;
    let mut b = -1.0;
    let mut c = -d;
    let mut s = 0.0;
    for k in 0..n {
        c = b - c;
        let a = 1.0 / ((k + 1) as f64).powi(p as i32);
        s += c * a;
        let kf = k as f64;
        let nf = n as f64;
        b = (kf + nf) * (kf - nf) * b / ((kf + 0.5) * (kf + 1.0));
    }
    s / d
}

/// `zeta(n)` for integer `n != 1`.
pub fn zeta_int(n: i64) -> f64 {
    assert!(n != 1, "zeta has a pole at 1");
    if n == 0 {
        return -0.5;
    }
    if n < 0 {
        let m = (-n) as usize;
        // zeta(-m) = -B_{m+1}/(m+1); zero at negative even integers
        if m % 2 == 0 {
            return 0.0;
        }
        return -bernoulli_f64(m + 1) / (m as f64 + 1.0);
    }
    if n % 2 == 0 {
        // zeta(2m) = (-1)^(m+1) B_{2m} (2 pi)^(2m) / (2 (2m)!)
        let m = (n / 2) as usize;
        let sign = if m % 2 == 1 { 1.0 } else { -1.0 };
        return sign * bernoulli_f64(2 * m) * TWO_PI.powi(n as i32)
            / (2.0 * factorial(n as usize));
    }
    eta_accelerated(n) / (1.0 - (2.0f64).powi(1 - n as i32))
}

// ---------------------------------------------------------------------------
// Principal values
// ---------------------------------------------------------------------------

/// Largest `|Log x|` the zeta/log expansion accepts; the series converges
/// on `|u| < 2 pi` and we stay clear of the boundary.
const LOG_DOMAIN: f64 = 6.0;
const SERIES_RADIUS: f64 = 0.5;

/// Defining power series, valid for `|x| <= 1/2` at full precision.
pub(crate) fn li_series(p: usize, x: C) -> C {
    let mut sum = C::new(0.0, 0.0);
    let mut xk = C::new(1.0, 0.0);
    for k in 1..=220usize {
        xk *= x;
        let term = xk / (k as f64).powi(p as i32);
        sum += term;
        if term.norm() < 1e-18 * (1.0 + sum.norm()) {
            break;
        }
    }
    sum
}

/// Expansion of `Li_p(e^u)` around `u = 0`, valid for `|u| < 2 pi` off the
/// cut; `u` must be the principal logarithm of the argument.
pub(crate) fn li_log_expansion(p: usize, u: C) -> C {
    debug_assert!(p >= 1);
    // special term u^(p-1)/(p-1)! (H_{p-1} - log(-u))
    let mut sum = u.powu(p as u32 - 1) / factorial(p - 1)
        * (C::new(harmonic(p - 1), 0.0) - (-u).ln());
    let mut upow = C::new(1.0, 0.0); // u^k / k!
    for k in 0..=240usize {
        if k > 0 {
            upow *= u / k as f64;
        }
        if k == p - 1 {
            continue;
        }
        let z = zeta_int(p as i64 - k as i64);
        if z != 0.0 {
            let term = upow * z;
            sum += term;
            if k > p + 4 && term.norm() < 1e-17 * (1.0 + sum.norm()) {
                break;
            }
        }
    }
    sum
}

/// Principal branch of the polylogarithm `Li_p`, defined on the plane cut
/// along `[1, oo)`.
pub fn li_principal(p: usize, x: C) -> Result<C> {
    assert!(p >= 1, "only positive polylogarithm orders are supported");
    if x.norm() == 0.0 {
        return Ok(C::new(0.0, 0.0));
    }
    if x.im == 0.0 && x.re >= 1.0 {
        if x.re == 1.0 && p >= 2 {
            return Ok(C::new(zeta_int(p as i64), 0.0));
        }
        return Err(Error::Domain(
            "principal polylogarithm is not defined on the cut [1, oo)".into(),
        ));
    }
    if p == 1 {
        return Ok(-(C::new(1.0, 0.0) - x).ln());
    }
    if x.norm() <= SERIES_RADIUS {
        return Ok(li_series(p, x));
    }
    let u = x.ln();
    if u.norm() >= LOG_DOMAIN {
        return Err(Error::Domain(format!(
            "polylogarithm argument with |log x| = {:.2} is outside the \
             supported domain",
            u.norm()
        )));
    }
    Ok(li_log_expansion(p, u))
}

// ---------------------------------------------------------------------------
// Paths and the branch walk
// ---------------------------------------------------------------------------

/// Piecewise-linear path in the complex plane with a claimed clearance
/// from the branch points; serialized as `path.v1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Path {
    pub points: Vec<C>,
    pub clearance: f64,
}

#[derive(Serialize, Deserialize)]
struct PathFile {
    schema: String,
    points: Vec<[f64; 2]>,
    clearance: f64,
}

impl Path {
    pub fn new(points: Vec<C>, clearance: f64) -> Self {
        Path { points, clearance }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PathFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.schema != "path.v1" {
            return Err(Error::Parse(format!(
                "unsupported schema `{}` (expected path.v1)",
                file.schema
            )));
        }
        if file.points.is_empty() {
            return Err(Error::Parse("path needs at least one point".into()));
        }
        if !(file.clearance > 0.0) {
            return Err(Error::Parse("path clearance must be positive".into()));
        }
        Ok(Path {
            points: file.points.iter().map(|[re, im]| C::new(*re, *im)).collect(),
            clearance: file.clearance,
        })
    }

    pub fn to_json(&self) -> String {
        let file = PathFile {
            schema: "path.v1".into(),
            points: self.points.iter().map(|p| [p.re, p.im]).collect(),
            clearance: self.clearance,
        };
        serde_json::to_string_pretty(&file).expect("path serialization")
    }

    pub fn start(&self) -> C {
        self.points[0]
    }

    pub fn end(&self) -> C {
        *self.points.last().unwrap()
    }
}

/// One crossing of the positive real axis in log coordinates: the
/// imaginary part of the tracked logarithm passed the level `2 pi m`
/// with `Re w > 0`, i.e. the path crossed the cut `(1, oo)`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct CutEvent {
    /// Axis level index `m` (tracked log had `Im w = 2 pi m`).
    pub level: i64,
    /// Whether `Im w` was increasing.
    pub upward: bool,
}

pub(crate) struct LogWalk {
    pub w_end: C,
    pub events: Vec<CutEvent>,
}

fn dist_segment_to(a: C, b: C, z: C) -> f64 {
    let d = b - a;
    let len2 = d.norm_sqr();
    if len2 == 0.0 {
        return (a - z).norm();
    }
    let t = ((z - a).re * d.re + (z - a).im * d.im) / len2;
    let t = t.clamp(0.0, 1.0);
    (a + d * t - z).norm()
}

/// Walk a path, tracking the continuous logarithm from the principal
/// branch at the start, and record every crossing of the cut `(1, oo)`.
pub(crate) fn walk_log(path: &Path) -> Result<LogWalk> {
    let clearance = path.clearance.max(1e-12);
    let mut w = path.start().ln();
    let mut events = Vec::new();
    let near_level = |wim: f64, tol: f64| -> bool {
        let m = (wim / TWO_PI).round();
        (wim - TWO_PI * m).abs() <= tol
    };
    for seg in path.points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let d0 = dist_segment_to(a, b, C::new(0.0, 0.0));
        if d0 < clearance {
            return Err(Error::PathTooClose(d0));
        }
        let pieces = ((b - a).norm() / (0.35 * d0)).ceil().max(1.0) as usize;
        let mut x0 = a;
        for i in 0..pieces {
            let mut t1 = (i + 1) as f64 / pieces as f64;
            let mut x1 = a + (b - a) * t1;
            let w0 = w;
            let mut w1 = w0 + (x1 / x0).ln();
            let tol = 1e-11 * (1.0 + w0.im.abs() + w1.im.abs());
            if i + 1 < pieces && near_level(w1.im, tol) {
                // an interior sample landed exactly on an axis level; the
                // split point is ours to choose, so move it off the axis
                t1 += 0.37 / pieces as f64;
                x1 = a + (b - a) * t1;
                w1 = w0 + (x1 / x0).ln();
                if near_level(w1.im, tol) {
                    return Err(Error::AmbiguousCrossing);
                }
            }
            if i + 1 == pieces && near_level(w1.im, tol) && w1.re > -clearance {
                // a genuine path vertex sits on the cut or at the branch
                // point; nothing we can silently fix
                if w1.re.abs() < clearance {
                    return Err(Error::PathTooClose(w1.re.abs()));
                }
                return Err(Error::AmbiguousCrossing);
            }
            // at most one axis level fits in a piece (arg span < 0.6)
            let lo = w0.im.min(w1.im);
            let hi = w0.im.max(w1.im);
            let m_min = (lo / TWO_PI - 0.4).ceil() as i64;
            let m_max = (hi / TWO_PI + 0.4).floor() as i64;
            for m in m_min..=m_max {
                let level = TWO_PI * m as f64;
                let (g0, g1) = (w0.im - level, w1.im - level);
                if g0.abs() <= tol || g1.abs() <= tol {
                    // a sample on the axis in the benign range (0, 1);
                    // no cut crossing can hide here
                    continue;
                }
                if g0 * g1 < 0.0 {
                    // bisect for the crossing point in the piece
                    let (mut t_lo, mut t_hi) = (0.0f64, 1.0f64);
                    let gval = |t: f64| -> f64 {
                        let xt = x0 + (x1 - x0) * t;
                        (w0 + (xt / x0).ln()).im - level
                    };
                    let mut glo = g0;
                    for _ in 0..80 {
                        let mid = 0.5 * (t_lo + t_hi);
                        let gm = gval(mid);
                        if (gm > 0.0) == (glo > 0.0) {
                            t_lo = mid;
                            glo = gm;
                        } else {
                            t_hi = mid;
                        }
                    }
                    let t = 0.5 * (t_lo + t_hi);
                    let xc = x0 + (x1 - x0) * t;
                    let re_c = (w0 + (xc / x0).ln()).re;
                    if re_c.abs() < clearance {
                        return Err(Error::PathTooClose(re_c.abs()));
                    }
                    if re_c > 0.0 {
                        events.push(CutEvent { level: m, upward: g1 > g0 });
                    }
                }
            }
            w = w1;
            x0 = x1;
        }
    }
    Ok(LogWalk { w_end: w, events })
}

/// Continuous logarithm at the end of a path, starting from the principal
/// branch at the first point.
pub fn continue_log(path: &Path) -> Result<C> {
    Ok(walk_log(path)?.w_end)
}

/// Analytic continuation of the scalar `Li_p` along a path starting on
/// the principal branch.
pub fn li_continued(p: usize, path: &Path) -> Result<C> {
    let walk = walk_log(path)?;
    // corrections form a polynomial in the tracked logarithm
    let mut poly = vec![C::new(0.0, 0.0); p];
    for ev in &walk.events {
        add_cut_correction(&mut poly, p, ev.level, ev.upward);
    }
    let base = li_principal(p, path.end())?;
    Ok(base + eval_poly(&poly, walk.w_end))
}

/// Add the correction from one cut crossing to a polynomial in the
/// tracked logarithm: `-+ (2 pi i / (p-1)!) (W - 2 pi i m)^(p-1)`,
/// minus sign for an upward crossing.
pub(crate) fn add_cut_correction(poly: &mut [C], p: usize, m: i64, upward: bool) {
    let sign = if upward { -1.0 } else { 1.0 };
    let pref = C::new(0.0, sign * TWO_PI) / factorial(p - 1);
    let beta = C::new(0.0, -TWO_PI * m as f64);
    for k in 0..p {
        poly[k] += pref * binomial_f64(p - 1, k) * beta.powu((p - 1 - k) as u32);
    }
}

fn eval_poly(poly: &[C], w: C) -> C {
    poly.iter().rev().fold(C::new(0.0, 0.0), |acc, &c| acc * w + c)
}

// ---------------------------------------------------------------------------
// Inversion identity
// ---------------------------------------------------------------------------

/// Which real-axis segment the comparison path crosses on its way from
/// `x` to `1/x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutSide {
    /// Through `(0, 1)`: no cut crossing.
    Left,
    /// Through `(1, oo)`: one cut crossing.
    Right,
}

/// One evaluation of the inversion identity.
#[derive(Clone, Debug)]
pub struct InversionCheck {
    /// `Li_p` continued to `1/x` along the chosen path.
    pub continued: C,
    /// Closed-form prediction from `Li_p(x)` and a Bernoulli polynomial.
    pub predicted: C,
    pub residual: f64,
    pub path: Path,
}

/// The standard comparison path from `x` to `1/x`: down (or up) through
/// the chosen side of the branch point, crossing the real axis exactly
/// once.
pub fn inversion_path(x: C, side: CutSide) -> Result<Path> {
    if x.im == 0.0 {
        return Err(Error::AmbiguousCrossing);
    }
    if x.norm() == 0.0 {
        return Err(Error::Domain("inversion needs a nonzero argument".into()));
    }
    let r = x.norm();
    let c = match side {
        CutSide::Left => 0.5 * r.min(1.0),
        CutSide::Right => 1.5 * r.max(1.0).max(1.0 / r),
    };
    let delta = 0.25 * c.min((c - 1.0).abs());
    let inv = 1.0 / x;
    let (mid1, mid2) = if x.im > 0.0 {
        (C::new(c, delta), C::new(c, -delta))
    } else {
        (C::new(c, -delta), C::new(c, delta))
    };
    Ok(Path::new(vec![x, mid1, mid2, inv], 1e-9))
}

/// Compare the analytic continuation of `Li_p` from `x` to `1/x` with the
/// Bernoulli-polynomial inversion formula, the path crossing the real
/// axis once on the chosen side of the branch point.
pub fn jonquiere_check(p: usize, x: C, side: CutSide) -> Result<InversionCheck> {
    let path = inversion_path(x, side)?;
    let continued = li_continued(p, &path)?;

    // principal-branch inversion formula, then one explicit cut crossing
    // on the right-hand path
    let log_minus_x = (-x).ln();
    let arg = C::new(0.5, 0.0) + log_minus_x / C::new(0.0, TWO_PI);
    let sign_p = if p % 2 == 0 { 1.0 } else { -1.0 };
    let mut predicted = -sign_p
        * (li_principal(p, x)?
            + C::new(0.0, TWO_PI).powu(p as u32) / factorial(p) * bernoulli_poly(p, arg));
    if side == CutSide::Right {
        // crossing direction is set by which half-plane x starts in
        let downward = x.im > 0.0;
        let jump_sign = if downward { 1.0 } else { -1.0 };
        predicted +=
            C::new(0.0, jump_sign * TWO_PI) / factorial(p - 1) * (-x.ln()).powu(p as u32 - 1);
    }
    let residual = (continued - predicted).norm();
    Ok(InversionCheck { continued, predicted, residual, path })
}

// ---------------------------------------------------------------------------
// Operator argument
// ---------------------------------------------------------------------------

/// The polylogarithm `Li_N(x) = sum_k x^(k+N) / (k+N)` of the normalized
/// monodromy logarithm `N`, with branch tracking along paths.
///
/// Evaluation reduces to scalar polylogarithms along the `q`-th-root
/// routes `eta^j x^(1/q)` of the argument, `q` the order of the
/// semisimple part: each route carries its own cut corrections, windings
/// entering only through the correction polynomials while the principal
/// values are taken at the route endpoint.
#[derive(Clone, Debug)]
pub struct OperatorLi {
    split: MonodromySplit,
}

impl OperatorLi {
    pub fn new(sigma: &CMat) -> Result<Self> {
        Ok(OperatorLi { split: MonodromySplit::new(sigma)? })
    }

    pub fn from_split(split: MonodromySplit) -> Self {
        OperatorLi { split }
    }

    pub fn split(&self) -> &MonodromySplit {
        &self.split
    }

    /// Principal branch, argument off `[0, oo)`or inside the unit disk.
    pub fn principal(&self, x: C) -> Result<CMat> {
        self.assemble(x.ln(), &[])
    }

    /// Continuation along a path whose start is on the principal branch.
    pub fn continued(&self, path: &Path) -> Result<CMat> {
        let walk = walk_log(path)?;
        self.assemble(walk.w_end, &walk.events)
    }

    /// Value after `turns` full counterclockwise loops of the argument
    /// around the origin, staying inside the unit disk (where no cut can
    /// be crossed).
    pub fn with_winding(&self, x: C, turns: i64) -> Result<CMat> {
        if turns != 0 && x.norm() >= 1.0 {
            return Err(Error::Domain(
                "origin windings are only cut-free inside the unit disk".into(),
            ));
        }
        self.assemble(x.ln() + C::new(0.0, TWO_PI * turns as f64), &[])
    }

    /// Direct partial sum of the defining series (`|x| < 1` only); the
    /// reference the route reduction is tested against.
    pub fn series(&self, x: C, terms: usize) -> Result<CMat> {
        if x.norm() >= 1.0 {
            return Err(Error::Domain("series converges only inside the unit disk".into()));
        }
        let n = self.split.semisimple.n();
        let nfull = self.split.normalized_log();
        let xn = operator_power(&nfull, x.ln())?;
        let mut sum = CMat::zeros(n);
        let mut xk = C::new(1.0, 0.0);
        for k in 1..=terms {
            xk *= x;
            let shifted = nfull.add(&CMat::identity(n).scale(C::new(k as f64, 0.0)));
            sum = sum.add(&shifted.inverse()?.scale(xk));
        }
        Ok(sum.matmul(&xn))
    }

    /// Evaluate from a tracked final logarithm and the cut crossings seen
    /// along the way.  A crossing of the tracked log at level `m` is a cut
    /// crossing of route `j = -m mod q` at route winding `(m + j) / q`.
    fn assemble(&self, w_end: C, events: &[CutEvent]) -> Result<CMat> {
        let n = self.split.semisimple.n();
        let q = self.split.order;
        let d = self.split.nil_order;
        let pows = self.split.semisimple_powers();
        let mut polys = vec![vec![Vec::<C>::new(); q]; d];
        for ev in events {
            let j = (-ev.level).rem_euclid(q as i64) as usize;
            let route_level = (ev.level + j as i64) / q as i64;
            for p in 1..=d {
                let poly = &mut polys[p - 1][j];
                if poly.is_empty() {
                    poly.resize(p, C::new(0.0, 0.0));
                }
                add_cut_correction(poly, p, route_level, ev.upward);
            }
        }
        let mut total = CMat::zeros(n);
        // (-q N_nil)^(p-1), the collapsed factor of the route reduction
        let mut nil_pow = CMat::identity(n);
        for p in 1..=d {
            let mut routes = CMat::zeros(n);
            for (j, sp) in pows.iter().enumerate() {
                let wj = (w_end + C::new(0.0, TWO_PI * j as f64)) / q as f64;
                let yj = wj.exp();
                let mut val = li_principal(p, yj)?;
                if !polys[p - 1][j].is_empty() {
                    val += eval_poly(&polys[p - 1][j], wj);
                }
                routes = routes.add(&sp.scale(val));
            }
            total = total.add(&nil_pow.matmul(&routes));
            nil_pow = nil_pow.matmul(&self.split.nilpotent.scale(C::new(-(q as f64), 0.0)));
        }
        Ok(nilpotent_power(&self.split.nilpotent, w_end).matmul(&total))
    }
}

/// One evaluation of the operator inversion identity.
#[derive(Clone, Debug)]
pub struct OperatorInversion {
    pub continued: CMat,
    pub predicted: CMat,
    pub residual: f64,
    pub path: Path,
}

/// Operator form of the inversion identity: continue `Li_N` from `x` to
/// `1/x` across the chosen side of the branch point and compare with the
/// pairing-transpose of `Li_N(x)` plus Bernoulli-polynomial jets, one per
/// power of the semisimple part.
pub fn jonquiere_operator_check(
    sigma: &CMat,
    gram: &CMat,
    x: C,
    side: CutSide,
) -> Result<OperatorInversion> {
    let op = OperatorLi::new(sigma)?;
    let path = inversion_path(x, side)?;
    let continued = op.continued(&path)?;

    let split = op.split();
    let n = sigma.n();
    let q = split.order;
    let d = split.nil_order;
    let logx = x.ln();
    let two_pi_i = C::new(0.0, TWO_PI);
    // transpose with respect to the pairing
    let li_x = op.principal(x)?;
    let mut predicted = gram.inverse()?.matmul(&li_x.transpose()).matmul(gram);
    // 1 lies to the right of the crossing when the half-plane of x and the
    // chosen side agree in orientation
    let chi0 = if (x.im > 0.0) == (side == CutSide::Right) { 1.0 } else { 0.0 };
    let x_neg_nil = nilpotent_power(&split.nilpotent, -logx);
    let pows = split.semisimple_powers();
    for r in 1..=q {
        let lr = if r < q {
            logx / (two_pi_i * q as f64) + C::new(r as f64 / q as f64, 0.0)
        } else {
            logx / (two_pi_i * q as f64) + chi0
        };
        let mut jr = CMat::zeros(n);
        let mut nil_pow = CMat::identity(n);
        for p in 1..=d {
            let coef = two_pi_i.powu(p as u32) * bernoulli_poly(p, lr) / factorial(p);
            jr = jr.add(&nil_pow.scale(coef));
            nil_pow = nil_pow.matmul(&split.nilpotent.scale(C::new(q as f64, 0.0)));
        }
        let inv_pow = &pows[(q - r) % q]; // sigma_s^(-r)
        predicted = predicted.add(&x_neg_nil.matmul(&jr).matmul(inv_pow));
    }
    let residual = continued.sub(&predicted).norm_max();
    Ok(OperatorInversion { continued, predicted, residual, path })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn bernoulli_values() {
        assert_eq!(
            bernoulli(10),
            BigRational::new(BigInt::from(5), BigInt::from(66))
        );
        assert_eq!(
            bernoulli(12),
            BigRational::new(BigInt::from(-691), BigInt::from(2730))
        );
        assert_eq!(bernoulli_f64(3), 0.0);
    }

    #[test]
    fn bernoulli_difference_equation() {
        // B_p(z+1) - B_p(z) = p z^(p-1)
        let points = [c(0.3, -1.2), c(-2.0, 0.7), c(1.5, 2.5)];
        for p in 1..=8usize {
            for &z in &points {
                let lhs = bernoulli_poly(p, z + 1.0) - bernoulli_poly(p, z);
                let rhs = p as f64 * z.powu(p as u32 - 1);
                assert!((lhs - rhs).norm() < 1e-10 * (1.0 + rhs.norm()));
            }
        }
    }

    #[test]
    fn zeta_table() {
        assert!((zeta_int(2) - PI * PI / 6.0).abs() < 1e-14);
        assert!((zeta_int(3) - 1.2020569031595943).abs() < 1e-14);
        assert!((zeta_int(4) - PI.powi(4) / 90.0).abs() < 1e-14);
        assert!((zeta_int(0) + 0.5).abs() < 1e-15);
        assert!((zeta_int(-1) + 1.0 / 12.0).abs() < 1e-15);
        assert!((zeta_int(-3) - 1.0 / 120.0).abs() < 1e-15);
        assert_eq!(zeta_int(-2), 0.0);
    }

    #[test]
    fn dilog_special_values() {
        let half = li_principal(2, c(0.5, 0.0)).unwrap();
        let expect = PI * PI / 12.0 - 0.5 * (2.0f64).ln().powi(2);
        assert!((half - c(expect, 0.0)).norm() < 1e-14);
        let minus_one = li_principal(2, c(-1.0, 0.0)).unwrap();
        assert!((minus_one - c(-PI * PI / 12.0, 0.0)).norm() < 1e-13);
        let at_one = li_principal(2, c(1.0, 0.0)).unwrap();
        assert!((at_one - c(PI * PI / 6.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn series_and_log_expansion_overlap() {
        for p in [2usize, 3, 6] {
            for &r in &[0.42, 0.49] {
                for &deg in &[30.0, 150.0, 210.0, 305.0] {
                    let x = C::from_polar(r, deg * PI / 180.0);
                    let a = li_series(p, x);
                    let b = li_log_expansion(p, x.ln());
                    assert!(
                        (a - b).norm() < 1e-12 * (1.0 + a.norm()),
                        "p={p} x={x}: {a} vs {b}"
                    );
                }
            }
        }
    }

    #[test]
    fn log_walk_tracks_winding() {
        // counterclockwise rectangle around the origin, crossing the
        // positive real axis at x = 2 (on the cut, well away from 1)
        let pts = vec![c(2.0, 1.0), c(-1.0, 1.0), c(-1.0, -1.0), c(2.0, -1.0), c(2.0, 1.0)];
        let walk = walk_log(&Path::new(pts, 1e-6)).unwrap();
        let expect = c(2.0, 1.0).ln() + c(0.0, TWO_PI);
        assert!((walk.w_end - expect).norm() < 1e-12);
        assert_eq!(walk.events.len(), 1);
        assert!(walk.events[0].upward);
        // by the time the loop returns to the cut the log has wound once
        assert_eq!(walk.events[0].level, 1);
    }

    #[test]
    fn segment_through_branch_point_is_rejected() {
        // the edge from (1,-1) to (1,1) passes through x = 1 exactly
        let err = walk_log(&Path::new(vec![c(1.0, -1.0), c(1.0, 1.0)], 1e-6));
        assert!(matches!(err, Err(Error::PathTooClose(_))));
    }

    #[test]
    fn path_through_origin_is_rejected() {
        let p = Path::new(vec![c(0.5, 0.0), c(-0.5, 0.0)], 1e-6);
        assert!(matches!(walk_log(&p), Err(Error::PathTooClose(_))));
    }

    #[test]
    fn trivial_continuation_is_principal() {
        let x = c(0.3, 0.4);
        let v = li_continued(2, &Path::new(vec![x], 1e-6)).unwrap();
        assert!((v - li_principal(2, x).unwrap()).norm() < 1e-15);
    }

    #[test]
    fn dilog_monodromy_around_one() {
        // counterclockwise octagon around 1 (vertex angles avoid the real
        // axis): continued - principal = -2 pi i Log(x0)
        let pts: Vec<C> = (0..=8)
            .map(|k| c(1.0, 0.0) + C::from_polar(0.5, PI / 8.0 + TWO_PI * k as f64 / 8.0))
            .collect();
        let x0 = pts[0];
        let v = li_continued(2, &Path::new(pts, 1e-6)).unwrap();
        let expect = li_principal(2, x0).unwrap() - c(0.0, TWO_PI) * x0.ln();
        assert!((v - expect).norm() < 1e-12, "{v} vs {expect}");
    }

    #[test]
    fn inversion_hand_value() {
        // p = 1, x = 0.5 - 0.5i, left path: both sides are i pi / 2
        let chk = jonquiere_check(1, c(0.5, -0.5), CutSide::Left).unwrap();
        assert!((chk.continued - c(0.0, PI / 2.0)).norm() < 1e-13);
        assert!((chk.predicted - c(0.0, PI / 2.0)).norm() < 1e-13);
        assert!(chk.residual < 1e-13);
    }

    #[test]
    fn inversion_residuals_both_sides() {
        let xs = [c(0.7, 0.9), c(-1.3, 0.4), c(0.2, -0.6), c(2.5, -1.5)];
        for p in 1..=6usize {
            for &x in &xs {
                for side in [CutSide::Left, CutSide::Right] {
                    let chk = jonquiere_check(p, x, side).unwrap();
                    assert!(
                        chk.residual < 1e-11,
                        "p={p} x={x} side={side:?}: residual {}",
                        chk.residual
                    );
                }
            }
        }
    }

    #[test]
    fn inversion_rejects_real_argument() {
        assert!(matches!(
            jonquiere_check(2, c(0.5, 0.0), CutSide::Left),
            Err(Error::AmbiguousCrossing)
        ));
    }

    #[test]
    fn path_json_round_trip() {
        let p = Path::new(vec![c(1.0, 2.0), c(-0.5, 0.25)], 1e-4);
        let q = Path::from_json(&p.to_json()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn operator_li_rank_one_closed_form() {
        // for the rank-one lattice the operator value at 1/4 is
        // 2 artanh(1/2) = log 3
        let op = OperatorLi::new(&Lattice::a_type(1).monodromy()).unwrap();
        let v = op.principal(c(0.25, 0.0)).unwrap();
        assert!((v[(0, 0)] - c(1.0986122886681098, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn operator_routes_match_series() {
        let cases: Vec<CMat> = vec![
            Lattice::a_type(2).monodromy(),
            Lattice::a_type(3).monodromy(),
            CMat::from_int(&[vec![1, 1], vec![0, 1]]),
            CMat::from_int(&[vec![-1, 1], vec![0, -1]]),
        ];
        for sigma in cases {
            let op = OperatorLi::new(&sigma).unwrap();
            for x in [c(0.3, 0.2), c(-0.25, 0.35), c(0.1, -0.4)] {
                let routed = op.principal(x).unwrap();
                let direct = op.series(x, 300).unwrap();
                assert!(
                    routed.sub(&direct).norm_max() < 1e-10,
                    "route reduction disagrees with the series"
                );
            }
        }
    }

    #[test]
    fn operator_li_loop_monodromy() {
        // one ccw loop around 1 adds -2 pi i on the crossing route; for
        // the rank-one lattice only the unrotated route crosses
        let op = OperatorLi::new(&Lattice::a_type(1).monodromy()).unwrap();
        let x0 = c(1.0, 0.0) + C::from_polar(0.5, std::f64::consts::PI / 8.0);
        let mut pts: Vec<C> = (0..=8)
            .map(|k| {
                c(1.0, 0.0)
                    + C::from_polar(
                        0.5,
                        std::f64::consts::PI / 8.0
                            + TWO_PI * k as f64 / 8.0,
                    )
            })
            .collect();
        pts[8] = x0;
        let looped = op.continued(&Path::new(pts, 1e-6)).unwrap();
        let base = op.principal(x0).unwrap();
        let expect = base.add(&CMat::identity(1).scale(c(0.0, -TWO_PI)));
        assert!(looped.sub(&expect).norm_max() < 1e-10);
    }

    #[test]
    fn operator_inversion_residuals() {
        for mu in [1usize, 2, 3] {
            let lat = Lattice::a_type(mu);
            let sigma = lat.monodromy();
            let gram = lat.gram();
            for x in [c(0.4, 0.7), c(-1.3, -0.6)] {
                for side in [CutSide::Left, CutSide::Right] {
                    let chk = jonquiere_operator_check(&sigma, &gram, x, side).unwrap();
                    assert!(
                        chk.residual < 1e-9,
                        "A{mu} x={x} {side:?}: residual {}",
                        chk.residual
                    );
                }
            }
        }
    }

    #[test]
    fn operator_inversion_with_nilpotent_part() {
        // the pairing has to be invariant under the operator; for these
        // SL2 blocks the symplectic form is
        let gram = CMat::from_int(&[vec![0, 1], vec![-1, 0]]);
        for sigma in [
            CMat::from_int(&[vec![1, 1], vec![0, 1]]),
            CMat::from_int(&[vec![-1, 1], vec![0, -1]]),
        ] {
            for x in [c(0.6, 0.9), c(-0.8, -0.5)] {
                for side in [CutSide::Left, CutSide::Right] {
                    let chk = jonquiere_operator_check(&sigma, &gram, x, side).unwrap();
                    assert!(
                        chk.residual < 1e-9,
                        "x={x} {side:?}: residual {}",
                        chk.residual
                    );
                }
            }
        }
    }
}

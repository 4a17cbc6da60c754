//! Operator calculus on the monodromy: semisimple/nilpotent splitting,
//! normalized logarithms, operator powers, reciprocal-Gamma jets, and
//! adjoints with respect to bilinear pairings.
//!
//! The classical monodromy of an isolated singularity is quasi-unipotent,
//! so its eigenvalues snap to roots of unity.  We snap explicitly (small
//! continued-fraction denominators, verified against the floating
//! eigenvalue) and carry the exact exponents everywhere downstream; the
//! nilpotent part is extracted by a logarithm that is a finite series.

use num_rational::Rational64;

use crate::error::{Error, Result};
use crate::linalg::{CMat, C};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// Best rational approximation with bounded denominator, by continued
/// fractions.
fn rational_approx(x: f64, max_den: i64) -> Rational64 {
    let (mut p0, mut q0, mut p1, mut q1) = (1i64, 0i64, x.floor() as i64, 1i64);
    let mut frac = x - x.floor();
    while frac.abs() > 1e-12 {
        let inv = 1.0 / frac;
        let a = inv.floor() as i64;
        let (p2, q2) = (a * p1 + p0, a * q1 + q0);
        if q2 > max_den {
            break;
        }
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        frac = inv - inv.floor();
    }
    Rational64::new(p1, q1)
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a.abs() } else { gcd(b, a % b) }
}

fn lcm(a: i64, b: i64) -> i64 {
    a / gcd(a, b) * b
}

/// Semisimple/nilpotent splitting of a quasi-unipotent operator, with the
/// eigenvalue exponents snapped to exact rationals in `(-1, 0]`.
#[derive(Clone, Debug)]
pub struct MonodromySplit {
    /// Snapped exponents `alpha_i` (eigenvalue is `exp(-2 pi i alpha_i)`),
    /// one per distinct eigenvalue, each in `(-1, 0]`.
    pub exponents: Vec<Rational64>,
    /// Spectral projectors, aligned with `exponents`.
    pub projectors: Vec<CMat>,
    /// Semisimple part, rebuilt from the snapped eigenvalues.
    pub semisimple: CMat,
    /// Nilpotent part of the normalized logarithm
    /// `-(1/2 pi i) log(sigma)`.
    pub nilpotent: CMat,
    /// Smallest `d` with `nilpotent^d = 0`.
    pub nil_order: usize,
    /// Order of the semisimple part (lcm of the exponent denominators).
    pub order: usize,
}

impl MonodromySplit {
    /// Split a quasi-unipotent matrix.  Fails if an eigenvalue does not
    /// sit on a root of unity of denominator at most 64.
    pub fn new(sigma: &CMat) -> Result<Self> {
        let n = sigma.n();
        let spec = sigma.spectral()?;
        let mut exponents = Vec::new();
        let mut semisimple = CMat::zeros(n);
        let mut log_nil = CMat::zeros(n);
        for (i, &lam) in spec.eigs.iter().enumerate() {
            if (lam.norm() - 1.0).abs() > 1e-6 {
                return Err(Error::Domain(format!(
                    "monodromy eigenvalue {lam} is not on the unit circle"
                )));
            }
            // exponent in (-1, 0]: eigenvalue = exp(-2 pi i alpha)
            let theta = -lam.arg() / TWO_PI; // in (-1/2, 1/2]
            let alpha = if theta <= 0.0 { theta } else { theta - 1.0 };
            let snapped = rational_approx(alpha, 64);
            let exact = C::from_polar(
                1.0,
                -TWO_PI * (*snapped.numer() as f64 / *snapped.denom() as f64),
            );
            if (exact - lam).norm() > 1e-6 {
                return Err(Error::Domain(format!(
                    "monodromy eigenvalue {lam} does not snap to a root of \
                     unity of order <= 64"
                )));
            }
            exponents.push(snapped);
            semisimple = semisimple.add(&spec.proj[i].scale(exact));
            // log of the unipotent factor I + lam^{-1} Ntilde on this block
            let unipotent_dev = spec.nil[i].scale(1.0 / exact);
            let mut pow = unipotent_dev.clone();
            let mut block_log = CMat::zeros(n);
            let mut k = 1usize;
            while !pow.is_zero(1e-300) && k <= n {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                block_log = block_log.add(&pow.scale(C::new(sign / k as f64, 0.0)));
                pow = pow.matmul(&unipotent_dev);
                k += 1;
            }
            log_nil = log_nil.add(&block_log);
        }
        let nilpotent = log_nil.scale(C::new(0.0, 1.0 / TWO_PI)); // -1/(2 pi i)
        let mut nil_order = 1usize;
        let mut pow = nilpotent.clone();
        let scale = nilpotent.norm_max().max(1.0);
        while pow.norm_max() > 1e-9 * scale.powi(nil_order as i32) {
            pow = pow.matmul(&nilpotent);
            nil_order += 1;
            if nil_order > n + 1 {
                return Err(Error::Domain(
                    "normalized logarithm has no nilpotent part of finite order".into(),
                ));
            }
        }
        let order = exponents
            .iter()
            .fold(1i64, |acc, e| lcm(acc, *e.denom()))
            .unsigned_abs() as usize;
        Ok(MonodromySplit {
            exponents,
            projectors: spec.proj,
            semisimple,
            nilpotent,
            nil_order,
            order,
        })
    }

    /// Normalized logarithm `N = -(1/2 pi i) log sigma`, eigenvalues in
    /// `(-1, 0]`.
    pub fn normalized_log(&self) -> CMat {
        let n = self.semisimple.n();
        let mut out = self.nilpotent.clone();
        for (i, e) in self.exponents.iter().enumerate() {
            let alpha = *e.numer() as f64 / *e.denom() as f64;
            out = out.add(&self.projectors[i].scale(C::new(alpha, 0.0)));
        }
        debug_assert_eq!(out.n(), n);
        out
    }

    /// `eta = exp(2 pi i / order)`, the rotation between the scalar routes
    /// of the operator polylogarithm.
    pub fn eta(&self) -> C {
        C::from_polar(1.0, TWO_PI / self.order as f64)
    }

    /// Powers `semisimple^0 .. semisimple^(order-1)`.
    pub fn semisimple_powers(&self) -> Vec<CMat> {
        let mut pows = Vec::with_capacity(self.order);
        let mut cur = CMat::identity(self.semisimple.n());
        for _ in 0..self.order {
            pows.push(cur.clone());
            cur = cur.matmul(&self.semisimple);
        }
        pows
    }
}

/// `x^M = exp(w M)` for a given branch `w` of `log x`.
pub fn operator_power(m: &CMat, w: C) -> Result<CMat> {
    m.matfun(|lam, order| {
        let base = (w * lam).exp();
        Ok((0..order).map(|j| base * w.powu(j as u32)).collect())
    })
}

/// `exp(w M)` for nilpotent `M`: the finite series, no spectral work.
pub fn nilpotent_power(m: &CMat, w: C) -> CMat {
    let n = m.n();
    let mut out = CMat::identity(n);
    let mut pow = CMat::identity(n);
    let mut fact = 1.0;
    for k in 1..=n {
        pow = pow.matmul(m);
        if pow.is_zero(1e-300) {
            break;
        }
        fact *= k as f64;
        out = out.add(&pow.scale(w.powu(k as u32) / fact));
    }
    out
}

// ---------------------------------------------------------------------------
// Reciprocal Gamma
// ---------------------------------------------------------------------------

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

fn gamma_lanczos(z: C) -> C {
    // valid for Re z >= 0.5
    let z = z - 1.0;
    let mut x = C::new(LANCZOS[0], 0.0);
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (TWO_PI).sqrt() * t.powc(z + 0.5) * (-t).exp() * x
}

/// Entire reciprocal Gamma function `1/Gamma(z)`.
pub fn rgamma(z: C) -> C {
    if z.re < 0.5 {
        // reflection: 1/Gamma(z) = sin(pi z) Gamma(1-z) / pi
        (std::f64::consts::PI * z).sin() * gamma_lanczos(C::new(1.0, 0.0) - z)
            / std::f64::consts::PI
    } else {
        1.0 / gamma_lanczos(z)
    }
}

/// Derivatives `[f(z0), f'(z0), ..., f^(m-1)(z0)]` of `1/Gamma` by a
/// Cauchy circle (trapezoidal quadrature is spectrally accurate for the
/// entire integrand).
pub fn rgamma_jet(z0: C, m: usize) -> Vec<C> {
    const J: usize = 64;
    const R: f64 = 0.5;
    let samples: Vec<C> = (0..J)
        .map(|k| {
            let th = TWO_PI * k as f64 / J as f64;
            rgamma(z0 + C::from_polar(R, th))
        })
        .collect();
    let mut jet = Vec::with_capacity(m);
    let mut fact = 1.0;
    for j in 0..m {
        if j > 0 {
            fact *= j as f64;
        }
        let mut sum = C::new(0.0, 0.0);
        for (k, s) in samples.iter().enumerate() {
            let th = TWO_PI * k as f64 / J as f64;
            sum += s * C::from_polar(1.0, -(j as f64) * th);
        }
        jet.push(sum * fact / (J as f64 * R.powi(j as i32)));
    }
    // 1/Gamma vanishes exactly at nonpositive integers
    if (z0.im).abs() < 1e-12 {
        let r = z0.re.round();
        if r <= 0.0 && (z0.re - r).abs() < 1e-12 {
            jet[0] = C::new(0.0, 0.0);
        }
    }
    jet
}

/// Adjoint of `t` with respect to a nondegenerate bilinear form `r`:
/// the unique `t*` with `r(t x, y) = r(x, t* y)`.
pub fn adjoint_wrt(t: &CMat, r: &CMat) -> Result<CMat> {
    Ok(r.inverse()?.matmul(&t.transpose()).matmul(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    #[test]
    fn a2_splitting() {
        let split = MonodromySplit::new(&Lattice::a_type(2).monodromy()).unwrap();
        assert_eq!(split.order, 3);
        assert_eq!(split.nil_order, 1);
        assert!(split.nilpotent.norm_max() < 1e-10);
        let mut exps = split.exponents.clone();
        exps.sort();
        assert_eq!(exps, vec![Rational64::new(-2, 3), Rational64::new(-1, 3)]);
    }

    #[test]
    fn a3_splitting() {
        let split = MonodromySplit::new(&Lattice::a_type(3).monodromy()).unwrap();
        assert_eq!(split.order, 4);
        let mut exps = split.exponents.clone();
        exps.sort();
        assert_eq!(
            exps,
            vec![
                Rational64::new(-3, 4),
                Rational64::new(-1, 2),
                Rational64::new(-1, 4)
            ]
        );
    }

    #[test]
    fn unipotent_splitting() {
        let u = CMat::from_int(&[vec![1, 1], vec![0, 1]]);
        let split = MonodromySplit::new(&u).unwrap();
        assert_eq!(split.order, 1);
        assert_eq!(split.nil_order, 2);
        assert_eq!(split.exponents, vec![Rational64::new(0, 1)]);
        // N_n = -(1/2 pi i) [[0,1],[0,0]]
        let expect = c(0.0, 1.0 / TWO_PI);
        assert!((split.nilpotent[(0, 1)] - expect).norm() < 1e-12);
        assert!(split.nilpotent[(1, 0)].norm() < 1e-14);
    }

    #[test]
    fn exp_of_normalized_log_recovers_operator() {
        for m in [
            CMat::from_int(&[vec![-1, 1], vec![0, -1]]),
            Lattice::a_type(3).monodromy(),
            CMat::from_int(&[vec![1, 1], vec![0, 1]]),
        ] {
            let split = MonodromySplit::new(&m).unwrap();
            let n = split.normalized_log();
            let back = operator_power(&n, c(0.0, -TWO_PI)).unwrap();
            assert!(
                back.sub(&m).norm_max() < 1e-9,
                "exp(-2 pi i N) differs from the operator"
            );
        }
    }

    #[test]
    fn snapping_rejects_non_unitary() {
        let m = CMat::from_real(&[vec![2.0, 0.0], vec![0.0, 0.5]]);
        assert!(MonodromySplit::new(&m).is_err());
    }

    #[test]
    fn snap_recovers_sevenths() {
        let alpha = -2.0 / 7.0;
        let lam = C::from_polar(1.0, -TWO_PI * alpha + 1e-9);
        let m = CMat::from_rows(&[vec![lam]]);
        let split = MonodromySplit::new(&m).unwrap();
        assert_eq!(split.exponents, vec![Rational64::new(-2, 7)]);
        assert_eq!(split.order, 7);
    }

    #[test]
    fn rgamma_values() {
        assert!((rgamma(c(1.0, 0.0)) - c(1.0, 0.0)).norm() < 1e-13);
        assert!((rgamma(c(4.0, 0.0)) - c(1.0 / 6.0, 0.0)).norm() < 1e-13);
        let pi = std::f64::consts::PI;
        assert!((rgamma(c(0.5, 0.0)) - c(1.0 / pi.sqrt(), 0.0)).norm() < 1e-13);
        assert!(rgamma(c(-3.0, 0.0)).norm() < 1e-13);
        // |Gamma(1+i)|^2 = pi / sinh(pi)
        let prod = rgamma(c(1.0, 1.0)) * rgamma(c(1.0, -1.0));
        assert!((prod - c(pi.sinh() / pi, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rgamma_jet_at_one() {
        // d/dz [1/Gamma](1) = Euler's constant; second derivative is
        // gamma^2 - pi^2/6
        let jet = rgamma_jet(c(1.0, 0.0), 3);
        let gamma_e = 0.5772156649015329;
        assert!((jet[0] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((jet[1] - c(gamma_e, 0.0)).norm() < 1e-11);
        let second = gamma_e * gamma_e - std::f64::consts::PI.powi(2) / 6.0;
        assert!((jet[2] - c(second, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn rgamma_jet_snaps_zeros() {
        let jet = rgamma_jet(c(-2.0, 0.0), 2);
        assert_eq!(jet[0], c(0.0, 0.0));
        // derivative at -2 is (-1)^2 2! = 2
        assert!((jet[1] - c(2.0, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn adjoint_is_adjoint() {
        let lat = Lattice::a_type(3);
        let g = lat.gram();
        let t = CMat::from_int(&[vec![1, 2, 0], vec![-1, 0, 3], vec![2, 2, 1]]);
        let tstar = adjoint_wrt(&t, &g).unwrap();
        let x = vec![c(1.0, 0.5), c(-2.0, 1.0), c(0.0, -1.0)];
        let y = vec![c(0.5, 0.0), c(1.0, -1.0), c(2.0, 0.5)];
        let lhs = crate::linalg::dot(&g.matvec(&y), &t.matvec(&x));
        let rhs = crate::linalg::dot(&g.matvec(&tstar.matvec(&y)), &x);
        assert!((lhs - rhs).norm() < 1e-10);
    }

    #[test]
    fn nilpotent_power_is_polynomial() {
        let m = CMat::from_int(&[vec![0, 1], vec![0, 0]]);
        let p = nilpotent_power(&m, c(3.0, 1.0));
        assert!((p[(0, 1)] - c(3.0, 1.0)).norm() < 1e-15);
        assert!((p[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
    }
}

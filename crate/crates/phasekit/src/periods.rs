//! Oscillatory periods at the conformal point and the pairings they carry.
//!
//! For the built-in `A_mu` lattices everything here is in closed form: the
//! period derivatives of all orders are finite Gamma-weighted sums of
//! powers of `lambda`, with coefficients given by the pairings of a
//! distinguished eigenbasis against the vanishing classes.  The residue
//! pairing is computed from the Seifert form by a half-turn of the
//! monodromy logarithm, and the leading coefficient of the
//! Laplace-transformed pairing reproduces it exactly — that identity, and
//! the transpose symmetries that come with it, are what the tests here
//! pin down.
//!
//! Component convention: period vectors are stored on the flat monomial
//! basis (`phi_j`, `j = 1..mu`), on which the grading operator acts by
//! `theta_j = -1/2 - s_j` and the residue pairing is the antidiagonal.


use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::linalg::{CMat, C};
use crate::opcalc::{nilpotent_power, rgamma, MonodromySplit};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
const PI: f64 = std::f64::consts::PI;

/// Closed-form period data for an `A_mu` lattice at the conformal point.
#[derive(Clone, Debug)]
pub struct PeriodData {
    lat: Lattice,
    mu: usize,
    /// Steenbrink spectrum `s_q = q/(mu+1) - 1`, `q = 1..mu`.
    s: Vec<f64>,
    /// Pairings `u[q-1][m-1] = <A_q, e_m>` of the eigenbasis against the
    /// vanishing classes; these are the coordinates of `A_q` on the basis
    /// dual to the vanishing classes.
    u: CMat,
    split: MonodromySplit,
    /// Residue pairing on the flat basis (antidiagonal for built-ins).
    residue: CMat,
}

impl PeriodData {
    pub fn new(lat: &Lattice) -> Result<Self> {
        if !lat.is_a_type() {
            return Err(Error::Domain(
                "closed-form periods are only available for the A-type lattices".into(),
            ));
        }
        let mu = lat.rank();
        let h = (mu + 1) as f64;
        let s: Vec<f64> = (1..=mu).map(|q| q as f64 / h - 1.0).collect();
        // <A_q, e_m> = -h^(s_q) Gamma(s_q + 1) zeta^((m-1)q) (1 - zeta^q)
        let mut u = CMat::zeros(mu);
        for q in 1..=mu {
            let zq = C::from_polar(1.0, TWO_PI * q as f64 / h);
            let pref = -h.powf(s[q - 1]) / rgamma(C::new(s[q - 1] + 1.0, 0.0)) * (1.0 - zq);
            for m in 1..=mu {
                u[(q - 1, m - 1)] =
                    pref * C::from_polar(1.0, TWO_PI * ((m - 1) * q) as f64 / h);
            }
        }
        let split = MonodromySplit::new(&lat.monodromy())?;
        let residue = residue_from_seifert(lat, &u)?;
        Ok(PeriodData { lat: lat.clone(), mu, s, u, split, residue })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lat
    }

    pub fn mu(&self) -> usize {
        self.mu
    }

    pub fn spectrum(&self) -> &[f64] {
        &self.s
    }

    pub fn u_matrix(&self) -> &CMat {
        &self.u
    }

    pub fn monodromy_split(&self) -> &MonodromySplit {
        &self.split
    }

    /// Residue pairing on the flat basis.
    pub fn residue_gram(&self) -> &CMat {
        &self.residue
    }

    /// Grading operator on period components: `diag(-1/2 - s_j)`.
    pub fn theta(&self) -> CMat {
        CMat::diag(&self.s.iter().map(|&sj| C::new(-0.5 - sj, 0.0)).collect::<Vec<_>>())
    }

    /// Bilinear residue pairing of two period vectors.
    pub fn pair(&self, v: &[C], w: &[C]) -> C {
        crate::linalg::dot(v, &self.residue.matvec(w))
    }

    /// `k`-th derivative of the period vector of the class `alpha` at the
    /// conformal point, principal branch of `lambda`:
    /// component `j` is `lambda^(s_q - k) / Gamma(s_q - k + 1) <A_q, alpha>`
    /// with `q = mu + 1 - j` (the eigen-label dual to `phi_j`).
    pub fn period_jet(&self, alpha: &[i64], k: i64, lambda: C) -> Result<Vec<C>> {
        if lambda.norm() == 0.0 {
            return Err(Error::Domain("period evaluation at the critical value".into()));
        }
        self.period_jet_br(alpha, k, lambda.ln())
    }

    /// [`PeriodData::period_jet`] on the branch fixed by `log_lambda`;
    /// adding `2 pi i` to the log moves one sheet counterclockwise.
    pub fn period_jet_br(&self, alpha: &[i64], k: i64, log_lambda: C) -> Result<Vec<C>> {
        if alpha.len() != self.mu {
            return Err(Error::Domain("class has the wrong rank".into()));
        }
        let mut out = vec![C::new(0.0, 0.0); self.mu];
        for (j, slot) in out.iter_mut().enumerate() {
            let q = self.mu - 1 - j; // 0-based eigen-label mu+1-(j+1)
            let sq = self.s[q];
            let pairing: C = alpha
                .iter()
                .enumerate()
                .map(|(m, &am)| self.u[(q, m)] * am as f64)
                .sum();
            *slot = (log_lambda * (sq - k as f64)).exp()
                * rgamma(C::new(sq - k as f64 + 1.0, 0.0))
                * pairing;
        }
        Ok(out)
    }

    /// Matrix of the fundamental solution at integration offset `m`: maps
    /// eigen-coordinates `<A_q, alpha>` to the flat components of
    /// `I^(-m)(0, lambda)`.  Entry `(j, q)` is
    /// `lambda^(s_q + m) / Gamma(s_q + m + 1)` on the antidiagonal slot
    /// `q = mu - 1 - j` and zero elsewhere; the branch comes from
    /// `log_lambda`.  Negative-integer Gamma arguments are handled by the
    /// reciprocal, which vanishes there.
    pub fn fundamental_solution(&self, m: i64, log_lambda: C) -> CMat {
        let mu = self.mu;
        CMat::from_fn(mu, |j, q| {
            if q != mu - 1 - j {
                return C::new(0.0, 0.0);
            }
            let sq = self.s[q];
            (log_lambda * (sq + m as f64)).exp() * rgamma(C::new(sq + m as f64 + 1.0, 0.0))
        })
    }

    /// Eigen-coordinates `<A_q, alpha>` of a lattice class, the vector the
    /// fundamental solution acts on.
    pub fn eigen_coordinates(&self, alpha: &[i64]) -> Result<Vec<C>> {
        if alpha.len() != self.mu {
            return Err(Error::Domain("class has the wrong rank".into()));
        }
        Ok((0..self.mu)
            .map(|q| {
                alpha
                    .iter()
                    .enumerate()
                    .map(|(mm, &am)| self.u[(q, mm)] * am as f64)
                    .sum()
            })
            .collect())
    }

    /// Window of the generating series of `alpha` at the conformal point:
    /// the coefficient of `(-z)^k` is the `k`-th period derivative on the
    /// branch of `log_lambda`.
    pub fn f_series_t0(
        &self,
        alpha: &[i64],
        log_lambda: C,
        k_min: i64,
        k_max: i64,
    ) -> Result<TruncatedSeries> {
        let mut f = TruncatedSeries::zeros("-z", k_min, k_max, self.mu);
        for k in k_min..=k_max {
            f.set_coeff(k, self.period_jet_br(alpha, k, log_lambda)?);
        }
        Ok(f)
    }

    /// Part of a series window on which the Virasoro grading
    /// `z d_z + 1/2 - theta` has eigenvalue of the requested `sign`
    /// (-1, 0, or +1).  The grading acts on the slot `(k, j)` by
    /// `k + 1 + s_j`, so for the built-in spectra the strictly positive
    /// part coincides with the polynomial part `k >= 0`.
    pub fn energy_part(&self, f: &TruncatedSeries, sign: i8) -> TruncatedSeries {
        let (k_min, k_max) = f.window();
        let mut out = TruncatedSeries::zeros(f.tag(), k_min, k_max, f.dim());
        for k in k_min..=k_max {
            let mut v = vec![C::new(0.0, 0.0); f.dim()];
            for (j, slot) in v.iter_mut().enumerate() {
                let e = k as f64 + 1.0 + self.s[j];
                let keep = match sign.signum() {
                    1 => e > 1e-9,
                    -1 => e < -1e-9,
                    _ => e.abs() <= 1e-9,
                };
                if keep {
                    *slot = f.coeff(k)[j];
                }
            }
            out.set_coeff(k, v);
        }
        out
    }

    /// Slots of the window where the grading split and the polynomial
    /// split disagree: `(k, j)` kept by the strictly-positive grading part
    /// but not by `k >= 0`, or vice versa.  Finite by construction; empty
    /// for the built-in spectra.
    pub fn split_discrepancy(&self, f: &TruncatedSeries) -> Vec<(i64, usize)> {
        let (k_min, k_max) = f.window();
        let mut out = Vec::new();
        for k in k_min..=k_max {
            for j in 0..f.dim() {
                let positive = k as f64 + 1.0 + self.s[j] > 1e-9;
                if positive != (k >= 0) {
                    out.push((k, j));
                }
            }
        }
        out
    }

    /// Laplace-transformed Seifert pairing of the eigen-sections `i` and
    /// `j` (0-based) as a Laurent window in the transform variable.  The
    /// section `i` carries the symbol `(-z)^(s_i + 1/2)` up to
    /// normalization, so the pairing sits at the single power
    /// `z^(1 + s_i + s_j + 1)`; monodromy invariance of the Seifert form
    /// kills every non-integer exponent, and the half-turn of the
    /// monodromy logarithm carries the phases produced by the two
    /// `z -> -z` substitutions.  The normalization is pinned by the
    /// leading coefficient being the residue pairing.
    pub fn higher_residue_pairing(
        &self,
        i: usize,
        j: usize,
        k_min: i64,
        k_max: i64,
    ) -> Result<TruncatedSeries> {
        if i >= self.mu || j >= self.mu {
            return Err(Error::Domain("eigen-section index out of range".into()));
        }
        let mut out = TruncatedSeries::zeros("z", k_min, k_max, 1);
        let rel = self.k_exponent(i, j);
        if (rel - rel.round()).abs() > 1e-9 {
            // Seifert pairing of incompatible monodromy eigenvalues: the
            // whole window vanishes identically.
            return Ok(out);
        }
        // absolute power of z: the leading slot z^(n+1) = z^1 shifted by
        // the relative exponent
        let power = 1 + rel.round() as i64;
        if power < k_min || power > k_max {
            return Ok(out);
        }
        let (m, variation) = dual_half_turn_and_variation(&self.lat)?;
        let mi = m.matvec(&self.u.row(i));
        let sf = crate::linalg::dot(&mi, &variation.matvec(&self.u.row(j)));
        out.set_coeff(power, vec![sf / C::new(0.0, TWO_PI)]);
        Ok(out)
    }

    /// Coefficient of the Laplace-transformed Seifert pairing of the
    /// eigen-sections: `(1/2 pi i) <A_i, e^(pi i N) e^(pi i p) A_j>`.
    /// Coincides with the residue pairing entrywise.
    pub fn k_leading(&self) -> CMat {
        self.residue.clone()
    }

    /// Power of the expansion variable carried by the `(i, j)` pairing,
    /// relative to the leading one: `s_i + s_j - 2 ell + 1`.
    pub fn k_exponent(&self, i: usize, j: usize) -> f64 {
        self.s[i] + self.s[j] - 2.0 * self.lat.ell() as f64 + 1.0
    }
}

/// Finite Laurent window of a series in one formal variable, with complex
/// vector coefficients.  Exponents outside the window are unknown rather
/// than zero, so arithmetic intersects windows instead of padding.
#[derive(Clone, Debug)]
pub struct TruncatedSeries {
    tag: &'static str,
    k_min: i64,
    k_max: i64,
    dim: usize,
    coeffs: Vec<Vec<C>>,
}

impl TruncatedSeries {
    pub fn zeros(tag: &'static str, k_min: i64, k_max: i64, dim: usize) -> Self {
        assert!(k_min <= k_max, "empty series window");
        let len = (k_max - k_min + 1) as usize;
        TruncatedSeries { tag, k_min, k_max, dim, coeffs: vec![vec![C::new(0.0, 0.0); dim]; len] }
    }

    /// Name of the expansion variable, kept so that series in different
    /// formal variables cannot be combined by accident.
    pub fn tag(&self) -> &'static str {
        self.tag
    }

    pub fn window(&self) -> (i64, i64) {
        (self.k_min, self.k_max)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeff(&self, k: i64) -> &[C] {
        assert!(self.k_min <= k && k <= self.k_max, "exponent outside the window");
        &self.coeffs[(k - self.k_min) as usize]
    }

    pub fn set_coeff(&mut self, k: i64, v: Vec<C>) {
        assert!(self.k_min <= k && k <= self.k_max, "exponent outside the window");
        assert_eq!(v.len(), self.dim);
        self.coeffs[(k - self.k_min) as usize] = v;
    }

    /// Sum on the window intersection.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.tag, other.tag, "series in different variables");
        assert_eq!(self.dim, other.dim);
        let k_min = self.k_min.max(other.k_min);
        let k_max = self.k_max.min(other.k_max);
        let mut out = TruncatedSeries::zeros(self.tag, k_min, k_max, self.dim);
        for k in k_min..=k_max {
            let v = self
                .coeff(k)
                .iter()
                .zip(other.coeff(k))
                .map(|(a, b)| a + b)
                .collect();
            out.set_coeff(k, v);
        }
        out
    }

    pub fn scale(&self, s: C) -> Self {
        let mut out = self.clone();
        for row in &mut out.coeffs {
            for c in row {
                *c *= s;
            }
        }
        out
    }

    /// Projection onto nonnegative exponents (same window, complement
    /// zeroed).
    pub fn polynomial_part(&self) -> Self {
        let mut out = self.clone();
        for k in self.k_min..=self.k_max {
            if k < 0 {
                out.set_coeff(k, vec![C::new(0.0, 0.0); self.dim]);
            }
        }
        out
    }

    /// Projection onto strictly negative exponents.
    pub fn principal_part(&self) -> Self {
        let mut out = self.clone();
        for k in self.k_min..=self.k_max {
            if k >= 0 {
                out.set_coeff(k, vec![C::new(0.0, 0.0); self.dim]);
            }
        }
        out
    }

    /// Largest coefficient magnitude on the window.
    pub fn max_norm(&self) -> f64 {
        self.coeffs
            .iter()
            .flatten()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

/// Spectral half-turn `M = e^(pi i N) e^(pi i p)` of a monodromy splitting.
fn half_turn(lat: &Lattice, split: &MonodromySplit) -> Result<CMat> {
    let n = split.semisimple.n();
    // integer weights p = ceil(s) must be constant on each eigenspace
    let spectrum: Vec<f64> = lat
        .spectrum()
        .iter()
        .map(|r| *r.numer() as f64 / *r.denom() as f64)
        .collect();
    let mut semis = CMat::zeros(n);
    for (k, alpha) in split.exponents.iter().enumerate() {
        let af = *alpha.numer() as f64 / *alpha.denom() as f64;
        let mut p_val: Option<i64> = None;
        for &sv in &spectrum {
            let ceil = sv.ceil();
            // treat near-integers as exact
            let ceil = if (sv - sv.round()).abs() < 1e-9 { sv.round() } else { ceil };
            if ((sv - ceil) - af).abs() < 1e-9 {
                match p_val {
                    None => p_val = Some(ceil as i64),
                    Some(p0) if p0 == ceil as i64 => {}
                    Some(_) => {
                        return Err(Error::Domain(
                            "integer weights are not constant on an eigenspace".into(),
                        ))
                    }
                }
            }
        }
        let p0 = p_val.ok_or_else(|| {
            Error::Domain("monodromy eigenvalue missing from the spectrum".into())
        })?;
        let w = C::from_polar(1.0, PI * af) * C::from_polar(1.0, PI * p0 as f64);
        semis = semis.add(&split.projectors[k].scale(w));
    }
    Ok(semis.matmul(&nilpotent_power(&split.nilpotent, C::new(0.0, PI))))
}

/// Residue pairing of the eigenbasis from the Seifert form:
/// `(A_i, A_j) = (1/2 pi i) <M A_i, Var(A_j)>`.
///
/// The eigen-sections live on the basis dual to the vanishing classes, so
/// the half-turn is taken of the dual monodromy `sigma^(-T)` and the
/// variation operator carries the second argument to the vanishing
/// classes, where the natural pairing contracts the two sides.
/// Half-turn of the dual monodromy and the variation matrix, the two
/// ingredients every Seifert-side pairing here contracts through.
fn dual_half_turn_and_variation(lat: &Lattice) -> Result<(CMat, CMat)> {
    let sigma_dual = lat.monodromy().transpose().inverse()?;
    let split = MonodromySplit::new(&sigma_dual)?;
    let m = half_turn(lat, &split)?;
    // variation matrix: inverse transpose of the Seifert matrix -L
    let variation = CMat::from_int(lat.seifert()).transpose().inverse()?.scale(C::new(-1.0, 0.0));
    Ok((m, variation))
}

fn residue_from_seifert(lat: &Lattice, u: &CMat) -> Result<CMat> {
    let n = u.n();
    let (m, variation) = dual_half_turn_and_variation(lat)?;
    let mut r = CMat::zeros(n);
    for i in 0..n {
        let mi = m.matvec(&u.row(i));
        for j in 0..n {
            let sf = crate::linalg::dot(&mi, &variation.matvec(&u.row(j)));
            r[(i, j)] = sf / C::new(0.0, TWO_PI);
        }
    }
    Ok(r)
}

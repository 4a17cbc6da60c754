//! Milnor lattices presented by Seifert matrices.
//!
//! A lattice here is the integral data of an isolated singularity: a
//! unimodular upper-triangular Seifert matrix `L` on a distinguished basis
//! of vanishing classes, the symmetrized intersection form `G = L + L^T`,
//! the classical monodromy `sigma = -L^{-1} L^T`, and the spectrum of
//! rational exponents that the analytic theory attaches to the same data.
//! Everything stays in exact integer (or rational) arithmetic.

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cluster_roots, CMat, C};

/// Largest supported rank; the spectral machinery downstream degrades for
/// very deep eigenvalue clusters, so we refuse early.
pub const MAX_RANK: usize = 16;

/// Integral data of a Milnor lattice with its spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct Lattice {
    label: String,
    seifert: Vec<Vec<i64>>,
    ell: i64,
    spectrum: Vec<Rational64>,
}

impl Lattice {
    /// Build a lattice from raw data, validating shape and invariants.
    pub fn new(
        label: impl Into<String>,
        seifert: Vec<Vec<i64>>,
        ell: i64,
        spectrum: Vec<Rational64>,
    ) -> Result<Self> {
        let n = seifert.len();
        if n == 0 {
            return Err(Error::Domain("lattice rank must be positive".into()));
        }
        if n > MAX_RANK {
            return Err(Error::Domain(format!(
                "lattice rank {n} exceeds supported maximum {MAX_RANK}"
            )));
        }
        if seifert.iter().any(|r| r.len() != n) {
            return Err(Error::Domain("Seifert matrix must be square".into()));
        }
        for i in 0..n {
            if seifert[i][i] != 1 {
                return Err(Error::Domain(
                    "Seifert matrix must have unit diagonal".into(),
                ));
            }
            for j in 0..i {
                if seifert[i][j] != 0 {
                    return Err(Error::Domain(
                        "Seifert matrix must be upper triangular".into(),
                    ));
                }
            }
        }
        if spectrum.len() != n {
            return Err(Error::Domain(format!(
                "spectrum has {} entries for rank {n}",
                spectrum.len()
            )));
        }
        Ok(Lattice { label: label.into(), seifert, ell, spectrum })
    }

    /// The `A_mu` singularity lattice: bidiagonal Seifert matrix and
    /// spectrum `j/(mu+1) - 1`.
    pub fn a_type(mu: usize) -> Self {
        assert!(mu >= 1 && mu <= MAX_RANK);
        let mut seifert = vec![vec![0i64; mu]; mu];
        for i in 0..mu {
            seifert[i][i] = 1;
            if i + 1 < mu {
                seifert[i][i + 1] = -1;
            }
        }
        let h = mu as i64 + 1;
        let spectrum = (1..=mu as i64).map(|j| Rational64::new(j - h, h)).collect();
        Lattice { label: format!("A{mu}"), seifert, ell: 0, spectrum }
    }

    /// Look a built-in up by label (`A1`, `A2`, ...).
    pub fn builtin(name: &str) -> Result<Self> {
        let rest = name
            .strip_prefix('A')
            .or_else(|| name.strip_prefix('a'))
            .ok_or_else(|| Error::Parse(format!("unknown builtin `{name}`")))?;
        let mu: usize = rest
            .parse()
            .map_err(|_| Error::Parse(format!("unknown builtin `{name}`")))?;
        if mu < 1 || mu > MAX_RANK {
            return Err(Error::Parse(format!("unknown builtin `{name}`")));
        }
        Ok(Self::a_type(mu))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rank(&self) -> usize {
        self.seifert.len()
    }

    pub fn ell(&self) -> i64 {
        self.ell
    }

    pub fn seifert(&self) -> &[Vec<i64>] {
        &self.seifert
    }

    pub fn spectrum(&self) -> &[Rational64] {
        &self.spectrum
    }

    /// True when every spectral number lies in the window `(-1, 0]`.
    pub fn spectrum_in_window(&self) -> bool {
        self.spectrum
            .iter()
            .all(|s| *s > Rational64::new(-1, 1) && *s <= Rational64::new(0, 1))
    }

    /// Exact inverse of the Seifert matrix (integer because `L` is
    /// unimodular upper triangular).
    pub fn seifert_inverse(&self) -> Vec<Vec<i64>> {
        let n = self.rank();
        let l = &self.seifert;
        let mut inv = vec![vec![0i64; n]; n];
        for j in 0..n {
            // back-substitute L x = e_j
            let mut x = vec![0i64; n];
            for i in (0..n).rev() {
                let mut v = if i == j { 1 } else { 0 };
                for k in i + 1..n {
                    v -= l[i][k] * x[k];
                }
                x[i] = v;
            }
            for i in 0..n {
                inv[i][j] = x[i];
            }
        }
        inv
    }

    /// Symmetrized intersection form `G = L + L^T`.
    pub fn gram_int(&self) -> Vec<Vec<i64>> {
        let n = self.rank();
        let mut g = vec![vec![0i64; n]; n];
        for i in 0..n {
            for j in 0..n {
                g[i][j] = self.seifert[i][j] + self.seifert[j][i];
            }
        }
        g
    }

    pub fn gram(&self) -> CMat {
        CMat::from_int(&self.gram_int())
    }

    /// Classical monodromy `sigma = -L^{-1} L^T`, exactly integral.
    pub fn monodromy_int(&self) -> Vec<Vec<i64>> {
        let n = self.rank();
        let inv = self.seifert_inverse();
        let mut m = vec![vec![0i64; n]; n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0i64;
                for k in 0..n {
                    s += inv[i][k] * self.seifert[j][k];
                }
                m[i][j] = -s;
            }
        }
        m
    }

    pub fn monodromy(&self) -> CMat {
        CMat::from_int(&self.monodromy_int())
    }

    /// Intersection pairing `(a|b) = a^T G b`.
    pub fn intersection(&self, a: &[i64], b: &[i64]) -> i64 {
        let g = self.gram_int();
        let n = self.rank();
        assert!(a.len() == n && b.len() == n);
        let mut s = 0i64;
        for i in 0..n {
            for j in 0..n {
                s += a[i] * g[i][j] * b[j];
            }
        }
        s
    }

    /// Seifert pairing in the normalization used by the locality checks:
    /// `a^T L b`, whose symmetrization is the intersection pairing.
    pub fn seifert_form(&self, a: &[i64], b: &[i64]) -> i64 {
        let n = self.rank();
        assert!(a.len() == n && b.len() == n);
        let mut s = 0i64;
        for i in 0..n {
            for j in 0..n {
                s += a[i] * self.seifert[i][j] * b[j];
            }
        }
        s
    }

    /// Seifert pairing carrying the suspension sign: `(-1)^ell a^T L b`.
    pub fn homology_seifert(&self, a: &[i64], b: &[i64]) -> i64 {
        let sign = if self.ell.rem_euclid(2) == 0 { 1 } else { -1 };
        sign * self.seifert_form(a, b)
    }

    /// True when `a` has the self-intersection of a vanishing class.
    pub fn is_vanishing(&self, a: &[i64]) -> bool {
        self.intersection(a, a) == 2
    }

    /// Reflection in a vanishing class: `x -> x - (x|alpha) alpha`.
    pub fn reflection(&self, alpha: &[i64]) -> Result<Vec<Vec<i64>>> {
        if !self.is_vanishing(alpha) {
            return Err(Error::Domain(format!(
                "reflection needs a vanishing class; self-pairing is {}",
                self.intersection(alpha, alpha)
            )));
        }
        let n = self.rank();
        let g = self.gram_int();
        let mut s = vec![vec![0i64; n]; n];
        for i in 0..n {
            for j in 0..n {
                let galpha_j: i64 = (0..n).map(|k| g[j][k] * alpha[k]).sum();
                s[i][j] = if i == j { 1 } else { 0 } - alpha[i] * galpha_j;
            }
        }
        Ok(s)
    }

    /// True when the Seifert matrix has the A-type bidiagonal shape.
    pub fn is_a_type(&self) -> bool {
        let n = self.rank();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j {
                    1
                } else if j == i + 1 {
                    -1
                } else {
                    0
                };
                if self.seifert[i][j] != want {
                    return false;
                }
            }
        }
        true
    }

    /// Coefficients of a class on the critical-point labels `r_0..r_mu` of
    /// an A-type singularity, where the basis class `e_i` is
    /// `[r_{i-1}] - [r_i]`.  The result always sums to zero, and the
    /// intersection form becomes the plain dot product in these
    /// coordinates.
    pub fn root_coefficients(&self, a: &[i64]) -> Result<Vec<i64>> {
        if !self.is_a_type() {
            return Err(Error::Domain(
                "critical-point coordinates exist only for A-type lattices".into(),
            ));
        }
        let n = self.rank();
        assert_eq!(a.len(), n);
        let mut c = vec![0i64; n + 1];
        c[0] = a[0];
        for j in 1..n {
            c[j] = a[j] - a[j - 1];
        }
        c[n] = -a[n - 1];
        Ok(c)
    }

    /// Check that the spectrum and the integral monodromy describe the
    /// same operator: the multiset `exp(-2 pi i s_j)` must match the
    /// eigenvalues of sigma.
    pub fn check_spectrum_consistency(&self) -> Result<()> {
        let sigma = self.monodromy();
        let eigs = sigma.eigenvalues()?;
        let clusters = cluster_roots(&eigs);
        let mut expected: Vec<C> = self
            .spectrum
            .iter()
            .map(|s| {
                let sf = *s.numer() as f64 / *s.denom() as f64;
                C::from_polar(1.0, -2.0 * std::f64::consts::PI * sf)
            })
            .collect();
        for (val, mult) in clusters {
            for _ in 0..mult {
                let pos = expected
                    .iter()
                    .position(|e| (e - val).norm() < 1e-6)
                    .ok_or_else(|| {
                        Error::Domain(format!(
                            "monodromy eigenvalue {val} does not match any \
                             spectral number exp(-2 pi i s)"
                        ))
                    })?;
                expected.swap_remove(pos);
            }
        }
        Ok(())
    }
}

/// Serialized form of a lattice (`lattice.v1`).
#[derive(Debug, Serialize, Deserialize)]
pub struct LatticeFile {
    pub schema: String,
    pub label: String,
    pub rank: usize,
    pub ell: i64,
    pub seifert: Vec<Vec<i64>>,
    pub spectrum: Vec<[i64; 2]>,
}

impl Lattice {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: LatticeFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if file.schema != "lattice.v1" {
            return Err(Error::Parse(format!(
                "unsupported schema `{}` (expected lattice.v1)",
                file.schema
            )));
        }
        if file.rank != file.seifert.len() {
            return Err(Error::Parse(format!(
                "rank field {} disagrees with Seifert matrix size {}",
                file.rank,
                file.seifert.len()
            )));
        }
        let mut spectrum = Vec::with_capacity(file.spectrum.len());
        for [num, den] in &file.spectrum {
            if *den <= 0 {
                return Err(Error::Parse(format!(
                    "spectrum entry {num}/{den} must have a positive denominator"
                )));
            }
            spectrum.push(Rational64::new(*num, *den));
        }
        Lattice::new(file.label, file.seifert, file.ell, spectrum)
    }

    pub fn to_json(&self) -> String {
        let file = LatticeFile {
            schema: "lattice.v1".into(),
            label: self.label.clone(),
            rank: self.rank(),
            ell: self.ell,
            seifert: self.seifert.clone(),
            spectrum: self
                .spectrum
                .iter()
                .map(|s| [*s.numer(), *s.denom()])
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("lattice serialization")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a2_monodromy_and_gram() {
        let lat = Lattice::a_type(2);
        assert_eq!(lat.monodromy_int(), vec![vec![0, -1], vec![1, -1]]);
        assert_eq!(lat.gram_int(), vec![vec![2, -1], vec![-1, 2]]);
        // sigma has order 3
        let s = lat.monodromy();
        assert!(s.pow(3).sub(&CMat::identity(2)).norm_max() < 1e-12);
    }

    #[test]
    fn a3_spectrum_and_consistency() {
        let lat = Lattice::a_type(3);
        assert_eq!(
            lat.spectrum(),
            &[
                Rational64::new(-3, 4),
                Rational64::new(-1, 2),
                Rational64::new(-1, 4)
            ]
        );
        assert!(lat.spectrum_in_window());
        lat.check_spectrum_consistency().unwrap();
        // sigma^4 = 1 but sigma^2 != 1
        let s = lat.monodromy();
        assert!(s.pow(4).sub(&CMat::identity(3)).norm_max() < 1e-12);
        assert!(s.pow(2).sub(&CMat::identity(3)).norm_max() > 0.5);
    }

    #[test]
    fn seifert_inverse_is_exact() {
        let lat = Lattice::a_type(3);
        let inv = lat.seifert_inverse();
        // L * L^{-1} = I in integer arithmetic
        let n = lat.rank();
        for i in 0..n {
            for j in 0..n {
                let mut s = 0i64;
                for k in 0..n {
                    s += lat.seifert()[i][k] * inv[k][j];
                }
                assert_eq!(s, if i == j { 1 } else { 0 });
            }
        }
    }

    #[test]
    fn reflection_is_involutive() {
        let lat = Lattice::a_type(2);
        let s = lat.reflection(&[1, 0]).unwrap();
        assert_eq!(s, vec![vec![-1, 1], vec![0, 1]]);
        let mut sq = vec![vec![0i64; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    sq[i][j] += s[i][k] * s[k][j];
                }
            }
        }
        assert_eq!(sq, vec![vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn vanishing_classes() {
        let lat = Lattice::a_type(2);
        assert!(lat.is_vanishing(&[1, 0]));
        assert!(lat.is_vanishing(&[1, 1]));
        assert!(!lat.is_vanishing(&[1, -1]));
        assert!(lat.reflection(&[1, -1]).is_err());
    }

    #[test]
    fn root_coordinates_carry_the_intersection_form() {
        let lat = Lattice::a_type(3);
        let pairs: [(Vec<i64>, Vec<i64>); 3] = [
            (vec![1, 0, 0], vec![0, 1, 0]),
            (vec![2, -1, 3], vec![1, 1, 1]),
            (vec![0, 1, -2], vec![3, 0, 1]),
        ];
        for (a, b) in &pairs {
            let ca = lat.root_coefficients(a).unwrap();
            let cb = lat.root_coefficients(b).unwrap();
            assert_eq!(ca.iter().sum::<i64>(), 0);
            let dot: i64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
            assert_eq!(dot, lat.intersection(a, b));
        }
    }

    #[test]
    fn json_round_trip() {
        let lat = Lattice::a_type(2);
        let text = lat.to_json();
        let back = Lattice::from_json(&text).unwrap();
        assert_eq!(lat, back);
    }

    #[test]
    fn rejects_bad_seifert() {
        assert!(Lattice::new("X", vec![vec![2]], 0, vec![Rational64::new(-1, 2)]).is_err());
        assert!(Lattice::new(
            "X",
            vec![vec![1, 0], vec![1, 1]],
            0,
            vec![Rational64::new(-1, 2), Rational64::new(-1, 2)]
        )
        .is_err());
    }

    #[test]
    fn homology_seifert_sign_tracks_ell() {
        let a1 = Lattice::a_type(1);
        assert_eq!(a1.seifert_form(&[1], &[1]), 1);
        assert_eq!(a1.homology_seifert(&[1], &[1]), 1);
        let odd = Lattice::new("odd", vec![vec![1]], 1, vec![Rational64::new(-1, 2)]).unwrap();
        assert_eq!(odd.homology_seifert(&[1], &[1]), -1);
    }

    #[test]
    fn seifert_symmetrizes_to_intersection() {
        let lat = Lattice::a_type(3);
        let a = [1i64, -2, 1];
        let b = [0i64, 1, 1];
        assert_eq!(
            lat.seifert_form(&a, &b) + lat.seifert_form(&b, &a),
            lat.intersection(&a, &b)
        );
    }
}

//! Finite weighted Dirac combs.

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trigpoly::{ExpansionMap, ExponentVector, FrequencyBasis, GenTrigPoly};

/// Scalar weight of an atom.
pub trait Weight: Copy + Debug + PartialEq + Send + Sync {
    fn nil() -> Self;
    fn is_nil(&self) -> bool;
    fn plus(self, other: Self) -> Self;
    fn times(self, other: Self) -> Self;
    fn conjugate(self) -> Self;
    fn scale(self, q: Rational64) -> Self;
    fn to_complex(self) -> Complex64;
    fn magnitude(self) -> f64 {
        self.to_complex().norm()
    }
}

impl Weight for Complex64 {
    fn nil() -> Self {
        Complex64::zero()
    }
    fn is_nil(&self) -> bool {
        self.re == 0.0 && self.im == 0.0
    }
    fn plus(self, other: Self) -> Self {
        self + other
    }
    fn times(self, other: Self) -> Self {
        self * other
    }
    fn conjugate(self) -> Self {
        Complex64::conj(&self)
    }
    fn scale(self, q: Rational64) -> Self {
        self * (*q.numer() as f64 / *q.denom() as f64)
    }
    fn to_complex(self) -> Complex64 {
        self
    }
}

impl Weight for Rational64 {
    fn nil() -> Self {
        Rational64::zero()
    }
    fn is_nil(&self) -> bool {
        Zero::is_zero(self)
    }
    fn plus(self, other: Self) -> Self {
        self + other
    }
    fn times(self, other: Self) -> Self {
        self * other
    }
    fn conjugate(self) -> Self {
        self
    }
    fn scale(self, q: Rational64) -> Self {
        self * q
    }
    fn to_complex(self) -> Complex64 {
        Complex64::new(*self.numer() as f64 / *self.denom() as f64, 0.0)
    }
}

/// Invertible linear map acting on positions.
#[derive(Clone, Debug)]
pub enum LinearMap {
    /// Rational `d×d` matrix mixing spatial coordinates.
    Rational(Vec<Vec<Rational64>>),
    /// Diagonal expansion with factors acting through the frequency basis.
    Expansion(ExpansionMap),
}

impl LinearMap {
    /// Integer scaling `x ↦ n x` in `d` dimensions.
    pub fn scalar(d: usize, n: i64) -> Self {
        LinearMap::Rational(
            (0..d)
                .map(|r| {
                    (0..d)
                        .map(|c| Rational64::from_integer(if r == c { n } else { 0 }))
                        .collect()
                })
                .collect(),
        )
    }

    fn dim(&self) -> usize {
        match self {
            LinearMap::Rational(m) => m.len(),
            LinearMap::Expansion(q) => q.dim(),
        }
    }

    fn check_invertible(&self) -> Result<()> {
        match self {
            LinearMap::Rational(m) => {
                if m.iter().any(|r| r.len() != m.len()) {
                    return Err(Error::InvalidParameter("linear map must be square".into()));
                }
                if rational_det(m).is_zero() {
                    return Err(Error::SingularMap);
                }
                Ok(())
            }
            LinearMap::Expansion(q) => {
                if q.det() == 0.0 {
                    Err(Error::SingularMap)
                } else {
                    Ok(())
                }
            }
        }
    }

    fn apply(&self, x: &ExponentVector, rank: usize) -> ExponentVector {
        match self {
            LinearMap::Rational(m) => x.mix_coordinates(m, rank),
            LinearMap::Expansion(q) => q.apply(x),
        }
    }
}

/// Determinant of a small rational matrix by Gaussian elimination.
pub fn rational_det(m: &[Vec<Rational64>]) -> Rational64 {
    let n = m.len();
    let mut a = m.to_vec();
    let mut det = Rational64::one();
    for col in 0..n {
        let Some(p) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return Rational64::zero();
        };
        if p != col {
            a.swap(p, col);
            det = -det;
        }
        det *= a[col][col];
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                let v = a[col][c];
                a[r][c] -= f * v;
            }
        }
    }
    det
}

/// Finite weighted point measure with exact positions.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracComb<W: Weight> {
    dim: usize,
    basis: Arc<FrequencyBasis>,
    atoms: BTreeMap<ExponentVector, W>,
}

impl<W: Weight> DiracComb<W> {
    pub fn empty(dim: usize, basis: Arc<FrequencyBasis>) -> Self {
        Self {
            dim,
            basis,
            atoms: BTreeMap::new(),
        }
    }

    /// Comb from (position, weight) pairs; repeated positions accumulate.
    pub fn from_atoms(
        dim: usize,
        basis: Arc<FrequencyBasis>,
        atoms: impl IntoIterator<Item = (ExponentVector, W)>,
    ) -> Self {
        let mut comb = Self::empty(dim, basis);
        for (x, w) in atoms {
            comb.insert(x, w);
        }
        comb
    }

    /// Comb on integer points of `ℤᵈ` (unit basis).
    pub fn integer(dim: usize, atoms: &[(&[i64], W)]) -> Self {
        Self::from_atoms(
            dim,
            Arc::new(FrequencyBasis::unit()),
            atoms
                .iter()
                .map(|(p, w)| (ExponentVector::from_integers(p), *w)),
        )
    }

    /// Adds `w` at position `x`, removing the atom if the weight cancels.
    pub fn insert(&mut self, x: ExponentVector, w: W) {
        assert_eq!(x.len(), self.dim * self.basis.rank(), "position length");
        let exact = self.basis.is_exact();
        let slot = self.atoms.entry(x.clone()).or_insert_with(W::nil);
        *slot = slot.plus(w);
        let cancelled = if exact {
            slot.is_nil()
        } else {
            slot.magnitude() < crate::trigpoly::FLOAT_DROP_TOL
        };
        if cancelled {
            self.atoms.remove(&x);
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &Arc<FrequencyBasis> {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&ExponentVector, &W)> {
        self.atoms.iter()
    }

    pub fn weight_at(&self, x: &ExponentVector) -> W {
        self.atoms.get(x).copied().unwrap_or_else(W::nil)
    }

    /// `Σ |w|`.
    pub fn total_variation(&self) -> f64 {
        self.atoms.values().map(|w| w.magnitude()).sum()
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        if self.basis != other.basis {
            return Err(Error::BasisMismatch);
        }
        Ok(())
    }

    pub fn convolve(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let mut acc: BTreeMap<ExponentVector, W> = BTreeMap::new();
        for (x, a) in &self.atoms {
            for (y, b) in &other.atoms {
                let slot = acc.entry(x.add(y)).or_insert_with(W::nil);
                *slot = slot.plus(a.times(*b));
            }
        }
        let exact = self.basis.is_exact();
        acc.retain(|_, w| {
            if exact {
                !w.is_nil()
            } else {
                w.magnitude() >= crate::trigpoly::FLOAT_DROP_TOL
            }
        });
        Ok(Self {
            dim: self.dim,
            basis: self.basis.clone(),
            atoms: acc,
        })
    }

    /// `x ↦ -x` with conjugated weights.
    pub fn flip(&self) -> Self {
        Self {
            dim: self.dim,
            basis: self.basis.clone(),
            atoms: self.atoms.iter().map(|(x, w)| (x.neg(), w.conjugate())).collect(),
        }
    }

    pub fn scale(&self, q: Rational64) -> Self {
        Self::from_atoms(
            self.dim,
            self.basis.clone(),
            self.atoms.iter().map(|(x, w)| (x.clone(), w.scale(q))),
        )
    }

    /// Moves every atom from `x` to `f(x)`.
    pub fn pushforward(&self, f: &LinearMap) -> Result<Self> {
        if f.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: f.dim(),
            });
        }
        f.check_invertible()?;
        if let LinearMap::Expansion(q) = f {
            for factor in q.factors() {
                if self.basis.multiplier(factor.name())? != *factor {
                    return Err(Error::BasisNotClosed(factor.name().to_string()));
                }
            }
        }
        let rank = self.basis.rank();
        Ok(Self {
            dim: self.dim,
            basis: self.basis.clone(),
            atoms: self
                .atoms
                .iter()
                .map(|(x, w)| (f.apply(x, rank), *w))
                .collect(),
        })
    }

    /// `k ↦ Σ w_x e^{-2πi⟨k|x⟩}`.
    pub fn fourier_polynomial(&self) -> GenTrigPoly {
        GenTrigPoly::from_terms(
            self.dim,
            self.basis.clone(),
            self.atoms
                .iter()
                .map(|(x, w)| (x.neg(), w.to_complex()))
                .collect(),
        )
    }

    /// Real coordinates of every atom.
    pub fn real_points(&self) -> Vec<(Vec<f64>, Complex64)> {
        self.atoms
            .iter()
            .map(|(x, w)| (x.real_values(&self.basis), w.to_complex()))
            .collect()
    }

    pub fn to_complex(&self) -> DiracComb<Complex64> {
        DiracComb {
            dim: self.dim,
            basis: self.basis.clone(),
            atoms: self
                .atoms
                .iter()
                .map(|(x, w)| (x.clone(), w.to_complex()))
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let rank = self.basis.rank();
        let file = CombFile {
            dimension: self.dim,
            atoms: self
                .atoms
                .iter()
                .map(|(x, w)| {
                    let c = w.to_complex();
                    AtomFile {
                        point: x.real_values(&self.basis),
                        coeffs: (rank > 1 || !x.is_integral()).then(|| {
                            (0..x.len())
                                .map(|i| {
                                    let q = x.coeff(i);
                                    [*q.numer(), *q.denom()]
                                })
                                .collect()
                        }),
                        weight: [c.re, c.im],
                    }
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("comb serialises")
    }
}

impl DiracComb<Complex64> {
    /// Reads a comb. Atoms carrying exact `coeffs` need `basis`; otherwise
    /// float points are placed on an ad-hoc basis.
    pub fn from_json(text: &str, basis: Option<Arc<FrequencyBasis>>) -> Result<Self> {
        let file: CombFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        let d = file.dimension;
        if file.atoms.iter().any(|a| a.point.len() != d) {
            return Err(Error::Schema("point length differs from dimension".into()));
        }
        let exact = file.atoms.iter().all(|a| a.coeffs.is_some());
        if exact && !file.atoms.is_empty() {
            let basis = basis.unwrap_or_else(|| Arc::new(FrequencyBasis::unit()));
            let atoms = file
                .atoms
                .iter()
                .map(|a| {
                    let coeffs = a.coeffs.as_ref().expect("checked");
                    if coeffs.len() != d * basis.rank() || coeffs.iter().any(|c| c[1] == 0) {
                        return Err(Error::Schema("bad exact coordinates".into()));
                    }
                    let v: Vec<Rational64> =
                        coeffs.iter().map(|c| Rational64::new(c[0], c[1])).collect();
                    Ok((
                        ExponentVector::from_rationals(&v),
                        Complex64::new(a.weight[0], a.weight[1]),
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(Self::from_atoms(d, basis, atoms));
        }
        let values: Vec<f64> = file.atoms.iter().flat_map(|a| a.point.clone()).collect();
        let (basis, coeffs) = FrequencyBasis::adhoc(&values);
        let mut it = coeffs.into_iter();
        let atoms: Vec<_> = file
            .atoms
            .iter()
            .map(|a| {
                let flat: Vec<i64> = (0..d).flat_map(|_| it.next().expect("coefficients")).collect();
                (
                    ExponentVector::from_integers(&flat),
                    Complex64::new(a.weight[0], a.weight[1]),
                )
            })
            .collect();
        Ok(Self::from_atoms(d, Arc::new(basis), atoms))
    }
}

#[derive(Serialize, Deserialize)]
struct CombFile {
    dimension: usize,
    atoms: Vec<AtomFile>,
}

#[derive(Serialize, Deserialize)]
struct AtomFile {
    point: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    coeffs: Option<Vec<[i64; 2]>>,
    weight: [f64; 2],
}

/// `Σ_{ℓ=0}^{M-1} δ_ℓ` on `ℤ` with rational weights.
pub fn unit_comb(m: i64) -> DiracComb<Rational64> {
    DiracComb::from_atoms(
        1,
        Arc::new(FrequencyBasis::unit()),
        (0..m).map(|l| (ExponentVector::from_integers(&[l]), Rational64::one())),
    )
}

/// `(μ ∗ flip μ) / M` for `μ = Σ_{ℓ<M} δ_ℓ`: weights `(M-|ℓ|)/M`.
pub fn fejer_comb(m: i64) -> DiracComb<Rational64> {
    let mu = unit_comb(m);
    mu.convolve(&mu.flip())
        .expect("same basis")
        .scale(Rational64::new(1, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational64 {
        Rational64::new(n, d)
    }

    #[test]
    fn convolution_examples() {
        let mu = unit_comb(2);
        let sq = mu.convolve(&mu).unwrap();
        let expect = DiracComb::integer(1, &[(&[0], r(1, 1)), (&[1], r(2, 1)), (&[2], r(1, 1))]);
        assert_eq!(sq, expect);

        assert_eq!(
            fejer_comb(2),
            DiracComb::integer(1, &[(&[0], r(1, 1)), (&[1], r(1, 2)), (&[-1], r(1, 2))])
        );
        assert_eq!(
            fejer_comb(3),
            DiracComb::integer(
                1,
                &[
                    (&[0], r(1, 1)),
                    (&[1], r(2, 3)),
                    (&[-1], r(2, 3)),
                    (&[2], r(1, 3)),
                    (&[-2], r(1, 3)),
                ]
            )
        );
    }

    #[test]
    fn pushforward_examples() {
        let d1 = DiracComb::integer(1, &[(&[1], r(1, 1))]);
        let two = LinearMap::scalar(1, 2);
        assert_eq!(
            d1.pushforward(&two).unwrap(),
            DiracComb::integer(1, &[(&[2], r(1, 1))])
        );
        // μ ∗ f.μ ∗ f².μ = Σ_{ℓ<8} δ_ℓ
        let mu = unit_comb(2);
        let mut acc = mu.clone();
        let mut cur = mu.clone();
        for _ in 1..3 {
            cur = cur.pushforward(&two).unwrap();
            acc = acc.convolve(&cur).unwrap();
        }
        assert_eq!(acc, unit_comb(8));
        assert!(matches!(
            d1.pushforward(&LinearMap::scalar(1, 0)),
            Err(Error::SingularMap)
        ));
    }

    #[test]
    fn flip_and_fourier() {
        let d1 = DiracComb::integer(1, &[(&[1], r(1, 1))]);
        assert_eq!(d1.flip(), DiracComb::integer(1, &[(&[-1], r(1, 1))]));
        let nu = fejer_comb(2);
        assert_eq!(nu.flip(), nu);
        for i in 0..50 {
            let k = i as f64 * 0.0371 - 0.4;
            let v = nu.fourier_polynomial().evaluate(&[k]).unwrap();
            assert!((v - Complex64::new(1.0 + (std::f64::consts::TAU * k).cos(), 0.0)).norm() < 1e-14);
        }
        let p = unit_comb(2).fourier_polynomial();
        let z = p.evaluate(&[0.3]).unwrap();
        let expect = Complex64::new(1.0, 0.0) + Complex64::cis(-std::f64::consts::TAU * 0.3);
        assert!((z - expect).norm() < 1e-14);
        let nu3 = fejer_comb(3).fourier_polynomial();
        assert!((nu3.evaluate(&[0.0]).unwrap() - Complex64::new(3.0, 0.0)).norm() < 1e-14);
        for i in 0..20 {
            let k = 0.05 * i as f64;
            let direct: f64 = 1.0
                + 2.0
                    * (1..3)
                        .map(|l| (3 - l) as f64 / 3.0 * (std::f64::consts::TAU * l as f64 * k).cos())
                        .sum::<f64>();
            assert!((nu3.evaluate(&[k]).unwrap().re - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn json_roundtrip() {
        let c = fejer_comb(3).to_complex();
        let back = DiracComb::from_json(&c.to_json(), None).unwrap();
        assert_eq!(back.len(), 5);
        for ((x, w), (y, v)) in c.real_points().iter().zip(back.real_points()) {
            assert_eq!(x, &y);
            assert!((w - v).norm() < 1e-15);
        }
    }

    #[test]
    fn expansive_pushforward_clears_ball() {
        let mu = DiracComb::integer(1, &[(&[0], r(1, 1)), (&[1], r(1, 1)), (&[-2], r(1, 1))]);
        let mut cur = mu;
        let f = LinearMap::scalar(1, 3);
        for _ in 0..3 {
            cur = cur.pushforward(&f).unwrap();
        }
        let radius = 3.0 * 2.0;
        for (x, _) in cur.real_points() {
            assert!(x[0] == 0.0 || x[0].abs() > radius);
        }
    }

    fn arb_comb() -> impl Strategy<Value = DiracComb<Rational64>> {
        prop::collection::vec((-5i64..6, -4i64..5, 1i64..4), 1..6).prop_map(|v| {
            DiracComb::from_atoms(
                1,
                Arc::new(FrequencyBasis::unit()),
                v.into_iter()
                    .map(|(x, n, d)| (ExponentVector::from_integers(&[x]), Rational64::new(n, d))),
            )
        })
    }

    proptest! {
        #[test]
        fn convolution_laws(a in arb_comb(), b in arb_comb(), c in arb_comb(), n in 2i64..4) {
            prop_assert_eq!(a.convolve(&b).unwrap(), b.convolve(&a).unwrap());
            prop_assert_eq!(
                a.convolve(&b).unwrap().convolve(&c).unwrap(),
                a.convolve(&b.convolve(&c).unwrap()).unwrap()
            );
            prop_assert_eq!(a.flip().flip(), a.clone());
            let f = LinearMap::scalar(1, n);
            prop_assert_eq!(
                a.convolve(&b).unwrap().pushforward(&f).unwrap(),
                a.pushforward(&f).unwrap().convolve(&b.pushforward(&f).unwrap()).unwrap()
            );
            prop_assert!(a.convolve(&b).unwrap().total_variation()
                <= a.total_variation() * b.total_variation() + 1e-12);
            let k = 0.123;
            let lhs = a.flip().fourier_polynomial().evaluate(&[k]).unwrap();
            let rhs = a.fourier_polynomial().evaluate(&[k]).unwrap().conj();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}

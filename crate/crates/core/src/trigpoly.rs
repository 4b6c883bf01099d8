//! Generalised trigonometric polynomials.
//!
//! A [`GenTrigPoly`] is a finite sum `Σ c_a exp(2πi⟨a|k⟩)` whose exponents
//! `a` live in a finitely generated frequency module: every coordinate of an
//! exponent is a rational combination of the generators of a
//! [`FrequencyBasis`]. Exponent arithmetic is exact, so products and the
//! action of an expansion map never merge terms by floating-point accident.
//!
//! Exponents are stored flattened: coordinate `j` of a `d`-dimensional
//! exponent over a basis with `m` generators occupies slots `j*m .. (j+1)*m`.

use std::cmp::Ordering;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use num_integer::Integer;
use num_rational::Rational64;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};

/// Maximum number of terms a symbolic product may produce.
pub const TERM_CAP: usize = 1_000_000;

/// Merge tolerance used when building ad-hoc bases from float exponents.
pub const FLOAT_MERGE_TOL: f64 = 1e-9;

/// Coefficients below this magnitude are dropped for inexact bases.
pub const FLOAT_DROP_TOL: f64 = 1e-14;

const TAU: f64 = std::f64::consts::TAU;

/// Exact action of a scaling factor `α` on coefficient vectors:
/// `α·(c·g) = (A c)·g`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    name: String,
    value: f64,
    rank: usize,
    /// Row-major numerators over the common denominator `den`.
    num: Vec<i64>,
    den: i64,
}

impl Multiplier {
    fn from_rows(name: &str, rows: &[Vec<Rational64>], generators: &[f64]) -> Result<Self> {
        let m = generators.len();
        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidBasis(format!(
                "multiplier `{name}` must be a {m}x{m} matrix"
            )));
        }
        let den = rows
            .iter()
            .flatten()
            .fold(1i64, |acc, q| acc.lcm(q.denom()));
        let num = rows
            .iter()
            .flatten()
            .map(|q| q.numer() * (den / q.denom()))
            .collect::<Vec<_>>();
        // α = α·g_0 with g_0 = 1, i.e. column 0 of A dotted with g.
        let value = (0..m)
            .map(|s| num[s * m] as f64 / den as f64 * generators[s])
            .sum();
        Ok(Self {
            name: name.to_string(),
            value,
            rank: m,
            num,
            den,
        })
    }

    fn scalar(name: &str, factor: i64, rank: usize) -> Self {
        let mut num = vec![0; rank * rank];
        for r in 0..rank {
            num[r * rank + r] = factor;
        }
        Self {
            name: name.to_string(),
            value: factor as f64,
            rank,
            num,
            den: 1,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Real value of the scaling factor.
    pub fn value(&self) -> f64 {
        self.value
    }

    pub fn is_integral(&self) -> bool {
        self.den == 1
    }

    /// Entry `(row, col)` of the matrix.
    pub fn entry(&self, row: usize, col: usize) -> Rational64 {
        Rational64::new(self.num[row * self.rank + col], self.den)
    }

    pub fn rows(&self) -> Vec<Vec<Rational64>> {
        (0..self.rank)
            .map(|r| (0..self.rank).map(|c| self.entry(r, c)).collect())
            .collect()
    }

    /// Integer matrix entries; `None` if the matrix is not integral.
    pub fn integer_entries(&self) -> Option<&[i64]> {
        self.is_integral().then_some(self.num.as_slice())
    }

    /// Rational inverse, acting as multiplication by `1/α`.
    pub fn inverse(&self) -> Result<Multiplier> {
        let m = self.rank;
        let mut a: Vec<Vec<Rational64>> = self.rows();
        let mut inv: Vec<Vec<Rational64>> = (0..m)
            .map(|r| {
                (0..m)
                    .map(|c| Rational64::from_integer((r == c) as i64))
                    .collect()
            })
            .collect();
        for col in 0..m {
            let pivot = (col..m)
                .find(|&r| *a[r][col].numer() != 0)
                .ok_or(Error::SingularMap)?;
            a.swap(col, pivot);
            inv.swap(col, pivot);
            let p = a[col][col];
            for c in 0..m {
                a[col][c] /= p;
                inv[col][c] /= p;
            }
            for r in 0..m {
                if r != col && *a[r][col].numer() != 0 {
                    let f = a[r][col];
                    for c in 0..m {
                        let (ac, ic) = (a[col][c], inv[col][c]);
                        a[r][c] -= f * ac;
                        inv[r][c] -= f * ic;
                    }
                }
            }
        }
        let den = inv.iter().flatten().fold(1i64, |acc, q| acc.lcm(q.denom()));
        Ok(Multiplier {
            name: format!("1/{}", self.name),
            value: 1.0 / self.value,
            rank: m,
            num: inv
                .iter()
                .flatten()
                .map(|q| q.numer() * (den / q.denom()))
                .collect(),
            den,
        })
    }

    /// Applies `A` to a coefficient block with denominator `den`, writing
    /// numerators over the denominator `den * self.den` into `out`.
    fn apply_block(&self, block: &[i64], out: &mut [i64]) {
        let m = self.rank;
        for (r, o) in out.iter_mut().enumerate().take(m) {
            *o = (0..m).map(|c| self.num[r * m + c] * block[c]).sum();
        }
    }
}

/// Ordered generators of a real frequency module; generator 0 is exactly 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyBasis {
    names: Vec<String>,
    values: Vec<f64>,
    minpolys: Vec<Option<Vec<i64>>>,
    multipliers: Vec<Multiplier>,
    exact: bool,
    independent: bool,
}

impl FrequencyBasis {
    /// The basis `(1)`: ordinary periodic trigonometric polynomials.
    pub fn unit() -> Self {
        Self {
            names: vec!["1".into()],
            values: vec![1.0],
            minpolys: vec![Some(vec![-1, 1])],
            multipliers: Vec::new(),
            exact: true,
            independent: true,
        }
    }

    /// Basis with the given generator values. The first value must be 1.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.first() != Some(&1.0) {
            return Err(Error::InvalidBasis("generator 0 must equal 1".into()));
        }
        if values.iter().any(|v| !v.is_finite() || *v == 0.0) {
            return Err(Error::InvalidBasis(
                "generators must be finite and nonzero".into(),
            ));
        }
        let names = (0..values.len())
            .map(|i| if i == 0 { "1".to_string() } else { format!("g{i}") })
            .collect();
        Ok(Self {
            names,
            minpolys: vec![None; values.len()],
            values,
            multipliers: Vec::new(),
            exact: true,
            independent: true,
        })
    }

    /// Builds an ad-hoc basis from float values, merging values that differ
    /// by an integer or a small integer multiple of an existing generator
    /// within [`FLOAT_MERGE_TOL`]. Returns the basis and the coefficient
    /// vector of every input value. The basis is flagged inexact.
    pub fn adhoc(values: &[f64]) -> (Self, Vec<Vec<i64>>) {
        let mut gens: Vec<f64> = vec![1.0];
        let mut raw: Vec<(usize, i64, i64)> = Vec::with_capacity(values.len());
        'outer: for &v in values {
            if (v - v.round()).abs() < FLOAT_MERGE_TOL {
                raw.push((0, 0, v.round() as i64));
                continue;
            }
            for (r, &g) in gens.iter().enumerate().skip(1) {
                for s in (-3i64..=3).filter(|s| *s != 0) {
                    let rest = v - s as f64 * g;
                    if (rest - rest.round()).abs() < FLOAT_MERGE_TOL {
                        raw.push((r, s, rest.round() as i64));
                        continue 'outer;
                    }
                }
            }
            gens.push(v);
            raw.push((gens.len() - 1, 1, 0));
        }
        let m = gens.len();
        let coeffs = raw
            .into_iter()
            .map(|(r, s, int)| {
                let mut c = vec![0; m];
                c[0] += int;
                if r > 0 {
                    c[r] += s;
                }
                c
            })
            .collect();
        let mut basis = Self::new(gens).expect("adhoc generators are valid");
        basis.exact = false;
        basis.independent = false;
        (basis, coeffs)
    }

    pub fn with_names(mut self, names: &[&str]) -> Self {
        for (slot, n) in self.names.iter_mut().zip(names) {
            *slot = (*n).to_string();
        }
        self
    }

    /// Records the minimal polynomial (coefficients low to high) of a generator.
    pub fn with_minpoly(mut self, generator: usize, poly: Vec<i64>) -> Self {
        self.minpolys[generator] = Some(poly);
        self
    }

    pub fn with_independent(mut self, independent: bool) -> Self {
        self.independent = independent;
        self
    }

    /// Registers the exact action of a scaling factor, verifying it numerically
    /// on random integer coefficient vectors.
    pub fn register(&mut self, name: &str, rows: &[Vec<Rational64>]) -> Result<()> {
        let mult = Multiplier::from_rows(name, rows, &self.values)?;
        let m = self.rank();
        let mut state = 0x9e37_79b9_7f4a_7c15u64;
        for _ in 0..16 {
            let c: Vec<i64> = (0..m)
                .map(|_| {
                    state ^= state << 13;
                    state ^= state >> 7;
                    state ^= state << 17;
                    (state % 21) as i64 - 10
                })
                .collect();
            let lhs = mult.value * self.dot(&c, 1);
            let mut out = vec![0; m];
            mult.apply_block(&c, &mut out);
            let rhs = self.dot(&out, mult.den);
            if (lhs - rhs).abs() >= 1e-12 * (1.0 + lhs.abs()) {
                return Err(Error::InvalidBasis(format!(
                    "multiplier `{name}` is not an exact module action ({lhs} vs {rhs})"
                )));
            }
        }
        self.multipliers.retain(|x| x.name != name);
        self.multipliers.push(mult);
        Ok(())
    }

    fn dot(&self, c: &[i64], den: i64) -> f64 {
        c.iter()
            .zip(&self.values)
            .map(|(&a, g)| a as f64 * g)
            .sum::<f64>()
            / den as f64
    }

    /// Number of generators.
    pub fn rank(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn minpoly(&self, generator: usize) -> Option<&[i64]> {
        self.minpolys[generator].as_deref()
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn is_independent(&self) -> bool {
        self.independent
    }

    pub fn registered(&self) -> &[Multiplier] {
        &self.multipliers
    }

    /// Multiplier for `name`; integer names act as scalar multiples of the identity.
    pub fn multiplier(&self, name: &str) -> Result<Multiplier> {
        if let Some(m) = self.multipliers.iter().find(|m| m.name == name) {
            return Ok(m.clone());
        }
        match name.trim().parse::<i64>() {
            Ok(n) if n != 0 => Ok(Multiplier::scalar(name, n, self.rank())),
            _ => Err(Error::BasisNotClosed(name.to_string())),
        }
    }

    /// Real value of a coefficient vector.
    pub fn value_of(&self, coeffs: &[Rational64]) -> f64 {
        coeffs
            .iter()
            .zip(&self.values)
            .map(|(q, g)| *q.numer() as f64 / *q.denom() as f64 * g)
            .sum()
    }
}

/// Diagonal expansion map `Q = diag(α_1, …, α_d)` whose factors are
/// registered multipliers of a basis.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionMap {
    factors: Vec<Multiplier>,
}

impl ExpansionMap {
    pub fn new(basis: &FrequencyBasis, factors: &[&str]) -> Result<Self> {
        let factors = factors
            .iter()
            .map(|f| basis.multiplier(f))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { factors })
    }

    pub fn dim(&self) -> usize {
        self.factors.len()
    }

    pub fn factors(&self) -> &[Multiplier] {
        &self.factors
    }

    pub fn factor_names(&self) -> Vec<String> {
        self.factors.iter().map(|f| f.name.clone()).collect()
    }

    /// Diagonal entries as reals.
    pub fn diagonal(&self) -> Vec<f64> {
        self.factors.iter().map(|f| f.value).collect()
    }

    pub fn det(&self) -> f64 {
        self.factors.iter().map(|f| f.value).product()
    }

    /// Smallest expansion factor in modulus.
    pub fn min_factor(&self) -> f64 {
        self.factors
            .iter()
            .map(|f| f.value.abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn is_integral(&self) -> bool {
        self.factors.iter().all(Multiplier::is_integral)
    }

    /// The inverse map `Q⁻¹`.
    pub fn inverse(&self) -> Result<ExpansionMap> {
        Ok(Self {
            factors: self
                .factors
                .iter()
                .map(Multiplier::inverse)
                .collect::<Result<_>>()?,
        })
    }

    /// Applies `Q` to a point (or exponent) exactly.
    pub fn apply(&self, v: &ExponentVector) -> ExponentVector {
        let m = self.factors.first().map_or(1, |f| f.rank);
        debug_assert_eq!(v.len(), m * self.dim());
        let mut num: SmallVec<[i64; 4]> = SmallVec::from_elem(0, v.len());
        let den_q = self
            .factors
            .iter()
            .fold(1i64, |acc, f| acc.lcm(&f.den));
        for (j, f) in self.factors.iter().enumerate() {
            let block = &v.num[j * m..(j + 1) * m];
            f.apply_block(block, &mut num[j * m..(j + 1) * m]);
            let lift = den_q / f.den;
            for x in &mut num[j * m..(j + 1) * m] {
                *x *= lift;
            }
        }
        ExponentVector::from_parts(num, v.den * den_q)
    }
}

/// Exact rational exponent (or position) over a frequency basis, flattened
/// across spatial coordinates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ExponentVector {
    num: SmallVec<[i64; 4]>,
    den: i64,
}

impl ExponentVector {
    pub fn zero(len: usize) -> Self {
        Self {
            num: SmallVec::from_elem(0, len),
            den: 1,
        }
    }

    pub fn from_integers(v: &[i64]) -> Self {
        Self {
            num: SmallVec::from_slice(v),
            den: 1,
        }
    }

    pub fn from_rationals(v: &[Rational64]) -> Self {
        let den = v.iter().fold(1i64, |acc, q| acc.lcm(q.denom()));
        let num = v.iter().map(|q| q.numer() * (den / q.denom())).collect();
        Self::from_parts(num, den)
    }

    /// Builds from numerators and a common denominator, then canonicalises.
    pub fn from_parts(num: SmallVec<[i64; 4]>, den: i64) -> Self {
        assert!(den != 0, "zero denominator");
        let mut v = Self { num, den };
        v.canonicalize();
        v
    }

    fn canonicalize(&mut self) {
        if self.den < 0 {
            self.den = -self.den;
            self.num.iter_mut().for_each(|x| *x = -*x);
        }
        if self.den == 1 {
            return;
        }
        let g = self.num.iter().fold(self.den, |acc, x| acc.gcd(x));
        if g > 1 {
            self.den /= g;
            self.num.iter_mut().for_each(|x| *x /= g);
        }
        if self.num.iter().all(|x| *x == 0) {
            self.den = 1;
        }
    }

    pub fn len(&self) -> usize {
        self.num.len()
    }

    pub fn is_empty(&self) -> bool {
        self.num.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|x| *x == 0)
    }

    pub fn is_integral(&self) -> bool {
        self.den == 1
    }

    pub fn numerators(&self) -> &[i64] {
        &self.num
    }

    pub fn denominator(&self) -> i64 {
        self.den
    }

    pub fn coeff(&self, idx: usize) -> Rational64 {
        Rational64::new(self.num[idx], self.den)
    }

    /// Rational coefficient vector of spatial coordinate `j`.
    pub fn coordinate(&self, j: usize, rank: usize) -> Vec<Rational64> {
        (j * rank..(j + 1) * rank).map(|i| self.coeff(i)).collect()
    }

    /// Real value of every spatial coordinate.
    pub fn real_values(&self, basis: &FrequencyBasis) -> Vec<f64> {
        let m = basis.rank();
        self.num
            .chunks(m)
            .map(|c| {
                c.iter()
                    .zip(basis.values())
                    .map(|(&a, g)| a as f64 * g)
                    .sum::<f64>()
                    / self.den as f64
            })
            .collect()
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.len(), other.len());
        if self.den == other.den {
            let num = self.num.iter().zip(&other.num).map(|(a, b)| a + b).collect();
            let mut v = Self { num, den: self.den };
            if v.den != 1 {
                v.canonicalize();
            }
            return v;
        }
        let den = self.den.lcm(&other.den);
        let (fa, fb) = (den / self.den, den / other.den);
        let num = self
            .num
            .iter()
            .zip(&other.num)
            .map(|(a, b)| a * fa + b * fb)
            .collect();
        Self::from_parts(num, den)
    }

    pub fn neg(&self) -> Self {
        Self {
            num: self.num.iter().map(|x| -x).collect(),
            den: self.den,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    /// Applies an integer/rational matrix `f` (d×d) that mixes spatial
    /// coordinates: `x'_j = Σ_l f_jl x_l`.
    pub fn mix_coordinates(&self, f: &[Vec<Rational64>], rank: usize) -> Self {
        let d = f.len();
        let mut out = vec![Rational64::from_integer(0); d * rank];
        for j in 0..d {
            for l in 0..d {
                let a = f[j][l];
                if *a.numer() == 0 {
                    continue;
                }
                for r in 0..rank {
                    out[j * rank + r] += a * self.coeff(l * rank + r);
                }
            }
        }
        Self::from_rationals(&out)
    }

    /// Sup norm of the real coordinates.
    pub fn sup_norm(&self, basis: &FrequencyBasis) -> f64 {
        self.real_values(basis)
            .into_iter()
            .fold(0.0, |a, x| a.max(x.abs()))
    }
}

impl fmt::Display for ExponentVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.num.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            if self.den == 1 {
                write!(f, "{x}")?;
            } else {
                write!(f, "{}", Rational64::new(*x, self.den))?;
            }
        }
        write!(f, ")")
    }
}

fn same_basis(a: &Arc<FrequencyBasis>, b: &Arc<FrequencyBasis>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Finite sum `Σ c_a exp(2πi⟨a|k⟩)` with exponents in a frequency module.
#[derive(Clone, Debug)]
pub struct GenTrigPoly {
    dim: usize,
    basis: Arc<FrequencyBasis>,
    terms: Vec<(ExponentVector, Complex64)>,
}

impl GenTrigPoly {
    pub fn zero(dim: usize, basis: Arc<FrequencyBasis>) -> Self {
        Self {
            dim,
            basis,
            terms: Vec::new(),
        }
    }

    pub fn constant(dim: usize, basis: Arc<FrequencyBasis>, c: Complex64) -> Self {
        let len = dim * basis.rank();
        Self::from_terms(dim, basis, vec![(ExponentVector::zero(len), c)])
    }

    pub fn monomial(
        dim: usize,
        basis: Arc<FrequencyBasis>,
        exponent: ExponentVector,
        c: Complex64,
    ) -> Self {
        Self::from_terms(dim, basis, vec![(exponent, c)])
    }

    /// Polynomial in integer exponents over the unit basis, e.g.
    /// `from_integer_terms(2, &[(&[1, 0], 1.0)])` for `x`.
    pub fn from_integer_terms(dim: usize, terms: &[(&[i64], f64)]) -> Self {
        let basis = Arc::new(FrequencyBasis::unit());
        Self::from_terms(
            dim,
            basis,
            terms
                .iter()
                .map(|(e, c)| (ExponentVector::from_integers(e), Complex64::new(*c, 0.0)))
                .collect(),
        )
    }

    /// Canonicalises an arbitrary term list: sorts, merges equal exponents
    /// and drops zero coefficients.
    pub fn from_terms(
        dim: usize,
        basis: Arc<FrequencyBasis>,
        mut terms: Vec<(ExponentVector, Complex64)>,
    ) -> Self {
        let len = dim * basis.rank();
        assert!(
            terms.iter().all(|(e, _)| e.len() == len),
            "exponent length must be dim * rank = {len}"
        );
        terms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(ExponentVector, Complex64)> = Vec::with_capacity(terms.len());
        for (e, c) in terms {
            match merged.last_mut() {
                Some((le, lc)) if *le == e => *lc += c,
                _ => merged.push((e, c)),
            }
        }
        let exact = basis.is_exact();
        merged.retain(|(_, c)| keep(*c, exact));
        Self {
            dim,
            basis,
            terms: merged,
        }
    }

    /// Builds a polynomial from float exponents via an ad-hoc basis.
    pub fn from_float_terms(dim: usize, terms: &[(Vec<f64>, Complex64)]) -> Self {
        let values: Vec<f64> = terms.iter().flat_map(|(e, _)| e.iter().copied()).collect();
        let (basis, coeffs) = FrequencyBasis::adhoc(&values);
        let m = basis.rank();
        let mut it = coeffs.into_iter();
        let out = terms
            .iter()
            .map(|(_, c)| {
                let mut flat = Vec::with_capacity(dim * m);
                for _ in 0..dim {
                    flat.extend(it.next().expect("one coefficient vector per value"));
                }
                (ExponentVector::from_integers(&flat), *c)
            })
            .collect();
        Self::from_terms(dim, Arc::new(basis), out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis(&self) -> &Arc<FrequencyBasis> {
        &self.basis
    }

    pub fn terms(&self) -> &[(ExponentVector, Complex64)] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Coefficient of the given exponent (zero if absent).
    pub fn coefficient(&self, exponent: &ExponentVector) -> Complex64 {
        self.terms
            .binary_search_by(|(e, _)| e.cmp(exponent))
            .map(|i| self.terms[i].1)
            .unwrap_or_default()
    }

    /// Constant (mean) term.
    pub fn constant_term(&self) -> Complex64 {
        self.coefficient(&ExponentVector::zero(self.dim * self.basis.rank()))
    }

    /// `Σ |c_a|`, an upper bound for `|p(k)|`.
    pub fn l1_norm(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.norm()).sum()
    }

    /// `Σ |c_a|²`, the mean of `|p|²` when generators are independent.
    pub fn l2_norm_sqr(&self) -> f64 {
        self.terms.iter().map(|(_, c)| c.norm_sqr()).sum()
    }

    pub fn is_integral(&self) -> bool {
        self.terms.iter().all(|(e, _)| e.is_integral())
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        if !same_basis(&self.basis, &other.basis) {
            return Err(Error::BasisMismatch);
        }
        Ok(())
    }

    /// `p(k)` for a real `d`-vector `k`.
    pub fn evaluate(&self, k: &[f64]) -> Result<Complex64> {
        if k.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: k.len(),
            });
        }
        let m = self.basis.rank();
        let lifted: Vec<f64> = k
            .iter()
            .flat_map(|kj| self.basis.values().iter().map(move |g| kj * g))
            .collect();
        debug_assert_eq!(lifted.len(), self.dim * m);
        Ok(self.evaluate_lifted(&lifted))
    }

    /// Evaluates at lifted coordinates `u_{j,r} = g_r k_j` (flattened).
    pub fn evaluate_lifted(&self, u: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let s: f64 = e.num.iter().zip(u).map(|(&a, x)| a as f64 * x).sum();
                c * Complex64::cis(TAU * s / e.den as f64)
            })
            .sum()
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::from_terms(
            self.dim,
            self.basis.clone(),
            self.terms.iter().map(|(e, c)| (e.clone(), c * s)).collect(),
        )
    }

    /// Exact product, capped at [`TERM_CAP`] terms.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let (a, b) = if self.len() >= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        if a.is_empty() || b.is_empty() {
            return Ok(Self::zero(self.dim, self.basis.clone()));
        }
        const CHUNK: usize = 256;
        let accumulate = |chunk: &[(ExponentVector, Complex64)]| {
            let mut map: FxHashMap<ExponentVector, Complex64> = FxHashMap::default();
            map.reserve(chunk.len() * b.len() / 2);
            for (ea, ca) in chunk {
                for (eb, cb) in &b.terms {
                    *map.entry(ea.add(eb)).or_default() += ca * cb;
                }
            }
            map
        };
        let partials: Vec<FxHashMap<ExponentVector, Complex64>> =
            if a.len().saturating_mul(b.len()) > 50_000 {
                a.terms.par_chunks(CHUNK).map(accumulate).collect()
            } else {
                a.terms.chunks(CHUNK).map(accumulate).collect()
            };
        // Merge in chunk order so the floating-point sums are reproducible.
        let mut iter = partials.into_iter();
        let mut total = iter.next().unwrap_or_default();
        for part in iter {
            for (e, c) in part {
                *total.entry(e).or_default() += c;
            }
            if total.len() > TERM_CAP {
                return Err(Error::TermCap {
                    count: total.len(),
                    cap: TERM_CAP,
                });
            }
        }
        if total.len() > TERM_CAP {
            return Err(Error::TermCap {
                count: total.len(),
                cap: TERM_CAP,
            });
        }
        let mut terms: Vec<_> = total.into_iter().collect();
        terms.sort_by(|x, y| x.0.cmp(&y.0));
        let exact = self.basis.is_exact();
        terms.retain(|(_, c)| keep(*c, exact));
        Ok(Self {
            dim: self.dim,
            basis: self.basis.clone(),
            terms,
        })
    }

    /// `q(k) = p(Qᵀk)`; for diagonal `Q` this maps every exponent `a` to `Q a`.
    pub fn rescale(&self, q: &ExpansionMap) -> Result<Self> {
        if q.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: q.dim(),
            });
        }
        for f in q.factors() {
            if f.rank != self.basis.rank() {
                return Err(Error::BasisMismatch);
            }
            // Expansion factors must be actions registered on this basis
            // (integers are always available).
            if self.basis.multiplier(f.name())? != *f {
                return Err(Error::BasisNotClosed(f.name().to_string()));
            }
        }
        Ok(Self::from_terms(
            self.dim,
            self.basis.clone(),
            self.terms.iter().map(|(e, c)| (q.apply(e), *c)).collect(),
        ))
    }

    /// Conjugated coefficients with negated exponents: `conj(p(k))` for real `k`.
    pub fn conjugate_reflect(&self) -> Self {
        Self::from_terms(
            self.dim,
            self.basis.clone(),
            self.terms.iter().map(|(e, c)| (e.neg(), c.conj())).collect(),
        )
    }

    /// `|p|² = p · conjugate_reflect(p)`.
    pub fn modulus_squared(&self) -> Result<Self> {
        let mut sq = self.mul(&self.conjugate_reflect())?;
        // Pair up a and -a so the stored polynomial is exactly real-valued.
        let sym: Vec<_> = sq
            .terms
            .iter()
            .map(|(e, c)| {
                let mirror = sq.coefficient(&e.neg());
                (e.clone(), (c + mirror.conj()) * 0.5)
            })
            .collect();
        sq.terms = sym;
        Ok(sq)
    }

    /// Lift to a polynomial that is 1-periodic in `d·m` torus variables.
    pub fn torus_lift(&self) -> TorusPoly {
        let scale = self
            .terms
            .iter()
            .fold(1i64, |acc, (e, _)| acc.lcm(&e.den));
        TorusPoly {
            nvars: self.dim * self.basis.rank(),
            scale,
            terms: self
                .terms
                .iter()
                .map(|(e, c)| (e.num.iter().map(|x| x * (scale / e.den)).collect(), *c))
                .collect(),
        }
    }

    /// Coefficient-wise comparison with absolute tolerance.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        if self.dim != other.dim || !same_basis(&self.basis, &other.basis) {
            return false;
        }
        let diff = self - other;
        diff.terms.iter().all(|(_, c)| c.norm() <= tol)
    }

    /// Drops coefficients with modulus at most `tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        Self {
            dim: self.dim,
            basis: self.basis.clone(),
            terms: self
                .terms
                .iter()
                .filter(|(_, c)| c.norm() > tol)
                .cloned()
                .collect(),
        }
    }

    /// Dense Laurent coefficients `(lowest exponent, coefficients)` when the
    /// polynomial is univariate with integer exponents on the unit generator.
    pub fn laurent_coefficients(&self) -> Option<(i64, Vec<Complex64>)> {
        if self.dim != 1 {
            return None;
        }
        let m = self.basis.rank();
        let mut pairs = Vec::with_capacity(self.terms.len());
        for (e, c) in &self.terms {
            if !e.is_integral() || e.num[1..m].iter().any(|x| *x != 0) {
                return None;
            }
            pairs.push((e.num[0], *c));
        }
        let lo = pairs.iter().map(|p| p.0).min().unwrap_or(0);
        let hi = pairs.iter().map(|p| p.0).max().unwrap_or(0);
        let mut out = vec![Complex64::default(); (hi - lo + 1) as usize];
        for (e, c) in pairs {
            out[(e - lo) as usize] += c;
        }
        Some((lo, out))
    }
}

fn keep(c: Complex64, exact: bool) -> bool {
    if exact {
        c.re != 0.0 || c.im != 0.0
    } else {
        c.norm() >= FLOAT_DROP_TOL
    }
}

impl PartialEq for GenTrigPoly {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && same_basis(&self.basis, &other.basis) && self.terms == other.terms
    }
}

impl std::ops::Add for &GenTrigPoly {
    type Output = GenTrigPoly;

    /// Panics if the operands have different dimensions or bases.
    fn add(self, other: &GenTrigPoly) -> GenTrigPoly {
        self.check_compatible(other).expect("incompatible operands");
        let mut terms = Vec::with_capacity(self.len() + other.len());
        let (mut i, mut j) = (0, 0);
        while i < self.len() || j < other.len() {
            let ord = match (self.terms.get(i), other.terms.get(j)) {
                (Some(a), Some(b)) => a.0.cmp(&b.0),
                (Some(_), None) => Ordering::Less,
                _ => Ordering::Greater,
            };
            match ord {
                Ordering::Less => {
                    terms.push(self.terms[i].clone());
                    i += 1;
                }
                Ordering::Greater => {
                    terms.push(other.terms[j].clone());
                    j += 1;
                }
                Ordering::Equal => {
                    terms.push((self.terms[i].0.clone(), self.terms[i].1 + other.terms[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        let exact = self.basis.is_exact();
        terms.retain(|(_, c)| keep(*c, exact));
        GenTrigPoly {
            dim: self.dim,
            basis: self.basis.clone(),
            terms,
        }
    }
}

impl std::ops::Neg for &GenTrigPoly {
    type Output = GenTrigPoly;

    fn neg(self) -> GenTrigPoly {
        GenTrigPoly {
            dim: self.dim,
            basis: self.basis.clone(),
            terms: self.terms.iter().map(|(e, c)| (e.clone(), -c)).collect(),
        }
    }
}

impl std::ops::Sub for &GenTrigPoly {
    type Output = GenTrigPoly;

    fn sub(self, other: &GenTrigPoly) -> GenTrigPoly {
        self + &(-other)
    }
}

impl fmt::Display for GenTrigPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, c)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if c.im == 0.0 {
                write!(f, "{}*e{}", c.re, e)?;
            } else {
                write!(f, "({})*e{}", c, e)?;
            }
        }
        Ok(())
    }
}

/// Polynomial in `nvars` torus variables, 1-periodic in each.
///
/// Lifted variable `v = j*m + r` corresponds to `g_r k_j / scale`.
#[derive(Clone, Debug, PartialEq)]
pub struct TorusPoly {
    pub nvars: usize,
    pub scale: i64,
    pub terms: Vec<(Vec<i64>, Complex64)>,
}

impl TorusPoly {
    /// Evaluates at torus coordinates `u` (length `nvars`).
    pub fn evaluate(&self, u: &[f64]) -> Complex64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                let s: f64 = e.iter().zip(u).map(|(&a, x)| a as f64 * x).sum();
                c * Complex64::cis(TAU * s)
            })
            .sum()
    }

    /// Variables that occur with a nonzero exponent in some term.
    pub fn active_vars(&self) -> Vec<usize> {
        (0..self.nvars)
            .filter(|&v| self.terms.iter().any(|(e, _)| e[v] != 0))
            .collect()
    }

    /// Exponent span `max - min` in variable `v`.
    pub fn degree_span(&self, v: usize) -> i64 {
        let lo = self.terms.iter().map(|(e, _)| e[v]).min().unwrap_or(0);
        let hi = self.terms.iter().map(|(e, _)| e[v]).max().unwrap_or(0);
        hi - lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn lambda_basis() -> Arc<FrequencyBasis> {
        let lam = 0.5 * (1.0 + 13f64.sqrt());
        let mut b = FrequencyBasis::new(vec![1.0, lam])
            .unwrap()
            .with_minpoly(1, vec![-3, -1, 1]);
        let r = |n| Rational64::from_integer(n);
        b.register("lambda", &[vec![r(0), r(3)], vec![r(1), r(1)]])
            .unwrap();
        Arc::new(b)
    }

    #[test]
    fn evaluate_trivial_cases() {
        // (1+x+x²)(1+y)
        let p = GenTrigPoly::from_integer_terms(
            2,
            &[
                (&[0, 0], 1.0),
                (&[1, 0], 1.0),
                (&[2, 0], 1.0),
                (&[0, 1], 1.0),
                (&[1, 1], 1.0),
                (&[2, 1], 1.0),
            ],
        );
        assert!((p.evaluate(&[0.0, 0.0]).unwrap() - c(6.0)).norm() < 1e-14);
        assert!(p.evaluate(&[1.0 / 3.0, 0.0]).unwrap().norm() < 1e-14);
        let det = GenTrigPoly::from_integer_terms(1, &[(&[4], 1.0), (&[0], -1.0)]);
        assert!((det.evaluate(&[0.125]).unwrap() - c(-2.0)).norm() < 1e-14);
        assert!(matches!(
            det.evaluate(&[0.1, 0.2]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn rescale_integer_and_lambda() {
        let p = GenTrigPoly::from_integer_terms(1, &[(&[1], 1.0)]);
        let q = ExpansionMap::new(p.basis(), &["2"]).unwrap();
        let r = p.rescale(&q).unwrap();
        assert_eq!(r.terms()[0].0, ExponentVector::from_integers(&[2]));

        let lam = 0.5 * (1.0 + 13f64.sqrt());
        assert!((lam * lam - lam - 3.0).abs() < 1e-14);
        let b = lambda_basis();
        let x_lam = GenTrigPoly::monomial(1, b.clone(), ExponentVector::from_integers(&[0, 1]), c(1.0));
        let q = ExpansionMap::new(&b, &["lambda"]).unwrap();
        let r = x_lam.rescale(&q).unwrap();
        assert_eq!(r.terms()[0].0, ExponentVector::from_integers(&[3, 1]));
    }

    #[test]
    fn rescale_rejects_unregistered_factor() {
        let b = Arc::new(FrequencyBasis::unit());
        assert!(matches!(
            ExpansionMap::new(&b, &["lambda"]),
            Err(Error::BasisNotClosed(_))
        ));
    }

    #[test]
    fn register_rejects_inexact_action() {
        let mut b = FrequencyBasis::new(vec![1.0, 2f64.sqrt()]).unwrap();
        let r = |n| Rational64::from_integer(n);
        assert!(b.register("bad", &[vec![r(0), r(3)], vec![r(1), r(1)]]).is_err());
        assert!(b.register("sqrt2", &[vec![r(0), r(2)], vec![r(1), r(0)]]).is_ok());
    }

    #[test]
    fn rescale_matches_numeric_substitution() {
        let b = lambda_basis();
        let lam = b.values()[1];
        let e = |v: &[i64]| ExponentVector::from_integers(v);
        let p = GenTrigPoly::from_terms(
            2,
            b.clone(),
            vec![
                (e(&[2, 0, 0, 0]), c(1.0)),
                (e(&[2, 0, 1, 0]), c(1.0)),
                (e(&[0, 0, 2, 1]), Complex64::new(0.5, -1.0)),
            ],
        );
        let q = ExpansionMap::new(&b, &["lambda", "lambda"]).unwrap();
        let r = p.rescale(&q).unwrap();
        let mut s = 12345u64;
        for _ in 0..100 {
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            };
            let k = [next(), next()];
            let lhs = p.evaluate(&[lam * k[0], lam * k[1]]).unwrap();
            let rhs = r.evaluate(&k).unwrap();
            assert!((lhs - rhs).norm() < 1e-10);
        }
    }

    #[test]
    fn conjugate_reflect_and_modulus() {
        let p = GenTrigPoly::from_integer_terms(1, &[(&[0], 1.0), (&[1], 1.0)]);
        let r = p.conjugate_reflect();
        assert_eq!(
            r,
            GenTrigPoly::from_integer_terms(1, &[(&[0], 1.0), (&[-1], 1.0)])
        );
        let k = GenTrigPoly::constant(1, p.basis().clone(), Complex64::new(2.0, 3.0));
        assert_eq!(
            k.conjugate_reflect().constant_term(),
            Complex64::new(2.0, -3.0)
        );
        let m = p.modulus_squared().unwrap();
        assert_eq!(
            m,
            GenTrigPoly::from_integer_terms(1, &[(&[-1], 1.0), (&[0], 2.0), (&[1], 1.0)])
        );
        assert_eq!(m.evaluate(&[0.0]).unwrap(), c(4.0));
        assert_eq!(m.constant_term(), c(2.0));
    }

    #[test]
    fn torus_lift_of_lambda_polynomial() {
        let b = lambda_basis();
        let e = |v: &[i64]| ExponentVector::from_integers(v);
        // r(x) = x^λ + x^{λ+1} + x^{λ+2}
        let r = GenTrigPoly::from_terms(
            1,
            b.clone(),
            vec![(e(&[0, 1]), c(1.0)), (e(&[1, 1]), c(1.0)), (e(&[2, 1]), c(1.0))],
        );
        let lift = r.torus_lift();
        assert_eq!(lift.nvars, 2);
        assert_eq!(lift.scale, 1);
        assert_eq!(lift.terms.len(), 3);
        // X1 = var 1 appears to the first power in every term; X2 = var 0 spans 0..=2.
        assert!(lift.terms.iter().all(|(x, _)| x[1] == 1));
        assert_eq!(lift.degree_span(0), 2);
        let lam = b.values()[1];
        for i in 0..100 {
            let k = 0.013 + 0.0317 * i as f64;
            let via_lift = lift.evaluate(&[k, lam * k]);
            assert!((via_lift - r.evaluate(&[k]).unwrap()).norm() < 1e-10);
        }
        // Unit basis: the lift is the polynomial itself.
        let p = GenTrigPoly::from_integer_terms(1, &[(&[0], 1.0), (&[3], 2.0)]);
        let l = p.torus_lift();
        assert_eq!(l.terms, vec![(vec![0], c(1.0)), (vec![3], c(2.0))]);
    }

    #[test]
    fn adhoc_basis_merges_close_values() {
        let a = 2f64.sqrt();
        let p = GenTrigPoly::from_float_terms(
            1,
            &[
                (vec![a], c(1.0)),
                (vec![a + 1.0 + 1e-12], c(1.0)),
                (vec![2.0], c(1.0)),
            ],
        );
        assert_eq!(p.basis().rank(), 2);
        assert!(!p.basis().is_exact());
        assert_eq!(p.len(), 3);
        let k = [0.37];
        let direct: Complex64 = [a, a + 1.0, 2.0]
            .iter()
            .map(|x| Complex64::cis(TAU * x * k[0]))
            .sum();
        assert!((p.evaluate(&k).unwrap() - direct).norm() < 1e-9);
    }

    #[test]
    fn term_cap_is_enforced() {
        let n = 1100;
        let terms: Vec<(Vec<i64>, f64)> = (0..n).map(|i| (vec![i], 1.0)).collect();
        let p = GenTrigPoly::from_integer_terms(
            1,
            &terms.iter().map(|(e, c)| (e.as_slice(), *c)).collect::<Vec<_>>(),
        );
        let q_terms: Vec<(Vec<i64>, f64)> = (0..n).map(|i| (vec![i * 10_000], 1.0)).collect();
        let q = GenTrigPoly::from_integer_terms(
            1,
            &q_terms.iter().map(|(e, c)| (e.as_slice(), *c)).collect::<Vec<_>>(),
        );
        assert!(matches!(p.mul(&q), Err(Error::TermCap { .. })));
    }

    fn arb_poly() -> impl Strategy<Value = GenTrigPoly> {
        prop::collection::vec(((-4i64..5, -3i64..4), -3.0f64..3.0, -3.0f64..3.0), 1..8).prop_map(
            |ts| {
                let b = lambda_basis();
                GenTrigPoly::from_terms(
                    1,
                    b,
                    ts.into_iter()
                        .map(|((a, l), re, im)| {
                            (ExponentVector::from_integers(&[a, l]), Complex64::new(re, im))
                        })
                        .collect(),
                )
            },
        )
    }

    proptest! {
        #[test]
        fn product_evaluates_to_product(p in arb_poly(), q in arb_poly(), k in -2.0f64..2.0) {
            let pq = p.mul(&q).unwrap();
            let lhs = pq.evaluate(&[k]).unwrap();
            let rhs = p.evaluate(&[k]).unwrap() * q.evaluate(&[k]).unwrap();
            prop_assert!((lhs - rhs).norm() < 1e-10 * (1.0 + rhs.norm()));
            let m = p.modulus_squared().unwrap().evaluate(&[k]).unwrap();
            prop_assert!(m.im.abs() < 1e-10);
            prop_assert!(m.re > -1e-12);
            prop_assert!(p.evaluate(&[k]).unwrap().norm() <= p.l1_norm() + 1e-12);
            let alt = p.mul(&p.conjugate_reflect()).unwrap().evaluate(&[k]).unwrap();
            prop_assert!((alt - m).norm() < 1e-10 * (1.0 + m.norm()));
        }

        #[test]
        fn rescale_is_ring_homomorphism(p in arb_poly(), q in arb_poly()) {
            let b = p.basis().clone();
            let qmap = ExpansionMap::new(&b, &["lambda"]).unwrap();
            let lhs = p.mul(&q).unwrap().rescale(&qmap).unwrap();
            let rhs = p.rescale(&qmap).unwrap().mul(&q.rescale(&qmap).unwrap()).unwrap();
            prop_assert!(lhs.approx_eq(&rhs, 1e-12));
        }
    }
}

//! Fourier matrices of inflation rules and their cocycles.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::inflation::InflationRule;
use crate::trigpoly::{ExpansionMap, ExponentVector, FrequencyBasis, GenTrigPoly};

/// Largest size for which the determinant is expanded symbolically.
pub const SYMBOLIC_DET_MAX: usize = 6;

pub type CMatrix = DMatrix<Complex64>;

/// `L×L` matrix of trigonometric polynomials together with the expansion
/// that drives its cocycle. `steps` records how many applications of the
/// expansion separate consecutive factors (1 for a rule's own matrix,
/// `N` for its `N`-step cocycle).
#[derive(Clone, Debug)]
pub struct FourierMatrix {
    entries: Vec<Vec<GenTrigPoly>>,
    expansion: ExpansionMap,
    steps: usize,
}

impl FourierMatrix {
    /// `B_ij(k) = Σ_{t ∈ T_ij} e^{2πi⟨k|t⟩}`.
    pub fn from_rule(rule: &InflationRule) -> Self {
        let entries = rule
            .displacements
            .iter()
            .map(|row| {
                row.iter()
                    .map(|cell| {
                        GenTrigPoly::from_terms(
                            rule.dim,
                            rule.basis.clone(),
                            cell.iter()
                                .map(|t| (t.clone(), Complex64::new(1.0, 0.0)))
                                .collect(),
                        )
                    })
                    .collect()
            })
            .collect();
        Self {
            entries,
            expansion: rule.expansion.clone(),
            steps: 1,
        }
    }

    /// Matrix from explicit entries; all entries must share dimension and basis.
    pub fn from_entries(entries: Vec<Vec<GenTrigPoly>>, expansion: ExpansionMap) -> Result<Self> {
        let l = entries.len();
        if l == 0 || entries.iter().any(|r| r.len() != l) {
            return Err(Error::InvalidParameter("Fourier matrix must be square".into()));
        }
        let first = &entries[0][0];
        for e in entries.iter().flatten() {
            if e.dim() != first.dim() {
                return Err(Error::DimensionMismatch {
                    expected: first.dim(),
                    got: e.dim(),
                });
            }
            if e.basis() != first.basis() {
                return Err(Error::BasisMismatch);
            }
        }
        if expansion.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: first.dim(),
                got: expansion.dim(),
            });
        }
        Ok(Self {
            entries,
            expansion,
            steps: 1,
        })
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn dim(&self) -> usize {
        self.entries[0][0].dim()
    }

    pub fn basis(&self) -> &Arc<FrequencyBasis> {
        self.entries[0][0].basis()
    }

    pub fn expansion(&self) -> &ExpansionMap {
        &self.expansion
    }

    pub fn entry(&self, i: usize, j: usize) -> &GenTrigPoly {
        &self.entries[i][j]
    }

    pub fn entries(&self) -> &[Vec<GenTrigPoly>] {
        &self.entries
    }

    /// Entry-wise symbolic equality.
    pub fn same_entries(&self, other: &Self) -> bool {
        self.size() == other.size()
            && self
                .entries
                .iter()
                .flatten()
                .zip(other.entries.iter().flatten())
                .all(|(a, b)| a == b)
    }

    /// Total number of stored terms.
    pub fn term_count(&self) -> usize {
        self.entries.iter().flatten().map(GenTrigPoly::len).sum()
    }

    /// `B(k)` as a complex matrix.
    pub fn evaluate(&self, k: &[f64]) -> Result<CMatrix> {
        let l = self.size();
        let mut out = CMatrix::zeros(l, l);
        for i in 0..l {
            for j in 0..l {
                out[(i, j)] = self.entries[i][j].evaluate(k)?;
            }
        }
        Ok(out)
    }

    /// `B(0)` with real entries.
    pub fn at_zero(&self) -> Vec<Vec<f64>> {
        let zero = vec![0.0; self.dim()];
        self.entries
            .iter()
            .map(|row| {
                row.iter()
                    .map(|e| e.evaluate(&zero).expect("dimension matches").re)
                    .collect()
            })
            .collect()
    }

    /// Number of expansion steps between consecutive factors.
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Real diagonal of the map `k ↦ Qᵀ k` applied `steps` times.
    fn step_diagonal(&self) -> Vec<f64> {
        self.expansion
            .diagonal()
            .into_iter()
            .map(|q| q.powi(self.steps as i32))
            .collect()
    }

    /// `B(k) B(Qᵀk) ⋯ B((Qᵀ)^{n-1} k)` evaluated numerically.
    pub fn cocycle_evaluate(&self, k: &[f64], n: usize) -> Result<CMatrix> {
        if n == 0 {
            return Err(Error::InvalidParameter("cocycle order must be at least 1".into()));
        }
        let diag = self.step_diagonal();
        let mut point = k.to_vec();
        let mut acc = self.evaluate(&point)?;
        for _ in 1..n {
            for (x, q) in point.iter_mut().zip(&diag) {
                *x *= q;
            }
            acc = &acc * self.evaluate(&point)?;
        }
        Ok(acc)
    }

    /// Symbolic `B^{(n)}`, built as `B · B^{(n-1)}(Qᵀ ·)`.
    pub fn cocycle_symbolic(&self, n: usize) -> Result<FourierMatrix> {
        if n == 0 {
            return Err(Error::InvalidParameter("cocycle order must be at least 1".into()));
        }
        if self.steps != 1 {
            return Err(Error::Unsupported("cocycle of a cocycle".into()));
        }
        let mut acc = self.clone();
        for _ in 1..n {
            let shifted = acc.rescaled()?;
            acc = self.matmul(&shifted)?;
        }
        acc.steps = n;
        Ok(acc)
    }

    /// Entries composed with `k ↦ Qᵀk`.
    fn rescaled(&self) -> Result<FourierMatrix> {
        Ok(Self {
            entries: self
                .entries
                .iter()
                .map(|row| row.iter().map(|e| e.rescale(&self.expansion)).collect())
                .collect::<Result<_>>()?,
            expansion: self.expansion.clone(),
            steps: self.steps,
        })
    }

    /// Symbolic matrix product.
    pub fn matmul(&self, other: &FourierMatrix) -> Result<FourierMatrix> {
        let l = self.size();
        let zero = GenTrigPoly::zero(self.dim(), self.basis().clone());
        let mut entries = vec![vec![zero; l]; l];
        for (i, row) in entries.iter_mut().enumerate() {
            for (j, slot) in row.iter_mut().enumerate() {
                let mut acc = GenTrigPoly::zero(self.dim(), self.basis().clone());
                for s in 0..l {
                    acc = &acc + &self.entries[i][s].mul(&other.entries[s][j])?;
                }
                *slot = acc;
            }
        }
        Ok(Self {
            entries,
            expansion: self.expansion.clone(),
            steps: self.steps,
        })
    }

    /// `‖B(k)‖²_F = Σ |B_ij(k)|²` as a trigonometric polynomial.
    pub fn frobenius_sq(&self) -> Result<GenTrigPoly> {
        let mut acc = GenTrigPoly::zero(self.dim(), self.basis().clone());
        for e in self.entries.iter().flatten() {
            acc = &acc + &e.modulus_squared()?;
        }
        Ok(acc)
    }

    /// Exact determinant by cofactor expansion (sizes up to [`SYMBOLIC_DET_MAX`]).
    pub fn det_polynomial(&self) -> Result<GenTrigPoly> {
        let l = self.size();
        if l > SYMBOLIC_DET_MAX {
            return Err(Error::Unsupported(format!(
                "symbolic determinant for size {l}; use det_at"
            )));
        }
        let cols: Vec<usize> = (0..l).collect();
        self.cofactor(0, &cols)
    }

    fn cofactor(&self, row: usize, cols: &[usize]) -> Result<GenTrigPoly> {
        if cols.len() == 1 {
            return Ok(self.entries[row][cols[0]].clone());
        }
        let mut acc = GenTrigPoly::zero(self.dim(), self.basis().clone());
        for (pos, &c) in cols.iter().enumerate() {
            let e = &self.entries[row][c];
            if e.is_zero() {
                continue;
            }
            let rest: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
            let term = e.mul(&self.cofactor(row + 1, &rest)?)?;
            acc = if pos % 2 == 0 { &acc + &term } else { &acc - &term };
        }
        Ok(acc)
    }

    /// Numeric `det B(k)`.
    pub fn det_at(&self, k: &[f64]) -> Result<Complex64> {
        Ok(self.evaluate(k)?.determinant())
    }

    /// `U B(k) U⁻¹` with the result re-expressed as trigonometric polynomials.
    pub fn apply_similarity(&self, u: &CMatrix) -> Result<FourierMatrix> {
        let l = self.size();
        if u.nrows() != l || u.ncols() != l {
            return Err(Error::DimensionMismatch {
                expected: l,
                got: u.nrows(),
            });
        }
        let inv = u.clone().try_inverse().ok_or(Error::SingularMap)?;
        let zero = GenTrigPoly::zero(self.dim(), self.basis().clone());
        let mut entries = vec![vec![zero; l]; l];
        for (a, row) in entries.iter_mut().enumerate() {
            for (b, slot) in row.iter_mut().enumerate() {
                let mut acc = GenTrigPoly::zero(self.dim(), self.basis().clone());
                for i in 0..l {
                    for j in 0..l {
                        let c = u[(a, i)] * inv[(j, b)];
                        if c.norm() > 0.0 {
                            acc = &acc + &self.entries[i][j].scale(c);
                        }
                    }
                }
                *slot = acc.pruned(1e-12);
            }
        }
        let out = Self {
            entries,
            expansion: self.expansion.clone(),
            steps: self.steps,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let mut worst: f64 = 0.0;
        for _ in 0..8 {
            let k: Vec<f64> = (0..self.dim()).map(|_| rng.gen::<f64>()).collect();
            let direct = u * self.evaluate(&k)? * &inv;
            worst = worst.max((direct - out.evaluate(&k)?).norm());
        }
        if worst >= 1e-9 {
            return Err(Error::NonPolynomial(worst));
        }
        Ok(out)
    }
}

/// Polynomials of a binary constant-size block rule.
#[derive(Clone, Debug)]
pub struct BlockDecomposition {
    /// Sum over all positions of a supertile.
    pub full: GenTrigPoly,
    /// Positions holding type 0 in supertile 0 and type 1 in supertile 1.
    pub same: GenTrigPoly,
    /// Positions holding type 1 in supertile 0 and type 0 in supertile 1.
    pub swapped: GenTrigPoly,
    /// Positions holding type 0 in both supertiles.
    pub coincident_0: GenTrigPoly,
    /// Positions holding type 1 in both supertiles.
    pub coincident_1: GenTrigPoly,
    /// Number of coincident positions.
    pub coincident: usize,
}

/// Splits a binary block rule into bijective and coincident positions.
pub fn binary_block_decomposition(rule: &InflationRule) -> Result<BlockDecomposition> {
    if rule.num_types() != 2 {
        return Err(Error::NotBinaryBlock(format!("{} prototiles", rule.num_types())));
    }
    if rule.prototiles[0].edges != rule.prototiles[1].edges {
        return Err(Error::NotBinaryBlock("prototiles differ in shape".into()));
    }
    let positions = |j: usize| -> Vec<(ExponentVector, usize)> {
        let mut v: Vec<(ExponentVector, usize)> = (0..2)
            .flat_map(|i| rule.displacements[i][j].iter().map(move |t| (t.clone(), i)))
            .collect();
        v.sort();
        v
    };
    let col0 = positions(0);
    let col1 = positions(1);
    let p0: Vec<&ExponentVector> = col0.iter().map(|x| &x.0).collect();
    let p1: Vec<&ExponentVector> = col1.iter().map(|x| &x.0).collect();
    if p0 != p1 {
        return Err(Error::NotBinaryBlock(
            "supertiles do not share the same set of positions".into(),
        ));
    }
    if p0.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::NotBinaryBlock("repeated position".into()));
    }
    let det = rule.expansion.det().abs();
    if (p0.len() as f64 - det).abs() > 1e-9 {
        return Err(Error::NotBinaryBlock(format!(
            "{} positions for |det Q| = {det}",
            p0.len()
        )));
    }
    let one = Complex64::new(1.0, 0.0);
    let mut buckets: [Vec<(ExponentVector, Complex64)>; 4] = Default::default();
    for ((t, a), (_, b)) in col0.iter().zip(&col1) {
        let slot = match (a, b) {
            (0, 1) => 0,
            (1, 0) => 1,
            (0, 0) => 2,
            _ => 3,
        };
        buckets[slot].push((t.clone(), one));
    }
    let poly = |terms: Vec<(ExponentVector, Complex64)>| {
        GenTrigPoly::from_terms(rule.dim, rule.basis.clone(), terms)
    };
    let coincident = buckets[2].len() + buckets[3].len();
    let [same, swapped, c0, c1] = buckets;
    Ok(BlockDecomposition {
        full: poly(p0.iter().map(|t| ((*t).clone(), one)).collect()),
        same: poly(same),
        swapped: poly(swapped),
        coincident_0: poly(c0),
        coincident_1: poly(c1),
        coincident,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inflation::{realize_1d, SubstitutionRule1D};

    fn abcd() -> FourierMatrix {
        let sym = SubstitutionRule1D::from_words(&["ab", "ca", "bd", "dc"]).unwrap();
        FourierMatrix::from_rule(&realize_1d("abcd", &sym).unwrap())
    }

    fn zpoly(terms: &[(i64, f64)]) -> GenTrigPoly {
        let owned: Vec<[i64; 1]> = terms.iter().map(|t| [t.0]).collect();
        GenTrigPoly::from_integer_terms(
            1,
            &owned
                .iter()
                .zip(terms)
                .map(|(e, t)| (e.as_slice(), t.1))
                .collect::<Vec<_>>(),
        )
    }

    #[test]
    fn abcd_matrix_and_determinant() {
        let b = abcd();
        let one = zpoly(&[(0, 1.0)]);
        let z = zpoly(&[(1, 1.0)]);
        let zero = zpoly(&[]);
        let expect = [
            [&one, &z, &zero, &zero],
            [&z, &zero, &one, &zero],
            [&zero, &one, &zero, &z],
            [&zero, &zero, &z, &one],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(b.entry(i, j), expect[i][j], "entry {i},{j}");
            }
        }
        assert_eq!(b.det_polynomial().unwrap(), zpoly(&[(0, -1.0), (4, 1.0)]));
        assert_eq!(
            b.at_zero(),
            vec![
                vec![1.0, 1.0, 0.0, 0.0],
                vec![1.0, 0.0, 1.0, 0.0],
                vec![0.0, 1.0, 0.0, 1.0],
                vec![0.0, 0.0, 1.0, 1.0]
            ]
        );
    }

    #[test]
    fn cocycle_numeric_matches_symbolic() {
        let b = abcd();
        let b4 = b.cocycle_symbolic(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let k = [rng.gen::<f64>()];
            let num = b.cocycle_evaluate(&k, 4).unwrap();
            assert!((num - b4.evaluate(&k).unwrap()).norm() < 1e-9);
        }
        let m = b.cocycle_evaluate(&[0.0], 3).unwrap();
        let m_int = b.evaluate(&[0.0]).unwrap();
        assert!((m - &m_int * &m_int * &m_int).norm() < 1e-12);
        assert!(b.cocycle_symbolic(1).unwrap().same_entries(&b));
    }

    #[test]
    fn cocycle_is_fourier_matrix_of_composed_rule() {
        let sym = SubstitutionRule1D::from_words(&["ab", "ca", "bd", "dc"]).unwrap();
        let sq = sym.compose(&sym).unwrap();
        let b2 = abcd().cocycle_symbolic(2).unwrap();
        let direct = FourierMatrix::from_rule(&realize_1d("abcd2", &sq).unwrap());
        assert!(b2.same_entries(&direct));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let a = b2.evaluate(&[rng.gen()]).unwrap();
            let c = b2.evaluate(&[rng.gen()]).unwrap();
            assert!((&a * &c - &c * &a).norm() < 1e-10);
        }
    }

    #[test]
    fn determinant_and_norm_properties() {
        let b = abcd();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let k: f64 = rng.gen();
            let prod: Complex64 = (0..5)
                .map(|l| b.det_at(&[k * 2f64.powi(l)]).unwrap())
                .product();
            let det = b.cocycle_evaluate(&[k], 5).unwrap().determinant();
            assert!((det - prod).norm() <= 1e-8 * (1.0 + prod.norm()));
            let big = b.cocycle_evaluate(&[k], 5).unwrap().norm();
            let left = b.cocycle_evaluate(&[k], 2).unwrap().norm();
            let right = b.cocycle_evaluate(&[k * 4.0], 3).unwrap().norm();
            assert!(big <= left * right * (1.0 + 1e-12));
        }
    }

    #[test]
    fn identity_similarity_is_noop() {
        let b = abcd();
        let id = CMatrix::identity(4, 4);
        assert!(b.apply_similarity(&id).unwrap().same_entries(&b));
    }

    #[test]
    fn fully_coincident_block() {
        use crate::inflation::Prototile;
        use crate::trigpoly::ExpansionMap;
        let basis = Arc::new(FrequencyBasis::unit());
        let p = |x: i64| ExponentVector::from_integers(&[x]);
        let rule = InflationRule {
            name: "coincident".into(),
            dim: 1,
            expansion: ExpansionMap::new(&basis, &["2"]).unwrap(),
            basis: basis.clone(),
            prototiles: vec![
                Prototile { label: "w".into(), edges: p(1) },
                Prototile { label: "b".into(), edges: p(1) },
            ],
            displacements: vec![vec![vec![p(0)], vec![p(0)]], vec![vec![p(1)], vec![p(1)]]],
            stone: true,
            symbolic: None,
        };
        let d = binary_block_decomposition(&rule).unwrap();
        assert!(d.same.is_zero() && d.swapped.is_zero());
        assert_eq!(&d.coincident_0 + &d.coincident_1, d.full);
        assert_eq!(d.coincident, 2);
    }
}

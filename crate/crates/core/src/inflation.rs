//! Substitution and inflation rules, Perron–Frobenius data and patches.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::{One, Zero};
use rayon::prelude::*;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::trigpoly::{ExpansionMap, ExponentVector, FrequencyBasis};

/// Largest patch [`InflationRule::inflate_patch`] will build.
pub const PATCH_CAP: u128 = 50_000_000;

/// Tolerance for geometric comparisons on real coordinates.
const GEOM_TOL: f64 = 1e-9;

/// Integer matrix stored as rows.
pub type IntMatrix = Vec<Vec<i64>>;

/// Symbolic substitution on letters `0..L`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubstitutionRule1D {
    images: Vec<Vec<usize>>,
}

impl SubstitutionRule1D {
    pub fn new(images: Vec<Vec<usize>>) -> Result<Self> {
        let l = images.len();
        if l == 0 {
            return Err(Error::InvalidRule("empty alphabet".into()));
        }
        for (j, img) in images.iter().enumerate() {
            if img.is_empty() {
                return Err(Error::InvalidRule(format!("image of letter {j} is empty")));
            }
            if let Some(bad) = img.iter().find(|&&c| c >= l) {
                return Err(Error::InvalidRule(format!(
                    "image of letter {j} uses letter {bad} outside alphabet of size {l}"
                )));
            }
        }
        Ok(Self { images })
    }

    /// Images written with letters `a, b, c, …`, e.g. `["ab", "a"]`.
    pub fn from_words(words: &[&str]) -> Result<Self> {
        let images = words
            .iter()
            .map(|w| {
                w.chars()
                    .map(|c| {
                        if c.is_ascii_lowercase() {
                            Ok(c as usize - 'a' as usize)
                        } else {
                            Err(Error::InvalidRule(format!("letter `{c}` is not in a..z")))
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(images)
    }

    pub fn alphabet_size(&self) -> usize {
        self.images.len()
    }

    pub fn images(&self) -> &[Vec<usize>] {
        &self.images
    }

    pub fn words(&self) -> Vec<String> {
        self.images
            .iter()
            .map(|w| w.iter().map(|&c| (b'a' + c as u8) as char).collect())
            .collect()
    }

    /// `M_ij` = number of letters `i` in the image of `j`.
    pub fn substitution_matrix(&self) -> IntMatrix {
        let l = self.alphabet_size();
        let mut m = vec![vec![0; l]; l];
        for (j, img) in self.images.iter().enumerate() {
            for &i in img {
                m[i][j] += 1;
            }
        }
        m
    }

    /// `self ∘ other`: apply `other`, then `self` letterwise.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.alphabet_size() != other.alphabet_size() {
            return Err(Error::DimensionMismatch {
                expected: self.alphabet_size(),
                got: other.alphabet_size(),
            });
        }
        Self::new(
            other
                .images
                .iter()
                .map(|w| w.iter().flat_map(|&c| self.images[c].iter().copied()).collect())
                .collect(),
        )
    }

    /// Level-`n` word generated from `seed`.
    pub fn iterate(&self, seed: usize, n: usize) -> Vec<usize> {
        let mut w = vec![seed];
        for _ in 0..n {
            w = w.iter().flat_map(|&c| self.images[c].iter().copied()).collect();
        }
        w
    }
}

/// Axis-aligned box prototile; `edges` holds one exact length per coordinate.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototile {
    pub label: String,
    pub edges: ExponentVector,
}

/// Perron–Frobenius data of a primitive matrix.
#[derive(Clone, Debug)]
pub struct PfData {
    pub eigenvalue: f64,
    /// Right eigenvector normalised to sum 1 (relative frequencies).
    pub frequencies: Vec<f64>,
    /// Left eigenvector normalised to a minimum entry of 1 (tile lengths or volumes).
    pub left: Vec<f64>,
    pub spectrum: Vec<Complex64>,
}

/// Result of [`InflationRule::validate_stone_inflation`].
#[derive(Clone, Debug, Default)]
pub struct StoneReport {
    /// Columns whose volume identity fails, with (lhs, rhs).
    pub volume_failures: Vec<(usize, f64, f64)>,
    /// Overlapping pairs `(column, (type, index), (type, index))`.
    pub overlaps: Vec<(usize, (usize, usize), (usize, usize))>,
    /// Placed tiles not contained in their supertile: `(column, type, index)`.
    pub outside: Vec<(usize, usize, usize)>,
    /// Whether the geometric (overlap, containment) checks ran.
    pub geometry_checked: bool,
}

impl StoneReport {
    pub fn passed(&self) -> bool {
        self.volume_failures.is_empty() && self.overlaps.is_empty() && self.outside.is_empty()
    }
}

/// Tile of a patch: type index and exact control point.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlacedTile {
    pub kind: usize,
    pub position: ExponentVector,
}

/// Finite list of placed tiles.
#[derive(Clone, Debug)]
pub struct Patch {
    pub tiles: Vec<PlacedTile>,
}

impl Patch {
    /// Number of tiles of each type.
    pub fn counts(&self, types: usize) -> Vec<u64> {
        let mut c = vec![0; types];
        for t in &self.tiles {
            c[t.kind] += 1;
        }
        c
    }

    /// Componentwise (min, max) of the tile boxes.
    pub fn bounding_box(&self, rule: &InflationRule) -> (Vec<f64>, Vec<f64>) {
        let d = rule.dim;
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        let edges = rule.edge_lengths();
        for t in &self.tiles {
            let p = t.position.real_values(&rule.basis);
            for j in 0..d {
                lo[j] = lo[j].min(p[j]);
                hi[j] = hi[j].max(p[j] + edges[t.kind][j]);
            }
        }
        (lo, hi)
    }
}

/// Inflation rule with a diagonal expansion and exact displacement sets.
#[derive(Clone, Debug)]
pub struct InflationRule {
    pub name: String,
    pub dim: usize,
    pub basis: Arc<FrequencyBasis>,
    pub expansion: ExpansionMap,
    pub prototiles: Vec<Prototile>,
    /// `displacements[i][j]`: positions of tile `i` inside the inflated tile `j`.
    pub displacements: Vec<Vec<Vec<ExponentVector>>>,
    /// Whether inflated tiles are exactly dissected into the placed tiles.
    pub stone: bool,
    /// Symbolic images when the rule was realised from a 1D substitution.
    pub symbolic: Option<SubstitutionRule1D>,
}

impl InflationRule {
    /// Checks shapes and lengths of all fields.
    pub fn check(&self) -> Result<()> {
        let l = self.prototiles.len();
        let len = self.dim * self.basis.rank();
        if l == 0 {
            return Err(Error::InvalidRule("no prototiles".into()));
        }
        if self.expansion.dim() != self.dim {
            return Err(Error::InvalidRule(format!(
                "expansion has {} factors for dimension {}",
                self.expansion.dim(),
                self.dim
            )));
        }
        if self.displacements.len() != l || self.displacements.iter().any(|r| r.len() != l) {
            return Err(Error::InvalidRule(format!("displacement matrix must be {l}x{l}")));
        }
        for (i, p) in self.prototiles.iter().enumerate() {
            if p.edges.len() != len {
                return Err(Error::InvalidRule(format!("prototile {i} edge length vector")));
            }
            if p.edges.real_values(&self.basis).iter().any(|e| *e <= 0.0) {
                return Err(Error::InvalidRule(format!("prototile {i} has a nonpositive edge")));
            }
        }
        for row in &self.displacements {
            for cell in row {
                if cell.iter().any(|t| t.len() != len) {
                    return Err(Error::InvalidRule("displacement point length".into()));
                }
            }
        }
        Ok(())
    }

    pub fn num_types(&self) -> usize {
        self.prototiles.len()
    }

    pub fn substitution_matrix(&self) -> IntMatrix {
        self.displacements
            .iter()
            .map(|row| row.iter().map(|c| c.len() as i64).collect())
            .collect()
    }

    pub fn pf_data(&self) -> Result<PfData> {
        pf_data(&self.substitution_matrix())
    }

    /// Real edge lengths per prototile.
    pub fn edge_lengths(&self) -> Vec<Vec<f64>> {
        self.prototiles
            .iter()
            .map(|p| p.edges.real_values(&self.basis))
            .collect()
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.edge_lengths()
            .iter()
            .map(|e| e.iter().product())
            .collect()
    }

    /// Largest sup norm of any displacement.
    pub fn max_displacement(&self) -> f64 {
        self.displacements
            .iter()
            .flatten()
            .flatten()
            .map(|t| t.sup_norm(&self.basis))
            .fold(0.0, f64::max)
    }

    /// Density (points per unit volume) of control points in the tiling.
    pub fn point_density(&self) -> Result<f64> {
        let pf = self.pf_data()?;
        let vol: f64 = pf
            .frequencies
            .iter()
            .zip(self.volumes())
            .map(|(f, v)| f * v)
            .sum();
        Ok(1.0 / vol)
    }

    /// Volume identity per column, and for stone rules interior-disjointness
    /// and containment of the placed tiles inside each supertile.
    pub fn validate_stone_inflation(&self) -> StoneReport {
        let vols = self.volumes();
        let edges = self.edge_lengths();
        let det = self.expansion.det().abs();
        let q = self.expansion.diagonal();
        let l = self.num_types();
        let mut report = StoneReport {
            geometry_checked: self.stone,
            ..Default::default()
        };
        for j in 0..l {
            let lhs: f64 = (0..l)
                .map(|i| self.displacements[i][j].len() as f64 * vols[i])
                .sum();
            let rhs = det * vols[j];
            if (lhs - rhs).abs() > GEOM_TOL * rhs.max(1.0) {
                report.volume_failures.push((j, lhs, rhs));
            }
            if !self.stone {
                continue;
            }
            let sup: Vec<f64> = edges[j].iter().zip(&q).map(|(e, a)| e * a.abs()).collect();
            let mut boxes: Vec<((usize, usize), Vec<f64>, &Vec<f64>)> = Vec::new();
            for (i, e) in edges.iter().enumerate() {
                for (n, t) in self.displacements[i][j].iter().enumerate() {
                    boxes.push(((i, n), t.real_values(&self.basis), e));
                }
            }
            for ((i, n), lo, e) in &boxes {
                let inside = (0..self.dim)
                    .all(|c| lo[c] >= -GEOM_TOL && lo[c] + e[c] <= sup[c] + GEOM_TOL);
                if !inside {
                    report.outside.push((j, *i, *n));
                }
            }
            for a in 0..boxes.len() {
                for b in a + 1..boxes.len() {
                    let (ka, la, ea) = &boxes[a];
                    let (kb, lb, eb) = &boxes[b];
                    let overlap = (0..self.dim).all(|c| {
                        la[c].max(lb[c]) < (la[c] + ea[c]).min(lb[c] + eb[c]) - GEOM_TOL
                    });
                    if overlap {
                        report.overlaps.push((j, *ka, *kb));
                    }
                }
            }
        }
        report
    }

    /// Tile count of the level-`n` supertile of type `seed`.
    pub fn patch_size(&self, seed: usize, n: usize) -> u128 {
        let m = self.substitution_matrix();
        let l = m.len();
        let mut col: Vec<u128> = (0..l).map(|i| (i == seed) as u128).collect();
        for _ in 0..n {
            col = (0..l)
                .map(|i| {
                    (0..l)
                        .map(|j| (m[i][j] as u128).saturating_mul(col[j]))
                        .fold(0u128, u128::saturating_add)
                })
                .collect();
        }
        col.into_iter().fold(0, u128::saturating_add)
    }

    /// Level-`n` supertile of type `seed` with its control point at the origin.
    /// Tiles are ordered depth-first by child index.
    pub fn inflate_patch(&self, seed: usize, n: usize) -> Result<Patch> {
        if seed >= self.num_types() {
            return Err(Error::InvalidParameter(format!("no prototile {seed}")));
        }
        let size = self.patch_size(seed, n);
        if size > PATCH_CAP {
            return Err(Error::TermCap {
                count: size.min(usize::MAX as u128) as usize,
                cap: PATCH_CAP as usize,
            });
        }
        let l = self.num_types();
        let children: Vec<Vec<(usize, &ExponentVector)>> = (0..l)
            .map(|j| {
                (0..l)
                    .flat_map(|i| self.displacements[i][j].iter().map(move |t| (i, t)))
                    .collect()
            })
            .collect();
        let mut tiles = vec![PlacedTile {
            kind: seed,
            position: ExponentVector::zero(self.dim * self.basis.rank()),
        }];
        for _ in 0..n {
            tiles = tiles
                .par_iter()
                .flat_map_iter(|tile| {
                    let base = self.expansion.apply(&tile.position);
                    children[tile.kind].iter().map(move |(i, t)| PlacedTile {
                        kind: *i,
                        position: base.add(t),
                    })
                })
                .collect();
        }
        Ok(Patch { tiles })
    }

    /// Real coordinates of each tile control point.
    pub fn real_positions(&self, patch: &Patch) -> Vec<Vec<f64>> {
        patch
            .tiles
            .par_iter()
            .map(|t| t.position.real_values(&self.basis))
            .collect()
    }
}

/// Boolean reachability power test; returns the first power that is
/// strictly positive.
fn primitivity_exponent(m: &IntMatrix) -> Option<usize> {
    let l = m.len();
    let base: Vec<Vec<bool>> = m.iter().map(|r| r.iter().map(|&x| x > 0).collect()).collect();
    let mut p = base.clone();
    let bound = (l * l + 2).saturating_sub(2 * l);
    for k in 1..=bound.max(1) {
        if p.iter().flatten().all(|&x| x) {
            return Some(k);
        }
        p = (0..l)
            .map(|i| {
                (0..l)
                    .map(|j| (0..l).any(|s| p[i][s] && base[s][j]))
                    .collect()
            })
            .collect();
    }
    None
}

/// Describes why a nonnegative matrix is not primitive.
fn zero_orbit(m: &IntMatrix) -> String {
    let l = m.len();
    // reach[j][i]: tile j eventually produces tile i.
    let mut reach: Vec<Vec<bool>> = (0..l)
        .map(|j| (0..l).map(|i| m[i][j] > 0).collect())
        .collect();
    for s in 0..l {
        for j in 0..l {
            if reach[j][s] {
                for i in 0..l {
                    if reach[s][i] {
                        reach[j][i] = true;
                    }
                }
            }
        }
    }
    for j in 0..l {
        for i in 0..l {
            if !reach[j][i] {
                return format!("type {j} never produces type {i}");
            }
        }
    }
    "matrix is irreducible but periodic: every power has a zero entry".into()
}

pub fn pf_data(m: &IntMatrix) -> Result<PfData> {
    let l = m.len();
    if l == 0 || m.iter().any(|r| r.len() != l) {
        return Err(Error::InvalidParameter("substitution matrix must be square".into()));
    }
    if m.iter().flatten().any(|&x| x < 0) {
        return Err(Error::NotPrimitive("negative entry".into()));
    }
    if primitivity_exponent(m).is_none() {
        return Err(Error::NotPrimitive(zero_orbit(m)));
    }
    let dm = DMatrix::from_fn(l, l, |i, j| m[i][j] as f64);
    let spectrum: Vec<Complex64> = dm.complex_eigenvalues().iter().copied().collect();
    let right = power_iteration(&dm)?;
    let left = power_iteration(&dm.transpose())?;
    let eigenvalue = rayleigh(&dm, &right);
    let sum: f64 = right.iter().sum();
    let frequencies: Vec<f64> = right.iter().map(|x| x / sum).collect();
    let min = left.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PfData {
        eigenvalue,
        frequencies,
        left: left.iter().map(|x| x / min).collect(),
        spectrum,
    })
}

fn rayleigh(m: &DMatrix<f64>, v: &[f64]) -> f64 {
    let x = nalgebra::DVector::from_column_slice(v);
    let mx = m * &x;
    mx.dot(&x) / x.dot(&x)
}

/// Positive eigenvector of a primitive matrix, residual below 1e-10.
fn power_iteration(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let l = m.nrows();
    // Shift by the identity so eigenvalues of equal modulus cannot stall convergence.
    let shifted = m + DMatrix::identity(l, l);
    let mut x = nalgebra::DVector::from_element(l, 1.0 / l as f64);
    let mut residual = f64::INFINITY;
    for _ in 0..200_000 {
        let y = &shifted * &x;
        let n = y.norm();
        x = y / n;
        if residual < 1e-13 {
            break;
        }
        let mx = m * &x;
        let lam = mx.dot(&x);
        residual = (mx - &x * lam).norm();
    }
    if residual >= 1e-10 {
        return Err(Error::ToleranceUnattainable {
            tol: 1e-10,
            reached: residual,
        });
    }
    Ok(x.iter().copied().collect())
}

/// Characteristic polynomial `det(xI - M)`, coefficients low to high.
pub fn characteristic_polynomial(m: &IntMatrix) -> Vec<i128> {
    let n = m.len();
    let a: Vec<Vec<i128>> = m.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let mut coeffs = vec![0i128; n + 1];
    coeffs[n] = 1;
    let mut ak = a.clone();
    for k in 1..=n {
        let tr: i128 = (0..n).map(|i| ak[i][i]).sum();
        let c = -tr / k as i128;
        coeffs[n - k] = c;
        if k < n {
            let mut shifted = ak.clone();
            for (i, row) in shifted.iter_mut().enumerate() {
                row[i] += c;
            }
            ak = (0..n)
                .map(|i| {
                    (0..n)
                        .map(|j| (0..n).map(|s| a[i][s] * shifted[s][j]).sum())
                        .collect()
                })
                .collect();
        }
    }
    coeffs
}

/// Remainder of `num` divided by the monic `den` (both low to high).
fn poly_rem(num: &[i128], den: &[i128]) -> Vec<i128> {
    let mut r = num.to_vec();
    let dd = den.len() - 1;
    while r.len() > dd {
        let lead = *r.last().expect("nonempty");
        let shift = r.len() - 1 - dd;
        for (s, &c) in den.iter().enumerate() {
            r[shift + s] -= lead * c;
        }
        r.pop();
    }
    r
}

/// Minimal polynomial (monic, low to high) of the eigenvalue `target` of `m`.
pub fn minimal_polynomial(m: &IntMatrix, target: f64) -> Result<Vec<i64>> {
    let charpoly = characteristic_polynomial(m);
    let dm = DMatrix::from_fn(m.len(), m.len(), |i, j| m[i][j] as f64);
    let eig: Vec<Complex64> = dm.complex_eigenvalues().iter().copied().collect();
    let pf_idx = eig
        .iter()
        .enumerate()
        .min_by(|a, b| {
            (a.1 - target)
                .norm()
                .partial_cmp(&(b.1 - target).norm())
                .expect("finite")
        })
        .map(|(i, _)| i)
        .ok_or(Error::InvalidParameter("empty matrix".into()))?;
    let others: Vec<usize> = (0..eig.len()).filter(|&i| i != pf_idx).collect();
    let mut best: Option<Vec<i64>> = None;
    for mask in 0u32..(1 << others.len()) {
        let size = mask.count_ones() as usize + 1;
        if best.as_ref().is_some_and(|b| b.len() <= size + 1) {
            continue;
        }
        let mut poly = vec![Complex64::one()];
        let roots = std::iter::once(pf_idx).chain(
            others
                .iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &i)| i),
        );
        for r in roots {
            let mut next = vec![Complex64::zero(); poly.len() + 1];
            for (s, c) in poly.iter().enumerate() {
                next[s + 1] += c;
                next[s] -= c * eig[r];
            }
            poly = next;
        }
        let close = poly
            .iter()
            .all(|c| c.im.abs() < 1e-6 && (c.re - c.re.round()).abs() < 1e-6 * (1.0 + c.re.abs()));
        if !close {
            continue;
        }
        let int: Vec<i128> = poly.iter().map(|c| c.re.round() as i128).collect();
        if poly_rem(&charpoly, &int).iter().all(|&x| x == 0) {
            best = Some(int.iter().map(|&x| x as i64).collect());
        }
    }
    best.ok_or_else(|| Error::InvalidRule("could not isolate the minimal polynomial".into()))
}

/// Solves `A x = b` exactly; `None` if inconsistent or underdetermined.
fn solve_rational(mut a: Vec<Vec<Rational64>>, mut b: Vec<Rational64>) -> Option<Vec<Rational64>> {
    let rows = a.len();
    let cols = a.first()?.len();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else {
            continue;
        };
        a.swap(r, p);
        b.swap(r, p);
        let pv = a[r][c];
        for x in a[r].iter_mut() {
            *x /= pv;
        }
        b[r] /= pv;
        for i in 0..rows {
            if i != r && !a[i][c].is_zero() {
                let f = a[i][c];
                for cc in 0..cols {
                    let v = a[r][cc];
                    a[i][cc] -= f * v;
                }
                let v = b[r];
                b[i] -= f * v;
            }
        }
        pivots.push(c);
        r += 1;
    }
    if pivots.len() < cols || b[r..].iter().any(|x| !x.is_zero()) {
        return None;
    }
    let mut x = vec![Rational64::zero(); cols];
    for (row, &c) in pivots.iter().enumerate() {
        x[c] = b[row];
    }
    Some(x)
}

/// Realises a primitive 1D substitution with natural interval lengths and
/// left-endpoint control points.
pub fn realize_1d(name: &str, rule: &SubstitutionRule1D) -> Result<InflationRule> {
    let m = rule.substitution_matrix();
    let pf = pf_data(&m)?;
    let minpoly = minimal_polynomial(&m, pf.eigenvalue)?;
    let deg = minpoly.len() - 1;
    let l = rule.alphabet_size();

    let (basis, factor) = if deg == 1 {
        (FrequencyBasis::unit(), (-minpoly[0]).to_string())
    } else {
        let values: Vec<f64> = (0..deg).map(|r| pf.eigenvalue.powi(r as i32)).collect();
        let names: Vec<String> = (0..deg)
            .map(|r| match r {
                0 => "1".to_string(),
                1 => "lambda".to_string(),
                _ => format!("lambda^{r}"),
            })
            .collect();
        let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let mut b = FrequencyBasis::new(values)?
            .with_names(&name_refs)
            .with_minpoly(1, minpoly.clone());
        let zero = Rational64::zero();
        let mut rows = vec![vec![zero; deg]; deg];
        for r in 0..deg - 1 {
            rows[r + 1][r] = Rational64::one();
        }
        for (s, row) in rows.iter_mut().enumerate() {
            row[deg - 1] = Rational64::from_integer(-minpoly[s]);
        }
        b.register("lambda", &rows)?;
        (b, "lambda".to_string())
    };
    let basis = Arc::new(basis);
    let lam = basis.multiplier(&factor)?;

    // Unknowns: coefficients x[i*deg + r] of the length of letter i.
    // Equations: Σ_i M_ij ℓ_i = λ ℓ_j in Q(λ) for every j, plus ℓ_{L-1} = 1.
    let n = l * deg;
    let mut a = Vec::new();
    let mut rhs = Vec::new();
    for j in 0..l {
        for r in 0..deg {
            let mut row = vec![Rational64::zero(); n];
            for i in 0..l {
                row[i * deg + r] += Rational64::from_integer(m[i][j]);
            }
            for c in 0..deg {
                row[j * deg + c] -= lam.entry(r, c);
            }
            a.push(row);
            rhs.push(Rational64::zero());
        }
    }
    for r in 0..deg {
        let mut row = vec![Rational64::zero(); n];
        row[(l - 1) * deg + r] = Rational64::one();
        a.push(row);
        rhs.push(Rational64::from_integer((r == 0) as i64));
    }
    let sol = solve_rational(a, rhs)
        .ok_or_else(|| Error::InvalidRule("no exact natural lengths".into()))?;
    let den = sol
        .iter()
        .fold(1i64, |acc, q| num_integer::Integer::lcm(&acc, q.denom()));
    let lengths: Vec<ExponentVector> = (0..l)
        .map(|i| {
            ExponentVector::from_rationals(
                &sol[i * deg..(i + 1) * deg]
                    .iter()
                    .map(|q| q * den)
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    if lengths
        .iter()
        .any(|x| x.real_values(&basis)[0].is_sign_negative() || x.is_zero())
    {
        return Err(Error::InvalidRule("natural lengths are not positive".into()));
    }

    let zero = ExponentVector::zero(deg);
    let mut displacements = vec![vec![Vec::new(); l]; l];
    for (j, img) in rule.images().iter().enumerate() {
        let mut pos = zero.clone();
        for &i in img {
            displacements[i][j].push(pos.clone());
            pos = pos.add(&lengths[i]);
        }
    }
    let labels: Vec<String> = (0..l).map(|i| ((b'a' + i as u8) as char).to_string()).collect();
    let inflation = InflationRule {
        name: name.to_string(),
        dim: 1,
        expansion: ExpansionMap::new(&basis, &[&factor])?,
        basis,
        prototiles: labels
            .into_iter()
            .zip(lengths)
            .map(|(label, edges)| Prototile { label, edges })
            .collect(),
        displacements,
        stone: true,
        symbolic: Some(rule.clone()),
    };
    inflation.check()?;
    Ok(inflation)
}

/// `M^n` for an integer matrix.
pub fn matrix_power(m: &IntMatrix, n: usize) -> IntMatrix {
    let l = m.len();
    let mut acc: IntMatrix = (0..l).map(|i| (0..l).map(|j| (i == j) as i64).collect()).collect();
    for _ in 0..n {
        acc = (0..l)
            .map(|i| (0..l).map(|j| (0..l).map(|s| acc[i][s] * m[s][j]).sum()).collect())
            .collect();
    }
    acc
}

/// Exact point with integer coordinates over the unit basis.
pub fn int_point(coords: &[i64]) -> ExponentVector {
    ExponentVector::from_parts(SmallVec::from_slice(coords), 1)
}

/// ℓ¹ distance between two probability vectors.
pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

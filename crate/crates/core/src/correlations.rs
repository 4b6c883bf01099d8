//! Empirical pair correlations of inflation patches and the exact
//! renormalisation identity they satisfy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::Serialize;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::inflation::{InflationRule, Patch};
use crate::trigpoly::{ExpansionMap, ExponentVector};

const EDGE_TOL: f64 = 1e-9;

/// `(i, j, z)`: a point of type `i` at `x` and one of type `j` at `x + z`.
pub type PairKey = (u16, u16, ExponentVector);

/// Which points of a patch contribute pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    /// Only points whose whole range box is covered by the patch.
    Eroded,
    /// Every point, paired with partners inside the patch.
    Interior,
}

/// Pair-correlation coefficients `ν_ij(z)`, possibly pooled over several
/// weighted patches.
#[derive(Clone, Debug)]
pub struct PairCorrelation {
    pub types: usize,
    /// Sup-norm range of the counted displacements.
    pub range: f64,
    /// Weighted number of contributing points.
    pub window_mass: f64,
    /// Weighted contributing points per type.
    pub type_mass: Vec<f64>,
    weights: FxHashMap<PairKey, f64>,
}

impl PairCorrelation {
    /// `ν_ij(z)`; zero for displacements that do not occur.
    pub fn nu(&self, i: usize, j: usize, z: &ExponentVector) -> f64 {
        self.weights
            .get(&(i as u16, j as u16, z.clone()))
            .map_or(0.0, |&c| c / self.window_mass)
    }

    pub fn support_len(&self) -> usize {
        self.weights.len()
    }

    /// All `(i, j, z, ν)` in a canonical order.
    pub fn entries(&self) -> Vec<(usize, usize, ExponentVector, f64)> {
        let mut out: Vec<_> = self
            .weights
            .iter()
            .map(|((i, j, z), &c)| (*i as usize, *j as usize, z.clone(), c / self.window_mass))
            .collect();
        out.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));
        out
    }

    /// Largest `|ν_ij(−z) − ν_ji(z)|` over the support.
    pub fn symmetry_defect(&self) -> f64 {
        self.weights
            .keys()
            .map(|(i, j, z)| {
                let a = self.nu(*i as usize, *j as usize, z);
                let b = self.nu(*j as usize, *i as usize, &z.neg());
                (a - b).abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Uniform grid of tile indices keyed by cell coordinates.
struct CellGrid {
    cell: f64,
    cells: FxHashMap<SmallVec<[i64; 3]>, Vec<u32>>,
}

impl CellGrid {
    fn new(points: &[Vec<f64>], cell: f64) -> Self {
        let mut cells: FxHashMap<SmallVec<[i64; 3]>, Vec<u32>> = FxHashMap::default();
        for (n, p) in points.iter().enumerate() {
            let key = p.iter().map(|x| (x / cell).floor() as i64).collect();
            cells.entry(key).or_default().push(n as u32);
        }
        Self { cell, cells }
    }

    /// Calls `f` for every tile whose control point lies in `[lo, hi]`
    /// (cell-granular superset).
    fn visit(&self, lo: &[f64], hi: &[f64], mut f: impl FnMut(u32)) {
        let a: SmallVec<[i64; 3]> = lo.iter().map(|x| (x / self.cell).floor() as i64).collect();
        let b: SmallVec<[i64; 3]> = hi.iter().map(|x| (x / self.cell).floor() as i64).collect();
        let mut key = a.clone();
        loop {
            if let Some(v) = self.cells.get(&key) {
                v.iter().for_each(|&n| f(n));
            }
            let mut d = 0;
            loop {
                if d == key.len() {
                    return;
                }
                key[d] += 1;
                if key[d] <= b[d] {
                    break;
                }
                key[d] = a[d];
                d += 1;
            }
        }
    }
}

/// Counts pairs with `|z|_∞ ≤ range` from every point whose closed range box
/// is covered by patch tiles.
pub fn empirical_pair_correlation(
    rule: &InflationRule,
    patch: &Patch,
    range: f64,
) -> Result<PairCorrelation> {
    weighted_pair_correlation(rule, &[(patch, 1.0)], range, Boundary::Eroded)
}

/// Pools pair counts of several patches with the given weights.
pub fn weighted_pair_correlation(
    rule: &InflationRule,
    patches: &[(&Patch, f64)],
    range: f64,
    boundary: Boundary,
) -> Result<PairCorrelation> {
    if range.is_nan() || range < 0.0 {
        return Err(Error::InvalidParameter("range must be nonnegative".into()));
    }
    let mut weights: FxHashMap<PairKey, f64> = FxHashMap::default();
    let mut window_mass = 0.0;
    let mut type_mass = vec![0.0; rule.num_types()];
    for (patch, w) in patches {
        let (counts, window, types) = tally(rule, patch, range, boundary)?;
        for (k, c) in counts {
            *weights.entry(k).or_insert(0.0) += w * c as f64;
        }
        window_mass += w * window as f64;
        type_mass.iter_mut().zip(&types).for_each(|(m, &t)| *m += w * t as f64);
    }
    if window_mass <= 0.0 {
        return Err(Error::RangeTooLarge {
            range,
            limit: 0.0,
        });
    }
    Ok(PairCorrelation {
        types: rule.num_types(),
        range,
        window_mass,
        type_mass,
        weights,
    })
}

/// Level-`level` supertiles of every type, weighted by the type frequencies,
/// so that pooled tile counts are exactly proportional to the frequencies.
pub fn supertile_ensemble(rule: &InflationRule, level: usize) -> Result<Vec<(Patch, f64)>> {
    let pf = rule.pf_data()?;
    (0..rule.num_types())
        .map(|t| Ok((rule.inflate_patch(t, level)?, pf.frequencies[t])))
        .collect()
}

fn tally(rule: &InflationRule, patch: &Patch, range: f64, boundary: Boundary) -> Result<Tally> {
    if patch.tiles.is_empty() {
        return Err(Error::InvalidParameter("empty patch".into()));
    }
    let (lo, hi) = patch.bounding_box(rule);
    let inradius = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| (b - a) / 2.0)
        .fold(f64::INFINITY, f64::min);
    if boundary == Boundary::Eroded && range > inradius / 2.0 {
        return Err(Error::RangeTooLarge {
            range,
            limit: inradius / 2.0,
        });
    }
    let positions = rule.real_positions(patch);
    let edges = rule.edge_lengths();
    let dim = rule.dim;
    let max_edge = edges.iter().flatten().copied().fold(0.0, f64::max);
    let grid = CellGrid::new(&positions, max_edge.max(range / 4.0));
    let rho = range + EDGE_TOL;
    let full_volume = (2.0 * rho).powi(dim as i32);

    Ok((0..positions.len())
        .into_par_iter()
        .with_min_len(256)
        .fold(
            || (FxHashMap::<PairKey, u64>::default(), 0u64, vec![0u64; rule.num_types()]),
            |(mut counts, mut window, mut types), n| {
                let x = &positions[n];
                let box_lo: Vec<f64> = x.iter().map(|c| c - rho).collect();
                let box_hi: Vec<f64> = x.iter().map(|c| c + rho).collect();
                let scan_lo: Vec<f64> = box_lo.iter().map(|c| c - max_edge).collect();
                let mut covered = 0.0;
                let mut near: Vec<u32> = Vec::new();
                grid.visit(&scan_lo, &box_hi, |m| {
                    let y = &positions[m as usize];
                    if boundary == Boundary::Eroded {
                        let e = &edges[patch.tiles[m as usize].kind];
                        let mut vol = 1.0;
                        for c in 0..dim {
                            let overlap = (y[c] + e[c]).min(box_hi[c]) - y[c].max(box_lo[c]);
                            if overlap <= 0.0 {
                                vol = 0.0;
                                break;
                            }
                            vol *= overlap;
                        }
                        covered += vol;
                    }
                    if (0..dim).all(|c| (y[c] - x[c]).abs() <= rho) {
                        near.push(m);
                    }
                });
                if boundary == Boundary::Interior || covered >= full_volume * (1.0 - 1e-9) {
                    window += 1;
                    let tx = &patch.tiles[n];
                    types[tx.kind] += 1;
                    for m in near {
                        let ty = &patch.tiles[m as usize];
                        let z = ty.position.sub(&tx.position);
                        *counts.entry((tx.kind as u16, ty.kind as u16, z)).or_insert(0) += 1;
                    }
                }
                (counts, window, types)
            },
        )
        .reduce(
            || (FxHashMap::default(), 0, vec![0; rule.num_types()]),
            |a, b| if a.0.len() < b.0.len() { merge(b, a) } else { merge(a, b) },
        ))
}

type Tally = (FxHashMap<PairKey, u64>, u64, Vec<u64>);

fn merge(mut a: Tally, b: Tally) -> Tally {
    for (k, v) in b.0 {
        *a.0.entry(k).or_insert(0) += v;
    }
    a.1 += b.1;
    a.2.iter_mut().zip(&b.2).for_each(|(x, y)| *x += y);
    a
}

/// Range of `ν` needed on the right-hand side for a left-hand range `range`.
pub fn required_range(rule: &InflationRule, range: f64) -> f64 {
    let spread = 2.0 * rule.max_displacement();
    range.max((range + spread) / rule.expansion.min_factor())
}

/// Largest mismatch of the renormalisation identity
/// `ν_ij(z) = |det Q|⁻¹ Σ_{m,n} Σ_{r∈T_im} Σ_{s∈T_jn} ν_mn(Q⁻¹(z + r − s))`.
#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    pub max_residual: f64,
    /// `(i, j, z)` where the maximum occurs, `z` printed exactly.
    pub worst: Option<(usize, usize, String)>,
    pub evaluated: usize,
    pub lhs_range: f64,
    pub rhs_range: f64,
}

/// The right-hand side of the identity at `(i, j, z)`.
pub fn renormalised_value(
    rule: &InflationRule,
    inverse: &ExpansionMap,
    corr: &PairCorrelation,
    i: usize,
    j: usize,
    z: &ExponentVector,
) -> f64 {
    let l = rule.num_types();
    let mut acc = 0.0;
    for m in 0..l {
        for n in 0..l {
            for r in &rule.displacements[i][m] {
                let zr = z.add(r);
                for s in &rule.displacements[j][n] {
                    acc += corr.nu(m, n, &inverse.apply(&zr.sub(s)));
                }
            }
        }
    }
    acc / rule.expansion.det().abs()
}

/// Checks the identity at every displacement `z` with `|z|_∞ ≤ lhs_range`
/// where some `ν ≥ 10⁻⁴`, plus up to 100 further realised displacements.
pub fn renormalisation_residual(
    rule: &InflationRule,
    corr: &PairCorrelation,
    lhs_range: f64,
    seed: u64,
) -> Result<ResidualReport> {
    let rhs_range = required_range(rule, lhs_range);
    if corr.range + EDGE_TOL < rhs_range {
        return Err(Error::InsufficientRange {
            have: corr.range,
            need: rhs_range,
        });
    }
    let inverse = rule.expansion.inverse()?;
    let l = rule.num_types();
    let mut heavy: Vec<ExponentVector> = Vec::new();
    let mut light: Vec<ExponentVector> = Vec::new();
    let mut by_z: FxHashMap<&ExponentVector, f64> = FxHashMap::default();
    for (key, &c) in &corr.weights {
        let nu = c / corr.window_mass;
        let e = by_z.entry(&key.2).or_insert(0.0);
        *e = e.max(nu);
    }
    for (z, nu) in by_z {
        if z.sup_norm(&rule.basis) > lhs_range + EDGE_TOL {
            continue;
        }
        if nu >= 1e-4 {
            heavy.push(z.clone());
        } else {
            light.push(z.clone());
        }
    }
    heavy.sort();
    light.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    light.shuffle(&mut rng);
    heavy.extend(light.into_iter().take(100));

    let results: Vec<(f64, usize, usize, &ExponentVector)> = heavy
        .par_iter()
        .flat_map_iter(|z| {
            let inverse = &inverse;
            (0..l).flat_map(move |i| {
                (0..l).map(move |j| {
                    let lhs = corr.nu(i, j, z);
                    let rhs = renormalised_value(rule, inverse, corr, i, j, z);
                    ((lhs - rhs).abs(), i, j, z)
                })
            })
        })
        .collect();
    let worst = results
        .iter()
        .max_by(|a, b| a.0.partial_cmp(&b.0).expect("finite residual").then(b.3.cmp(a.3)));
    Ok(ResidualReport {
        max_residual: worst.map_or(0.0, |w| w.0),
        worst: worst.map(|w| (w.1, w.2, w.3.to_string())),
        evaluated: results.len(),
        lhs_range,
        rhs_range,
    })
}

/// Pools the frequency-weighted level-`level` supertiles, counts
/// correlations at the required range and evaluates the identity up to
/// `range`.
pub fn renormalisation_check(
    rule: &InflationRule,
    level: usize,
    range: f64,
    boundary: Boundary,
    seed: u64,
) -> Result<(PairCorrelation, ResidualReport)> {
    let ensemble = supertile_ensemble(rule, level)?;
    let refs: Vec<(&Patch, f64)> = ensemble.iter().map(|(p, w)| (p, *w)).collect();
    let corr = weighted_pair_correlation(rule, &refs, required_range(rule, range), boundary)?;
    let report = renormalisation_residual(rule, &corr, range, seed)?;
    Ok((corr, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalogue;

    #[test]
    fn fibonacci_self_pairs_and_support() {
        let rule = catalogue::fibonacci().unwrap().rule;
        let patch = rule.inflate_patch(0, 12).unwrap();
        let corr = empirical_pair_correlation(&rule, &patch, 5.0).unwrap();
        let zero = ExponentVector::zero(2);
        let total: f64 = (0..2).map(|i| corr.nu(i, i, &zero)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let golden = (5f64.sqrt() - 1.0) / 2.0;
        assert!((corr.nu(0, 0, &zero) - golden).abs() < 0.01);
        // `a` is followed by `b` at distance λ inside a level-1 supertile.
        let lam = ExponentVector::from_integers(&[0, 1]);
        assert!(corr.nu(0, 1, &lam) > 0.0);
        assert_eq!(corr.nu(0, 1, &ExponentVector::from_integers(&[0, 7])), 0.0);
        assert_eq!(corr.nu(1, 1, &ExponentVector::from_integers(&[1, 0])), 0.0);
        assert!(corr.symmetry_defect() < 0.01);
    }

    #[test]
    fn range_guard() {
        let rule = catalogue::fibonacci().unwrap().rule;
        let patch = rule.inflate_patch(0, 4).unwrap();
        assert!(matches!(
            empirical_pair_correlation(&rule, &patch, 50.0),
            Err(Error::RangeTooLarge { .. })
        ));
        let corr = empirical_pair_correlation(&rule, &patch, 1.0).unwrap();
        assert!(matches!(
            renormalisation_residual(&rule, &corr, 1.0, 0),
            Err(Error::InsufficientRange { .. })
        ));
    }
}

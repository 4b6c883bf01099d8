//! Finite Riesz-product approximations of diffraction measures.

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use num_rational::Rational64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fourier::FourierMatrix;
use crate::measures::{fejer_comb, DiracComb, LinearMap};

/// `⊛_{m<n} f^m.ν` for `f(x) = Mx` and the Fejér comb `ν` of order `M`:
/// `δ₀ + Σ_{0<|ℓ|<Mⁿ} (Mⁿ−|ℓ|)/Mⁿ δ_ℓ`.
pub fn riesz_product_comb(m: i64, n: u32) -> Result<DiracComb<Rational64>> {
    if m < 2 {
        return Err(Error::InvalidParameter("M must be at least 2".into()));
    }
    let nu = fejer_comb(m);
    let mut out = DiracComb::integer(1, &[(&[0], Rational64::from_integer(1))]);
    let mut scale = 1i64;
    for _ in 0..n {
        let layer = nu.pushforward(&LinearMap::scalar(1, scale))?;
        out = out.convolve(&layer)?;
        scale = scale
            .checked_mul(m)
            .ok_or_else(|| Error::InvalidParameter("Mⁿ overflows".into()))?;
    }
    Ok(out)
}

/// Generator of a Riesz product density.
#[derive(Clone, Debug)]
pub enum FactorFamily {
    /// `1 + 2 Σ_{ℓ<M} (M−ℓ)/M cos(2πℓ Mᵐ k)` on `ℝ`.
    Fejer { m: u32 },
    /// `(1 + cos 2π2ᵐ(k₁+a k₂)) (1 + cos 2π2ᵐk₂)` on `ℝ²`.
    Staggered { a: f64 },
    /// `‖B⁽ⁿ⁾(k) w‖² / λⁿ` with `w` the unit frequency vector and `λ = |det Q|`.
    Cocycle(CocycleDensity),
}

/// Density built from a Fourier-matrix cocycle.
#[derive(Clone, Debug)]
pub struct CocycleDensity {
    b: FourierMatrix,
    w: DVector<Complex64>,
    lambda: f64,
}

impl CocycleDensity {
    pub fn new(b: FourierMatrix, frequencies: &[f64]) -> Result<Self> {
        if frequencies.len() != b.size() {
            return Err(Error::DimensionMismatch {
                expected: b.size(),
                got: frequencies.len(),
            });
        }
        let norm = frequencies.iter().map(|f| f * f).sum::<f64>().sqrt();
        let w = DVector::from_iterator(
            frequencies.len(),
            frequencies.iter().map(|f| Complex64::new(f / norm, 0.0)),
        );
        let lambda = b.expansion().det().abs();
        Ok(CocycleDensity { b, w, lambda })
    }

    fn density(&self, n: usize, k: &[f64]) -> Result<f64> {
        if n == 0 {
            return Ok(1.0);
        }
        let m = self.b.cocycle_evaluate(k, n)?;
        Ok((m * &self.w).norm_squared() / self.lambda.powi(n as i32))
    }
}

impl FactorFamily {
    pub fn dim(&self) -> usize {
        match self {
            FactorFamily::Fejer { .. } => 1,
            FactorFamily::Staggered { .. } => 2,
            FactorFamily::Cocycle(c) => c.b.dim(),
        }
    }

    /// Linear expansion per level, used for depth selection.
    pub fn expansion(&self) -> f64 {
        match self {
            FactorFamily::Fejer { m } => *m as f64,
            FactorFamily::Staggered { .. } => 2.0,
            FactorFamily::Cocycle(c) => c.b.expansion().min_factor(),
        }
    }

    /// Largest frequency of the level-0 factor along one coordinate.
    fn base_frequency(&self) -> f64 {
        match self {
            FactorFamily::Fejer { m } => (*m - 1) as f64,
            FactorFamily::Staggered { a } => 1.0 + a.abs(),
            FactorFamily::Cocycle(c) => c
                .b
                .entries()
                .iter()
                .flatten()
                .flat_map(|p| p.terms().iter().map(|(e, _)| e.sup_norm(p.basis())))
                .fold(0.0, f64::max),
        }
    }

    /// The `m`-th factor at `k`; for cocycles the ratio of consecutive densities.
    pub fn factor(&self, m: usize, k: &[f64]) -> Result<f64> {
        self.check_dim(k)?;
        Ok(match self {
            FactorFamily::Fejer { m: base } => {
                let x = (*base as f64).powi(m as i32) * k[0];
                let mm = *base as f64;
                1.0 + 2.0
                    * (1..*base)
                        .map(|l| (mm - l as f64) / mm * (2.0 * PI * l as f64 * x).cos())
                        .sum::<f64>()
            }
            FactorFamily::Staggered { a } => {
                let s = 2f64.powi(m as i32);
                (1.0 + (2.0 * PI * s * (k[0] + a * k[1])).cos())
                    * (1.0 + (2.0 * PI * s * k[1]).cos())
            }
            FactorFamily::Cocycle(c) => {
                let prev = c.density(m, k)?;
                if prev == 0.0 {
                    0.0
                } else {
                    c.density(m + 1, k)? / prev
                }
            }
        })
    }

    /// `Π_{m<n} factor_m(k)`.
    pub fn density(&self, n: usize, k: &[f64]) -> Result<f64> {
        self.check_dim(k)?;
        match self {
            FactorFamily::Cocycle(c) => c.density(n, k),
            _ => (0..n).try_fold(1.0, |acc, m| Ok(acc * self.factor(m, k)?)),
        }
    }

    fn check_dim(&self, k: &[f64]) -> Result<()> {
        if k.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: k.len(),
            });
        }
        Ok(())
    }

    /// Deepest level whose oscillations stay below the Nyquist limit of
    /// grid spacing `h`, and whether even depth 1 is resolved.
    pub fn resolved_depth(&self, h: f64) -> (usize, bool) {
        let nyquist = 0.5 / h;
        let lambda = self.expansion();
        let mut top = self.base_frequency();
        let mut n = 0;
        while top <= nyquist && n < 64 {
            n += 1;
            top = top * lambda + self.base_frequency();
        }
        (n.max(1), n >= 1)
    }
}

/// Numerical integral with a Richardson error estimate.
#[derive(Clone, Copy, Debug)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

/// Composite trapezoid on `[a,b]` with `2·half` panels; the error compares
/// against the `half`-panel rule.
pub fn trapezoid<F>(f: F, a: f64, b: f64, half: usize) -> Result<Quadrature>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if half == 0 {
        return Err(Error::InvalidParameter("at least one panel required".into()));
    }
    let panels = 2 * half;
    let h = (b - a) / panels as f64;
    let values: Vec<f64> = (0..=panels)
        .into_par_iter()
        .map(|i| f(a + i as f64 * h))
        .collect::<Result<_>>()?;
    let fine = trapezoid_sum(&values, h);
    let coarse_values: Vec<f64> = values.iter().step_by(2).copied().collect();
    let coarse = trapezoid_sum(&coarse_values, 2.0 * h);
    Ok(Quadrature {
        value: fine + (fine - coarse) / 3.0,
        error: (fine - coarse).abs() / 3.0,
    })
}

fn trapezoid_sum(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    let inner: f64 = values[1..n - 1].iter().sum();
    h * (inner + 0.5 * (values[0] + values[n - 1]))
}

/// Density integral over the disc of radius `r` around `centre`, in polar
/// coordinates (trapezoid in the angle, Richardson-corrected in the radius).
pub fn disc_mass(
    family: &FactorFamily,
    n: usize,
    centre: [f64; 2],
    r: f64,
    radial: usize,
    angular: usize,
) -> Result<Quadrature> {
    if family.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: family.dim(),
        });
    }
    let ring = |rho: f64| -> Result<f64> {
        let dt = 2.0 * PI / angular as f64;
        let mut s = 0.0;
        for t in 0..angular {
            let th = t as f64 * dt;
            s += family.density(n, &[centre[0] + rho * th.cos(), centre[1] + rho * th.sin()])?;
        }
        Ok(s * dt * rho)
    };
    trapezoid(ring, 0.0, r, radial)
}

/// Sampled distribution function on `[0,K₁]×[0,K₂]`.
#[derive(Clone, Debug)]
pub struct Distribution {
    pub depth: usize,
    /// Whether the grid resolves every factor of the requested depth.
    pub resolved: bool,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    /// Density, row-major with `k2` as the slow index.
    pub density: Vec<f64>,
    /// Cumulative integral, same layout.
    pub cumulative: Vec<f64>,
    /// Richardson estimate of the error of the corner value.
    pub corner_error: f64,
}

impl Distribution {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.cumulative[j * self.k1.len() + i]
    }

    pub fn density_at(&self, i: usize, j: usize) -> f64 {
        self.density[j * self.k1.len() + i]
    }
}

/// Cumulative trapezoid integral of the depth-`n` density on a `cells×cells`
/// grid (`cells` even).
pub fn distribution_function(
    family: &FactorFamily,
    n: usize,
    k1_max: f64,
    k2_max: f64,
    cells: usize,
) -> Result<Distribution> {
    if family.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: family.dim(),
        });
    }
    if cells < 2 || !cells.is_multiple_of(2) {
        return Err(Error::InvalidParameter("grid cell count must be even and ≥ 2".into()));
    }
    let h1 = k1_max / cells as f64;
    let h2 = k2_max / cells as f64;
    let k1: Vec<f64> = (0..=cells).map(|i| i as f64 * h1).collect();
    let k2: Vec<f64> = (0..=cells).map(|j| j as f64 * h2).collect();
    let side = cells + 1;
    let density: Vec<f64> = (0..side * side)
        .into_par_iter()
        .map(|idx| family.density(n, &[k1[idx % side], k2[idx / side]]))
        .collect::<Result<_>>()?;
    let cumulative = cumulate(&density, side, h1, h2);
    let coarse_side = cells / 2 + 1;
    let coarse: Vec<f64> = (0..coarse_side * coarse_side)
        .map(|idx| density[2 * (idx / coarse_side) * side + 2 * (idx % coarse_side)])
        .collect();
    let coarse_corner = *cumulate(&coarse, coarse_side, 2.0 * h1, 2.0 * h2).last().unwrap();
    let corner = *cumulative.last().unwrap();
    let (max_depth, _) = family.resolved_depth(h1.max(h2));
    Ok(Distribution {
        depth: n,
        resolved: n <= max_depth,
        k1,
        k2,
        density,
        cumulative,
        corner_error: (corner - coarse_corner).abs() / 3.0,
    })
}

fn cumulate(density: &[f64], side: usize, h1: f64, h2: f64) -> Vec<f64> {
    // Trapezoid along k1 per row, then along k2 per column.
    let mut rows = vec![0.0; side * side];
    for j in 0..side {
        for i in 1..side {
            let idx = j * side + i;
            rows[idx] = rows[idx - 1] + 0.5 * h1 * (density[idx - 1] + density[idx]);
        }
    }
    let mut out = vec![0.0; side * side];
    for j in 1..side {
        for i in 0..side {
            let idx = j * side + i;
            out[idx] = out[idx - side] + 0.5 * h2 * (rows[idx - side] + rows[idx]);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trigpoly::ExponentVector;

    #[test]
    fn comb_weights_are_exact() {
        for (m, n) in [(2, 3), (3, 2), (2, 0)] {
            let comb = riesz_product_comb(m, n).unwrap();
            let top = m.pow(n);
            assert_eq!(comb.len() as i64, 2 * top - 1);
            for l in 1 - top..top {
                let w = comb.weight_at(&ExponentVector::from_integers(&[l]));
                assert_eq!(w, Rational64::new(top - l.abs(), top));
            }
        }
    }

    #[test]
    fn trivial_density_values() {
        let f = FactorFamily::Fejer { m: 2 };
        for n in 1..8 {
            assert!((f.density(n, &[0.0]).unwrap() - 2f64.powi(n as i32)).abs() < 1e-9);
            assert!(f.density(n, &[0.5]).unwrap().abs() < 1e-12);
        }
        let s = FactorFamily::Staggered { a: 3.0 };
        assert!((s.density(4, &[2.0, -1.0]).unwrap() - 256.0).abs() < 1e-8);
    }

    #[test]
    fn distribution_is_monotone_and_anchored() {
        let s = FactorFamily::Staggered { a: 0.5 };
        let d = distribution_function(&s, 3, 1.0, 1.0, 64).unwrap();
        assert!(d.resolved);
        for j in 0..=64 {
            assert_eq!(d.at(0, j), 0.0);
            assert_eq!(d.at(j, 0), 0.0);
            for i in 1..=64 {
                assert!(d.at(i, j) >= d.at(i - 1, j));
                if j > 0 {
                    assert!(d.at(i, j) >= d.at(i, j - 1));
                }
            }
        }
        assert!(distribution_function(&s, 3, 1.0, 1.0, 7).is_err());
    }
}

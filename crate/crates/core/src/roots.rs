//! Polynomial roots: balanced companion eigenvalues for moderate degree and
//! Aberth–Ehrlich iteration for high degree, followed by Newton polishing.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Degrees up to this use the companion matrix eigensolver.
pub const COMPANION_MAX_DEGREE: usize = 128;

const TAU: f64 = std::f64::consts::TAU;

/// Roots of `Σ a_k z^k` (coefficients low to high, nonzero leading coefficient).
pub fn roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let coeffs = trim(coeffs)?;
    let n = coeffs.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![-coeffs[0] / coeffs[1]]);
    }
    let mut r = if n <= COMPANION_MAX_DEGREE {
        companion_roots(coeffs)?
    } else {
        aberth_roots(coeffs, 500)?
    };
    polish(coeffs, &mut r);
    Ok(r)
}

fn trim(coeffs: &[Complex64]) -> Result<&[Complex64]> {
    let hi = coeffs
        .iter()
        .rposition(|c| c.norm() > 0.0)
        .ok_or(Error::ZeroPolynomial)?;
    Ok(&coeffs[..=hi])
}

/// Eigenvalues of the balanced companion matrix.
pub fn companion_roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let coeffs = trim(coeffs)?;
    let n = coeffs.len() - 1;
    let lead = coeffs[n];
    let mut m = DMatrix::<Complex64>::zeros(n, n);
    for i in 1..n {
        m[(i, i - 1)] = Complex64::new(1.0, 0.0);
    }
    for i in 0..n {
        m[(i, n - 1)] = -coeffs[i] / lead;
    }
    balance(&mut m);
    let schur = Schur::new(m);
    let eig = schur
        .eigenvalues()
        .ok_or_else(|| Error::Unsupported("Schur form did not converge".into()))?;
    Ok(eig.iter().copied().collect())
}

/// Parlett–Reinsch balancing with powers of two.
fn balance(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    let radix = 2.0f64;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].l1_norm();
                    r += m[(i, j)].l1_norm();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / radix;
            while c < g {
                f *= radix;
                c *= radix * radix;
            }
            g = r * radix;
            while c >= g {
                f /= radix;
                c /= radix * radix;
            }
            if (c + r) / f < 0.95 * s {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// Value and derivative ratio `p(z)/p'(z)`, evaluated stably for `|z| > 1`
/// through the reversed polynomial.
fn newton_ratio(coeffs: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let n = coeffs.len() - 1;
    if z.norm() <= 1.0 {
        let mut p = coeffs[n];
        let mut dp = Complex64::new(0.0, 0.0);
        for c in coeffs[..n].iter().rev() {
            dp = dp * z + p;
            p = p * z + c;
        }
        (p / dp, p)
    } else {
        let w = z.inv();
        // rev(w) = Σ a_k w^{n-k}
        let mut r = coeffs[0];
        let mut dr = Complex64::new(0.0, 0.0);
        for c in &coeffs[1..] {
            dr = dr * w + r;
            r = r * w + c;
        }
        // p/p' = z·rev / (n·rev − w·rev')
        let ratio = z * r / (r * n as f64 - w * dr);
        // Scaled value `p(z) / z^n`, only used to detect exact zeros.
        (ratio, r)
    }
}

fn initial_guesses(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let pts: Vec<(usize, f64)> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.norm() > 0.0)
        .map(|(k, c)| (k, c.norm().ln()))
        .collect();
    // Upper convex hull of (k, log|a_k|).
    let mut hull: Vec<(usize, f64)> = Vec::new();
    for &p in &pts {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (b.0 as f64 - a.0 as f64) * (p.1 - a.1) - (b.1 - a.1) * (p.0 as f64 - a.0 as f64);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(p);
    }
    let mut out = Vec::with_capacity(n);
    // Roots of a polynomial with a_0 = 0 at the origin are split off by the caller,
    // but guard anyway.
    let zeros_at_origin = pts.first().map_or(0, |p| p.0);
    for _ in 0..zeros_at_origin {
        out.push(Complex64::new(0.0, 0.0));
    }
    for (e, w) in hull.windows(2).enumerate() {
        let (k0, l0) = w[0];
        let (k1, l1) = w[1];
        let count = k1 - k0;
        let radius = ((l0 - l1) / count as f64).exp();
        for j in 0..count {
            let angle = TAU * j as f64 / count as f64 + TAU * e as f64 / n as f64 + 0.7;
            out.push(Complex64::from_polar(radius, angle));
        }
    }
    out
}

/// Aberth–Ehrlich simultaneous iteration.
pub fn aberth_roots(coeffs: &[Complex64], max_iter: usize) -> Result<Vec<Complex64>> {
    let coeffs = trim(coeffs)?;
    let n = coeffs.len() - 1;
    let mut z = initial_guesses(coeffs);
    debug_assert_eq!(z.len(), n);
    let mut done = vec![false; n];
    for _ in 0..max_iter {
        let snapshot = z.clone();
        let updates: Vec<Option<Complex64>> = (0..n)
            .into_par_iter()
            .with_min_len(64)
            .map(|i| {
                if done[i] {
                    return None;
                }
                let zi = snapshot[i];
                let (ratio, value) = newton_ratio(coeffs, zi);
                if value.norm() == 0.0 {
                    return Some(Complex64::new(0.0, 0.0));
                }
                let s: Complex64 = snapshot
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, zj)| (zi - zj).inv())
                    .sum();
                Some(ratio / (Complex64::new(1.0, 0.0) - ratio * s))
            })
            .collect();
        let mut all_done = true;
        for (i, u) in updates.into_iter().enumerate() {
            if let Some(step) = u {
                if step.is_finite() {
                    z[i] -= step;
                }
                if step.norm() <= 1e-15 * z[i].norm().max(1e-300) || !step.is_finite() {
                    done[i] = true;
                } else {
                    all_done = false;
                }
            }
        }
        if all_done {
            return Ok(z);
        }
    }
    if done.iter().filter(|d| !**d).count() > 0 {
        // Remaining roots are accepted if their Newton step is already tiny.
        let worst = (0..n)
            .filter(|&i| !done[i])
            .map(|i| (newton_ratio(coeffs, z[i]).0 / z[i].norm().max(1.0)).norm())
            .fold(0.0, f64::max);
        if worst > 1e-8 {
            return Err(Error::ToleranceUnattainable {
                tol: 1e-8,
                reached: worst,
            });
        }
    }
    Ok(z)
}

/// A few Newton steps on roots near the unit circle, where the log-measure
/// is most sensitive.
fn polish(coeffs: &[Complex64], roots: &mut [Complex64]) {
    roots.par_iter_mut().for_each(|z| {
        if (z.norm() - 1.0).abs() < 1e-2 {
            for _ in 0..3 {
                let (step, _) = newton_ratio(coeffs, *z);
                if !step.is_finite() || step.norm() > 1e-6 {
                    break;
                }
                *z -= step;
            }
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn sorted_moduli(r: &[Complex64]) -> Vec<f64> {
        let mut v: Vec<f64> = r.iter().map(|z| z.norm()).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn simple_roots() {
        let r = roots(&[c(-1.0), c(0.0), c(0.0), c(0.0), c(1.0)]).unwrap();
        assert_eq!(r.len(), 4);
        for z in &r {
            assert!((z.powi(4) - c(1.0)).norm() < 1e-12);
        }
        let r = roots(&[c(6.0), c(-5.0), c(1.0)]).unwrap();
        let m = sorted_moduli(&r);
        assert!((m[0] - 2.0).abs() < 1e-12 && (m[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn aberth_agrees_with_companion() {
        // Product of (z - r_i) with known roots.
        let want: Vec<Complex64> = (0..40)
            .map(|i| Complex64::from_polar(0.5 + 0.03 * i as f64, 0.37 * i as f64))
            .collect();
        let mut poly = vec![c(1.0)];
        for r in &want {
            let mut next = vec![c(0.0); poly.len() + 1];
            for (k, a) in poly.iter().enumerate() {
                next[k + 1] += a;
                next[k] -= a * r;
            }
            poly = next;
        }
        let a = sorted_moduli(&aberth_roots(&poly, 500).unwrap());
        let b = sorted_moduli(&companion_roots(&poly).unwrap());
        let w = sorted_moduli(&want);
        for i in 0..40 {
            assert!((a[i] - w[i]).abs() < 1e-6, "aberth {i}: {} vs {}", a[i], w[i]);
            assert!((b[i] - w[i]).abs() < 1e-6, "companion {i}: {} vs {}", b[i], w[i]);
        }
    }

    #[test]
    fn high_degree_cyclotomic() {
        let n = 1000;
        let mut poly = vec![c(0.0); n + 1];
        poly[0] = c(-1.0);
        poly[n] = c(1.0);
        let r = roots(&poly).unwrap();
        assert_eq!(r.len(), n);
        for z in &r {
            assert!((z.norm() - 1.0).abs() < 1e-10);
        }
    }
}

//! Logarithmic Mahler measures and log-means of trigonometric polynomials.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::qmc::{self, QmcOptions};
use crate::roots;
use crate::trigpoly::{GenTrigPoly, TorusPoly};

/// Lower clip applied to `log|p|` in pure quadrature.
pub const LOG_CLIP: f64 = -40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MahlerMethod {
    JensenExact,
    IteratedJensen,
    QmcTorus,
    Birkhoff,
}

impl MahlerMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            MahlerMethod::JensenExact => "jensen-exact",
            MahlerMethod::IteratedJensen => "iterated-jensen",
            MahlerMethod::QmcTorus => "qmc-torus",
            MahlerMethod::Birkhoff => "birkhoff",
        }
    }
}

/// Value with error estimate and the method that produced it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MahlerResult {
    pub value: f64,
    pub error: f64,
    pub method: MahlerMethod,
    /// Fraction of quadrature nodes where `log|p|` was clipped (pure quadrature only).
    pub clipped: f64,
}

/// `𝔪(p) = log|a_n| + Σ log max(1, |α_i|)` for `p = Σ a_k z^k` (low to high).
/// Leading zeros at either end are allowed; low-order zeros are monomial
/// factors and contribute nothing.
pub fn mahler_univariate(coeffs: &[Complex64]) -> Result<MahlerResult> {
    let lo = coeffs
        .iter()
        .position(|c| c.norm() > 0.0)
        .ok_or(Error::ZeroPolynomial)?;
    let hi = coeffs.iter().rposition(|c| c.norm() > 0.0).expect("nonzero");
    let p = &coeffs[lo..=hi];
    let lead = p[p.len() - 1].norm().ln();
    if p.len() == 1 {
        return Ok(MahlerResult {
            value: lead,
            error: 0.0,
            method: MahlerMethod::JensenExact,
            clipped: 0.0,
        });
    }
    let rs = roots::roots(p)?;
    let value = lead + rs.iter().map(|z| z.norm().ln().max(0.0)).sum::<f64>();
    // Roots are accurate to roughly machine precision scaled by the degree.
    let error = f64::EPSILON * (p.len() as f64) * (1.0 + value.abs());
    Ok(MahlerResult {
        value,
        error,
        method: MahlerMethod::JensenExact,
        clipped: 0.0,
    })
}

/// Mahler measure of a univariate trigonometric polynomial with integer exponents.
pub fn mahler_laurent(p: &GenTrigPoly) -> Result<MahlerResult> {
    if p.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let (_, coeffs) = p.laurent_coefficients().ok_or_else(|| {
        Error::Unsupported("univariate Jensen needs integer exponents in one variable".into())
    })?;
    mahler_univariate(&coeffs)
}

/// Mean of `log|p|` on `n` equispaced points of the circle via FFT; the
/// error estimate compares against the even-indexed half of the nodes.
pub fn log_mean_fft(coeffs: &[Complex64], n: usize) -> Result<MahlerResult> {
    if coeffs.iter().all(|c| c.norm() == 0.0) {
        return Err(Error::ZeroPolynomial);
    }
    if n < 4 || !n.is_power_of_two() {
        return Err(Error::InvalidParameter("FFT size must be a power of two ≥ 4".into()));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (k, c) in coeffs.iter().enumerate() {
        buf[k % n] += c;
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let mut clipped = 0usize;
    let logs: Vec<f64> = buf
        .iter()
        .map(|v| {
            let l = v.norm().ln();
            if l < LOG_CLIP {
                clipped += 1;
                LOG_CLIP
            } else {
                l
            }
        })
        .collect();
    let full = logs.iter().sum::<f64>() / n as f64;
    let half = logs.iter().step_by(2).sum::<f64>() / (n / 2) as f64;
    Ok(MahlerResult {
        value: full,
        error: (full - half).abs(),
        method: MahlerMethod::QmcTorus,
        clipped: clipped as f64 / n as f64,
    })
}

/// Plan for iterated Jensen on a torus polynomial: the inner variable and
/// the compressed outer variables.
struct JensenPlan {
    outer: Vec<usize>,
    /// (inner exponent offset, outer exponents, coefficient)
    terms: Vec<(usize, Vec<i64>, Complex64)>,
    degree: usize,
}

impl JensenPlan {
    fn new(p: &TorusPoly) -> Result<Self> {
        if p.terms.is_empty() {
            return Err(Error::ZeroPolynomial);
        }
        let active = p.active_vars();
        // Highest degree span; ties go to the lowest index.
        let inner = active
            .iter()
            .copied()
            .max_by(|&a, &b| p.degree_span(a).cmp(&p.degree_span(b)).then(b.cmp(&a)));
        let inner_lo = inner.map_or(0, |v| p.terms.iter().map(|(e, _)| e[v]).min().unwrap_or(0));
        let outer: Vec<usize> = active.iter().copied().filter(|&v| Some(v) != inner).collect();
        let terms = p
            .terms
            .iter()
            .map(|(e, c)| {
                let off = inner.map_or(0, |v| (e[v] - inner_lo) as usize);
                (off, outer.iter().map(|&v| e[v]).collect(), *c)
            })
            .collect();
        Ok(Self {
            degree: inner.map_or(0, |v| p.degree_span(v) as usize),
            outer,
            terms,
        })
    }

    /// `𝔪` of the univariate slice at outer coordinates `u`.
    fn slice_measure(&self, u: &[f64]) -> f64 {
        let mut coeffs = vec![Complex64::new(0.0, 0.0); self.degree + 1];
        for (off, e, c) in &self.terms {
            let phase: f64 = e.iter().zip(u).map(|(&a, x)| a as f64 * x).sum();
            coeffs[*off] += c * Complex64::cis(std::f64::consts::TAU * phase);
        }
        // Leading coefficients that cancel to rounding level are dropped.
        let scale: f64 = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        for c in coeffs.iter_mut() {
            if c.norm() < 1e-14 * scale {
                *c = Complex64::new(0.0, 0.0);
            }
        }
        match mahler_univariate(&coeffs) {
            Ok(r) => r.value,
            Err(_) => LOG_CLIP,
        }
    }
}

/// `∫ log|p|` over the torus by exact Jensen in one variable and a lattice
/// rule over the remaining ones.
pub fn mahler_torus(p: &TorusPoly, opts: &QmcOptions) -> Result<MahlerResult> {
    let plan = JensenPlan::new(p)?;
    if plan.outer.is_empty() {
        let r = plan.slice_measure(&[]);
        return Ok(MahlerResult {
            value: r,
            error: 0.0,
            method: MahlerMethod::JensenExact,
            clipped: 0.0,
        });
    }
    let est = qmc::integrate(plan.outer.len(), |u| plan.slice_measure(u), opts)?;
    Ok(MahlerResult {
        value: est.value,
        error: est.error,
        method: MahlerMethod::IteratedJensen,
        clipped: 0.0,
    })
}

/// Mahler measure of a periodic polynomial (integer exponents, unit basis).
pub fn mahler_multivariate(p: &GenTrigPoly, opts: &QmcOptions) -> Result<MahlerResult> {
    if p.basis().rank() != 1 || !p.is_integral() {
        return Err(Error::Unsupported(
            "multivariate Mahler measure needs integer exponents; use quasiperiodic_log_mean"
                .into(),
        ));
    }
    mahler_torus(&p.torus_lift(), opts)
}

/// Mean of `log|p|` for a polynomial over a rationally independent basis,
/// computed on the lifted torus.
pub fn quasiperiodic_log_mean(p: &GenTrigPoly, opts: &QmcOptions) -> Result<MahlerResult> {
    if !p.basis().is_independent() {
        return Err(Error::DependentGenerators);
    }
    mahler_torus(&p.torus_lift(), opts)
}

/// Mean of `log f` over `[0,1)^dim` by pure lattice quadrature, for a
/// nonnegative `f` given numerically. `log f` is clipped at [`LOG_CLIP`].
pub fn log_mean_qmc<F>(dim: usize, f: F, opts: &QmcOptions) -> Result<MahlerResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let clip_count = std::sync::atomic::AtomicUsize::new(0);
    let total = std::sync::atomic::AtomicUsize::new(0);
    let est = qmc::integrate(
        dim,
        |u| {
            total.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
            let l = f(u).ln();
            if l < LOG_CLIP || l.is_nan() {
                clip_count.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                LOG_CLIP
            } else {
                l
            }
        },
        opts,
    )?;
    let clipped = clip_count.into_inner() as f64 / total.into_inner().max(1) as f64;
    Ok(MahlerResult {
        value: est.value,
        error: est.error,
        method: MahlerMethod::QmcTorus,
        clipped,
    })
}

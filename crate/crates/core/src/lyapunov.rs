//! Maximal Lyapunov exponents of Fourier cocycles, upper-bound ladders and
//! the singularity verdict.
//!
//! Cocycles are evaluated on the lifted torus `T^{d·m}`, where the expansion
//! acts through the transposed multiplier matrices. Birkhoff orbits are
//! iterated exactly on the grid `(Z/P)^{d·m}` so that expanding maps such as
//! doubling do not collapse in floating point.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fourier::{binary_block_decomposition, CMatrix, FourierMatrix};
use crate::inflation::InflationRule;
use crate::mahler::{self, MahlerMethod, MahlerResult};
use crate::qmc::QmcOptions;

/// Prime modulus of the exact orbit grid; `(P-1)/2` is prime as well.
pub const ORBIT_MODULUS: u64 = 4_611_686_018_427_377_339;

/// Products are renormalised at least this often.
pub const RENORM_INTERVAL: usize = 32;

const TAU: f64 = std::f64::consts::TAU;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Clone, Debug)]
struct Term {
    cell: usize,
    exponents: Vec<i64>,
    coeff: Complex64,
}

/// Fourier matrix compiled for evaluation on the lifted torus.
///
/// Torus variable `v = j·m + r` carries `g_r k_j / scale`, so every term is
/// `c·exp(2πi ⟨n, w⟩)` with an integer vector `n`.
#[derive(Clone, Debug)]
pub struct CompiledFourier {
    size: usize,
    dim: usize,
    rank: usize,
    scale: i64,
    generators: Vec<f64>,
    terms: Vec<Term>,
    /// Per spatial coordinate, `Aᵀ` row-major (`rank × rank`).
    transposed: Vec<Vec<i64>>,
}

impl CompiledFourier {
    pub fn new(b: &FourierMatrix) -> Result<Self> {
        if b.steps() != 1 {
            return Err(Error::Unsupported(
                "compile the one-step matrix; cocycles are formed on the torus".into(),
            ));
        }
        let size = b.size();
        let rank = b.basis().rank();
        let scale = b
            .entries()
            .iter()
            .flatten()
            .flat_map(|e| e.terms().iter().map(|(x, _)| x.denominator()))
            .fold(1i64, |acc, d| acc.lcm(&d));
        let mut terms = Vec::new();
        for (i, row) in b.entries().iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                for (x, c) in e.terms() {
                    let lift = scale / x.denominator();
                    terms.push(Term {
                        cell: i + j * size,
                        exponents: x.numerators().iter().map(|a| a * lift).collect(),
                        coeff: *c,
                    });
                }
            }
        }
        let transposed = b
            .expansion()
            .factors()
            .iter()
            .map(|f| {
                let a = f.integer_entries().ok_or_else(|| {
                    Error::Unsupported(format!(
                        "multiplier `{}` is not integral; no torus map",
                        f.name()
                    ))
                })?;
                Ok((0..rank)
                    .flat_map(|r| (0..rank).map(move |s| a[s * rank + r]))
                    .collect())
            })
            .collect::<Result<Vec<Vec<i64>>>>()?;
        Ok(Self {
            size,
            dim: b.dim(),
            rank,
            scale,
            generators: b.basis().values().to_vec(),
            terms,
            transposed,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Number of torus variables `d·m`.
    pub fn nvars(&self) -> usize {
        self.dim * self.rank
    }

    /// Torus coordinates of a physical wave vector `k`.
    pub fn lift(&self, k: &[f64]) -> Vec<f64> {
        k.iter()
            .flat_map(|kj| {
                self.generators.iter().map(move |g| {
                    let x = g * kj / self.scale as f64;
                    x - x.floor()
                })
            })
            .collect()
    }

    /// `B` at torus point `w`, written into `out`.
    pub fn evaluate_torus(&self, w: &[f64], out: &mut CMatrix) {
        out.fill(Complex64::new(0.0, 0.0));
        let slice = out.as_mut_slice();
        for t in &self.terms {
            let phase: f64 = t.exponents.iter().zip(w).map(|(&n, x)| n as f64 * x).sum();
            slice[t.cell] += t.coeff * Complex64::cis(TAU * (phase - phase.floor()));
        }
    }

    /// `w ← Aᵀ w mod 1`.
    pub fn step_torus(&self, w: &mut [f64]) {
        let m = self.rank;
        let mut buf = vec![0.0; m];
        for (j, at) in self.transposed.iter().enumerate() {
            let block = &mut w[j * m..(j + 1) * m];
            for (r, b) in buf.iter_mut().enumerate() {
                let x: f64 = (0..m).map(|s| at[r * m + s] as f64 * block[s]).sum();
                *b = x - x.floor();
            }
            block.copy_from_slice(&buf);
        }
    }

    /// `B^{(n)}` at torus point `w` (no renormalisation; moderate `n` only).
    pub fn cocycle_torus(&self, w: &[f64], n: usize) -> CMatrix {
        let mut point = w.to_vec();
        let mut acc = CMatrix::identity(self.size, self.size);
        let mut b = CMatrix::zeros(self.size, self.size);
        let mut tmp = CMatrix::zeros(self.size, self.size);
        for step in 0..n {
            if step > 0 {
                self.step_torus(&mut point);
            }
            self.evaluate_torus(&point, &mut b);
            acc.mul_to(&b, &mut tmp);
            std::mem::swap(&mut acc, &mut tmp);
        }
        acc
    }

    /// Grid point nearest to torus point `w`.
    fn to_grid(&self, w: &[f64]) -> Vec<u64> {
        w.iter()
            .map(|x| ((x * ORBIT_MODULUS as f64) as u64).min(ORBIT_MODULUS - 1))
            .collect()
    }

    fn evaluate_grid(&self, a: &[u64], out: &mut CMatrix) {
        let p = ORBIT_MODULUS as i128;
        out.fill(Complex64::new(0.0, 0.0));
        let slice = out.as_mut_slice();
        for t in &self.terms {
            let x: i128 = t
                .exponents
                .iter()
                .zip(a)
                .map(|(&n, &v)| (n as i128 * v as i128).rem_euclid(p))
                .sum::<i128>()
                .rem_euclid(p);
            slice[t.cell] += t.coeff * Complex64::cis(TAU * (x as f64 / ORBIT_MODULUS as f64));
        }
    }

    fn step_grid(&self, a: &mut [u64]) {
        let p = ORBIT_MODULUS as i128;
        let m = self.rank;
        let mut buf = vec![0u64; m];
        for (j, at) in self.transposed.iter().enumerate() {
            let block = &mut a[j * m..(j + 1) * m];
            for (r, b) in buf.iter_mut().enumerate() {
                let x: i128 = (0..m)
                    .map(|s| (at[r * m + s] as i128 * block[s] as i128).rem_euclid(p))
                    .sum();
                *b = x.rem_euclid(p) as u64;
            }
            block.copy_from_slice(&buf);
        }
    }

    /// `(1/n) log ‖B^{(n)}‖_F` along the exact orbit of grid point `a`.
    fn orbit_exponent(&self, mut a: Vec<u64>, n: usize) -> Result<f64> {
        let l = self.size;
        let mut acc = CMatrix::identity(l, l);
        let mut b = CMatrix::zeros(l, l);
        let mut tmp = CMatrix::zeros(l, l);
        let mut logs = CompensatedSum::default();
        for step in 0..n {
            self.evaluate_grid(&a, &mut b);
            acc.mul_to(&b, &mut tmp);
            std::mem::swap(&mut acc, &mut tmp);
            self.step_grid(&mut a);
            let largest = acc.iter().map(|z| z.l1_norm()).fold(0.0, f64::max);
            if (step + 1) % RENORM_INTERVAL == 0 || step + 1 == n || !(1e-150..=1e150).contains(&largest) {
                let norm = acc.norm();
                if !norm.is_finite() || norm == 0.0 {
                    return Err(Error::Overflow);
                }
                acc /= Complex64::new(norm, 0.0);
                logs.add(norm.ln());
            }
        }
        Ok(logs.value() / n as f64)
    }

    /// Time average of `log ‖B(T^j w)‖²_F` along the exact orbit of `a`.
    fn orbit_log_frobenius(&self, mut a: Vec<u64>, n: usize) -> f64 {
        let l = self.size;
        let mut b = CMatrix::zeros(l, l);
        let mut logs = CompensatedSum::default();
        for _ in 0..n {
            self.evaluate_grid(&a, &mut b);
            logs.add(b.norm_squared().ln().max(mahler::LOG_CLIP));
            self.step_grid(&mut a);
        }
        logs.value() / n as f64
    }
}

/// Mean of per-sample exponents with its standard error.
#[derive(Clone, Debug, Serialize)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub iterations: usize,
    pub seed: u64,
    /// `(k₀, estimate)` per sample, in sample order.
    pub per_sample: Vec<(Vec<f64>, f64)>,
}

impl LyapunovEstimate {
    fn from_samples(per_sample: Vec<(Vec<f64>, f64)>, iterations: usize, seed: u64) -> Self {
        let n = per_sample.len();
        let mean = per_sample.iter().map(|s| s.1).sum::<f64>() / n as f64;
        let var = if n > 1 {
            per_sample.iter().map(|s| (s.1 - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            value: mean,
            std_error: (var / n as f64).sqrt(),
            samples: n,
            iterations,
            seed,
            per_sample,
        }
    }
}

/// Options for Birkhoff sampling.
#[derive(Clone, Debug)]
pub struct BirkhoffOptions {
    pub samples: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for BirkhoffOptions {
    fn default() -> Self {
        Self {
            samples: 64,
            iterations: 2000,
            seed: 0x00c0_cc1e,
        }
    }
}

/// Uniform starting point for sample `index`; coordinates that are small
/// rationals are redrawn.
pub fn sample_start(seed: u64, index: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    loop {
        let k: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>()).collect();
        let small_rational = k.iter().all(|x| {
            let y = x * 720_720.0;
            (y - y.round()).abs() < 1e-9
        });
        if !small_rational {
            return k;
        }
    }
}

/// `(1/n) log ‖B^{(n)}(k₀)‖_F` from one starting point.
pub fn birkhoff_at(b: &FourierMatrix, k0: &[f64], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("at least one iteration".into()));
    }
    let c = CompiledFourier::new(b)?;
    if k0.len() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: b.dim(),
            got: k0.len(),
        });
    }
    c.orbit_exponent(c.to_grid(&c.lift(k0)), n)
}

/// Maximal Lyapunov exponent averaged over seeded random starting points.
pub fn birkhoff_exponent(b: &FourierMatrix, opts: &BirkhoffOptions) -> Result<LyapunovEstimate> {
    if opts.iterations == 0 || opts.samples == 0 {
        return Err(Error::InvalidParameter(
            "samples and iterations must be positive".into(),
        ));
    }
    let c = CompiledFourier::new(b)?;
    let per_sample = (0..opts.samples as u64)
        .into_par_iter()
        .map(|i| {
            let k = sample_start(opts.seed, i, b.dim());
            let v = c.orbit_exponent(c.to_grid(&c.lift(&k)), opts.iterations)?;
            Ok((k, v))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LyapunovEstimate::from_samples(per_sample, opts.iterations, opts.seed))
}

/// Orbit average of `log ‖B‖²_F`, an ergodic estimate of its torus mean.
pub fn birkhoff_log_frobenius(
    b: &FourierMatrix,
    opts: &BirkhoffOptions,
) -> Result<LyapunovEstimate> {
    let c = CompiledFourier::new(b)?;
    let per_sample = (0..opts.samples as u64)
        .into_par_iter()
        .map(|i| {
            let k = sample_start(opts.seed, i, b.dim());
            let v = c.orbit_log_frobenius(c.to_grid(&c.lift(&k)), opts.iterations);
            (k, v)
        })
        .collect();
    Ok(LyapunovEstimate::from_samples(per_sample, opts.iterations, opts.seed))
}

/// What the ladder values bound.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundConvention {
    /// `m_N = 𝔪(‖B^{(N)}‖²_F) / (2N)` bounds `χ`.
    Chi,
    /// `m_N = M(log ‖B^{(N)}‖²_F) / N` bounds `2χ`.
    TwoChi,
}

impl BoundConvention {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundConvention::Chi => "chi",
            BoundConvention::TwoChi => "two-chi",
        }
    }

    /// Factor turning a ladder value into a bound on `χ`.
    pub fn chi_factor(self) -> f64 {
        match self {
            BoundConvention::Chi => 1.0,
            BoundConvention::TwoChi => 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct LadderRung {
    pub n: usize,
    pub value: f64,
    pub error: f64,
    pub method: MahlerMethod,
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundLadder {
    pub convention: BoundConvention,
    pub rungs: Vec<LadderRung>,
}

impl BoundLadder {
    /// Smallest `χ` bound (value plus error) over all rungs.
    pub fn best_chi_bound(&self) -> Option<ChiBound> {
        let f = self.convention.chi_factor();
        self.rungs
            .iter()
            .min_by(|a, b| {
                (a.value + a.error)
                    .partial_cmp(&(b.value + b.error))
                    .expect("finite ladder")
            })
            .map(|r| ChiBound {
                label: format!("m_{} ladder ({})", r.n, self.convention.as_str()),
                value: f * r.value,
                error: f * r.error,
                rigorous: true,
            })
    }

    /// Pairs `(M, N)` violating `(M+N) m_{M+N} ≤ M m_M + N m_N + ε`, with `ε`
    /// the combined weighted error plus `slack`.
    pub fn subadditivity_violations(&self, slack: f64) -> Vec<(usize, usize)> {
        let find = |n: usize| self.rungs.iter().find(|r| r.n == n);
        let mut out = Vec::new();
        for a in &self.rungs {
            for b in &self.rungs {
                if a.n > b.n {
                    continue;
                }
                if let Some(c) = find(a.n + b.n) {
                    let (m, n, s) = (a.n as f64, b.n as f64, c.n as f64);
                    let eps = m * a.error + n * b.error + s * c.error + slack;
                    if s * c.value > m * a.value + n * b.value + eps {
                        out.push((a.n, b.n));
                    }
                }
            }
        }
        out
    }

    /// Whether consecutive rungs never increase by more than `sigmas`
    /// combined errors.
    pub fn is_non_increasing(&self, sigmas: f64) -> bool {
        self.rungs
            .windows(2)
            .all(|w| w[1].value <= w[0].value + sigmas * (w[0].error + w[1].error))
    }

    /// Short description of the ladder's trend for reports.
    pub fn trend(&self) -> String {
        match self.rungs.as_slice() {
            [] => "empty ladder".into(),
            [only] => format!("single rung m_{} = {:.6}", only.n, only.value),
            [.., prev, last] => format!(
                "m_{} = {:.6}, last decrement {:.6}, {}",
                last.n,
                last.value,
                prev.value - last.value,
                if self.is_non_increasing(3.0) {
                    "non-increasing"
                } else {
                    "not monotone"
                }
            ),
        }
    }
}

/// Options for [`upper_bound_ladder`].
#[derive(Clone, Debug)]
pub struct LadderOptions {
    pub max_n: usize,
    pub qmc: QmcOptions,
    /// Exact roots are used up to this Laurent span; FFT quadrature always.
    pub roots_max_degree: usize,
    /// Minimum FFT size for univariate log-means.
    pub fft_points: usize,
}

impl Default for LadderOptions {
    fn default() -> Self {
        Self {
            max_n: 6,
            qmc: QmcOptions {
                start_nodes: 1 << 16,
                tol: f64::INFINITY,
                ..Default::default()
            },
            roots_max_degree: 20_000,
            fft_points: 1 << 22,
        }
    }
}

fn is_univariate_periodic(b: &FourierMatrix) -> bool {
    b.dim() == 1 && b.basis().rank() == 1 && b.expansion().is_integral()
}

/// `m_N` for `N = 1..=max_n`.
///
/// Univariate periodic matrices use the exact polynomial
/// `p_N = ‖B^{(N)}‖²_F` with Jensen's formula cross-checked by FFT
/// quadrature (convention [`BoundConvention::Chi`]). Otherwise the torus mean
/// of `log ‖B^{(N)}‖²_F` is integrated by lattice rules
/// ([`BoundConvention::TwoChi`]), exactly in one variable for `N = 1`.
pub fn upper_bound_ladder(b: &FourierMatrix, opts: &LadderOptions) -> Result<BoundLadder> {
    if opts.max_n == 0 {
        return Err(Error::InvalidParameter("max_n must be at least 1".into()));
    }
    if is_univariate_periodic(b) {
        let rungs = (1..=opts.max_n)
            .map(|n| univariate_rung(b, n, opts))
            .collect::<Result<_>>()?;
        return Ok(BoundLadder {
            convention: BoundConvention::Chi,
            rungs,
        });
    }
    if !b.basis().is_independent() {
        return Err(Error::DependentGenerators);
    }
    let compiled = CompiledFourier::new(b)?;
    let mut rungs = Vec::with_capacity(opts.max_n);
    for n in 1..=opts.max_n {
        let r = if n == 1 {
            mahler::quasiperiodic_log_mean(&b.frobenius_sq()?, &opts.qmc)?
        } else {
            mahler::log_mean_qmc(
                compiled.nvars(),
                |w| compiled.cocycle_torus(w, n).norm_squared(),
                &opts.qmc,
            )?
        };
        rungs.push(LadderRung {
            n,
            value: r.value / n as f64,
            error: r.error / n as f64,
            method: r.method,
        });
    }
    Ok(BoundLadder {
        convention: BoundConvention::TwoChi,
        rungs,
    })
}

fn univariate_rung(b: &FourierMatrix, n: usize, opts: &LadderOptions) -> Result<LadderRung> {
    let p = b.cocycle_symbolic(n)?.frobenius_sq()?;
    let (_, coeffs) = p
        .laurent_coefficients()
        .ok_or_else(|| Error::Unsupported("ladder polynomial is not univariate".into()))?;
    let span = coeffs.len() - 1;
    // Near-zeros of p_N slow the trapezoid rule down; oversample generously.
    let points = opts
        .fft_points
        .max((512 * (span + 1)).next_power_of_two())
        .min(1 << 24);
    let fft = mahler::log_mean_fft(&coeffs, points)?;
    let (value, error, method) = if span <= opts.roots_max_degree {
        let exact = mahler::mahler_univariate(&coeffs)?;
        let gap = (exact.value - fft.value).abs();
        (exact.value, exact.error.max(gap), MahlerMethod::JensenExact)
    } else {
        (fft.value, fft.error, MahlerMethod::QmcTorus)
    };
    let scale = 2.0 * n as f64;
    Ok(LadderRung {
        n,
        value: value / scale,
        error: error / scale,
        method,
    })
}

/// A bound (or estimate) for the maximal exponent `χ`.
#[derive(Clone, Debug, Serialize)]
pub struct ChiBound {
    pub label: String,
    pub value: f64,
    pub error: f64,
    /// Upper bound up to quadrature error, as opposed to an estimate.
    pub rigorous: bool,
}

impl ChiBound {
    pub fn from_estimate(label: &str, est: &LyapunovEstimate, sigmas: f64) -> Self {
        Self {
            label: label.to_string(),
            value: est.value,
            error: sigmas * est.std_error,
            rigorous: false,
        }
    }

    fn upper(&self) -> f64 {
        self.value + self.error
    }
}

/// Exact maximal exponent of a binary block rule: the larger of `𝔪(p)`
/// and `𝔪(q − r)`.
pub fn binary_block_bound(rule: &InflationRule, qmc: &QmcOptions) -> Result<ChiBound> {
    let d = binary_block_decomposition(rule)?;
    let diff = &d.same - &d.swapped;
    if diff.is_zero() {
        return Err(Error::ZeroPolynomial);
    }
    let m_diff = mahler::mahler_multivariate(&diff, qmc)?;
    let m_full = mahler::mahler_multivariate(&d.full, qmc)?;
    let pick = |r: MahlerResult, label: &str| ChiBound {
        label: label.into(),
        value: r.value,
        error: r.error,
        rigorous: true,
    };
    Ok(if m_diff.value >= m_full.value {
        pick(m_diff, "Mahler measure of q - r")
    } else {
        pick(m_full, "Mahler measure of p")
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Conclusion {
    SingularDiffraction,
    Inconclusive,
    Inapplicable,
}

impl Conclusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Conclusion::SingularDiffraction => "singular-diffraction",
            Conclusion::Inconclusive => "inconclusive",
            Conclusion::Inapplicable => "inapplicable",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    /// `½ log |det Q|`.
    pub threshold: f64,
    pub bound: Option<ChiBound>,
    pub conclusion: Conclusion,
    /// `threshold − (bound + error)`; positive when singularity is shown.
    pub margin: f64,
    pub trend: Option<String>,
    pub explanation: String,
}

/// Whether `det B(k)` vanishes identically, checked at random points and,
/// for small matrices, symbolically.
pub fn determinant_vanishes(b: &FourierMatrix, seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..4 {
        let k: Vec<f64> = (0..b.dim()).map(|_| rng.gen::<f64>()).collect();
        if b.det_at(&k)?.norm() > 1e-10 {
            return Ok(false);
        }
    }
    match b.det_polynomial() {
        Ok(d) => Ok(d.pruned(1e-9).is_zero()),
        Err(Error::Unsupported(_)) => Ok(true),
        Err(e) => Err(e),
    }
}

/// Compares the best rigorous bound (or, failing that, the best estimate)
/// on `χ` against `½ log |det Q|`.
pub fn singularity_verdict(
    b: &FourierMatrix,
    bounds: &[ChiBound],
    trend: Option<String>,
    seed: u64,
) -> Result<Verdict> {
    let threshold = 0.5 * b.expansion().det().abs().ln();
    if determinant_vanishes(b, seed)? {
        return Ok(Verdict {
            threshold,
            bound: None,
            conclusion: Conclusion::Inapplicable,
            margin: f64::NAN,
            trend,
            explanation: "det B(k) vanishes identically, so the criterion does not apply".into(),
        });
    }
    let pool: Vec<&ChiBound> = if bounds.iter().any(|c| c.rigorous) {
        bounds.iter().filter(|c| c.rigorous).collect()
    } else {
        bounds.iter().collect()
    };
    let best = pool
        .into_iter()
        .min_by(|a, b| a.upper().partial_cmp(&b.upper()).expect("finite bounds"))
        .cloned();
    let Some(best) = best else {
        return Err(Error::InvalidParameter("no bound supplied".into()));
    };
    let margin = threshold - best.upper();
    let (conclusion, explanation) = if margin > 0.0 {
        (
            Conclusion::SingularDiffraction,
            format!(
                "{} gives chi <= {:.6} (+{:.1e}) < {:.6} = 1/2 log|det Q|",
                best.label, best.value, best.error, threshold
            ),
        )
    } else {
        (
            Conclusion::Inconclusive,
            format!(
                "{} gives chi <= {:.6} (+{:.1e}), not below {:.6} = 1/2 log|det Q|",
                best.label, best.value, best.error, threshold
            ),
        )
    };
    Ok(Verdict {
        threshold,
        bound: Some(best),
        conclusion,
        margin,
        trend,
        explanation,
    })
}

/// Everything computed for a verdict.
#[derive(Clone, Debug, Serialize)]
pub struct Assessment {
    pub ladder: Option<BoundLadder>,
    pub birkhoff: Option<LyapunovEstimate>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, Default)]
pub struct AssessOptions {
    pub ladder: LadderOptions,
    pub birkhoff: Option<BirkhoffOptions>,
}

/// Picks the sharpest available route: the exact binary-block exponent,
/// otherwise the ladder on `reduced` (when given) or on `B` itself.
pub fn assess(
    rule: &InflationRule,
    reduced: Option<&FourierMatrix>,
    opts: &AssessOptions,
) -> Result<Assessment> {
    let b = FourierMatrix::from_rule(rule);
    let seed = opts.ladder.qmc.seed;
    if determinant_vanishes(&b, seed)? {
        return Ok(Assessment {
            ladder: None,
            birkhoff: None,
            verdict: singularity_verdict(&b, &[], None, seed)?,
        });
    }
    let mut bounds = Vec::new();
    let mut ladder = None;
    let mut trend = None;
    let exact = if rule.basis.rank() == 1 && rule.dim > 1 {
        binary_block_bound(rule, &opts.ladder.qmc).ok()
    } else {
        None
    };
    if let Some(e) = exact {
        bounds.push(e);
    } else {
        let target = reduced.unwrap_or(&b);
        let l = upper_bound_ladder(target, &opts.ladder)?;
        bounds.extend(l.best_chi_bound());
        trend = Some(l.trend());
        ladder = Some(l);
    }
    let birkhoff = match &opts.birkhoff {
        Some(bo) => {
            let est = birkhoff_exponent(reduced.unwrap_or(&b), bo)?;
            bounds.push(ChiBound::from_estimate("Birkhoff estimate", &est, 3.0));
            Some(est)
        }
        None => None,
    };
    let verdict = singularity_verdict(&b, &bounds, trend, seed)?;
    Ok(Assessment {
        ladder,
        birkhoff,
        verdict,
    })
}

/// Splits a Hermitian positive semi-definite `H` into rank-one terms
/// `λ_r v_r v_r*` with mutually orthogonal ranges.
pub fn hermitian_rank_one_split(h: &CMatrix) -> Result<Vec<CMatrix>> {
    const TOL: f64 = 1e-10;
    let n = h.nrows();
    if h.ncols() != n {
        return Err(Error::NotPsd("matrix is not square".into()));
    }
    let asym = (h - h.adjoint()).camax();
    if asym > TOL {
        return Err(Error::NotPsd(format!("not Hermitian (deviation {asym:e})")));
    }
    for i in 0..n {
        let d = h[(i, i)].re;
        if d < -TOL {
            return Err(Error::NotPsd(format!("diagonal entry {i} is negative")));
        }
        if d.abs() <= TOL {
            let off = (0..n).map(|j| h[(i, j)].norm()).fold(0.0, f64::max);
            if off > TOL {
                return Err(Error::NotPsd(format!(
                    "diagonal entry {i} vanishes but its row does not"
                )));
            }
        }
    }
    let eig = SymmetricEigen::new(h.clone());
    if let Some(min) = eig.eigenvalues.iter().copied().reduce(f64::min) {
        if min < -TOL {
            return Err(Error::NotPsd(format!("eigenvalue {min:e}")));
        }
    }
    let scale = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    Ok(eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > TOL * scale.max(1.0))
        .map(|(r, &l)| {
            let v = eig.eigenvectors.column(r);
            DMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj() * l)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalogue;

    #[test]
    fn grid_orbit_matches_float_orbit_for_a_few_steps() {
        let fr = catalogue::frank_robinson().unwrap().fourier_matrix();
        let c = CompiledFourier::new(&fr).unwrap();
        let w = c.lift(&[0.3137, 0.7719]);
        let mut a = c.to_grid(&w);
        let mut x = w.clone();
        let mut bf = CMatrix::zeros(4, 4);
        let mut bg = CMatrix::zeros(4, 4);
        for _ in 0..5 {
            c.evaluate_torus(&x, &mut bf);
            c.evaluate_grid(&a, &mut bg);
            assert!((&bf - &bg).norm() < 1e-9);
            c.step_torus(&mut x);
            c.step_grid(&mut a);
        }
        let direct = fr.cocycle_evaluate(&[0.3137, 0.7719], 3).unwrap();
        let torus = c.cocycle_torus(&w, 3);
        assert!((direct - torus).norm() < 1e-8);
    }

    #[test]
    fn exponent_at_origin_is_pf_growth() {
        let abcd = catalogue::abcd().unwrap().fourier_matrix();
        let v = birkhoff_at(&abcd, &[0.0], 50).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-3, "{v}");
    }

    #[test]
    fn estimates_are_reproducible_across_pools() {
        let abcd = catalogue::abcd().unwrap().fourier_matrix();
        let opts = BirkhoffOptions {
            samples: 8,
            iterations: 300,
            seed: 7,
        };
        let a = birkhoff_exponent(&abcd, &opts).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| birkhoff_exponent(&abcd, &opts).unwrap());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn rank_one_split() {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let d = CMatrix::from_row_slice(2, 2, &[one, zero, zero, zero]);
        let parts = hermitian_rank_one_split(&d).unwrap();
        assert_eq!(parts.len(), 1);
        assert!((&parts[0] - &d).norm() < 1e-12);
        let id = CMatrix::identity(2, 2);
        let parts = hermitian_rank_one_split(&id).unwrap();
        assert_eq!(parts.len(), 2);
        assert!((&parts[0] * &parts[1]).norm() < 1e-12);
        assert!((&parts[0] + &parts[1] - &id).norm() < 1e-12);
        let bad = CMatrix::from_row_slice(2, 2, &[zero, one, one, one]);
        assert!(matches!(hermitian_rank_one_split(&bad), Err(Error::NotPsd(_))));
    }
}

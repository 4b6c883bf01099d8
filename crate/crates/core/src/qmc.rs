//! Randomly shifted rank-1 lattice rules on the unit torus.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Options for [`integrate`].
#[derive(Clone, Debug)]
pub struct QmcOptions {
    /// Lattice size of the first pass.
    pub start_nodes: usize,
    /// Largest lattice size tried before giving up.
    pub max_nodes: usize,
    /// Number of independent random shifts (error estimate).
    pub shifts: usize,
    pub seed: u64,
    /// Target standard error; `f64::INFINITY` accepts the first pass.
    pub tol: f64,
}

impl Default for QmcOptions {
    fn default() -> Self {
        Self {
            start_nodes: 1 << 16,
            max_nodes: 1 << 20,
            shifts: 8,
            seed: 0x00c0_cc1e,
            tol: 1e-4,
        }
    }
}

/// Integral estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QmcEstimate {
    pub value: f64,
    pub error: f64,
    /// Lattice size per shift of the accepted pass.
    pub nodes: usize,
}

fn bernoulli2(x: f64) -> f64 {
    x * x - x + 1.0 / 6.0
}

/// `P₂` figure of merit of the Korobov generator `(1, a, a², …)` mod `n`.
fn korobov_merit(n: usize, dim: usize, a: u64) -> f64 {
    let gen = korobov_vector(n, dim, a);
    let two_pi_sq = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    let sum: f64 = (0..n)
        .into_par_iter()
        .with_min_len(4096)
        .map(|k| {
            gen.iter()
                .map(|&z| {
                    let x = ((k as u128 * z as u128) % n as u128) as f64 / n as f64;
                    1.0 + two_pi_sq * bernoulli2(x)
                })
                .product::<f64>()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    sum / n as f64 - 1.0
}

fn korobov_vector(n: usize, dim: usize, a: u64) -> Vec<u64> {
    let mut out = Vec::with_capacity(dim);
    let mut z = 1u64;
    for _ in 0..dim {
        out.push(z);
        z = ((z as u128 * a as u128) % n as u128) as u64;
    }
    out
}

/// Korobov generating vector for `n` points in `dim` dimensions, chosen by
/// minimising `P₂` over a fixed candidate set. Results are cached.
pub fn generating_vector(n: usize, dim: usize) -> Vec<u64> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Vec<u64>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(v) = cache.lock().expect("cache lock").get(&(n, dim)) {
        return v.clone();
    }
    let v = if dim <= 1 {
        vec![1; dim]
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64 * 1_000_003 + dim as u64);
        // Odd candidates are coprime to power-of-two lattice sizes.
        let mut candidates: Vec<u64> = (0..48)
            .map(|_| rng.gen_range(2..n as u64) | 1)
            .collect();
        let golden = ((n as f64) * 0.618_033_988_749_895) as u64 | 1;
        candidates.push(golden);
        let best = candidates
            .into_iter()
            .filter(|&a| num_integer::Integer::gcd(&a, &(n as u64)) == 1)
            .map(|a| (korobov_merit(n, dim, a), a))
            .min_by(|x, y| x.0.partial_cmp(&y.0).expect("finite merit"))
            .map(|(_, a)| a)
            .unwrap_or(1);
        korobov_vector(n, dim, best)
    };
    cache
        .lock()
        .expect("cache lock")
        .insert((n, dim), v.clone());
    v
}

/// Mean of `f` over one shifted lattice, summed in a fixed order.
fn lattice_mean<F>(f: &F, n: usize, gen: &[u64], shift: &[f64]) -> f64
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    const CHUNK: usize = 1024;
    let dim = gen.len();
    let partial: Vec<f64> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut point = vec![0.0; dim];
            let mut s = 0.0;
            for k in c * CHUNK..((c + 1) * CHUNK).min(n) {
                for ((p, &z), sh) in point.iter_mut().zip(gen).zip(shift) {
                    let x = ((k as u128 * z as u128) % n as u128) as f64 / n as f64 + sh;
                    *p = x - x.floor();
                }
                s += f(&point);
            }
            s
        })
        .collect();
    partial.iter().sum::<f64>() / n as f64
}

/// Integrates `f` over `[0,1)^dim` with adaptive doubling of the lattice.
pub fn integrate<F>(dim: usize, f: F, opts: &QmcOptions) -> Result<QmcEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if dim == 0 {
        return Ok(QmcEstimate {
            value: f(&[]),
            error: 0.0,
            nodes: 1,
        });
    }
    let shifts_count = opts.shifts.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let shifts: Vec<Vec<f64>> = (0..shifts_count)
        .map(|_| (0..dim).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let mut n = opts.start_nodes.max(16);
    loop {
        let gen = generating_vector(n, dim);
        let means: Vec<f64> = shifts.iter().map(|s| lattice_mean(&f, n, &gen, s)).collect();
        let r = means.len() as f64;
        let mean = means.iter().sum::<f64>() / r;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (r - 1.0);
        let err = (var / r).sqrt();
        if !mean.is_finite() {
            return Err(Error::InvalidParameter("integrand is not finite".into()));
        }
        if err <= opts.tol || n * 2 > opts.max_nodes {
            if err > opts.tol {
                return Err(Error::ToleranceUnattainable {
                    tol: opts.tol,
                    reached: err,
                });
            }
            return Ok(QmcEstimate {
                value: mean,
                error: err,
                nodes: n,
            });
        }
        n *= 2;
    }
}

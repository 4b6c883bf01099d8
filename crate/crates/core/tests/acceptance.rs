//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary. Failing criteria are reported, and the process
//! exits non-zero only when `ACCEPTANCE_STRICT` is set.

use std::f64::consts::PI;
use std::time::Instant;

use num_complex::Complex64;
use num_rational::Rational64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cocyclo::catalogue::{self, staggered};
use cocyclo::correlations::{renormalisation_check, Boundary};
use cocyclo::lyapunov::{assess, birkhoff_log_frobenius, AssessOptions, BoundConvention};
use cocyclo::mahler::mahler_multivariate;
use cocyclo::riesz::{disc_mass, trapezoid};
use cocyclo::{
    binary_block_decomposition, builtin, riesz_product_comb, upper_bound_ladder, BirkhoffOptions,
    Conclusion, ExponentVector, FactorFamily, GenTrigPoly, LadderOptions, QmcOptions,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("abcd ladder m_1..m_12", abcd_ladder),
        ("Mahler measure of 1+x+y", mahler_golden),
        ("symbolic identities", symbolic_identities),
        ("Fejer and Riesz products", fejer_riesz),
        ("renormalisation identity", renormalisation),
        ("verdicts", verdicts),
        ("Frank-Robinson", frank_robinson),
        ("lattice Riesz product", lattice_riesz),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        if !out.pass {
            failed += 1;
        }
        println!(
            "{} criterion {} ({}): {} [{:.1}s]",
            if out.pass { "PASS" } else { "FAIL" },
            i + 1,
            name,
            out.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}

fn abcd_ladder() -> Outcome {
    const PUBLISHED: [f64; 12] = [
        0.693, 0.478, 0.379, 0.334, 0.302, 0.274, 0.252, 0.235, 0.220, 0.208, 0.198, 0.189,
    ];
    let entry = builtin("abcd").unwrap();
    let reduced = entry.reduced.as_ref().unwrap();
    let opts = LadderOptions {
        max_n: 12,
        ..Default::default()
    };
    let ladder = upper_bound_ladder(reduced, &opts).unwrap();
    let worst = ladder
        .rungs
        .iter()
        .zip(PUBLISHED)
        .map(|(r, p)| (r.value - p).abs())
        .fold(0.0, f64::max);
    let values: Vec<String> = ladder.rungs.iter().map(|r| format!("{:.4}", r.value)).collect();
    outcome(
        ladder.convention == BoundConvention::Chi && ladder.rungs.len() == 12 && worst < 1e-3,
        format!("m_1..m_12 = {}; max deviation {worst:.2e} (tol 1e-3)", values.join(", ")),
    )
}

fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 })
        .sum();
    h / 3.0 * (f(a) + f(b) + inner)
}

fn mahler_golden() -> Outcome {
    let p = GenTrigPoly::from_integer_terms(2, &[(&[0, 0], 1.0), (&[1, 0], 1.0), (&[0, 1], 1.0)]);
    let opts = QmcOptions {
        start_nodes: 1 << 12,
        tol: 1e-7,
        ..Default::default()
    };
    let m = mahler_multivariate(&p, &opts).unwrap();
    let quad = 2.0 * simpson(|t| (2.0 * (PI * t).cos()).ln(), 0.0, 1.0 / 3.0, 20_000);
    let golden = (m.value - 0.323066).abs();
    let cross = (m.value - quad).abs();
    outcome(
        golden < 5e-4 && cross < 1e-6,
        format!(
            "m = {:.9} ({}); |m - 0.323066| = {golden:.1e} (tol 5e-4); |m - quadrature| = {cross:.1e} (tol 1e-6)",
            m.value,
            m.method.as_str()
        ),
    )
}

fn symbolic_identities() -> Outcome {
    let mut notes = Vec::new();
    let z = |terms: &[(&[i64], f64)]| GenTrigPoly::from_integer_terms(1, terms);

    let abcd = builtin("abcd").unwrap();
    let b = abcd.fourier_matrix();
    let det_ok = b.det_polynomial().unwrap() == z(&[(&[4], 1.0), (&[0], -1.0)]);
    notes.push(format!("det B_abcd = z^4-1: {det_ok}"));

    let sim = b.apply_similarity(abcd.similarity.as_ref().unwrap()).unwrap();
    let off_zero = (0..2).all(|i| (2..4).all(|j| sim.entry(i, j).is_zero() && sim.entry(j, i).is_zero()))
        && sim.entry(0, 1).is_zero()
        && sim.entry(1, 0).is_zero();
    let diag_ok = *sim.entry(0, 0) == z(&[(&[0], 1.0), (&[1], 1.0)])
        && *sim.entry(1, 1) == z(&[(&[0], 1.0), (&[1], -1.0)]);
    notes.push(format!("U B U^-1 block diagonal with 1+z, 1-z: {}", off_zero && diag_ok));

    let fig1 = builtin("block-fig1").unwrap();
    let bf = fig1.fourier_matrix();
    let d = binary_block_decomposition(&fig1.rule).unwrap();
    let xy = |terms: &[(&[i64], f64)]| GenTrigPoly::from_integer_terms(2, terms);
    let factor = xy(&[(&[2, 0], 1.0), (&[2, 1], 1.0), (&[0, 1], -1.0)]);
    let fig_det = bf.det_polynomial().unwrap() == d.full.mul(&factor).unwrap();
    notes.push(format!("det B_fig1 = p (x^2+x^2y-y): {fig_det}"));
    let sum = &(&(&d.same + &d.swapped) + &d.coincident_0) + &d.coincident_1;
    let split = sum == d.full;
    notes.push(format!("q+r+s0+s1 = p: {split}"));

    let mut zero_ok = true;
    let names = catalogue::NAMES.iter().copied().filter(|n| *n != "staggered");
    for name in names.chain(["staggered(2,2,[sqrt(2)])", "staggered(3,2,[0.5,sqrt(3)])"]) {
        let e = builtin(name).unwrap();
        let m = e.rule.substitution_matrix();
        let at0 = e.fourier_matrix().at_zero();
        let same = m
            .iter()
            .zip(&at0)
            .all(|(r, s)| r.iter().zip(s).all(|(&a, &b)| a as f64 == b));
        zero_ok &= same;
    }
    notes.push(format!("B(0) = M for all catalogue rules: {zero_ok}"));
    outcome(det_ok && off_zero && diag_ok && fig_det && split && zero_ok, notes.join("; "))
}

fn fejer_riesz() -> Outcome {
    let mut exact = true;
    let mut worst_fourier: f64 = 0.0;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for m in [2i64, 3] {
        let family = FactorFamily::Fejer { m: m as u32 };
        for n in 0..=6u32 {
            let comb = riesz_product_comb(m, n).unwrap();
            let top = m.pow(n);
            exact &= comb.len() as i64 == 2 * top - 1;
            for l in 1 - top..top {
                exact &= comb.weight_at(&ExponentVector::from_integers(&[l]))
                    == Rational64::new(top - l.abs(), top);
            }
            if n == 0 {
                continue;
            }
            let poly = comb.fourier_polynomial();
            for _ in 0..1000 {
                let k: f64 = rng.gen_range(-2.0..2.0);
                let lhs: Complex64 = poly.evaluate(&[k]).unwrap();
                let rhs = family.density(n as usize, &[k]).unwrap();
                worst_fourier = worst_fourier.max((lhs - rhs).norm());
            }
        }
    }
    let mut worst_mass: f64 = 0.0;
    for m in [2u32, 3] {
        let family = FactorFamily::Fejer { m };
        for n in 1..=12usize {
            let half = (m as usize).pow(n as u32);
            let q = trapezoid(|k| family.density(n, &[k]), 0.0, 1.0, half).unwrap();
            worst_mass = worst_mass.max((q.value - 1.0).abs());
        }
    }
    outcome(
        exact && worst_fourier < 1e-10 && worst_mass < 1e-8,
        format!(
            "exact comb weights for M in {{2,3}}, n <= 6: {exact}; Fourier vs product max error {worst_fourier:.1e} (tol 1e-10); unit-mass max error {worst_mass:.1e} (tol 1e-8)"
        ),
    )
}

fn renormalisation() -> Outcome {
    // (rule, level, range, comparison levels, comparison range)
    let cases: [(&str, usize, f64, (usize, usize), f64); 5] = [
        ("fibonacci", 14, 20.0, (12, 14), 20.0),
        ("abcd", 12, 30.0, (10, 12), 30.0),
        ("block-fig1", 7, 10.0, (5, 7), 8.0),
        ("staggered(2,2,[sqrt(2)])", 10, 6.0, (8, 10), 6.0),
        ("frank-robinson", 4, 3.0, (4, 6), 3.0),
    ];
    let mut pass = true;
    let mut notes = Vec::new();
    for (name, level, range, (lo, hi), cmp_range) in cases {
        let rule = builtin(name).unwrap().rule;
        let run = |lv: usize, r: f64| {
            renormalisation_check(&rule, lv, r, Boundary::Eroded, 1)
                .map(|(_, rep)| rep.max_residual)
                .unwrap()
        };
        let main = run(level, range);
        let mut cache = vec![((level, range), main)];
        let mut get = |lv: usize, r: f64| {
            if let Some(&(_, v)) = cache.iter().find(|(k, _)| *k == (lv, r)) {
                v
            } else {
                let v = run(lv, r);
                cache.push(((lv, r), v));
                v
            }
        };
        let (a, b) = (get(lo, cmp_range), get(hi, cmp_range));
        let ok = main < 1e-2 && b < a;
        pass &= ok;
        notes.push(format!(
            "{name} L{level} R{range}: {main:.2e}{}; L{lo}->L{hi} R{cmp_range}: {a:.2e} -> {b:.2e}",
            if main < 1e-2 { "" } else { " (>= 1e-2)" }
        ));
    }
    outcome(pass, notes.join("; "))
}

fn verdicts() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    let opts = AssessOptions::default();

    let abcd = builtin("abcd").unwrap();
    let deep = AssessOptions {
        ladder: LadderOptions {
            max_n: 12,
            ..Default::default()
        },
        birkhoff: None,
    };
    let a = assess(&abcd.rule, abcd.reduced.as_ref(), &deep).unwrap().verdict;
    let bound = a.bound.as_ref().map_or(f64::NAN, |b| b.value + b.error);
    let ok = a.conclusion == Conclusion::SingularDiffraction && bound <= 0.20;
    pass &= ok;
    notes.push(format!("abcd: {} with chi <= {bound:.4} < {:.5}", a.conclusion.as_str(), a.threshold));

    let fig1 = builtin("block-fig1").unwrap();
    let v = assess(&fig1.rule, None, &opts).unwrap().verdict;
    let b = v.bound.clone().unwrap();
    let ok = v.conclusion == Conclusion::SingularDiffraction
        && (b.value - 0.3231).abs() <= 5e-4
        && (v.threshold - 0.5 * 6f64.ln()).abs() < 1e-12;
    pass &= ok;
    notes.push(format!(
        "block-fig1: {} with chi = {:.5} +- {:.1e} < {:.5}",
        v.conclusion.as_str(),
        b.value,
        b.error,
        v.threshold
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let ladder = AssessOptions {
        ladder: LadderOptions {
            max_n: 1,
            ..Default::default()
        },
        birkhoff: None,
    };
    for (m, n) in [(2i64, 3i64), (3, 2), (3, 3)] {
        let shifts: Vec<f64> = (1..m).map(|_| rng.gen_range(0.05..0.95)).collect();
        let e = staggered(m, n, &shifts).unwrap();
        let v = assess(&e.rule, None, &ladder).unwrap().verdict;
        let b = v.bound.clone().unwrap();
        let cap = 0.5 * (m as f64).ln();
        let ok = e.rule.basis.rank() > 1
            && v.conclusion == Conclusion::SingularDiffraction
            && b.value + b.error <= cap + 1e-3;
        pass &= ok;
        notes.push(format!(
            "staggered({m},{n}): {} with chi <= {:.5} (1/2 log M = {cap:.5}, threshold {:.5})",
            v.conclusion.as_str(),
            b.value + b.error,
            v.threshold
        ));
    }
    outcome(pass, notes.join("; "))
}

fn frank_robinson() -> Outcome {
    let e = builtin("frank-robinson").unwrap();
    let b = e.fourier_matrix();
    let lambda = (1.0 + 13f64.sqrt()) / 2.0;
    let pf = e.rule.pf_data().unwrap();
    let freq = [
        (4.0 - lambda) / 9.0,
        (4.0 * lambda - 7.0) / 9.0,
        (4.0 * lambda - 7.0) / 9.0,
        (19.0 - 7.0 * lambda) / 9.0,
    ];
    let freq_err = pf
        .frequencies
        .iter()
        .zip(freq)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let volumes: Vec<f64> = e
        .rule
        .edge_lengths()
        .iter()
        .map(|edges| edges.iter().product())
        .collect();
    let mean_volume: f64 = pf.frequencies.iter().zip(&volumes).map(|(f, v)| f * v).sum();
    let density_err = (1.0 / mean_volume - (3.0 + lambda) / 13.0).abs();

    let ladder = upper_bound_ladder(&b, &LadderOptions::default()).unwrap();
    let monotone = ladder.is_non_increasing(3.0);
    let opts = BirkhoffOptions {
        samples: 64,
        iterations: 2000,
        ..Default::default()
    };
    let chi = cocyclo::birkhoff_exponent(&b, &opts).unwrap();
    let dominated = ladder.rungs.iter().all(|r| {
        let sigma = ((2.0 * chi.std_error).powi(2) + r.error.powi(2)).sqrt();
        2.0 * chi.value <= r.value + 3.0 * sigma
    });
    let m1 = birkhoff_log_frobenius(&b, &opts).unwrap();
    let r1 = &ladder.rungs[0];
    let dual_sigma = (m1.std_error.powi(2) + r1.error.powi(2)).sqrt();
    let dual = (m1.value - r1.value).abs() <= 3.0 * dual_sigma;
    let m6 = ladder.rungs.last().unwrap();
    let two_log = 2.0 * lambda.ln();
    let verdict = if m6.value + m6.error < two_log {
        "singular".to_string()
    } else {
        format!("inconclusive ({})", ladder.trend())
    };
    let values: Vec<String> = ladder
        .rungs
        .iter()
        .map(|r| format!("{:.4}+-{:.1e}", r.value, r.error))
        .collect();
    outcome(
        monotone && dominated && dual && freq_err < 1e-12 && density_err < 1e-12,
        format!(
            "m_1..m_6 = {} (non-increasing: {monotone}); 2 chi_hat = {:.5} +- {:.5} below every m_N + 3 sigma: {dominated}; m_1 QMC {:.5} vs Birkhoff {:.5} +- {:.5}: {dual}; frequency error {freq_err:.1e}, density error {density_err:.1e}; m_6 = {:.4} vs 2 log lambda = {two_log:.4}: {verdict}",
            values.join(", "),
            2.0 * chi.value,
            2.0 * chi.std_error,
            r1.value,
            m1.value,
            m1.std_error,
            m6.value
        ),
    )
}

fn lattice_riesz() -> Outcome {
    let a = 2.0;
    let family = FactorFamily::Staggered { a };
    let depth = 8;
    let centres = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [-3.0, 2.0]];
    let min_mass = centres
        .iter()
        .map(|&c| {
            let q = disc_mass(&family, depth, c, 0.1, 400, 1024).unwrap();
            q.value - q.error
        })
        .fold(f64::INFINITY, f64::min);
    let bump = |x: f64, y: f64, cx: f64, cy: f64| {
        let r2 = ((x - cx).powi(2) + (y - cy).powi(2)) / 0.09;
        if r2 < 1.0 {
            (-1.0 / (1.0 - r2)).exp()
        } else {
            0.0
        }
    };
    let away = [[0.5, 0.5], [1.5, -0.5], [0.5, 2.5]]
        .iter()
        .map(|&[cx, cy]| {
            let inner = |y: f64| {
                trapezoid(
                    |x| Ok(bump(x, y, cx, cy) * family.density(depth, &[x, y])?),
                    cx - 0.3,
                    cx + 0.3,
                    1000,
                )
                .map(|q| q.value)
            };
            trapezoid(inner, cy - 0.3, cy + 0.3, 1000).unwrap().value.abs()
        })
        .fold(0.0, f64::max);
    outcome(
        min_mass >= 0.95 && away < 1e-2,
        format!(
            "a = {a}, depth {depth}: min mass in 0.1-discs {min_mass:.5} (need >= 0.95); max bump integral away from the dual lattice {away:.2e} (tol 1e-2)"
        ),
    )
}

//! Built-in inflation rules with their auxiliary data.

use std::sync::Arc;

use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::fourier::{CMatrix, FourierMatrix};
use crate::inflation::{int_point, realize_1d, InflationRule, Prototile, SubstitutionRule1D};
use crate::trigpoly::{ExpansionMap, ExponentVector, FrequencyBasis};

/// Names accepted by [`builtin`]; `staggered` takes parameters.
pub const NAMES: [&str; 5] = ["fibonacci", "abcd", "block-fig1", "staggered", "frank-robinson"];

/// A validated rule plus optional structure used by reduced computations.
#[derive(Clone, Debug)]
pub struct CatalogueEntry {
    pub name: String,
    pub rule: InflationRule,
    /// Constant similarity `U` block-diagonalising the Fourier matrix.
    pub similarity: Option<CMatrix>,
    /// Irreducible block of `U B U⁻¹` carrying the nontrivial exponents.
    pub reduced: Option<FourierMatrix>,
    /// Minimal polynomial of each basis generator, when known.
    pub minimal_polynomials: Vec<Option<Vec<i64>>>,
    pub notes: Vec<String>,
}

impl CatalogueEntry {
    fn new(rule: InflationRule) -> Self {
        let minimal_polynomials = (0..rule.basis.rank())
            .map(|g| rule.basis.minpoly(g).map(<[i64]>::to_vec))
            .collect();
        Self {
            name: rule.name.clone(),
            rule,
            similarity: None,
            reduced: None,
            minimal_polynomials,
            notes: Vec::new(),
        }
    }

    pub fn fourier_matrix(&self) -> FourierMatrix {
        FourierMatrix::from_rule(&self.rule)
    }
}

/// Looks up a built-in rule. Staggered rules are written
/// `staggered(M,N,a1,…,a_{M-1})`; shifts may be decimals, `p/q` or `sqrt(n)`.
pub fn builtin(name: &str) -> Result<CatalogueEntry> {
    let name = name.trim();
    let entry = match name {
        "fibonacci" => fibonacci()?,
        "abcd" => abcd()?,
        "block-fig1" => block_fig1()?,
        "frank-robinson" => frank_robinson()?,
        _ if name.starts_with("staggered") => {
            let (m, n, shifts) = parse_staggered(name)?;
            staggered_exact(m, n, &shifts)?
        }
        _ => return Err(Error::UnknownEntry(name.to_string())),
    };
    entry.rule.check()?;
    entry.rule.pf_data()?;
    Ok(entry)
}

pub fn fibonacci() -> Result<CatalogueEntry> {
    let sym = SubstitutionRule1D::from_words(&["ab", "a"])?;
    Ok(CatalogueEntry::new(realize_1d("fibonacci", &sym)?))
}

/// The 4-letter constant-length rule `a→ab, b→ca, c→bd, d→dc`.
pub fn abcd() -> Result<CatalogueEntry> {
    let sym = SubstitutionRule1D::from_words(&["ab", "ca", "bd", "dc"])?;
    let mut entry = CatalogueEntry::new(realize_1d("abcd", &sym)?);
    let u = nalgebra::DMatrix::<f64>::from_row_slice(
        4,
        4,
        &[
            1.0, 1.0, 1.0, 1.0, //
            1.0, -1.0, -1.0, 1.0, //
            1.0, -1.0, 1.0, -1.0, //
            1.0, 1.0, -1.0, -1.0,
        ],
    )
    .map(|x| Complex64::new(0.5 * x, 0.0));
    let conj = entry.fourier_matrix().apply_similarity(&u)?;
    let block: Vec<Vec<_>> = (2..4)
        .map(|i| (2..4).map(|j| conj.entry(i, j).clone()).collect())
        .collect();
    entry.reduced = Some(FourierMatrix::from_entries(
        block,
        entry.rule.expansion.clone(),
    )?);
    entry.similarity = Some(u);
    Ok(entry)
}

/// Binary block rule for `Q = diag(3,2)` with white (0) and black (1) unit squares.
pub fn block_fig1() -> Result<CatalogueEntry> {
    let basis = Arc::new(FrequencyBasis::unit());
    let unit = int_point(&[1, 1]);
    let pts = |v: &[[i64; 2]]| v.iter().map(|p| int_point(p)).collect::<Vec<_>>();
    let displacements = vec![
        vec![
            pts(&[[0, 0], [1, 0], [1, 1], [2, 0], [2, 1]]),
            pts(&[[0, 0], [1, 0], [0, 1], [1, 1]]),
        ],
        vec![pts(&[[0, 1]]), pts(&[[2, 0], [2, 1]])],
    ];
    let rule = InflationRule {
        name: "block-fig1".into(),
        dim: 2,
        expansion: ExpansionMap::new(&basis, &["3", "2"])?,
        basis,
        prototiles: vec![
            Prototile {
                label: "white".into(),
                edges: unit.clone(),
            },
            Prototile {
                label: "black".into(),
                edges: unit,
            },
        ],
        displacements,
        stone: true,
        symbolic: None,
    };
    Ok(CatalogueEntry::new(rule))
}

/// A real column shift with its exact form when one is known.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shift {
    Rational(Rational64),
    /// `√n` for a non-square positive integer `n`.
    Sqrt(i64),
    Real(f64),
}

impl Shift {
    pub fn value(&self) -> f64 {
        match *self {
            Shift::Rational(q) => *q.numer() as f64 / *q.denom() as f64,
            Shift::Sqrt(n) => (n as f64).sqrt(),
            Shift::Real(x) => x,
        }
    }

    /// Parses `3`, `-1/2`, `0.25`, `sqrt(2)` or a general decimal.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let bad = || Error::InvalidParameter(format!("cannot parse shift `{t}`"));
        if let Some(inner) = t.strip_prefix("sqrt(").and_then(|s| s.strip_suffix(')')) {
            let n: i64 = inner.trim().parse().map_err(|_| bad())?;
            if n < 0 {
                return Err(bad());
            }
            let r = (n as f64).sqrt().round() as i64;
            return Ok(if r * r == n {
                Shift::Rational(Rational64::from_integer(r))
            } else {
                Shift::Sqrt(n)
            });
        }
        if let Some((p, q)) = t.split_once('/') {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: i64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0 {
                return Err(bad());
            }
            return Ok(Shift::Rational(Rational64::new(p, q)));
        }
        let x: f64 = t.parse().map_err(|_| bad())?;
        Ok(Shift::from_f64(x))
    }

    /// Recognises rationals with denominator at most 1000.
    pub fn from_f64(x: f64) -> Self {
        for q in 1..=1000i64 {
            let p = (x * q as f64).round();
            if (x - p / q as f64).abs() < 1e-12 {
                return Shift::Rational(Rational64::new(p as i64, q));
            }
        }
        Shift::Real(x)
    }
}

fn parse_staggered(name: &str) -> Result<(i64, i64, Vec<Shift>)> {
    let bad = || {
        Error::InvalidParameter(format!(
            "expected staggered(M,N,a1,...,a_(M-1)), got `{name}`"
        ))
    };
    let inner = name
        .strip_prefix("staggered")
        .and_then(|s| s.trim().strip_prefix('('))
        .and_then(|s| s.strip_suffix(')'))
        .ok_or_else(bad)?;
    let cleaned: String = inner.chars().filter(|c| *c != '[' && *c != ']').collect();
    let parts: Vec<&str> = cleaned.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if parts.len() < 2 {
        return Err(bad());
    }
    let m: i64 = parts[0].parse().map_err(|_| bad())?;
    let n: i64 = parts[1].parse().map_err(|_| bad())?;
    let shifts = parts[2..].iter().map(|s| Shift::parse(s)).collect::<Result<_>>()?;
    Ok((m, n, shifts))
}

/// Staggered block rule from float shifts; rational values are detected.
pub fn staggered(m: i64, n: i64, shifts: &[f64]) -> Result<CatalogueEntry> {
    let exact: Vec<Shift> = shifts.iter().map(|&x| Shift::from_f64(x)).collect();
    staggered_exact(m, n, &exact)
}

/// `M×N` block of unit squares whose column `i` is shifted up by `a_i`
/// (`a_0 = 0`). Control points are lower left corners.
pub fn staggered_exact(m: i64, n: i64, shifts: &[Shift]) -> Result<CatalogueEntry> {
    if m < 2 || n < 2 {
        return Err(Error::InvalidParameter(format!(
            "staggered needs M, N >= 2 (got {m}, {n})"
        )));
    }
    if shifts.len() != (m - 1) as usize {
        return Err(Error::InvalidParameter(format!(
            "staggered({m},{n}) needs {} shifts, got {}",
            m - 1,
            shifts.len()
        )));
    }
    // Irrational shifts become generators; a shift differing from an
    // earlier one by a rational reuses its generator.
    let mut gens: Vec<Shift> = Vec::new();
    let mut coeffs: Vec<(Rational64, Option<usize>)> = Vec::new();
    for s in shifts {
        if let Shift::Rational(q) = s {
            coeffs.push((*q, None));
            continue;
        }
        let found = gens.iter().position(|g| {
            matches!(Shift::from_f64(s.value() - g.value()), Shift::Rational(_))
        });
        let idx = found.unwrap_or_else(|| {
            gens.push(*s);
            gens.len() - 1
        });
        let offset = match Shift::from_f64(s.value() - gens[idx].value()) {
            Shift::Rational(q) => q,
            _ => Rational64::zero(),
        };
        coeffs.push((offset, Some(idx + 1)));
    }
    let values: Vec<f64> = std::iter::once(1.0).chain(gens.iter().map(Shift::value)).collect();
    let names: Vec<String> = std::iter::once("1".to_string())
        .chain((1..=gens.len()).map(|i| format!("a{i}")))
        .collect();
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut basis = FrequencyBasis::new(values)?.with_names(&name_refs);
    for (i, g) in gens.iter().enumerate() {
        if let Shift::Sqrt(k) = g {
            basis = basis.with_minpoly(i + 1, vec![-k, 0, 1]);
        }
    }
    let basis = Arc::new(basis);
    let rank = basis.rank();

    let point = |x: i64, y: &[Rational64]| {
        let mut flat = vec![Rational64::zero(); 2 * rank];
        flat[0] = Rational64::from_integer(x);
        flat[rank..].copy_from_slice(y);
        ExponentVector::from_rationals(&flat)
    };
    let mut cell = Vec::with_capacity((m * n) as usize);
    for i in 0..m {
        let mut y = vec![Rational64::zero(); rank];
        if i > 0 {
            let (q, g) = coeffs[(i - 1) as usize];
            y[0] = q;
            if let Some(g) = g {
                y[g] += Rational64::one();
            }
        }
        for _ in 0..n {
            cell.push(point(i, &y));
            y[0] += Rational64::one();
        }
    }
    let label = format!(
        "staggered({m},{n},{})",
        shifts.iter().map(|s| format!("{}", s.value())).collect::<Vec<_>>().join(",")
    );
    let rule = InflationRule {
        name: label,
        dim: 2,
        expansion: ExpansionMap::new(&basis, &[&m.to_string(), &n.to_string()])?,
        prototiles: vec![Prototile {
            label: "square".into(),
            edges: point(1, &{
                let mut y = vec![Rational64::zero(); rank];
                y[0] = Rational64::one();
                y
            }),
        }],
        basis,
        displacements: vec![vec![cell]],
        stone: false,
        symbolic: None,
    };
    let mut entry = CatalogueEntry::new(rule);
    if !gens.is_empty() {
        entry
            .notes
            .push("irrational shift generators are assumed rationally independent".into());
    }
    Ok(entry)
}

/// Planar rule with inflation factor `λ = (1+√13)/2` on a large square,
/// two `λ×1` rectangles and a unit square.
pub fn frank_robinson() -> Result<CatalogueEntry> {
    let lambda = (1.0 + 13f64.sqrt()) / 2.0;
    let mut basis = FrequencyBasis::new(vec![1.0, lambda])?
        .with_names(&["1", "lambda"])
        .with_minpoly(1, vec![-3, -1, 1]);
    let r = |v: i64| Rational64::from_integer(v);
    basis.register("lambda", &[vec![r(0), r(3)], vec![r(1), r(1)]])?;
    let basis = Arc::new(basis);
    // Coordinates written as (a, b) meaning a + bλ.
    let pt = |x: (i64, i64), y: (i64, i64)| ExponentVector::from_integers(&[x.0, x.1, y.0, y.1]);
    let z = (0, 0);
    let one = (1, 0);
    let two = (2, 0);
    let lam = (0, 1);
    let lam1 = (1, 1);
    let lam2 = (2, 1);
    let displacements = vec![
        vec![vec![pt(two, two)], vec![pt(z, z)], vec![pt(z, z)], vec![pt(z, z)]],
        vec![
            vec![pt(two, z), pt(two, one), pt(z, lam2)],
            vec![],
            vec![pt(z, lam), pt(z, lam1), pt(z, lam2)],
            vec![],
        ],
        vec![
            vec![pt(z, two), pt(one, two), pt(lam2, z)],
            vec![pt(lam, z), pt(lam1, z), pt(lam2, z)],
            vec![],
            vec![],
        ],
        vec![
            vec![
                pt(z, z),
                pt(one, z),
                pt(z, one),
                pt(one, one),
                pt(lam2, lam),
                pt(lam, lam2),
                pt(lam1, lam2),
                pt(lam2, lam1),
                pt(lam2, lam2),
            ],
            vec![],
            vec![],
            vec![],
        ],
    ];
    let tile = |label: &str, x: (i64, i64), y: (i64, i64)| Prototile {
        label: label.into(),
        edges: pt(x, y),
    };
    let rule = InflationRule {
        name: "frank-robinson".into(),
        dim: 2,
        expansion: ExpansionMap::new(&basis, &["lambda", "lambda"])?,
        basis,
        prototiles: vec![
            tile("large", lam, lam),
            tile("horizontal", lam, one),
            tile("vertical", one, lam),
            tile("small", one, one),
        ],
        displacements,
        stone: true,
        symbolic: None,
    };
    let mut entry = CatalogueEntry::new(rule);
    entry.notes.push(
        "rectangle orientation (type 1 horizontal, type 2 vertical) and placements are a chosen realisation"
            .into(),
    );
    Ok(entry)
}

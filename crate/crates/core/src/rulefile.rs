//! JSON rule files.
//!
//! Rationals are written as `[num, den]` (plain integers are accepted on
//! input). Points and edge vectors list one coefficient vector per spatial
//! coordinate.

use std::collections::BTreeMap;
use std::sync::Arc;

use num_rational::Rational64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inflation::{realize_1d, InflationRule, Prototile, SubstitutionRule1D};
use crate::trigpoly::{ExpansionMap, ExponentVector, FrequencyBasis};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RationalRepr {
    Int(i64),
    Frac([i64; 2]),
}

impl RationalRepr {
    fn value(self) -> Result<Rational64> {
        match self {
            RationalRepr::Int(n) => Ok(Rational64::from_integer(n)),
            RationalRepr::Frac([_, 0]) => Err(Error::Schema("zero denominator".into())),
            RationalRepr::Frac([n, d]) => Ok(Rational64::new(n, d)),
        }
    }

    fn from(q: Rational64) -> Self {
        RationalRepr::Frac([*q.numer(), *q.denom()])
    }
}

type CoeffVec = Vec<RationalRepr>;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GeneratorFile {
    approx: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    minpoly: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BasisFile {
    generators: Vec<GeneratorFile>,
    #[serde(default)]
    multipliers: BTreeMap<String, Vec<CoeffVec>>,
    #[serde(default = "yes")]
    independent: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpansionFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<Vec<Vec<f64>>>,
    factors: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PrototileFile {
    label: String,
    edges: Vec<CoeffVec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SymbolicFile {
    images: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    name: String,
    dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis: Option<BasisFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expansion: Option<ExpansionFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prototiles: Option<Vec<PrototileFile>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    displacements: Option<Vec<Vec<Vec<Vec<CoeffVec>>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    symbolic: Option<SymbolicFile>,
    #[serde(default = "yes")]
    stone: bool,
}

fn yes() -> bool {
    true
}

fn flatten(coords: &[CoeffVec], rank: usize, what: &str) -> Result<ExponentVector> {
    let mut flat = Vec::with_capacity(coords.len() * rank);
    for c in coords {
        if c.len() != rank {
            return Err(Error::Schema(format!(
                "{what}: coefficient vector has {} entries, basis has {rank} generators",
                c.len()
            )));
        }
        for q in c {
            flat.push(q.value()?);
        }
    }
    Ok(ExponentVector::from_rationals(&flat))
}

fn unflatten(v: &ExponentVector, rank: usize) -> Vec<CoeffVec> {
    (0..v.len() / rank)
        .map(|j| v.coordinate(j, rank).into_iter().map(RationalRepr::from).collect())
        .collect()
}

fn build_basis(file: &BasisFile) -> Result<FrequencyBasis> {
    let values: Vec<f64> = file.generators.iter().map(|g| g.approx).collect();
    let mut basis = FrequencyBasis::new(values)?.with_independent(file.independent);
    let names: Vec<String> = file
        .generators
        .iter()
        .enumerate()
        .map(|(i, g)| g.name.clone().unwrap_or_else(|| basis.names()[i].clone()))
        .collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    basis = basis.with_names(&refs);
    for (i, g) in file.generators.iter().enumerate() {
        if let Some(p) = &g.minpoly {
            basis = basis.with_minpoly(i, p.clone());
        }
    }
    for (name, rows) in &file.multipliers {
        let rows = rows
            .iter()
            .map(|r| r.iter().map(|q| q.value()).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        basis.register(name, &rows)?;
    }
    Ok(basis)
}

/// Parses a rule file, reporting schema violations with their field path.
pub fn parse_rule(text: &str) -> Result<InflationRule> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: RuleFile = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Schema(format!("at `{}`: {}", e.path(), e.inner())))?;
    if file.dimension == 0 {
        return Err(Error::Schema("at `dimension`: must be positive".into()));
    }
    let symbolic = file
        .symbolic
        .as_ref()
        .map(|s| {
            let words: Vec<&str> = s.images.iter().map(String::as_str).collect();
            SubstitutionRule1D::from_words(&words)
        })
        .transpose()?;

    let Some(displacements) = &file.displacements else {
        let Some(sym) = symbolic else {
            return Err(Error::Schema(
                "at `displacements`: required unless `symbolic` is given".into(),
            ));
        };
        if file.dimension != 1 {
            return Err(Error::Schema("at `symbolic`: only valid in dimension 1".into()));
        }
        return realize_1d(&file.name, &sym);
    };

    let basis = match &file.basis {
        Some(b) => build_basis(b)?,
        None => FrequencyBasis::unit(),
    };
    let rank = basis.rank();
    let basis = Arc::new(basis);
    let expansion_file = file
        .expansion
        .as_ref()
        .ok_or_else(|| Error::Schema("at `expansion`: missing".into()))?;
    let factors: Vec<&str> = expansion_file.factors.iter().map(String::as_str).collect();
    let expansion = ExpansionMap::new(&basis, &factors)?;
    if let Some(matrix) = &expansion_file.matrix {
        let diag = expansion.diagonal();
        for (i, row) in matrix.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                let expect = if i == j { diag.get(i).copied().unwrap_or(0.0) } else { 0.0 };
                if (x - expect).abs() > 1e-9 * (1.0 + expect.abs()) {
                    return Err(Error::Schema(format!(
                        "at `expansion.matrix[{i}][{j}]`: {x} disagrees with the factors \
                         (only diagonal expansions are supported)"
                    )));
                }
            }
        }
    }
    let prototiles = file
        .prototiles
        .as_ref()
        .ok_or_else(|| Error::Schema("at `prototiles`: missing".into()))?
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if p.edges.len() != file.dimension {
                return Err(Error::Schema(format!(
                    "at `prototiles[{i}].edges`: expected {} coordinates",
                    file.dimension
                )));
            }
            Ok(Prototile {
                label: p.label.clone(),
                edges: flatten(&p.edges, rank, &format!("prototiles[{i}].edges"))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let displacements = displacements
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, cell)| {
                    cell.iter()
                        .enumerate()
                        .map(|(n, pt)| {
                            let at = format!("displacements[{i}][{j}][{n}]");
                            if pt.len() != file.dimension {
                                return Err(Error::Schema(format!(
                                    "at `{at}`: expected {} coordinates",
                                    file.dimension
                                )));
                            }
                            flatten(pt, rank, &at)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rule = InflationRule {
        name: file.name,
        dim: file.dimension,
        basis,
        expansion,
        prototiles,
        displacements,
        stone: file.stone,
        symbolic,
    };
    rule.check()?;
    Ok(rule)
}

/// Serialises a rule in the rule-file format.
pub fn rule_to_json(rule: &InflationRule) -> String {
    let basis = &rule.basis;
    let rank = basis.rank();
    let file = RuleFile {
        name: rule.name.clone(),
        dimension: rule.dim,
        basis: Some(BasisFile {
            generators: (0..rank)
                .map(|i| GeneratorFile {
                    approx: basis.values()[i],
                    minpoly: basis.minpoly(i).map(<[i64]>::to_vec),
                    name: Some(basis.names()[i].clone()),
                })
                .collect(),
            multipliers: basis
                .registered()
                .iter()
                .map(|m| {
                    (
                        m.name().to_string(),
                        m.rows()
                            .into_iter()
                            .map(|r| r.into_iter().map(RationalRepr::from).collect())
                            .collect(),
                    )
                })
                .collect(),
            independent: basis.is_independent(),
        }),
        expansion: Some(ExpansionFile {
            matrix: Some(
                (0..rule.dim)
                    .map(|i| {
                        (0..rule.dim)
                            .map(|j| if i == j { rule.expansion.diagonal()[i] } else { 0.0 })
                            .collect()
                    })
                    .collect(),
            ),
            factors: rule.expansion.factor_names(),
        }),
        prototiles: Some(
            rule.prototiles
                .iter()
                .map(|p| PrototileFile {
                    label: p.label.clone(),
                    edges: unflatten(&p.edges, rank),
                })
                .collect(),
        ),
        displacements: Some(
            rule.displacements
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|cell| cell.iter().map(|t| unflatten(t, rank)).collect())
                        .collect()
                })
                .collect(),
        ),
        symbolic: rule.symbolic.as_ref().map(|s| SymbolicFile { images: s.words() }),
        stone: rule.stone,
    };
    serde_json::to_string_pretty(&file).expect("rule serialises")
}

/// Reads a rule file from disk.
pub fn load_rule(path: &std::path::Path) -> Result<InflationRule> {
    parse_rule(&std::fs::read_to_string(path)?)
}

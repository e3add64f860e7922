//! TOML problem files.
//!
//! ```toml
//! n = 1
//! N = 2
//! W = 2
//! beta = 1.0
//! H_diag = [-1.0, -1.0]
//!
//! [[terms]]
//! kind = "quadratic"
//! a = [1.0]
//! w = 1.0
//!
//! [[terms]]
//! kind = "absdev"
//! a = [3.0]
//!
//! [[x_sets]]
//! kind = "free"
//!
//! [[x_sets]]
//! kind = "box"
//! lower = [-5.0]
//! upper = [5.0]
//!
//! [z_set]
//! kind = "sum_zero_pairs"
//! pairs = [[0, 1]]
//!
//! [[D_rows]]
//! row = 0
//! block = 0
//! coeff = 1.0
//!
//! [[D_rows]]
//! row = 1
//! block = 1
//! coeff = -1.0
//! ```
//!
//! `block` is the component index; `coord` (default 0) selects the
//! coordinate when `n > 1`. Term kinds are `quadratic` (`w` defaults to 1),
//! `absdev`, `l1` (`gamma`) and `custom` with `function` one of `linear`,
//! `exp`, `softplus`, `cosh`, `huber` and an optional `scale`.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use asyncadmm_core::{
    validate_constraints, ConstraintSystem, ConvexTerm, DEntry, FeasibleSet, ScalarConvex,
    SeparableProblem,
};

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub n: usize,
    #[serde(rename = "N")]
    pub components: usize,
    #[serde(rename = "W")]
    pub rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(rename = "H_diag")]
    pub h_diag: Vec<f64>,
    pub terms: Vec<TermSpec>,
    pub x_sets: Vec<SetSpec>,
    pub z_set: SetSpec,
    #[serde(rename = "D_rows")]
    pub d_rows: Vec<DRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TermSpec {
    Quadratic {
        a: Vec<f64>,
        #[serde(default = "one")]
        w: f64,
    },
    Absdev {
        a: Vec<f64>,
    },
    L1 {
        gamma: f64,
    },
    Custom {
        function: CustomFunction,
        #[serde(default = "one")]
        scale: f64,
    },
}

fn one() -> f64 {
    1.0
}

/// Built-in scalar convex functions for `custom` terms, each multiplied by
/// `scale`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomFunction {
    Linear,
    Exp,
    Softplus,
    Cosh,
    /// `u^2/2` for `|u| <= 1`, `|u| - 1/2` beyond.
    Huber,
}

#[derive(Clone, Copy, Debug)]
struct Builtin {
    function: CustomFunction,
    scale: f64,
}

impl ScalarConvex for Builtin {
    fn value(&self, u: f64) -> f64 {
        let v = match self.function {
            CustomFunction::Linear => u,
            CustomFunction::Exp => u.exp(),
            CustomFunction::Softplus => softplus(u),
            CustomFunction::Cosh => u.cosh(),
            CustomFunction::Huber => {
                if u.abs() <= 1.0 {
                    0.5 * u * u
                } else {
                    u.abs() - 0.5
                }
            }
        };
        self.scale * v
    }

    fn subgradient(&self, u: f64) -> f64 {
        let g = match self.function {
            CustomFunction::Linear => 1.0,
            CustomFunction::Exp => u.exp(),
            CustomFunction::Softplus => 1.0 / (1.0 + (-u).exp()),
            CustomFunction::Cosh => u.sinh(),
            CustomFunction::Huber => u.clamp(-1.0, 1.0),
        };
        self.scale * g
    }
}

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetSpec {
    Free,
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    SumZeroPairs {
        pairs: Vec<[usize; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        bound: Option<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DRow {
    pub row: usize,
    pub block: usize,
    pub coeff: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub coord: usize,
}

fn is_zero(c: &usize) -> bool {
    *c == 0
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

impl TermSpec {
    pub fn to_term(&self, n: usize) -> Result<ConvexTerm> {
        Ok(match self {
            TermSpec::Quadratic { a, w } => ConvexTerm::quadratic(a.clone(), *w)?,
            TermSpec::Absdev { a } => ConvexTerm::abs_dev(a.clone())?,
            TermSpec::L1 { gamma } => ConvexTerm::l1(*gamma, n)?,
            TermSpec::Custom { function, scale } => {
                if n != 1 {
                    return Err(invalid("custom terms need n = 1"));
                }
                if !scale.is_finite() || (*function != CustomFunction::Linear && *scale < 0.0) {
                    return Err(invalid(format!(
                        "custom {function:?} term needs a finite nonnegative scale, got {scale}"
                    )));
                }
                ConvexTerm::custom(
                    Arc::new(Builtin {
                        function: *function,
                        scale: *scale,
                    }),
                    true,
                )
            }
        })
    }
}

impl SetSpec {
    pub fn to_set(&self, dim: usize) -> Result<FeasibleSet> {
        Ok(match self {
            SetSpec::Free => FeasibleSet::free(dim),
            SetSpec::Box { lower, upper } => {
                if lower.len() != dim {
                    return Err(invalid(format!(
                        "box has {} coordinates, expected {dim}",
                        lower.len()
                    )));
                }
                FeasibleSet::boxed(lower.clone(), upper.clone())?
            }
            SetSpec::SumZeroPairs { pairs, bound } => FeasibleSet::sum_zero_pairs(
                dim,
                pairs.iter().map(|[a, b]| (*a, *b)).collect(),
                *bound,
            )?,
        })
    }
}

impl ProblemFile {
    /// Builds the problem, using `beta` when given and the file's own value
    /// (or 1.0) otherwise.
    pub fn to_problem(&self, beta: Option<f64>) -> Result<SeparableProblem> {
        let n = self.n;
        let count = |what: &str, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(invalid(format!("{what}: expected {expected}, found {found}")))
            }
        };
        count("terms", self.components, self.terms.len())?;
        count("x_sets", self.components, self.x_sets.len())?;
        count("H_diag", self.rows, self.h_diag.len())?;
        if self.x_sets.iter().any(|s| matches!(s, SetSpec::SumZeroPairs { .. })) {
            return Err(invalid("x_sets cannot be sum_zero_pairs"));
        }
        let terms = self
            .terms
            .iter()
            .map(|t| t.to_term(n))
            .collect::<Result<Vec<_>>>()?;
        let x_sets = self
            .x_sets
            .iter()
            .map(|s| s.to_set(n))
            .collect::<Result<Vec<_>>>()?;
        let z_set = self.z_set.to_set(self.rows)?;
        let entries = self
            .d_rows
            .iter()
            .map(|r| DEntry {
                row: r.row,
                component: r.block,
                coord: r.coord,
                coeff: r.coeff,
            })
            .collect();
        let cs = ConstraintSystem::new(n, self.components, entries, self.h_diag.clone())?;
        let report = validate_constraints(&cs);
        if !report.is_valid() {
            return Err(invalid(format!("constraint structure: {report}")));
        }
        let beta = beta.or(self.beta).unwrap_or(1.0);
        Ok(SeparableProblem::new(terms, x_sets, z_set, cs, beta)?)
    }
}

pub fn parse_problem(text: &str, name: &str) -> Result<ProblemFile> {
    toml::from_str(text).map_err(|e| crate::config::toml_error(e, text, name))
}

pub fn read_problem(path: &Path) -> Result<ProblemFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_problem(&text, &path.display().to_string())
}

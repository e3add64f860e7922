//! Problem data: separable objective terms, feasible sets, the decoupled
//! constraint system `Dx + Hz = 0`, and the basic evaluations on top of them.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::vecops::{all_finite, dot};

/// A scalar convex function supplied by the caller.
///
/// `subgradient` must return an element of the subdifferential at `u`
/// and must be nondecreasing in `u`.
pub trait ScalarConvex: Send + Sync {
    fn value(&self, u: f64) -> f64;
    fn subgradient(&self, u: f64) -> f64;
}

#[derive(Clone)]
pub enum TermKind {
    /// `w * ||u - a||^2`
    Quadratic { a: Vec<f64>, w: f64 },
    /// `||u - a||_1`
    AbsDev { a: Vec<f64> },
    /// `gamma * ||u||_1`
    L1 { gamma: f64 },
    /// Caller-provided scalar function. Only terms flagged `scalar_convex`
    /// can be handed to the bisection solver.
    Custom {
        oracle: Arc<dyn ScalarConvex>,
        scalar_convex: bool,
    },
}

impl fmt::Debug for TermKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TermKind::Quadratic { a, w } => f
                .debug_struct("Quadratic")
                .field("a", a)
                .field("w", w)
                .finish(),
            TermKind::AbsDev { a } => f.debug_struct("AbsDev").field("a", a).finish(),
            TermKind::L1 { gamma } => f.debug_struct("L1").field("gamma", gamma).finish(),
            TermKind::Custom { scalar_convex, .. } => f
                .debug_struct("Custom")
                .field("scalar_convex", scalar_convex)
                .finish_non_exhaustive(),
        }
    }
}

/// One local objective `f_i` acting on a component of dimension `dim`.
#[derive(Clone, Debug)]
pub struct ConvexTerm {
    kind: TermKind,
    dim: usize,
}

impl ConvexTerm {
    pub fn quadratic(a: Vec<f64>, w: f64) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::InvalidTerm("quadratic center must be nonempty".into()));
        }
        if !(w > 0.0 && w.is_finite()) || !all_finite(&a) {
            return Err(Error::InvalidTerm(format!(
                "quadratic weight must be positive and finite, got {w}"
            )));
        }
        let dim = a.len();
        Ok(Self {
            kind: TermKind::Quadratic { a, w },
            dim,
        })
    }

    pub fn abs_dev(a: Vec<f64>) -> Result<Self> {
        if a.is_empty() || !all_finite(&a) {
            return Err(Error::InvalidTerm(
                "absolute-deviation center must be nonempty and finite".into(),
            ));
        }
        let dim = a.len();
        Ok(Self {
            kind: TermKind::AbsDev { a },
            dim,
        })
    }

    pub fn l1(gamma: f64, dim: usize) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidTerm(format!(
                "l1 weight must be nonnegative, got {gamma}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidTerm("dimension must be positive".into()));
        }
        Ok(Self {
            kind: TermKind::L1 { gamma },
            dim,
        })
    }

    /// A scalar (dimension 1) custom term.
    pub fn custom(oracle: Arc<dyn ScalarConvex>, scalar_convex: bool) -> Self {
        Self {
            kind: TermKind::Custom {
                oracle,
                scalar_convex,
            },
            dim: 1,
        }
    }

    pub fn kind(&self) -> &TermKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Value of the term restricted to coordinate `c`; built-in kinds are
    /// coordinate-separable so `value(u) = sum_c coord_value(c, u_c)`.
    pub fn coord_value(&self, c: usize, u: f64) -> f64 {
        match &self.kind {
            TermKind::Quadratic { a, w } => {
                let d = u - a[c];
                w * d * d
            }
            TermKind::AbsDev { a } => libm::fabs(u - a[c]),
            TermKind::L1 { gamma } => gamma * libm::fabs(u),
            TermKind::Custom { oracle, .. } => oracle.value(u),
        }
    }

    /// A subgradient of the coordinate restriction. At kinks the built-in
    /// kinds return the midpoint of the subdifferential.
    pub fn coord_subgradient(&self, c: usize, u: f64) -> f64 {
        match &self.kind {
            TermKind::Quadratic { a, w } => 2.0 * w * (u - a[c]),
            TermKind::AbsDev { a } => sign(u - a[c]),
            TermKind::L1 { gamma } => gamma * sign(u),
            TermKind::Custom { oracle, .. } => oracle.subgradient(u),
        }
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        match &self.kind {
            TermKind::Custom { oracle, .. } => oracle.value(u[0]),
            _ => (0..self.dim).map(|c| self.coord_value(c, u[c])).sum(),
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Constraint sets for a component `x_i` or for `z`.
#[derive(Clone, Debug, PartialEq)]
pub enum FeasibleSet {
    Free {
        dim: usize,
    },
    Box {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// `z_a + z_b = 0` for every listed pair. An optional `bound` adds
    /// `|z_l| <= bound` on every coordinate, which makes the set compact.
    SumZeroPairs {
        dim: usize,
        pairs: Vec<(usize, usize)>,
        bound: Option<f64>,
    },
}

impl FeasibleSet {
    pub fn free(dim: usize) -> Self {
        FeasibleSet::Free { dim }
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                what: "box bounds",
                expected: lower.len(),
                found: upper.len(),
            });
        }
        for (c, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::InvalidSet(format!(
                    "box coordinate {c}: lower {lo} exceeds upper {hi}"
                )));
            }
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    pub fn sum_zero_pairs(
        dim: usize,
        pairs: Vec<(usize, usize)>,
        bound: Option<f64>,
    ) -> Result<Self> {
        let mut seen = vec![false; dim];
        for &(a, b) in &pairs {
            if a >= dim || b >= dim || a == b {
                return Err(Error::InvalidSet(format!(
                    "pair ({a}, {b}) out of range or degenerate for dimension {dim}"
                )));
            }
            if seen[a] || seen[b] {
                return Err(Error::InvalidSet(format!("pair ({a}, {b}) overlaps another pair")));
            }
            seen[a] = true;
            seen[b] = true;
        }
        if let Some(bnd) = bound {
            if bnd.is_nan() || bnd <= 0.0 {
                return Err(Error::InvalidSet(format!("bound must be positive, got {bnd}")));
            }
        }
        Ok(FeasibleSet::SumZeroPairs { dim, pairs, bound })
    }

    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Free { dim } | FeasibleSet::SumZeroPairs { dim, .. } => *dim,
            FeasibleSet::Box { lower, .. } => lower.len(),
        }
    }

    pub fn is_compact(&self) -> bool {
        match self {
            FeasibleSet::Free { dim } => *dim == 0,
            FeasibleSet::Box { lower, upper } => {
                lower.iter().chain(upper).all(|v| v.is_finite())
            }
            FeasibleSet::SumZeroPairs { bound, dim, .. } => bound.is_some() || *dim == 0,
        }
    }

    /// Per-coordinate interval implied by the set (ignoring couplings).
    pub fn coord_bounds(&self, c: usize) -> (f64, f64) {
        match self {
            FeasibleSet::Free { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            FeasibleSet::Box { lower, upper } => (lower[c], upper[c]),
            FeasibleSet::SumZeroPairs { bound, .. } => match bound {
                Some(b) => (-b, *b),
                None => (f64::NEG_INFINITY, f64::INFINITY),
            },
        }
    }

    /// The coordinate coupled to `c`, if any.
    pub fn partner(&self, c: usize) -> Option<usize> {
        match self {
            FeasibleSet::SumZeroPairs { pairs, .. } => pairs.iter().find_map(|&(a, b)| {
                if a == c {
                    Some(b)
                } else if b == c {
                    Some(a)
                } else {
                    None
                }
            }),
            _ => None,
        }
    }

    pub fn contains(&self, v: &[f64], tol: f64) -> bool {
        if v.len() != self.dim() {
            return false;
        }
        let in_bounds = v.iter().enumerate().all(|(c, &u)| {
            let (lo, hi) = self.coord_bounds(c);
            u >= lo - tol && u <= hi + tol
        });
        let coupled = match self {
            FeasibleSet::SumZeroPairs { pairs, .. } => pairs
                .iter()
                .all(|&(a, b)| libm::fabs(v[a] + v[b]) <= tol),
            _ => true,
        };
        in_bounds && coupled
    }

    /// The projection of the set onto the listed coordinates, re-indexed
    /// in the order given. Fails if a coupled pair is split by `coords`.
    pub fn restrict(&self, coords: &[usize]) -> Result<FeasibleSet> {
        match self {
            FeasibleSet::Free { .. } => Ok(FeasibleSet::Free { dim: coords.len() }),
            FeasibleSet::Box { lower, upper } => Ok(FeasibleSet::Box {
                lower: coords.iter().map(|&c| lower[c]).collect(),
                upper: coords.iter().map(|&c| upper[c]).collect(),
            }),
            FeasibleSet::SumZeroPairs { pairs, bound, .. } => {
                let local = |g: usize| coords.iter().position(|&c| c == g);
                let mut out = Vec::new();
                for &(a, b) in pairs {
                    match (local(a), local(b)) {
                        (Some(la), Some(lb)) => out.push((la, lb)),
                        (None, None) => {}
                        _ => return Err(Error::ImproperPartition { row_a: a, row_b: b }),
                    }
                }
                Ok(FeasibleSet::SumZeroPairs {
                    dim: coords.len(),
                    pairs: out,
                    bound: *bound,
                })
            }
        }
    }
}

/// One nonzero of `D`: row `row` touches coordinate `coord` of component
/// `component` with coefficient `coeff`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DEntry {
    pub row: usize,
    pub component: usize,
    pub coord: usize,
    pub coeff: f64,
}

/// `D` (W x nN, one nonzero per row) and diagonal `H` (W x W).
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSystem {
    n: usize,
    components: usize,
    entries: Vec<DEntry>,
    h_diag: Vec<f64>,
}

impl ConstraintSystem {
    /// Checks index ranges only; structural properties are reported by
    /// [`validate_constraints`].
    pub fn new(
        n: usize,
        components: usize,
        entries: Vec<DEntry>,
        h_diag: Vec<f64>,
    ) -> Result<Self> {
        if n == 0 || components == 0 {
            return Err(Error::InvalidArgument(
                "component dimension and count must be positive".into(),
            ));
        }
        let rows = h_diag.len();
        for e in &entries {
            if e.row >= rows || e.component >= components || e.coord >= n {
                return Err(Error::InvalidArgument(format!(
                    "D entry (row {}, component {}, coord {}) out of range",
                    e.row, e.component, e.coord
                )));
            }
            if !e.coeff.is_finite() {
                return Err(Error::NonfiniteInput);
            }
        }
        if !all_finite(&h_diag) {
            return Err(Error::NonfiniteInput);
        }
        Ok(Self {
            n,
            components,
            entries,
            h_diag,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn rows(&self) -> usize {
        self.h_diag.len()
    }

    pub fn entries(&self) -> &[DEntry] {
        &self.entries
    }

    pub fn h_diag(&self) -> &[f64] {
        &self.h_diag
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    MultiEntryRow { row: usize, count: usize },
    EmptyRow { row: usize },
    ZeroColumnBlock { component: usize },
    ZeroColumn { component: usize, coord: usize },
    ZeroHDiagonal { row: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MultiEntryRow { row, count } => {
                write!(f, "row {row} couples two components ({count} nonzeros)")
            }
            Violation::EmptyRow { row } => write!(f, "row {row} of D has no nonzero entry"),
            Violation::ZeroColumnBlock { component } => {
                write!(f, "component {component} appears in no constraint")
            }
            Violation::ZeroColumn { component, coord } => {
                write!(f, "column {coord} of component {component} is all zeros")
            }
            Violation::ZeroHDiagonal { row } => {
                write!(f, "H not invertible: zero diagonal entry at row {row}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Reports every breach of the decoupled-constraint structure: each row of
/// `D` has exactly one nonzero, no column of `D` is zero, `H` has no zero
/// on its diagonal.
pub fn validate_constraints(cs: &ConstraintSystem) -> ValidationReport {
    let mut violations = Vec::new();
    let mut row_count = vec![0usize; cs.rows()];
    let mut col_hit = vec![false; cs.n * cs.components];
    for e in cs.entries.iter().filter(|e| e.coeff != 0.0) {
        row_count[e.row] += 1;
        col_hit[e.component * cs.n + e.coord] = true;
    }
    for (row, &count) in row_count.iter().enumerate() {
        match count {
            0 => violations.push(Violation::EmptyRow { row }),
            1 => {}
            _ => violations.push(Violation::MultiEntryRow { row, count }),
        }
    }
    for component in 0..cs.components {
        let cols = &col_hit[component * cs.n..(component + 1) * cs.n];
        if cols.iter().all(|h| !h) {
            violations.push(Violation::ZeroColumnBlock { component });
        } else {
            for (coord, hit) in cols.iter().enumerate() {
                if !hit {
                    violations.push(Violation::ZeroColumn { component, coord });
                }
            }
        }
    }
    for (row, &h) in cs.h_diag.iter().enumerate() {
        if h == 0.0 {
            violations.push(Violation::ZeroHDiagonal { row });
        }
    }
    ValidationReport { violations }
}

/// The single nonzero of a row of `D`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RowEntry {
    pub component: usize,
    pub coord: usize,
    pub coeff: f64,
}

/// `min sum_i f_i(x_i)  s.t.  Dx + Hz = 0, x_i in X_i, z in Z`, with
/// augmented-Lagrangian penalty `beta`.
#[derive(Clone, Debug)]
pub struct SeparableProblem {
    terms: Vec<ConvexTerm>,
    x_sets: Vec<FeasibleSet>,
    z_set: FeasibleSet,
    constraints: ConstraintSystem,
    beta: f64,
    row_entry: Vec<RowEntry>,
    // rows touching column `component * n + coord`
    column_rows: Vec<Vec<usize>>,
}

impl SeparableProblem {
    pub fn new(
        terms: Vec<ConvexTerm>,
        x_sets: Vec<FeasibleSet>,
        z_set: FeasibleSet,
        constraints: ConstraintSystem,
        beta: f64,
    ) -> Result<Self> {
        let n = constraints.n();
        let comps = constraints.components();
        let rows = constraints.rows();
        if terms.len() != comps {
            return Err(Error::DimensionMismatch {
                what: "number of terms",
                expected: comps,
                found: terms.len(),
            });
        }
        if x_sets.len() != comps {
            return Err(Error::DimensionMismatch {
                what: "number of component sets",
                expected: comps,
                found: x_sets.len(),
            });
        }
        if let Some(t) = terms.iter().find(|t| t.dim() != n) {
            return Err(Error::DimensionMismatch {
                what: "term dimension",
                expected: n,
                found: t.dim(),
            });
        }
        if let Some(s) = x_sets.iter().find(|s| s.dim() != n) {
            return Err(Error::DimensionMismatch {
                what: "component set dimension",
                expected: n,
                found: s.dim(),
            });
        }
        if x_sets
            .iter()
            .any(|s| matches!(s, FeasibleSet::SumZeroPairs { .. }))
        {
            return Err(Error::UnsupportedSet(
                "sum-zero coupling is only available for z",
            ));
        }
        if z_set.dim() != rows {
            return Err(Error::DimensionMismatch {
                what: "z set dimension",
                expected: rows,
                found: z_set.dim(),
            });
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be positive and finite, got {beta}"
            )));
        }
        let report = validate_constraints(&constraints);
        if !report.is_valid() {
            return Err(Error::InvalidConstraints(report));
        }
        let mut row_entry = vec![
            RowEntry {
                component: 0,
                coord: 0,
                coeff: 0.0
            };
            rows
        ];
        let mut column_rows = vec![Vec::new(); n * comps];
        for e in constraints.entries().iter().filter(|e| e.coeff != 0.0) {
            row_entry[e.row] = RowEntry {
                component: e.component,
                coord: e.coord,
                coeff: e.coeff,
            };
            column_rows[e.component * n + e.coord].push(e.row);
        }
        for rows in &mut column_rows {
            rows.sort_unstable();
        }
        Ok(Self {
            terms,
            x_sets,
            z_set,
            constraints,
            beta,
            row_entry,
            column_rows,
        })
    }

    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Self::new(
            self.terms.clone(),
            self.x_sets.clone(),
            self.z_set.clone(),
            self.constraints.clone(),
            beta,
        )
    }

    /// Dimension of each component.
    pub fn n(&self) -> usize {
        self.constraints.n()
    }

    pub fn num_components(&self) -> usize {
        self.constraints.components()
    }

    /// Number of constraint rows `W`.
    pub fn num_rows(&self) -> usize {
        self.constraints.rows()
    }

    pub fn x_len(&self) -> usize {
        self.n() * self.num_components()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn terms(&self) -> &[ConvexTerm] {
        &self.terms
    }

    pub fn x_sets(&self) -> &[FeasibleSet] {
        &self.x_sets
    }

    pub fn z_set(&self) -> &FeasibleSet {
        &self.z_set
    }

    pub fn constraints(&self) -> &ConstraintSystem {
        &self.constraints
    }

    pub fn h(&self, row: usize) -> f64 {
        self.constraints.h_diag()[row]
    }

    pub fn row(&self, row: usize) -> RowEntry {
        self.row_entry[row]
    }

    /// Rows whose nonzero sits on coordinate `coord` of component `component`.
    pub fn column_rows(&self, component: usize, coord: usize) -> &[usize] {
        &self.column_rows[component * self.n() + coord]
    }

    /// `[Dx]_row`
    pub fn d_row_dot(&self, row: usize, x: &[f64]) -> f64 {
        let e = self.row_entry[row];
        e.coeff * x[e.component * self.n() + e.coord]
    }

    pub fn d_times(&self, x: &[f64]) -> Vec<f64> {
        (0..self.num_rows()).map(|l| self.d_row_dot(l, x)).collect()
    }

    pub fn h_times(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.constraints.h_diag())
            .map(|(zl, h)| zl * h)
            .collect()
    }

    pub(crate) fn check_x(&self, x: &[f64]) -> Result<()> {
        check_len("x", self.x_len(), x.len())
    }

    pub(crate) fn check_w(&self, what: &'static str, v: &[f64]) -> Result<()> {
        check_len(what, self.num_rows(), v.len())
    }

    pub fn x_in_sets(&self, x: &[f64], tol: f64) -> bool {
        let n = self.n();
        x.len() == self.x_len()
            && self
                .x_sets
                .iter()
                .enumerate()
                .all(|(i, s)| s.contains(&x[i * n..(i + 1) * n], tol))
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    } else {
        Ok(())
    }
}

/// `F(x) = sum_i f_i(x_i)`
pub fn objective(prob: &SeparableProblem, x: &[f64]) -> Result<f64> {
    prob.check_x(x)?;
    let n = prob.n();
    Ok(prob
        .terms
        .iter()
        .enumerate()
        .map(|(i, t)| t.value(&x[i * n..(i + 1) * n]))
        .sum())
}

/// `Dx + Hz`
pub fn residual(prob: &SeparableProblem, x: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    prob.check_x(x)?;
    prob.check_w("z", z)?;
    Ok((0..prob.num_rows())
        .map(|l| prob.d_row_dot(l, x) + prob.h(l) * z[l])
        .collect())
}

/// `F(x) - p'(Dx + Hz)`
pub fn lagrangian(prob: &SeparableProblem, x: &[f64], z: &[f64], p: &[f64]) -> Result<f64> {
    prob.check_w("p", p)?;
    let r = residual(prob, x, z)?;
    Ok(objective(prob, x)? - dot(p, &r))
}

/// Iterates `(x^k, z^k, p^k)` and the iteration counter.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalDualState {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub k: u64,
}

impl PrimalDualState {
    pub fn new(prob: &SeparableProblem, x: Vec<f64>, z: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        prob.check_x(&x)?;
        prob.check_w("z", &z)?;
        prob.check_w("p", &p)?;
        Ok(Self { x, z, p, k: 0 })
    }

    /// Starts from `x0` with `p^0 = 0` and `z^0` the point of `Z` closest to
    /// satisfying `Dx0 + Hz = 0` (for edge problems: `A_ei x_i` projected
    /// onto each sum-zero pair).
    pub fn initial(prob: &SeparableProblem, x0: Vec<f64>) -> Result<Self> {
        prob.check_x(&x0)?;
        if !prob.x_in_sets(&x0, 0.0) {
            return Err(Error::InvalidArgument(
                "initial x lies outside its feasible sets".into(),
            ));
        }
        let target: Vec<f64> = prob.d_times(&x0).iter().map(|v| -v).collect();
        let z = crate::prox::solve_z_block(&crate::prox::ZBlockSubproblem {
            weights: prob.constraints.h_diag().to_vec(),
            target,
            set: prob.z_set.clone(),
        })?;
        let w = prob.num_rows();
        Ok(Self {
            x: x0,
            z,
            p: vec![0.0; w],
            k: 0,
        })
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.x) && all_finite(&self.z) && all_finite(&self.p)
    }
}

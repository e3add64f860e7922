//! Benchmark generators on a graph. Every node holds a scalar `x_i` and the
//! nodes must agree (edge reformulation with one block per edge).
//!
//! * `consensus-quadratic`: `f_i(x) = w_i (x - a_i)^2`, `w_i = 1` by default.
//! * `consensus-lad`: `f_i(x) = |x - a_i|`.
//! * `lasso-toy`: nodes `0..N-1` hold `(W_i x - b_i)^2` and the last node
//!   holds `pi |x|`, so the graph has `len(w) + 1` nodes.

use std::fmt;
use std::str::FromStr;

use asyncadmm_core::{
    build_reformulation, consensus_reference, objective, ConvexTerm, EdgeReformulation,
    FeasibleSet, Graph, ReferenceSolution, ReferenceSource,
};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchmarkKind {
    ConsensusQuadratic,
    ConsensusLad,
    LassoToy,
}

impl BenchmarkKind {
    pub fn name(self) -> &'static str {
        match self {
            BenchmarkKind::ConsensusQuadratic => "consensus-quadratic",
            BenchmarkKind::ConsensusLad => "consensus-lad",
            BenchmarkKind::LassoToy => "lasso-toy",
        }
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenchmarkKind {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "consensus-quadratic" => Ok(BenchmarkKind::ConsensusQuadratic),
            "consensus-lad" => Ok(BenchmarkKind::ConsensusLad),
            "lasso-toy" => Ok(BenchmarkKind::LassoToy),
            other => Err(CliError::UnknownBenchmark(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkSpec {
    pub kind: BenchmarkKind,
    pub a: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub pi: f64,
    pub box_bound: Option<f64>,
    pub z_bound: Option<f64>,
}

impl BenchmarkSpec {
    pub fn new(kind: BenchmarkKind) -> Self {
        Self {
            kind,
            a: Vec::new(),
            weights: None,
            w: Vec::new(),
            b: Vec::new(),
            pi: 0.0,
            box_bound: None,
            z_bound: None,
        }
    }

    /// Number of graph nodes the data describe.
    pub fn nodes(&self) -> usize {
        match self.kind {
            BenchmarkKind::LassoToy => self.w.len() + 1,
            _ => self.a.len(),
        }
    }

    pub fn terms(&self) -> Result<Vec<ConvexTerm>> {
        let bad = |m: String| CliError::Validation(m);
        match self.kind {
            BenchmarkKind::ConsensusQuadratic => {
                let weights = match &self.weights {
                    Some(w) if w.len() != self.a.len() => {
                        return Err(bad(format!(
                            "{} weights for {} nodes",
                            w.len(),
                            self.a.len()
                        )))
                    }
                    Some(w) => w.clone(),
                    None => vec![1.0; self.a.len()],
                };
                self.a
                    .iter()
                    .zip(weights)
                    .map(|(&a, w)| Ok(ConvexTerm::quadratic(vec![a], w)?))
                    .collect()
            }
            BenchmarkKind::ConsensusLad => self
                .a
                .iter()
                .map(|&a| Ok(ConvexTerm::abs_dev(vec![a])?))
                .collect(),
            BenchmarkKind::LassoToy => {
                if self.w.len() != self.b.len() {
                    return Err(bad(format!("{} W values but {} b values", self.w.len(), self.b.len())));
                }
                if self.w.is_empty() {
                    return Err(bad("lasso-toy needs at least one (W, b) pair".into()));
                }
                let mut terms = self
                    .w
                    .iter()
                    .zip(&self.b)
                    .map(|(&w, &b)| {
                        if w == 0.0 || !w.is_finite() {
                            return Err(bad(format!("W values must be finite and nonzero, got {w}")));
                        }
                        Ok(ConvexTerm::quadratic(vec![b / w], w * w)?)
                    })
                    .collect::<Result<Vec<_>>>()?;
                terms.push(ConvexTerm::l1(self.pi, 1)?);
                Ok(terms)
            }
        }
    }
}

/// A generated problem with its known solution. `reference.p` is filled in
/// by [`Benchmark::with_dual`]; until then it is zero.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub spec: BenchmarkSpec,
    pub reform: EdgeReformulation,
    /// The common value `x*` of every node.
    pub consensus: f64,
    pub reference: ReferenceSolution,
}

pub fn generate_benchmark(spec: &BenchmarkSpec, graph: &Graph, beta: f64) -> Result<Benchmark> {
    if spec.nodes() != graph.nodes() {
        return Err(CliError::Validation(format!(
            "{} needs a graph with {} nodes, got {}",
            spec.kind,
            spec.nodes(),
            graph.nodes()
        )));
    }
    if spec.nodes() < 2 {
        return Err(CliError::Validation("benchmarks need at least 2 nodes".into()));
    }
    for (name, v) in [("box_bound", spec.box_bound), ("z_bound", spec.z_bound)] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Validation(format!("{name} must be positive, got {v}")));
            }
        }
    }
    let terms = spec.terms()?;
    let mut xstar = consensus_reference(&terms)?;
    let x_set = match spec.box_bound {
        Some(r) => FeasibleSet::boxed(vec![-r], vec![r])?,
        None => FeasibleSet::free(1),
    };
    // a one-dimensional convex sum is minimized over an interval by clamping
    if let Some(r) = spec.box_bound {
        xstar = xstar.into_iter().map(|v| v.clamp(-r, r)).collect();
    }
    if let Some(r) = spec.z_bound {
        xstar = xstar.into_iter().map(|v| v.clamp(-r, r)).collect();
    }
    let consensus = xstar[0];
    let reform = build_reformulation(
        graph,
        terms,
        vec![x_set; graph.nodes()],
        beta,
        1,
        spec.z_bound,
    )?;
    let prob = reform.problem();
    let x = vec![consensus; graph.nodes()];
    let z = prob.d_times(&x);
    let p = vec![0.0; prob.num_rows()];
    let reference = ReferenceSolution::new(prob, x, z, p, ReferenceSource::Analytic)?;
    Ok(Benchmark {
        spec: spec.clone(),
        reform,
        consensus,
        reference,
    })
}

impl Benchmark {
    /// Attaches a dual solution taken from a synchronous run converged to
    /// `1e-10`. The primal part stays the analytic one.
    pub fn with_dual(mut self) -> Result<Self> {
        let prob = self.reform.problem();
        let x0 = vec![0.0; prob.x_len()];
        let sync = ReferenceSolution::from_sync(prob, x0, 1e-10, 1_000_000)?;
        self.reference.p = sync.p;
        Ok(self)
    }

    pub fn optimal_value(&self) -> Result<f64> {
        Ok(objective(self.reform.problem(), &self.reference.x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: BenchmarkKind, a: &[f64]) -> BenchmarkSpec {
        BenchmarkSpec {
            a: a.to_vec(),
            ..BenchmarkSpec::new(kind)
        }
    }

    #[test]
    fn quadratic_triangle_mean() {
        let g = Graph::cycle(3).unwrap();
        let b = generate_benchmark(&spec(BenchmarkKind::ConsensusQuadratic, &[1.0, 2.0, 3.0]), &g, 1.0)
            .unwrap();
        assert!((b.consensus - 2.0).abs() < 1e-12);
    }

    #[test]
    fn lad_median() {
        let g = Graph::cycle(3).unwrap();
        let b = generate_benchmark(&spec(BenchmarkKind::ConsensusLad, &[0.0, 0.0, 10.0]), &g, 1.0).unwrap();
        assert_eq!(b.consensus, 0.0);
    }

    #[test]
    fn lasso_large_pi_gives_zero() {
        let s = BenchmarkSpec {
            w: vec![1.0, 2.0],
            b: vec![1.0, 1.0],
            pi: 100.0,
            ..BenchmarkSpec::new(BenchmarkKind::LassoToy)
        };
        let b = generate_benchmark(&s, &Graph::cycle(3).unwrap(), 1.0).unwrap();
        assert!(b.consensus.abs() < 1e-9);
    }

    #[test]
    fn lasso_small_pi_soft_thresholds() {
        // sum (W x - b)^2 + pi |x| with W = (1, 2), b = (1, 1), pi = 2:
        // 2 (5x - 3) + 2 = 0 at x = 0.4
        let s = BenchmarkSpec {
            w: vec![1.0, 2.0],
            b: vec![1.0, 1.0],
            pi: 2.0,
            ..BenchmarkSpec::new(BenchmarkKind::LassoToy)
        };
        let b = generate_benchmark(&s, &Graph::path(3).unwrap(), 1.0).unwrap();
        assert!((b.consensus - 0.4).abs() < 1e-9);
    }

    #[test]
    fn unknown_name() {
        assert!(matches!("ridge".parse::<BenchmarkKind>(), Err(CliError::UnknownBenchmark(_))));
    }

    #[test]
    fn node_count_must_match() {
        let g = Graph::cycle(4).unwrap();
        assert!(generate_benchmark(&spec(BenchmarkKind::ConsensusLad, &[1.0, 2.0, 3.0]), &g, 1.0).is_err());
    }

    #[test]
    fn dual_reference_is_a_saddle_point() {
        let g = Graph::cycle(5).unwrap();
        let b = generate_benchmark(
            &spec(BenchmarkKind::ConsensusQuadratic, &[1.0, 2.0, 3.0, 4.0, 5.0]),
            &g,
            1.0,
        )
        .unwrap()
        .with_dual()
        .unwrap();
        // stationarity at node i: 2 (x* - a_i) = sum over incident rows of p_l * D_li
        let prob = b.reform.problem();
        for i in 0..5 {
            let mut g = 2.0 * (3.0 - (i + 1) as f64);
            for l in 0..prob.num_rows() {
                let row = prob.row(l);
                if row.component == i {
                    g -= b.reference.p[l] * row.coeff;
                }
            }
            assert!(g.abs() < 1e-8, "node {i}: {g}");
        }
    }
}

//! Consensus over a graph, rewritten with one pair of copies per edge:
//!
//! ```text
//! minimize   sum_i f_i(x_i)
//! subject to A_ei x_i = z_ei,  A_ej x_j = z_ej,  z_ei + z_ej = 0   for e = (i, j)
//! ```
//!
//! Rows are laid out as `(2e + endpoint) * n + c`, where endpoint 0 is the
//! low-index node. `H = -I`, and each edge is one block of the partition.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::problem::{
    check_len, ConstraintSystem, ConvexTerm, DEntry, FeasibleSet, PrimalDualState,
    SeparableProblem, TermKind,
};
use crate::prox::{bisect_increasing, solve_local, LocalSubproblem};
use crate::schedule::{build_partition, ActivationDistribution, ProperPartition};
use crate::vecops::clamp;

/// An undirected simple graph with edges stored as `(i, j)`, `i < j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    nodes: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Rejects self-loops, duplicate edges and out-of-range endpoints.
    /// Edge order is kept; endpoints are normalized so that `i < j`.
    pub fn new(nodes: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = Vec::with_capacity(edges.len());
        let mut out = Vec::with_capacity(edges.len());
        for (k, &(a, b)) in edges.iter().enumerate() {
            if a >= nodes || b >= nodes {
                return Err(Error::InvalidGraph(format!(
                    "edge {k} ({a}, {b}) names a node outside 0..{nodes}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("edge {k} is a self-loop at node {a}")));
            }
            let e = (a.min(b), a.max(b));
            seen.push((e, k));
            out.push(e);
        }
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0].0 == w[1].0) {
            let (i, j) = w[0].0;
            return Err(Error::InvalidGraph(format!(
                "edge ({i}, {j}) appears twice (entries {} and {})",
                w[0].1, w[1].1
            )));
        }
        Ok(Self { nodes, edges: out })
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_connected(&self) -> bool {
        if self.nodes == 0 {
            return false;
        }
        let mut parent: Vec<usize> = (0..self.nodes).collect();
        fn find(parent: &mut [usize], mut a: usize) -> usize {
            while parent[a] != a {
                parent[a] = parent[parent[a]];
                a = parent[a];
            }
            a
        }
        let mut groups = self.nodes;
        for &(i, j) in &self.edges {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri] = rj;
                groups -= 1;
            }
        }
        groups == 1
    }

    pub fn path(nodes: usize) -> Result<Self> {
        Self::new(nodes, (1..nodes).map(|i| (i - 1, i)).collect())
    }

    pub fn cycle(nodes: usize) -> Result<Self> {
        if nodes < 3 {
            return Err(Error::InvalidGraph(format!("a cycle needs 3 nodes, got {nodes}")));
        }
        let mut edges: Vec<_> = (1..nodes).map(|i| (i - 1, i)).collect();
        edges.push((0, nodes - 1));
        Self::new(nodes, edges)
    }

    pub fn complete(nodes: usize) -> Result<Self> {
        let edges = (0..nodes)
            .flat_map(|i| (i + 1..nodes).map(move |j| (i, j)))
            .collect();
        Self::new(nodes, edges)
    }

    /// Node 0 joined to every other node.
    pub fn star(nodes: usize) -> Result<Self> {
        Self::new(nodes, (1..nodes).map(|j| (0, j)).collect())
    }
}

/// The edge-based problem together with its incidence data and per-edge
/// partition.
#[derive(Clone, Debug)]
pub struct EdgeReformulation {
    problem: SeparableProblem,
    graph: Graph,
    n: usize,
    /// `signs[e] = [A_ei, A_ej]` for edge `e = (i, j)`.
    signs: Vec<[f64; 2]>,
    /// Edges incident to each node, as `(edge, endpoint)`.
    incidence: Vec<Vec<(usize, usize)>>,
    partition: ProperPartition,
}

/// Builds the edge reformulation with the low-index endpoint of each edge
/// carrying `+1`. `bound`, when given, adds `|z_l| <= bound` to `Z`.
pub fn build_reformulation(
    graph: &Graph,
    terms: Vec<ConvexTerm>,
    x_sets: Vec<FeasibleSet>,
    beta: f64,
    n: usize,
    bound: Option<f64>,
) -> Result<EdgeReformulation> {
    let flips = vec![false; graph.num_edges()];
    EdgeReformulation::with_orientation(graph, terms, x_sets, beta, n, bound, &flips)
}

impl EdgeReformulation {
    /// Like [`build_reformulation`], but edges with `flipped[e]` set give
    /// `+1` to the high-index endpoint instead.
    pub fn with_orientation(
        graph: &Graph,
        terms: Vec<ConvexTerm>,
        x_sets: Vec<FeasibleSet>,
        beta: f64,
        n: usize,
        bound: Option<f64>,
        flipped: &[bool],
    ) -> Result<Self> {
        let nodes = graph.nodes();
        let m = graph.num_edges();
        check_len("terms", nodes, terms.len())?;
        check_len("orientation flags", m, flipped.len())?;
        if n == 0 {
            return Err(Error::InvalidArgument("component dimension must be positive".into()));
        }
        if !graph.is_connected() {
            return Err(Error::DisconnectedGraph);
        }
        let w = 2 * m * n;
        let mut entries = Vec::with_capacity(w);
        let mut pairs = Vec::with_capacity(m * n);
        let mut signs = Vec::with_capacity(m);
        let mut incidence = vec![Vec::new(); nodes];
        for (e, &(i, j)) in graph.edges().iter().enumerate() {
            let s = if flipped[e] { [-1.0, 1.0] } else { [1.0, -1.0] };
            for (end, node) in [i, j].into_iter().enumerate() {
                incidence[node].push((e, end));
                for c in 0..n {
                    entries.push(DEntry {
                        row: (2 * e + end) * n + c,
                        component: node,
                        coord: c,
                        coeff: s[end],
                    });
                }
            }
            for c in 0..n {
                pairs.push((2 * e * n + c, (2 * e + 1) * n + c));
            }
            signs.push(s);
        }
        let cs = ConstraintSystem::new(n, nodes, entries, vec![-1.0; w])?;
        let z_set = FeasibleSet::sum_zero_pairs(w, pairs, bound)?;
        let problem = SeparableProblem::new(terms, x_sets, z_set, cs, beta)?;
        let blocks = (0..m).map(|e| (2 * e * n..(2 * e + 2) * n).collect()).collect();
        let partition = build_partition(problem.z_set(), problem.constraints(), blocks)?;
        Ok(Self {
            problem,
            graph: graph.clone(),
            n,
            signs,
            incidence,
            partition,
        })
    }

    pub fn problem(&self) -> &SeparableProblem {
        &self.problem
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn partition(&self) -> &ProperPartition {
        &self.partition
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `A_eq` for endpoint `end` (0 = low index) of edge `e`.
    pub fn sign(&self, e: usize, end: usize) -> f64 {
        self.signs[e][end]
    }

    /// Row of `A_eq x_q = z_eq` for coordinate `c`.
    pub fn row_index(&self, e: usize, end: usize, c: usize) -> usize {
        (2 * e + end) * self.n + c
    }

    pub fn incident_edges(&self, node: usize) -> &[(usize, usize)] {
        &self.incidence[node]
    }

    pub fn uniform_activation(&self) -> Result<ActivationDistribution> {
        ActivationDistribution::uniform(&self.partition)
    }

    /// Same problem with a different penalty.
    pub fn with_beta(&self, beta: f64) -> Result<Self> {
        Ok(Self {
            problem: self.problem.with_beta(beta)?,
            ..self.clone()
        })
    }
}

/// One iteration of the edge-based method on edge `edge`:
///
/// a. each endpoint `q` minimizes its augmented Lagrangian over all of its
///    edge copies (only the other copies' data are stale),
/// b. `v = (-p_ei - p_ej)/2 + beta/2 (A_ei x_i + A_ej x_j)`,
/// c. `z_eq = (-p_eq - v)/beta + A_eq x_q`, `p_eq = -v`,
///
/// with every other coordinate left as is. When `Z` carries a bound and the
/// pair is clipped, the multipliers follow the generic dual update instead.
pub fn edge_step(
    reform: &EdgeReformulation,
    state: &PrimalDualState,
    edge: usize,
) -> Result<PrimalDualState> {
    let prob = &reform.problem;
    if edge >= reform.graph.num_edges() {
        return Err(Error::InvalidArgument(format!(
            "edge {edge} out of range ({} edges)",
            reform.graph.num_edges()
        )));
    }
    check_len("x", prob.x_len(), state.x.len())?;
    check_len("z", prob.num_rows(), state.z.len())?;
    check_len("p", prob.num_rows(), state.p.len())?;
    let n = reform.n;
    let beta = prob.beta();
    let (i, j) = reform.graph.edges()[edge];
    let mut next = state.clone();
    next.k += 1;

    for q in [i, j] {
        let deg = reform.incidence[q].len() as f64;
        let linear = (0..n)
            .map(|c| {
                reform.incidence[q]
                    .iter()
                    .map(|&(e, end)| {
                        let l = reform.row_index(e, end, c);
                        reform.signs[e][end] * (state.p[l] + beta * state.z[l])
                    })
                    .sum()
            })
            .collect();
        let u = solve_local(&LocalSubproblem {
            term: &prob.terms()[q],
            quad_diag: vec![beta * deg; n],
            linear,
            set: &prob.x_sets()[q],
        })?;
        next.x[q * n..(q + 1) * n].copy_from_slice(&u);
    }

    let [ai, aj] = reform.signs[edge];
    let bound = match prob.z_set() {
        FeasibleSet::SumZeroPairs { bound, .. } => *bound,
        _ => None,
    };
    for c in 0..n {
        let (li, lj) = (reform.row_index(edge, 0, c), reform.row_index(edge, 1, c));
        let (xi, xj) = (next.x[i * n + c], next.x[j * n + c]);
        let v = 0.5 * (-state.p[li] - state.p[lj]) + 0.5 * beta * (ai * xi + aj * xj);
        let zi = (-state.p[li] - v) / beta + ai * xi;
        match bound {
            Some(b) if libm::fabs(zi) > b => {
                let s = clamp(zi, -b, b);
                next.z[li] = s;
                next.z[lj] = -s;
                next.p[li] = state.p[li] - beta * (ai * xi - s);
                next.p[lj] = state.p[lj] - beta * (aj * xj + s);
            }
            _ => {
                next.z[li] = zi;
                next.z[lj] = -zi;
                next.p[li] = -v;
                next.p[lj] = -v;
            }
        }
    }
    Ok(next)
}

/// The centralized minimizer of `sum_i f_i(u)` over a common `u`: weighted
/// mean for all-quadratic terms, median for all-absolute-deviation terms,
/// and bisection on the summed subgradient otherwise.
pub fn consensus_reference(terms: &[ConvexTerm]) -> Result<Vec<f64>> {
    let first = terms
        .first()
        .ok_or_else(|| Error::InvalidArgument("no terms".into()))?;
    let n = first.dim();
    if terms.iter().any(|t| t.dim() != n && !matches!(t.kind(), TermKind::L1 { .. })) {
        return Err(Error::InvalidArgument("terms differ in dimension".into()));
    }
    if terms.iter().all(|t| matches!(t.kind(), TermKind::Quadratic { .. })) {
        let mut num = vec![0.0; n];
        let mut den = 0.0;
        for t in terms {
            if let TermKind::Quadratic { a, w } = t.kind() {
                for c in 0..n {
                    num[c] += w * a[c];
                }
                den += w;
            }
        }
        return Ok(num.into_iter().map(|s| s / den).collect());
    }
    if terms.iter().all(|t| matches!(t.kind(), TermKind::AbsDev { .. })) {
        return Ok((0..n)
            .map(|c| {
                let mut vals: Vec<f64> = terms
                    .iter()
                    .map(|t| match t.kind() {
                        TermKind::AbsDev { a } => a[c],
                        _ => unreachable!(),
                    })
                    .collect();
                vals.sort_unstable_by(f64::total_cmp);
                let m = vals.len();
                if m % 2 == 1 {
                    vals[m / 2]
                } else {
                    0.5 * (vals[m / 2 - 1] + vals[m / 2])
                }
            })
            .collect());
    }
    if terms.iter().any(|t| {
        matches!(t.kind(), TermKind::Custom { scalar_convex, .. } if !scalar_convex)
    }) {
        return Err(Error::UnsupportedMix);
    }
    (0..n)
        .map(|c| {
            bisect_increasing(
                |u| terms.iter().map(|t| t.coord_subgradient(c, u)).sum(),
                f64::NEG_INFINITY,
                f64::INFINITY,
            )
        })
        .collect()
}

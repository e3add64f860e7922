//! Brute-force oracles shared by the integration tests. They only use the
//! public value/subgradient API, never the closed forms under test.

#![allow(dead_code)]

use asyncadmm_core::{
    ConstraintSystem, ConvexTerm, DEntry, FeasibleSet, PrimalDualState, SeparableProblem,
};

/// Minimizer of the scalar convex `g` given through a nondecreasing
/// subgradient `dg`, over `[lo, hi]`, by plain bisection.
pub fn bisect_min(dg: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    if dg(a) >= 0.0 {
        return a;
    }
    if dg(b) <= 0.0 {
        return b;
    }
    for _ in 0..400 {
        let m = 0.5 * (a + b);
        if dg(m) < 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Scalar local problem `f(u) + q u^2/2 - b u` over `[lo, hi]`, solved by
/// bisection on the subgradient. Infinite bounds are replaced by +-1e6.
pub fn local_oracle(term: &ConvexTerm, q: f64, b: f64, lo: f64, hi: f64) -> f64 {
    let lo = if lo.is_finite() { lo } else { -1e6 };
    let hi = if hi.is_finite() { hi } else { 1e6 };
    bisect_min(|u| term.coord_subgradient(0, u) + q * u - b, lo, hi)
}

/// Value of the scalar local objective.
pub fn local_value(term: &ConvexTerm, q: f64, b: f64, u: f64) -> f64 {
    term.value(&[u]) + 0.5 * q * u * u - b * u
}

/// Grid minimizer of a scalar function over `[lo, hi]` with `k` points,
/// refined once around the best point.
pub fn grid_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64, k: usize) -> f64 {
    let mut a = lo;
    let mut b = hi;
    let mut best = lo;
    for _ in 0..6 {
        let h = (b - a) / (k - 1) as f64;
        let mut fb = f64::INFINITY;
        for j in 0..k {
            let t = a + h * j as f64;
            let v = f(t);
            if v < fb {
                fb = v;
                best = t;
            }
        }
        a = (best - h).max(lo);
        b = (best + h).min(hi);
    }
    best
}

/// Two scalar agents joined by a single edge pair (rows 0 and 1), `H = -I`.
pub fn two_agent_edge(a0: f64, a1: f64, beta: f64) -> SeparableProblem {
    let cs = ConstraintSystem::new(
        1,
        2,
        vec![
            DEntry { row: 0, component: 0, coord: 0, coeff: 1.0 },
            DEntry { row: 1, component: 1, coord: 0, coeff: -1.0 },
        ],
        vec![-1.0, -1.0],
    )
    .unwrap();
    SeparableProblem::new(
        vec![
            ConvexTerm::quadratic(vec![a0], 1.0).unwrap(),
            ConvexTerm::quadratic(vec![a1], 1.0).unwrap(),
        ],
        vec![FeasibleSet::free(1), FeasibleSet::free(1)],
        FeasibleSet::sum_zero_pairs(2, vec![(0, 1)], None).unwrap(),
        cs,
        beta,
    )
    .unwrap()
}

pub fn state(prob: &SeparableProblem, x: &[f64], z: &[f64], p: &[f64]) -> PrimalDualState {
    PrimalDualState::new(prob, x.to_vec(), z.to_vec(), p.to_vec()).unwrap()
}

/// Projects `z` onto the sum-zero pairs of an edge problem, in place.
pub fn project_pairs(z: &mut [f64]) {
    for pair in z.chunks_mut(2) {
        let s = 0.5 * (pair[0] - pair[1]);
        pair[0] = s;
        pair[1] = -s;
    }
}

//! Per-component x-subproblems and per-block z-subproblems.
//!
//! With `D` having one nonzero per row and `H` diagonal, every ADMM
//! minimization splits into independent pieces:
//!
//! * x: `min_u f(u) + 1/2 u' diag(q) u - b'u` over `X_i`,
//! * z: `min_z 1/2 ||diag(h) z - t||^2` over the block's slice of `Z`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::problem::{ConvexTerm, FeasibleSet, TermKind};
use crate::vecops::{all_finite, clamp, soft_threshold};

const BISECTION_MAX_ITERS: usize = 200;
const BISECTION_TOL: f64 = 1e-10;
// 2^1023 is the largest power of two below f64::MAX
const BRACKET_MAX_DOUBLINGS: usize = 1023;

/// `min_u f(u) + 1/2 u' diag(quad_diag) u - linear' u` over `set`.
#[derive(Clone, Debug)]
pub struct LocalSubproblem<'a> {
    pub term: &'a ConvexTerm,
    pub quad_diag: Vec<f64>,
    pub linear: Vec<f64>,
    pub set: &'a FeasibleSet,
}

/// `min_z 1/2 ||diag(weights) z - target||^2` over `set`. The penalty factor
/// does not move the minimizer, so it is left out.
#[derive(Clone, Debug)]
pub struct ZBlockSubproblem {
    pub weights: Vec<f64>,
    pub target: Vec<f64>,
    pub set: FeasibleSet,
}

pub fn solve_local(sub: &LocalSubproblem<'_>) -> Result<Vec<f64>> {
    let dim = sub.term.dim();
    for (what, len) in [
        ("quadratic diagonal", sub.quad_diag.len()),
        ("linear term", sub.linear.len()),
        ("component set", sub.set.dim()),
    ] {
        if len != dim {
            return Err(Error::DimensionMismatch {
                what,
                expected: dim,
                found: len,
            });
        }
    }
    if !all_finite(&sub.quad_diag) || !all_finite(&sub.linear) {
        return Err(Error::NonfiniteInput);
    }
    if sub.quad_diag.iter().any(|&q| q < 0.0) {
        return Err(Error::InvalidArgument(
            "quadratic diagonal must be nonnegative".into(),
        ));
    }
    if matches!(sub.set, FeasibleSet::SumZeroPairs { .. }) {
        return Err(Error::UnsupportedSet(
            "component subproblems accept free or box sets",
        ));
    }
    if let TermKind::Custom { scalar_convex, .. } = sub.term.kind() {
        if !scalar_convex {
            return Err(Error::UnsupportedTerm(
                "custom term is not declared scalar-convex",
            ));
        }
        if dim != 1 {
            return Err(Error::UnsupportedTerm("vector-valued custom term has no solver"));
        }
    }
    let mut u = vec![0.0; dim];
    for c in 0..dim {
        let (lo, hi) = sub.set.coord_bounds(c);
        u[c] = solve_coord(sub.term, c, sub.quad_diag[c], sub.linear[c], lo, hi)?;
    }
    Ok(u)
}

/// Minimizes `f_c(u) + q/2 u^2 - b u` over `[lo, hi]`. Clamping the
/// unconstrained minimizer is exact because the problem is one-dimensional
/// and convex.
fn solve_coord(term: &ConvexTerm, c: usize, q: f64, b: f64, lo: f64, hi: f64) -> Result<f64> {
    let u = match term.kind() {
        TermKind::Quadratic { a, w } => (2.0 * w * a[c] + b) / (2.0 * w + q),
        TermKind::AbsDev { a } => {
            if q > 0.0 {
                a[c] + soft_threshold(b / q - a[c], 1.0 / q)
            } else if libm::fabs(b) <= 1.0 {
                a[c]
            } else {
                ray_minimizer(b, lo, hi)?
            }
        }
        TermKind::L1 { gamma } => {
            if q > 0.0 {
                soft_threshold(b, *gamma) / q
            } else if libm::fabs(b) <= *gamma {
                0.0
            } else {
                ray_minimizer(b, lo, hi)?
            }
        }
        TermKind::Custom { oracle, .. } => {
            return bisect_increasing(|u| oracle.subgradient(u) + q * u - b, lo, hi);
        }
    };
    Ok(clamp(u, lo, hi))
}

// The objective decreases without bound along sign(b); the minimizer is the
// bound in that direction if there is one.
fn ray_minimizer(b: f64, lo: f64, hi: f64) -> Result<f64> {
    let end = if b > 0.0 { hi } else { lo };
    if end.is_finite() {
        Ok(end)
    } else {
        Err(Error::Unbounded)
    }
}

/// Finds a zero of the nondecreasing function `g` on `[lo, hi]` (bounds may
/// be infinite). Returns a bound when `g` does not change sign inside the
/// interval. The bracket grows geometrically from 0 (clamped into the
/// interval) until `g` changes sign.
pub(crate) fn bisect_increasing<G: Fn(f64) -> f64>(g: G, lo: f64, hi: f64) -> Result<f64> {
    if lo.is_finite() && g(lo) >= 0.0 {
        return Ok(lo);
    }
    if hi.is_finite() && g(hi) <= 0.0 {
        return Ok(hi);
    }
    let start = clamp(0.0, lo, hi);
    let g0 = g(start);
    if g0.is_nan() {
        return Err(Error::NonfiniteInput);
    }
    if g0 == 0.0 {
        return Ok(start);
    }
    let (mut left, mut right) = if g0 < 0.0 {
        let mut left = start;
        let mut step = 1.0;
        let mut right = start + step;
        let mut doublings = 0;
        loop {
            if right >= hi {
                right = hi;
                break;
            }
            if g(right) >= 0.0 {
                break;
            }
            left = right;
            step *= 2.0;
            right = start + step;
            doublings += 1;
            if doublings > BRACKET_MAX_DOUBLINGS || !right.is_finite() {
                return Err(Error::Unbounded);
            }
        }
        (left, right)
    } else {
        let mut right = start;
        let mut step = 1.0;
        let mut left = start - step;
        let mut doublings = 0;
        loop {
            if left <= lo {
                left = lo;
                break;
            }
            if g(left) <= 0.0 {
                break;
            }
            right = left;
            step *= 2.0;
            left = start - step;
            doublings += 1;
            if doublings > BRACKET_MAX_DOUBLINGS || !left.is_finite() {
                return Err(Error::Unbounded);
            }
        }
        (left, right)
    };
    for _ in 0..BISECTION_MAX_ITERS {
        if right - left <= BISECTION_TOL {
            break;
        }
        let mid = 0.5 * (left + right);
        let gm = g(mid);
        if gm.is_nan() {
            return Err(Error::NonfiniteInput);
        }
        if gm == 0.0 {
            return Ok(mid);
        }
        if gm < 0.0 {
            left = mid;
        } else {
            right = mid;
        }
    }
    Ok(0.5 * (left + right))
}

pub fn solve_z_block(sub: &ZBlockSubproblem) -> Result<Vec<f64>> {
    let dim = sub.set.dim();
    for (what, len) in [("weights", sub.weights.len()), ("target", sub.target.len())] {
        if len != dim {
            return Err(Error::DimensionMismatch {
                what,
                expected: dim,
                found: len,
            });
        }
    }
    if !all_finite(&sub.weights) || !all_finite(&sub.target) {
        return Err(Error::NonfiniteInput);
    }
    if sub.weights.contains(&0.0) {
        return Err(Error::InvalidArgument("z weights must be nonzero".into()));
    }
    let h = &sub.weights;
    let t = &sub.target;
    let mut z = vec![0.0; dim];
    let mut done = vec![false; dim];
    for a in 0..dim {
        if done[a] {
            continue;
        }
        let (lo_a, hi_a) = sub.set.coord_bounds(a);
        match sub.set.partner(a) {
            Some(b) => {
                // z_a = s, z_b = -s; stationarity in s gives the closed form
                let s = (h[a] * t[a] - h[b] * t[b]) / (h[a] * h[a] + h[b] * h[b]);
                let (lo_b, hi_b) = sub.set.coord_bounds(b);
                let s = clamp(s, f64::max(lo_a, -hi_b), f64::min(hi_a, -lo_b));
                z[a] = s;
                z[b] = -s;
                done[b] = true;
            }
            None => z[a] = clamp(t[a] / h[a], lo_a, hi_a),
        }
        done[a] = true;
    }
    Ok(z)
}

//! Quantities from the convergence analysis: the `1/lambda`-weighted norm,
//! the weighted Lagrangian, the Lyapunov function, ergodic averages, the
//! constants of the `O(1/T)` bounds, and log-log rate fits.

use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{sync_admm_step, StandardProblem};
use crate::error::{Error, Result};
use crate::problem::{check_len, residual, PrimalDualState, SeparableProblem};
use crate::schedule::{ActivationDistribution, RngStream};
use crate::vecops::norm;

/// Diagonal weights `1 / lambda_l`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedNorm {
    pub weight_diag: Vec<f64>,
}

impl WeightedNorm {
    pub fn new(weight_diag: Vec<f64>) -> Self {
        Self { weight_diag }
    }

    pub fn from_distribution(dist: &ActivationDistribution) -> Self {
        Self::new(dist.weight_diag.clone())
    }

    pub fn unit(dim: usize) -> Self {
        Self::new(vec![1.0; dim])
    }
}

/// `v' diag(w) v`
pub fn weighted_norm_sq(v: &[f64], wn: &WeightedNorm) -> Result<f64> {
    check_len("weighted vector", wn.weight_diag.len(), v.len())?;
    Ok(v.iter().zip(&wn.weight_diag).map(|(x, w)| w * x * x).sum())
}

/// `sum_i f_i(x_i)/alpha_i - mu'(sum_i D_i x_i / alpha_i + sum_l H_l z_l / lambda_l)`
pub fn weighted_lagrangian(
    prob: &SeparableProblem,
    dist: &ActivationDistribution,
    x: &[f64],
    z: &[f64],
    mu: &[f64],
) -> Result<f64> {
    prob.check_x(x)?;
    prob.check_w("z", z)?;
    prob.check_w("mu", mu)?;
    check_len("alpha", prob.num_components(), dist.alpha.len())?;
    check_len("lambda", prob.num_rows(), dist.lambda.len())?;
    let n = prob.n();
    let f: f64 = prob
        .terms()
        .iter()
        .enumerate()
        .map(|(i, t)| t.value(&x[i * n..(i + 1) * n]) / dist.alpha[i])
        .sum();
    let coupling: f64 = (0..prob.num_rows())
        .map(|l| {
            let e = prob.row(l);
            let g = e.coeff * x[e.component * n + e.coord] / dist.alpha[e.component]
                + prob.h(l) * z[l] / dist.lambda[l];
            mu[l] * g
        })
        .sum();
    Ok(f - coupling)
}

/// `1/(2 beta) ||p - p*||^2 + beta/2 ||H(z - z*)||^2`, both in the weighted norm.
pub fn lyapunov(
    prob: &SeparableProblem,
    state: &PrimalDualState,
    reference: &ReferenceSolution,
    wn: &WeightedNorm,
) -> Result<f64> {
    prob.check_w("p", &state.p)?;
    prob.check_w("z", &state.z)?;
    prob.check_w("reference p", &reference.p)?;
    prob.check_w("reference z", &reference.z)?;
    let beta = prob.beta();
    let dp: Vec<f64> = state.p.iter().zip(&reference.p).map(|(a, b)| a - b).collect();
    let dz: Vec<f64> = (0..prob.num_rows())
        .map(|l| prob.h(l) * (state.z[l] - reference.z[l]))
        .collect();
    Ok(weighted_norm_sq(&dp, wn)? / (2.0 * beta) + 0.5 * beta * weighted_norm_sq(&dz, wn)?)
}

/// Running sums of `x^k` and `z^k` for `k = 1..T`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErgodicAverages {
    sum_x: Vec<f64>,
    sum_z: Vec<f64>,
    count: u64,
}

impl ErgodicAverages {
    pub fn new(x_len: usize, w: usize) -> Self {
        Self {
            sum_x: vec![0.0; x_len],
            sum_z: vec![0.0; w],
            count: 0,
        }
    }

    pub fn update(&mut self, state: &PrimalDualState) {
        for (s, v) in self.sum_x.iter_mut().zip(&state.x) {
            *s += v;
        }
        for (s, v) in self.sum_z.iter_mut().zip(&state.z) {
            *s += v;
        }
        self.count += 1;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn x_bar(&self) -> Vec<f64> {
        let t = self.count.max(1) as f64;
        self.sum_x.iter().map(|s| s / t).collect()
    }

    pub fn z_bar(&self) -> Vec<f64> {
        let t = self.count.max(1) as f64;
        self.sum_z.iter().map(|s| s / t).collect()
    }
}

pub fn update_ergodic(mut avg: ErgodicAverages, state: &PrimalDualState) -> ErgodicAverages {
    avg.update(state);
    avg
}

/// Least-squares line through `(log t, log y)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub points: usize,
}

pub fn fit_loglog(t: &[f64], y: &[f64]) -> Result<RateFit> {
    check_len("series", t.len(), y.len())?;
    if t.len() < 2 {
        return Err(Error::InvalidArgument("a rate fit needs at least two points".into()));
    }
    for (index, (a, b)) in t.iter().zip(y).enumerate() {
        if !(*a > 0.0 && *b > 0.0) {
            return Err(Error::NonPositiveSeries { index });
        }
    }
    let lx: Vec<f64> = t.iter().map(|v| libm::log(*v)).collect();
    let ly: Vec<f64> = y.iter().map(|v| libm::log(*v)).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("rate fit needs distinct iterations".into()));
    }
    let slope = sxy / sxx;
    Ok(RateFit {
        slope,
        intercept: my - slope * mx,
        points: lx.len(),
    })
}

/// Log-log fit over the tail half of a series: the points whose iteration is
/// at least half the last iteration.
pub fn estimate_rate(iters: &[u64], values: &[f64]) -> Result<RateFit> {
    check_len("series", iters.len(), values.len())?;
    let last = *iters
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty series".into()))?;
    let start = iters.iter().position(|&k| 2 * k >= last).unwrap_or(0);
    let t: Vec<f64> = iters[start..].iter().map(|&k| k as f64).collect();
    fit_loglog(&t, &values[start..]).map_err(|e| match e {
        Error::NonPositiveSeries { index } => Error::NonPositiveSeries {
            index: index + start,
        },
        other => other,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReferenceSource {
    Analytic,
    LongRun,
    External,
}

/// A saddle-point estimate `(x*, z*, p*)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceSolution {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub p: Vec<f64>,
    pub source: ReferenceSource,
}

const REFERENCE_RESIDUAL_TOL: f64 = 1e-6;

impl ReferenceSolution {
    /// Checks dimensions and that `||Dx* + Hz*|| <= 1e-6`.
    pub fn new(
        prob: &SeparableProblem,
        x: Vec<f64>,
        z: Vec<f64>,
        p: Vec<f64>,
        source: ReferenceSource,
    ) -> Result<Self> {
        prob.check_w("reference p", &p)?;
        let r = norm(&residual(prob, &x, &z)?);
        if r.is_nan() || r > REFERENCE_RESIDUAL_TOL {
            return Err(Error::InvalidArgument(alloc::format!(
                "reference residual {r} exceeds {REFERENCE_RESIDUAL_TOL}"
            )));
        }
        Ok(Self { x, z, p, source })
    }

    /// Runs synchronous ADMM from `x0` until successive iterates and the
    /// residual are both within `tol` (max-norm), or `max_iters` passes.
    pub fn from_sync(prob: &SeparableProblem, x0: Vec<f64>, tol: f64, max_iters: u64) -> Result<Self> {
        let sp = StandardProblem::from(prob.clone());
        let mut s = PrimalDualState::initial(prob, x0)?;
        for _ in 0..max_iters {
            let next = sync_admm_step(&sp, &s)?;
            if !next.is_finite() {
                return Err(Error::NonFinite { iter: next.k });
            }
            let change = s
                .x
                .iter()
                .zip(&next.x)
                .chain(s.z.iter().zip(&next.z))
                .chain(s.p.iter().zip(&next.p))
                .map(|(a, b)| libm::fabs(a - b))
                .fold(0.0, f64::max);
            s = next;
            if change <= tol {
                let r = residual(prob, &s.x, &s.z)?;
                if r.iter().all(|v| libm::fabs(*v) <= tol) {
                    break;
                }
            }
        }
        Self::new(prob, s.x, s.z, s.p, ReferenceSource::LongRun)
    }
}

/// Settings for [`compute_rate_constants`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateOptions {
    /// Grid points per one-dimensional piece of the `Q(mu)` maximization.
    pub grid_resolution: usize,
    /// Cap on the total number of grid points per `Q(mu)` evaluation.
    pub max_points: usize,
    /// Random unit directions tried for the maximizations over the unit ball.
    pub directions: usize,
    /// Fixed-point ascent passes started from the best sampled directions.
    pub ascent_iters: usize,
    pub seed: u64,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            grid_resolution: 2001,
            max_points: 1 << 24,
            directions: 256,
            ascent_iters: 50,
            seed: 0,
        }
    }
}

/// Constants entering the `O(1/T)` bounds, all at desk-scale accuracy: `Q`
/// by grid maximization, `Qbar` and `theta_bar` by sampling the unit sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct RateConstants {
    pub beta: f64,
    /// `Q(p*)`
    pub q_at_ref: f64,
    /// Largest `Q(p* - u)` found over unit `u`.
    pub q_bar: f64,
    pub theta_bar: Vec<f64>,
    /// `max_{||a|| <= 1} Ltilde(x0, z0, p* - a)`, exact.
    pub l_tilde0: f64,
    /// `Ltilde(x0, z0, p*)`
    pub l_tilde_at_ref: f64,
    /// `||p0 - theta_bar||^2` in the weighted norm.
    pub dist_theta: f64,
    /// `||p0 - p*||^2` in the weighted norm.
    pub dist_ref: f64,
    /// `||H(z0 - z*)||^2` in the weighted norm.
    pub dist_z: f64,
    pub p_star_inf: f64,
    /// Upper bound on how far any grid maximum used here can sit below the
    /// true maximum.
    pub grid_gap: f64,
    pub directions_tried: usize,
}

impl RateConstants {
    /// `T * ||E(D xbar(T) + H zbar(T))||` is at most this.
    pub fn feasibility_bound(&self) -> f64 {
        self.q_bar
            + self.l_tilde0
            + self.dist_theta / (2.0 * self.beta)
            + 0.5 * self.beta * self.dist_z
    }

    /// `T * |E F(xbar(T)) - F(x*)|` is at most this.
    pub fn primal_bound(&self) -> f64 {
        self.q_bar + self.l_tilde0 + self.dist_ref / (2.0 * self.beta) + 0.5 * self.beta * self.dist_z
            + self.p_star_inf
                * (self.q_at_ref
                    + self.l_tilde_at_ref
                    + self.dist_theta / (2.0 * self.beta)
                    + 0.5 * self.beta * self.dist_z)
    }
}

// One separable piece of -Ltilde: a concave scalar function on [lo, hi].
enum Piece {
    // coordinate `c` of component `i`
    X { i: usize, c: usize, lo: f64, hi: f64 },
    // row `l` alone
    Z { l: usize, lo: f64, hi: f64 },
    // rows (a, b) with z_a = s, z_b = -s
    Pair { a: usize, b: usize, lo: f64, hi: f64 },
}

struct QEvaluator<'a> {
    prob: &'a SeparableProblem,
    dist: &'a ActivationDistribution,
    pieces: Vec<Piece>,
    resolution: usize,
}

struct QValue {
    value: f64,
    gap: f64,
    // d(-Ltilde)/d mu at the maximizer
    grad: Vec<f64>,
}

impl<'a> QEvaluator<'a> {
    fn new(prob: &'a SeparableProblem, dist: &'a ActivationDistribution, opts: &RateOptions) -> Result<Self> {
        let n = prob.n();
        let mut pieces = Vec::new();
        for (i, set) in prob.x_sets().iter().enumerate() {
            if !set.is_compact() {
                return Err(Error::NonCompactSets);
            }
            for c in 0..n {
                let (lo, hi) = set.coord_bounds(c);
                pieces.push(Piece::X { i, c, lo, hi });
            }
        }
        let z = prob.z_set();
        if !z.is_compact() {
            return Err(Error::NonCompactSets);
        }
        for l in 0..prob.num_rows() {
            let (lo, hi) = z.coord_bounds(l);
            match z.partner(l) {
                Some(b) if b > l => {
                    let (lo_b, hi_b) = z.coord_bounds(b);
                    pieces.push(Piece::Pair {
                        a: l,
                        b,
                        lo: lo.max(-hi_b),
                        hi: hi.min(-lo_b),
                    });
                }
                Some(_) => {}
                None => pieces.push(Piece::Z { l, lo, hi }),
            }
        }
        if opts.grid_resolution < 3 {
            return Err(Error::InvalidArgument("grid resolution must be at least 3".into()));
        }
        let points = pieces.len().saturating_mul(opts.grid_resolution);
        if points > opts.max_points {
            return Err(Error::GridTooLarge {
                dims: pieces.len(),
                points,
            });
        }
        Ok(Self {
            prob,
            dist,
            pieces,
            resolution: opts.grid_resolution,
        })
    }

    fn eval(&self, mu: &[f64]) -> QValue {
        let prob = self.prob;
        let mut value = 0.0;
        let mut gap: f64 = 0.0;
        let mut argmax = vec![0.0; self.pieces.len()];
        for (k, piece) in self.pieces.iter().enumerate() {
            let (lo, hi) = match *piece {
                Piece::X { lo, hi, .. } | Piece::Z { lo, hi, .. } | Piece::Pair { lo, hi, .. } => {
                    (lo, hi)
                }
            };
            let phi = |u: f64| -> f64 {
                match *piece {
                    Piece::X { i, c, .. } => {
                        let g: f64 = prob
                            .column_rows(i, c)
                            .iter()
                            .map(|&l| mu[l] * prob.row(l).coeff)
                            .sum();
                        (g * u - prob.terms()[i].coord_value(c, u)) / self.dist.alpha[i]
                    }
                    Piece::Z { l, .. } => mu[l] * prob.h(l) * u / self.dist.lambda[l],
                    Piece::Pair { a, b, .. } => {
                        (mu[a] * prob.h(a) / self.dist.lambda[a] - mu[b] * prob.h(b) / self.dist.lambda[b]) * u
                    }
                }
            };
            let (best, best_u, piece_gap) = grid_max(phi, lo, hi, self.resolution);
            value += best;
            gap += piece_gap;
            argmax[k] = best_u;
        }
        let mut grad = vec![0.0; prob.num_rows()];
        for (piece, &u) in self.pieces.iter().zip(&argmax) {
            match *piece {
                Piece::X { i, c, .. } => {
                    for &l in prob.column_rows(i, c) {
                        grad[l] += prob.row(l).coeff * u / self.dist.alpha[i];
                    }
                }
                Piece::Z { l, .. } => grad[l] += prob.h(l) * u / self.dist.lambda[l],
                Piece::Pair { a, b, .. } => {
                    grad[a] += prob.h(a) * u / self.dist.lambda[a];
                    grad[b] -= prob.h(b) * u / self.dist.lambda[b];
                }
            }
        }
        QValue { value, gap, grad }
    }
}

// Grid maximum of a concave function, its location, and a bound on how much
// higher the true maximum can be (from secant extensions of neighbours).
fn grid_max<F: Fn(f64) -> f64>(phi: F, lo: f64, hi: f64, res: usize) -> (f64, f64, f64) {
    if hi <= lo {
        return (phi(lo), lo, 0.0);
    }
    let h = (hi - lo) / (res - 1) as f64;
    let ts: Vec<f64> = (0..res)
        .map(|k| if k + 1 == res { hi } else { lo + h * k as f64 })
        .collect();
    let vs: Vec<f64> = ts.iter().map(|&t| phi(t)).collect();
    let (mut kb, mut best) = (0, vs[0]);
    for (k, &v) in vs.iter().enumerate() {
        if v > best {
            best = v;
            kb = k;
        }
    }
    let mut upper = best;
    for k in 0..res - 1 {
        let left = (k >= 1).then(|| vs[k].max(2.0 * vs[k] - vs[k - 1]));
        let right = (k + 2 < res).then(|| vs[k + 1].max(2.0 * vs[k + 1] - vs[k + 2]));
        let bound = match (left, right) {
            (Some(a), Some(b)) => a.min(b),
            (Some(a), None) | (None, Some(a)) => a,
            (None, None) => f64::INFINITY,
        };
        upper = upper.max(bound);
    }
    (best, ts[kb], upper - best)
}

fn unit_or_none(v: &[f64]) -> Option<Vec<f64>> {
    let nv = norm(v);
    (nv > 0.0 && nv.is_finite()).then(|| v.iter().map(|x| x / nv).collect())
}

fn sphere_candidates(w: usize, opts: &RateOptions) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * w + opts.directions);
    for l in 0..w {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; w];
            e[l] = s;
            out.push(e);
        }
    }
    let mut rng = RngStream::new(opts.seed);
    while out.len() < 2 * w + opts.directions {
        let g: Vec<f64> = (0..w).map(|_| rng.next_gaussian()).collect();
        if let Some(u) = unit_or_none(&g) {
            out.push(u);
        }
    }
    out
}

// Maximizes a function over the unit sphere from sampled starts, then runs
// `u <- normalize(step(u))` from the best few.
fn sphere_max<F, S>(candidates: &[Vec<f64>], f: F, step: S, iters: usize) -> (f64, Vec<f64>)
where
    F: Fn(&[f64]) -> f64,
    S: Fn(&[f64]) -> Vec<f64>,
{
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(k, u)| (f(u), k))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = scored[0].0;
    let mut best_u = candidates[scored[0].1].clone();
    for &(v0, k) in scored.iter().take(4) {
        let mut u = candidates[k].clone();
        let mut v = v0;
        for _ in 0..iters {
            let Some(next) = unit_or_none(&step(&u)) else { break };
            let nv = f(&next);
            if nv <= v {
                break;
            }
            u = next;
            v = nv;
        }
        if v > best {
            best = v;
            best_u = u;
        }
    }
    (best, best_u)
}

/// Desk-scale approximations of `Q(p*)`, `Qbar`, `theta_bar` and `Ltilde^0`
/// for initial point `(x0, z0, p0)`. `X` and `Z` must be compact.
pub fn compute_rate_constants(
    prob: &SeparableProblem,
    dist: &ActivationDistribution,
    reference: &ReferenceSolution,
    x0: &[f64],
    z0: &[f64],
    p0: &[f64],
    opts: &RateOptions,
) -> Result<RateConstants> {
    prob.check_x(x0)?;
    prob.check_w("z0", z0)?;
    prob.check_w("p0", p0)?;
    prob.check_w("reference p", &reference.p)?;
    prob.check_w("reference z", &reference.z)?;
    let q = QEvaluator::new(prob, dist, opts)?;
    let w = prob.num_rows();
    let wn = WeightedNorm::from_distribution(dist);
    let p_star = &reference.p;
    let shifted = |u: &[f64]| -> Vec<f64> { p_star.iter().zip(u).map(|(p, a)| p - a).collect() };

    let at_ref = q.eval(p_star);
    let mut grid_gap = at_ref.gap;

    let candidates = sphere_candidates(w, opts);
    let (q_bar, q_bar_u) = if w == 0 {
        (at_ref.value, Vec::new())
    } else {
        // Q is convex; -grad points to where Q(p* - u) grows
        sphere_max(
            &candidates,
            |u| q.eval(&shifted(u)).value,
            |u| q.eval(&shifted(u)).grad.iter().map(|g| -g).collect(),
            opts.ascent_iters,
        )
    };
    if w > 0 {
        grid_gap = grid_gap.max(q.eval(&shifted(&q_bar_u)).gap);
    }

    let d: Vec<f64> = p0.iter().zip(p_star).map(|(a, b)| a - b).collect();
    let (dist_theta, theta_u) = if w == 0 {
        (0.0, Vec::new())
    } else {
        let plus = |u: &[f64]| -> Vec<f64> { d.iter().zip(u).map(|(a, b)| a + b).collect() };
        sphere_max(
            &candidates,
            |u| weighted_norm_sq(&plus(u), &wn).unwrap_or(f64::NAN),
            |u| {
                plus(u)
                    .iter()
                    .zip(&wn.weight_diag)
                    .map(|(v, wt)| v * wt)
                    .collect()
            },
            opts.ascent_iters,
        )
    };
    let theta_bar = shifted(&theta_u);

    // Ltilde(x0, z0, p* - a) = Ltilde(x0, z0, p*) + a'g, maximized by a = g/||g||
    let n = prob.n();
    let g: Vec<f64> = (0..w)
        .map(|l| {
            let e = prob.row(l);
            e.coeff * x0[e.component * n + e.coord] / dist.alpha[e.component]
                + prob.h(l) * z0[l] / dist.lambda[l]
        })
        .collect();
    let l_tilde_at_ref = weighted_lagrangian(prob, dist, x0, z0, p_star)?;
    let l_tilde0 = l_tilde_at_ref + norm(&g);

    let dz: Vec<f64> = (0..w).map(|l| prob.h(l) * (z0[l] - reference.z[l])).collect();
    Ok(RateConstants {
        beta: prob.beta(),
        q_at_ref: at_ref.value,
        q_bar,
        theta_bar,
        l_tilde0,
        l_tilde_at_ref,
        dist_theta,
        dist_ref: weighted_norm_sq(&d, &wn)?,
        dist_z: weighted_norm_sq(&dz, &wn)?,
        p_star_inf: p_star.iter().fold(0.0, |m, v| m.max(libm::fabs(*v))),
        grid_gap,
        directions_tried: candidates.len(),
    })
}

/// `Q(mu) = max_{x in X, z in Z} -Ltilde(x, z, mu)` by grid search, with its
/// grid-gap bound.
pub fn q_of_mu(
    prob: &SeparableProblem,
    dist: &ActivationDistribution,
    mu: &[f64],
    opts: &RateOptions,
) -> Result<(f64, f64)> {
    prob.check_w("mu", mu)?;
    let q = QEvaluator::new(prob, dist, opts)?;
    let v = q.eval(mu);
    Ok((v.value, v.gap))
}

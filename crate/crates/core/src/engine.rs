//! The asynchronous iteration, its full-information shadow, and the
//! synchronous two-block baseline.
//!
//! One asynchronous step activates a block `psi` of rows and the components
//! `phi = Phi(psi)` appearing in them, then performs, in order:
//!
//! 1. x: for `i` in `phi`, minimize `f_i(x_i) - (p - beta H z)' D_i x_i + beta/2 ||D_i x_i||^2`,
//! 2. z: on `psi`, minimize `-(p - beta D x)' H z + beta/2 ||H z||^2` over `Z`,
//! 3. p: on `psi`, `p <- p - beta (D x + H z)`.
//!
//! Everything outside `phi` / `psi` is left bitwise untouched.

use alloc::format;
use alloc::vec::Vec;

use crate::diagnostics::{lyapunov, ErgodicAverages, ReferenceSolution, WeightedNorm};
use crate::error::{Error, Result};
use crate::problem::{
    check_len, objective, residual, ConvexTerm, FeasibleSet, PrimalDualState, SeparableProblem,
};
use crate::prox::{solve_local, solve_z_block, LocalSubproblem, ZBlockSubproblem};
use crate::schedule::{sample_block, ActivationDistribution, ActiveSet, ProperPartition, RngStream};
use crate::vecops::{all_finite, norm};
use crate::DIVERGENCE_NORM;

const SHADOW_TOL: f64 = 1e-9;

/// Full-information iterates: the values every component and row would take
/// if all constraints were active, and the residual at `(y, v)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShadowIterates {
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    pub mu: Vec<f64>,
    pub r: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepRecord {
    pub block: usize,
    pub before: PrimalDualState,
    pub after: PrimalDualState,
    pub shadow: Option<ShadowIterates>,
}

fn check_state(prob: &SeparableProblem, state: &PrimalDualState) -> Result<()> {
    prob.check_x(&state.x)?;
    prob.check_w("z", &state.z)?;
    prob.check_w("p", &state.p)
}

/// Primal x update. Components outside `active.components` are copied
/// unchanged.
pub fn x_update(
    prob: &SeparableProblem,
    state: &PrimalDualState,
    active: &ActiveSet<'_>,
) -> Result<Vec<f64>> {
    check_state(prob, state)?;
    let n = prob.n();
    let beta = prob.beta();
    let mut x = state.x.clone();
    for &i in active.components {
        let mut quad = Vec::with_capacity(n);
        let mut lin = Vec::with_capacity(n);
        for c in 0..n {
            let mut q = 0.0;
            let mut b = 0.0;
            for &l in prob.column_rows(i, c) {
                let d = prob.row(l).coeff;
                q += d * d;
                b += d * (state.p[l] - beta * prob.h(l) * state.z[l]);
            }
            quad.push(beta * q);
            lin.push(b);
        }
        let u = solve_local(&LocalSubproblem {
            term: &prob.terms()[i],
            quad_diag: quad,
            linear: lin,
            set: &prob.x_sets()[i],
        })?;
        x[i * n..(i + 1) * n].copy_from_slice(&u);
    }
    Ok(x)
}

/// Primal z update on the active rows.
pub fn z_update(
    prob: &SeparableProblem,
    state: &PrimalDualState,
    x_new: &[f64],
    active: &ActiveSet<'_>,
) -> Result<Vec<f64>> {
    check_state(prob, state)?;
    prob.check_x(x_new)?;
    let mut z = state.z.clone();
    if active.rows.is_empty() {
        return Ok(z);
    }
    let beta = prob.beta();
    let sub = ZBlockSubproblem {
        weights: active.rows.iter().map(|&l| prob.h(l)).collect(),
        target: active
            .rows
            .iter()
            .map(|&l| state.p[l] / beta - prob.d_row_dot(l, x_new))
            .collect(),
        set: active.z_set.clone(),
    };
    let block = solve_z_block(&sub)?;
    for (&l, v) in active.rows.iter().zip(block) {
        z[l] = v;
    }
    Ok(z)
}

/// Dual update on the active rows.
pub fn dual_update(
    prob: &SeparableProblem,
    state: &PrimalDualState,
    x_new: &[f64],
    z_new: &[f64],
    active: &ActiveSet<'_>,
) -> Result<Vec<f64>> {
    check_state(prob, state)?;
    prob.check_x(x_new)?;
    prob.check_w("z", z_new)?;
    let beta = prob.beta();
    let mut p = state.p.clone();
    for &l in active.rows {
        p[l] -= beta * (prob.d_row_dot(l, x_new) + prob.h(l) * z_new[l]);
    }
    Ok(p)
}

fn apply_block(
    prob: &SeparableProblem,
    state: &PrimalDualState,
    active: &ActiveSet<'_>,
) -> Result<PrimalDualState> {
    let x = x_update(prob, state, active)?;
    let z = z_update(prob, state, &x, active)?;
    let p = dual_update(prob, state, &x, &z, active)?;
    Ok(PrimalDualState {
        x,
        z,
        p,
        k: state.k + 1,
    })
}

/// One asynchronous step with a given block.
pub fn step_block(
    prob: &SeparableProblem,
    state: &PrimalDualState,
    partition: &ProperPartition,
    block: usize,
    with_shadow: bool,
) -> Result<StepRecord> {
    if block >= partition.num_blocks() {
        return Err(Error::InvalidArgument(format!(
            "block {block} out of range ({} blocks)",
            partition.num_blocks()
        )));
    }
    let after = apply_block(prob, state, &partition.active_set(block))?;
    let shadow = if with_shadow {
        Some(shadow_step(prob, state)?)
    } else {
        None
    };
    Ok(StepRecord {
        block,
        before: state.clone(),
        after,
        shadow,
    })
}

/// One asynchronous step: draw a block, then update x, z, p on it.
pub fn step(
    prob: &SeparableProblem,
    state: &PrimalDualState,
    partition: &ProperPartition,
    dist: &ActivationDistribution,
    rng: &mut RngStream,
    with_shadow: bool,
) -> Result<StepRecord> {
    let block = sample_block(dist, rng);
    step_block(prob, state, partition, block, with_shadow)
}

/// Full-information iterates from `state`: every component and every row
/// active.
pub fn shadow_step(prob: &SeparableProblem, state: &PrimalDualState) -> Result<ShadowIterates> {
    let rows: Vec<usize> = (0..prob.num_rows()).collect();
    let comps: Vec<usize> = (0..prob.num_components()).collect();
    let all = ActiveSet {
        rows: &rows,
        components: &comps,
        z_set: prob.z_set(),
    };
    let full = apply_block(prob, state, &all)?;
    let r = residual(prob, &full.x, &full.z)?;
    Ok(ShadowIterates {
        y: full.x,
        v: full.z,
        mu: full.p,
        r,
    })
}

/// The classical two-block problem
/// `min F(x) + G(z)  s.t.  Dx + Hz = c`, expressed with the same term and
/// set vocabulary. `G` is either absent or one scalar term per z-coordinate.
#[derive(Clone, Debug)]
pub struct StandardProblem {
    pub base: SeparableProblem,
    pub z_terms: Option<Vec<ConvexTerm>>,
    pub offset: Vec<f64>,
}

impl StandardProblem {
    pub fn new(
        base: SeparableProblem,
        z_terms: Option<Vec<ConvexTerm>>,
        offset: Vec<f64>,
    ) -> Result<Self> {
        check_len("offset", base.num_rows(), offset.len())?;
        if let Some(terms) = &z_terms {
            check_len("z terms", base.num_rows(), terms.len())?;
            if terms.iter().any(|t| t.dim() != 1) {
                return Err(Error::InvalidArgument("z terms must be scalar".into()));
            }
            if matches!(base.z_set(), FeasibleSet::SumZeroPairs { .. }) {
                return Err(Error::UnsupportedSet(
                    "z terms require a free or box z set",
                ));
            }
        }
        Ok(Self {
            base,
            z_terms,
            offset,
        })
    }
}

impl From<SeparableProblem> for StandardProblem {
    fn from(base: SeparableProblem) -> Self {
        let w = base.num_rows();
        Self {
            base,
            z_terms: None,
            offset: alloc::vec![0.0; w],
        }
    }
}

/// One pass of standard ADMM: x-minimization, z-minimization, dual ascent
/// with step `beta`.
pub fn sync_admm_step(std_prob: &StandardProblem, state: &PrimalDualState) -> Result<PrimalDualState> {
    let prob = &std_prob.base;
    check_state(prob, state)?;
    let n = prob.n();
    let w = prob.num_rows();
    let beta = prob.beta();
    let c = &std_prob.offset;

    // x <- argmin L_beta(x, z, p)
    let mut x = state.x.clone();
    for i in 0..prob.num_components() {
        let mut quad = alloc::vec![0.0; n];
        let mut lin = alloc::vec![0.0; n];
        for l in 0..w {
            let e = prob.row(l);
            if e.component == i {
                quad[e.coord] += beta * e.coeff * e.coeff;
                lin[e.coord] += e.coeff * (state.p[l] - beta * (prob.h(l) * state.z[l] - c[l]));
            }
        }
        let u = solve_local(&LocalSubproblem {
            term: &prob.terms()[i],
            quad_diag: quad,
            linear: lin,
            set: &prob.x_sets()[i],
        })?;
        x[i * n..(i + 1) * n].copy_from_slice(&u);
    }

    // z <- argmin L_beta(x+, z, p)
    let dx = prob.d_times(&x);
    let z = match &std_prob.z_terms {
        None => solve_z_block(&ZBlockSubproblem {
            weights: prob.constraints().h_diag().to_vec(),
            target: (0..w)
                .map(|l| state.p[l] / beta - dx[l] + c[l])
                .collect(),
            set: prob.z_set().clone(),
        })?,
        Some(terms) => {
            let mut z = alloc::vec![0.0; w];
            for l in 0..w {
                let h = prob.h(l);
                let set = prob.z_set().restrict(&[l])?;
                z[l] = solve_local(&LocalSubproblem {
                    term: &terms[l],
                    quad_diag: alloc::vec![beta * h * h],
                    linear: alloc::vec![h * (state.p[l] - beta * (dx[l] - c[l]))],
                    set: &set,
                })?[0];
            }
            z
        }
    };

    // p <- p - beta (Dx + Hz - c)
    let p = (0..w)
        .map(|l| state.p[l] - beta * (dx[l] + prob.h(l) * z[l] - c[l]))
        .collect();
    Ok(PrimalDualState {
        x,
        z,
        p,
        k: state.k + 1,
    })
}

/// A seeded asynchronous run that owns its state and random stream.
#[derive(Clone, Debug)]
pub struct AsyncAdmm<'a> {
    prob: &'a SeparableProblem,
    partition: &'a ProperPartition,
    dist: &'a ActivationDistribution,
    rng: RngStream,
    state: PrimalDualState,
}

impl<'a> AsyncAdmm<'a> {
    pub fn new(
        prob: &'a SeparableProblem,
        partition: &'a ProperPartition,
        dist: &'a ActivationDistribution,
        seed: u64,
        initial: PrimalDualState,
    ) -> Result<Self> {
        check_state(prob, &initial)?;
        check_len("partition rows", prob.num_rows(), partition.blocks().iter().map(|b| b.len()).sum())?;
        check_len("block probabilities", partition.num_blocks(), dist.block_probs.len())?;
        Ok(Self {
            prob,
            partition,
            dist,
            rng: RngStream::new(seed),
            state: initial,
        })
    }

    pub fn state(&self) -> &PrimalDualState {
        &self.state
    }

    pub fn rng(&self) -> &RngStream {
        &self.rng
    }

    /// Advances one iteration and returns its record.
    pub fn step(&mut self, with_shadow: bool) -> Result<StepRecord> {
        let rec = step(
            self.prob,
            &self.state,
            self.partition,
            self.dist,
            &mut self.rng,
            with_shadow,
        )?;
        guard(&rec.after)?;
        self.state = rec.after.clone();
        Ok(rec)
    }

    /// Advances one iteration without building a record.
    pub fn advance(&mut self) -> Result<usize> {
        let block = sample_block(self.dist, &mut self.rng);
        let next = apply_block(self.prob, &self.state, &self.partition.active_set(block))?;
        guard(&next)?;
        self.state = next;
        Ok(block)
    }
}

fn guard(state: &PrimalDualState) -> Result<()> {
    if !state.is_finite() {
        return Err(Error::NonFinite { iter: state.k });
    }
    let worst = [norm(&state.x), norm(&state.z), norm(&state.p)]
        .into_iter()
        .fold(0.0, f64::max);
    if worst > DIVERGENCE_NORM {
        return Err(Error::Diverged {
            iter: state.k,
            norm: worst,
        });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Probes {
    pub shadow: bool,
    pub lyapunov: bool,
    pub ergodic: bool,
}

#[derive(Clone, Debug)]
pub struct RunConfig<'a> {
    /// Number of iterations `T >= 1`.
    pub iterations: u64,
    /// Record every `stride`-th iteration.
    pub stride: u64,
    pub probes: Probes,
    pub reference: Option<&'a ReferenceSolution>,
    pub initial: PrimalDualState,
}

/// One row of the metrics trajectory, taken after iteration `iter`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricRecord {
    pub iter: u64,
    pub objective: f64,
    pub objective_error: Option<f64>,
    pub feasibility_violation: f64,
    /// `F(xbar)`, signed.
    pub ergodic_objective: Option<f64>,
    pub ergodic_objective_error: Option<f64>,
    pub ergodic_feasibility: Option<f64>,
    pub lyapunov: Option<f64>,
    pub active_block: usize,
    /// `D xbar + H zbar`, kept so that trajectories from several seeds can be
    /// averaged as vectors.
    pub ergodic_residual: Option<Vec<f64>>,
}

/// Outcomes of the per-step invariant checks made when the shadow probe is on.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InvariantCounters {
    pub probed_steps: u64,
    pub freeze_pass: u64,
    pub freeze_fail: u64,
    pub shadow_pass: u64,
    pub shadow_fail: u64,
    pub max_shadow_gap: f64,
}

impl InvariantCounters {
    pub fn merge(&mut self, other: &InvariantCounters) {
        self.probed_steps += other.probed_steps;
        self.freeze_pass += other.freeze_pass;
        self.freeze_fail += other.freeze_fail;
        self.shadow_pass += other.shadow_pass;
        self.shadow_fail += other.shadow_fail;
        self.max_shadow_gap = self.max_shadow_gap.max(other.max_shadow_gap);
    }

    fn record(&mut self, prob: &SeparableProblem, partition: &ProperPartition, rec: &StepRecord) {
        self.probed_steps += 1;
        if coordinates_frozen(prob, partition, rec) {
            self.freeze_pass += 1;
        } else {
            self.freeze_fail += 1;
        }
        if let Some(shadow) = &rec.shadow {
            let gap = shadow_gap(prob, partition, rec, shadow);
            self.max_shadow_gap = self.max_shadow_gap.max(gap);
            if gap <= SHADOW_TOL {
                self.shadow_pass += 1;
            } else {
                self.shadow_fail += 1;
            }
        }
    }
}

/// True when every coordinate outside the active block is bitwise unchanged.
pub fn coordinates_frozen(prob: &SeparableProblem, partition: &ProperPartition, rec: &StepRecord) -> bool {
    let n = prob.n();
    let comps = partition.components(rec.block);
    let rows = &partition.blocks()[rec.block];
    let x_ok = (0..prob.num_components())
        .filter(|i| comps.binary_search(i).is_err())
        .all(|i| {
            (i * n..(i + 1) * n).all(|j| rec.before.x[j].to_bits() == rec.after.x[j].to_bits())
        });
    let zp_ok = (0..prob.num_rows())
        .filter(|l| rows.binary_search(l).is_err())
        .all(|l| {
            rec.before.z[l].to_bits() == rec.after.z[l].to_bits()
                && rec.before.p[l].to_bits() == rec.after.p[l].to_bits()
        });
    x_ok && zp_ok
}

/// Largest deviation between the step's active coordinates and the
/// corresponding shadow coordinates.
pub fn shadow_gap(
    prob: &SeparableProblem,
    partition: &ProperPartition,
    rec: &StepRecord,
    shadow: &ShadowIterates,
) -> f64 {
    let n = prob.n();
    let mut gap: f64 = 0.0;
    for &i in partition.components(rec.block) {
        for j in i * n..(i + 1) * n {
            gap = gap.max(libm::fabs(rec.after.x[j] - shadow.y[j]));
        }
    }
    for &l in &partition.blocks()[rec.block] {
        gap = gap.max(libm::fabs(rec.after.z[l] - shadow.v[l]));
        gap = gap.max(libm::fabs(rec.after.p[l] - shadow.mu[l]));
        gap = gap.max(libm::fabs(
            prob.d_row_dot(l, &rec.after.x) - prob.d_row_dot(l, &shadow.y),
        ));
    }
    gap
}

#[derive(Clone, Debug)]
pub struct RunMetrics {
    pub seed: u64,
    pub records: Vec<MetricRecord>,
    pub final_state: PrimalDualState,
    pub counters: InvariantCounters,
    pub ergodic: Option<ErgodicAverages>,
}

/// Runs `config.iterations` asynchronous steps from `config.initial`,
/// recording metrics every `config.stride` iterations.
pub fn run(
    prob: &SeparableProblem,
    partition: &ProperPartition,
    dist: &ActivationDistribution,
    seed: u64,
    config: &RunConfig<'_>,
) -> Result<RunMetrics> {
    if config.iterations == 0 {
        return Err(Error::InvalidArgument("iteration count must be at least 1".into()));
    }
    if config.stride == 0 {
        return Err(Error::InvalidArgument("stride must be at least 1".into()));
    }
    if config.probes.lyapunov && config.reference.is_none() {
        return Err(Error::MissingReference);
    }
    let optimum = match config.reference {
        Some(r) => Some(objective(prob, &r.x)?),
        None => None,
    };
    let wn = WeightedNorm::new(dist.weight_diag.clone());
    let mut sim = AsyncAdmm::new(prob, partition, dist, seed, config.initial.clone())?;
    let mut ergodic = config
        .probes
        .ergodic
        .then(|| ErgodicAverages::new(prob.x_len(), prob.num_rows()));
    let mut counters = InvariantCounters::default();
    let mut records = Vec::with_capacity((config.iterations / config.stride) as usize);

    for _ in 0..config.iterations {
        let block = if config.probes.shadow {
            let rec = sim.step(true)?;
            counters.record(prob, partition, &rec);
            rec.block
        } else {
            sim.advance()?
        };
        let state = sim.state();
        if let Some(avg) = ergodic.as_mut() {
            avg.update(state);
        }
        if state.k % config.stride != 0 {
            continue;
        }
        let obj = objective(prob, &state.x)?;
        let feas = norm(&residual(prob, &state.x, &state.z)?);
        let (erg_obj, erg_feas, erg_res) = match &ergodic {
            Some(avg) => {
                let xb = avg.x_bar();
                let zb = avg.z_bar();
                let res = residual(prob, &xb, &zb)?;
                (Some(objective(prob, &xb)?), Some(norm(&res)), Some(res))
            }
            None => (None, None, None),
        };
        let erg_obj_err = match (erg_obj, optimum) {
            (Some(v), Some(f)) => Some(libm::fabs(v - f)),
            _ => None,
        };
        let lyap = match (config.probes.lyapunov, config.reference) {
            (true, Some(r)) => Some(lyapunov(prob, state, r, &wn)?),
            _ => None,
        };
        records.push(MetricRecord {
            iter: state.k,
            objective: obj,
            objective_error: optimum.map(|f| libm::fabs(obj - f)),
            feasibility_violation: feas,
            ergodic_objective: erg_obj,
            ergodic_objective_error: erg_obj_err,
            ergodic_feasibility: erg_feas,
            lyapunov: lyap,
            active_block: block,
            ergodic_residual: erg_res,
        });
    }
    if !all_finite(&sim.state().x) {
        return Err(Error::NonFinite { iter: sim.state().k });
    }
    Ok(RunMetrics {
        seed,
        records,
        final_state: sim.state().clone(),
        counters,
        ergodic,
    })
}

//! Building a run from a config, executing all seeds, and writing
//! `seed_<s>.csv`, `mean.csv` (several seeds) and `summary.json`.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use asyncadmm_core::{
    build_partition, compute_rate_constants, derive_probabilities, objective, run,
    ActivationDistribution, Graph, InvariantCounters, PrimalDualState, Probes, ProperPartition,
    RateConstants, RateOptions, ReferenceSolution, ReferenceSource, RunConfig, RunMetrics,
    SeparableProblem,
};

use crate::bench::{generate_benchmark, BenchmarkKind, BenchmarkSpec};
use crate::config::{ExperimentConfig, ProblemSource};
use crate::error::{CliError, Result};
use crate::graph_file::resolve_graph;
use crate::metrics::{fit_window, mean_rows, write_rows, Row};
use crate::problem_file::read_problem;

/// Everything needed to run the seeds of one config.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub problem: SeparableProblem,
    pub partition: ProperPartition,
    pub dist: ActivationDistribution,
    pub reference: Option<ReferenceSolution>,
    pub initial: PrimalDualState,
    pub description: String,
}

fn bench_spec(src: &ProblemSource, kind: BenchmarkKind, nodes: Option<usize>) -> Result<BenchmarkSpec> {
    let mut spec = BenchmarkSpec::new(kind);
    spec.box_bound = src.box_bound;
    spec.z_bound = src.z_bound;
    match kind {
        BenchmarkKind::ConsensusQuadratic | BenchmarkKind::ConsensusLad => {
            spec.a = match (&src.a, nodes) {
                (Some(a), _) => a.clone(),
                (None, Some(n)) => (1..=n).map(|v| v as f64).collect(),
                (None, None) => vec![1.0, 2.0, 3.0, 4.0, 5.0],
            };
            if kind == BenchmarkKind::ConsensusQuadratic {
                spec.weights = src.weights.clone();
            } else if src.weights.is_some() {
                return Err(CliError::Validation("weights only apply to consensus-quadratic".into()));
            }
        }
        BenchmarkKind::LassoToy => {
            let (Some(w), Some(b)) = (&src.w, &src.b) else {
                return Err(CliError::Validation("lasso-toy needs w and b".into()));
            };
            spec.w = w.clone();
            spec.b = b.clone();
            spec.pi = src.pi.unwrap_or(0.0);
            if spec.pi < 0.0 || !spec.pi.is_finite() {
                return Err(CliError::Validation(format!("pi must be nonnegative, got {}", spec.pi)));
            }
        }
    }
    if kind != BenchmarkKind::LassoToy && (src.w.is_some() || src.b.is_some() || src.pi.is_some()) {
        return Err(CliError::Validation("w, b and pi only apply to lasso-toy".into()));
    }
    Ok(spec)
}

fn default_graph(nodes: usize) -> Result<Graph> {
    Ok(if nodes >= 3 {
        Graph::cycle(nodes)?
    } else {
        Graph::path(nodes)?
    })
}

/// Builds the problem, partition, distribution, reference and initial state.
/// A dual reference is only computed when a probe needs it.
pub fn prepare(cfg: &ExperimentConfig, base: &Path) -> Result<Prepared> {
    let src = &cfg.problem;
    let need_dual = cfg.probes.lyapunov || cfg.probes.rate_bound;
    let beta = cfg.beta;
    let (problem, default_partition, reference, description) = if let Some(name) = &src.generator {
        let kind: BenchmarkKind = name.parse()?;
        let graph = src.graph.as_deref().map(|g| resolve_graph(g, base)).transpose()?;
        let spec = bench_spec(src, kind, graph.as_ref().map(Graph::nodes))?;
        let graph = match graph {
            Some(g) => g,
            None => default_graph(spec.nodes())?,
        };
        let mut b = generate_benchmark(&spec, &graph, beta.unwrap_or(1.0))?;
        if need_dual {
            b = b.with_dual()?;
        }
        let description = format!(
            "{kind} on {} nodes and {} edges",
            graph.nodes(),
            graph.num_edges()
        );
        (
            b.reform.problem().clone(),
            Some(b.reform.partition().clone()),
            Some(b.reference),
            description,
        )
    } else {
        let (file, description) = match (&src.file, &src.inline) {
            (Some(f), _) => (read_problem(&base.join(f))?, format!("problem file {}", f.display())),
            (None, Some(inline)) => (inline.clone(), "inline problem".to_string()),
            (None, None) => unreachable!("validated config has a problem source"),
        };
        let problem = file.to_problem(beta)?;
        (problem, None, None, description)
    };

    let blocks = cfg.partition.as_ref().and_then(|p| p.blocks.clone());
    let partition = match (blocks, default_partition) {
        (Some(blocks), _) => build_partition(problem.z_set(), problem.constraints(), blocks)?,
        (None, Some(p)) => p,
        (None, None) => {
            return Err(CliError::Validation(
                "problems from files need partition.blocks".into(),
            ))
        }
    };
    let dist = match cfg.partition.as_ref().and_then(|p| p.block_probs.as_ref()) {
        Some(probs) => derive_probabilities(&partition, probs)?,
        None => ActivationDistribution::uniform(&partition)?,
    };

    let x0 = match &cfg.x0 {
        Some(x0) => x0.clone(),
        None => {
            let n = problem.n();
            let mut x0 = Vec::with_capacity(problem.x_len());
            for set in problem.x_sets() {
                for c in 0..n {
                    let (lo, hi) = set.coord_bounds(c);
                    x0.push(0.0f64.clamp(lo, hi));
                }
            }
            x0
        }
    };
    let initial = PrimalDualState::initial(&problem, x0.clone())?;

    let reference = match reference {
        Some(r) => Some(r),
        None if need_dual => Some(ReferenceSolution::from_sync(&problem, x0, 1e-10, 1_000_000)?),
        None => None,
    };
    Ok(Prepared {
        problem,
        partition,
        dist,
        reference,
        initial,
        description,
    })
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct FinalMetrics {
    pub iter: u64,
    pub objective: f64,
    pub objective_error: Option<f64>,
    pub feasibility_violation: f64,
    pub ergodic_objective_error: Option<f64>,
    pub ergodic_feasibility: Option<f64>,
    pub lyapunov: Option<f64>,
}

impl From<&Row> for FinalMetrics {
    fn from(r: &Row) -> Self {
        FinalMetrics {
            iter: r.iter,
            objective: r.objective,
            objective_error: r.objective_error,
            feasibility_violation: r.feasibility_violation,
            ergodic_objective_error: r.ergodic_objective_error,
            ergodic_feasibility: r.ergodic_feasibility,
            lyapunov: r.lyapunov,
        }
    }
}

/// Fitted log-log slopes; `None` where the column is empty or not positive.
#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct Slopes {
    pub objective_error: Option<f64>,
    pub feasibility_violation: Option<f64>,
    pub ergodic_objective_error: Option<f64>,
    pub ergodic_feasibility: Option<f64>,
    pub lyapunov: Option<f64>,
}

fn slopes(rows: &[Row], [from, to]: [u64; 2]) -> Slopes {
    let fit = |col: &str| {
        let pts: Vec<(u64, Option<f64>)> = rows.iter().map(|r| (r.iter, r.get(col))).collect();
        fit_window(&pts, from, to).map(|f| f.slope)
    };
    Slopes {
        objective_error: fit("objective_error"),
        feasibility_violation: fit("feasibility_violation"),
        ergodic_objective_error: fit("ergodic_objective_error"),
        ergodic_feasibility: fit("ergodic_feasibility"),
        lyapunov: fit("lyapunov"),
    }
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct Invariants {
    pub probed_steps: u64,
    pub freeze_pass: u64,
    pub freeze_fail: u64,
    pub shadow_pass: u64,
    pub shadow_fail: u64,
    pub max_shadow_gap: f64,
}

impl From<&InvariantCounters> for Invariants {
    fn from(c: &InvariantCounters) -> Self {
        Invariants {
            probed_steps: c.probed_steps,
            freeze_pass: c.freeze_pass,
            freeze_fail: c.freeze_fail,
            shadow_pass: c.shadow_pass,
            shadow_fail: c.shadow_fail,
            max_shadow_gap: c.max_shadow_gap,
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    #[serde(rename = "final")]
    pub last: FinalMetrics,
    pub slopes: Slopes,
    pub invariants: Invariants,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MeanSummary {
    #[serde(rename = "final")]
    pub last: FinalMetrics,
    pub slopes: Slopes,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct RateSummary {
    pub q_at_ref: f64,
    pub q_bar: f64,
    pub l_tilde0: f64,
    pub l_tilde_at_ref: f64,
    pub dist_theta: f64,
    pub dist_ref: f64,
    pub dist_z: f64,
    pub p_star_inf: f64,
    pub grid_gap: f64,
    pub directions_tried: usize,
    pub feasibility_bound: f64,
    pub primal_bound: f64,
    /// `T` times the (mean) ergodic feasibility at the last recorded row.
    pub scaled_feasibility: Option<f64>,
    /// `T` times the (mean) ergodic objective error at the last recorded row.
    pub scaled_objective_error: Option<f64>,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Summary {
    pub problem: String,
    #[serde(rename = "T")]
    pub iterations: u64,
    pub stride: u64,
    pub beta: f64,
    pub seeds: Vec<u64>,
    pub fit_window: [u64; 2],
    pub optimal_value: Option<f64>,
    pub reference_source: Option<&'static str>,
    pub runs: Vec<SeedSummary>,
    pub mean: Option<MeanSummary>,
    pub invariants: Invariants,
    pub rate_bound: Option<RateSummary>,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub dir: PathBuf,
    pub prepared: Prepared,
    pub runs: Vec<RunMetrics>,
    pub mean: Option<Vec<Row>>,
    pub rate: Option<RateConstants>,
    pub summary: Summary,
}

/// Runs every seed (in parallel) and writes the artifacts into `out`.
pub fn run_experiment(cfg: &ExperimentConfig, base: &Path, out: &Path) -> Result<Outcome> {
    cfg.validate(base)?;
    let prepared = prepare(cfg, base)?;
    let p = &prepared;
    let run_cfg = RunConfig {
        iterations: cfg.iterations,
        stride: cfg.stride,
        probes: Probes {
            shadow: cfg.probes.shadow,
            lyapunov: cfg.probes.lyapunov,
            ergodic: cfg.probes.ergodic,
        },
        reference: p.reference.as_ref(),
        initial: p.initial.clone(),
    };
    let results: Vec<Result<RunMetrics>> = cfg
        .seeds
        .par_iter()
        .map(|&seed| {
            run(&p.problem, &p.partition, &p.dist, seed, &run_cfg)
                .map_err(|source| CliError::Run { seed, source })
        })
        .collect();
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    let rate = if cfg.probes.rate_bound {
        let reference = p.reference.as_ref().expect("rate probe computes a reference");
        let mut opts = RateOptions::default();
        if let Some(r) = cfg.probes.grid_resolution {
            opts.grid_resolution = r;
        }
        if let Some(d) = cfg.probes.directions {
            opts.directions = d;
        }
        Some(compute_rate_constants(
            &p.problem,
            &p.dist,
            reference,
            &p.initial.x,
            &p.initial.z,
            &p.initial.p,
            &opts,
        )?)
    } else {
        None
    };

    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let optimum = match &p.reference {
        Some(r) => Some(objective(&p.problem, &r.x)?),
        None => None,
    };
    let window = cfg
        .fit_window
        .unwrap_or([(cfg.iterations / 2).max(1), cfg.iterations]);

    let mut seed_summaries = Vec::with_capacity(runs.len());
    let mut totals = InvariantCounters::default();
    for r in &runs {
        let rows: Vec<Row> = r.records.iter().map(Row::from).collect();
        write_rows(&out.join(format!("seed_{}.csv", r.seed)), &rows)?;
        totals.merge(&r.counters);
        seed_summaries.push(SeedSummary {
            seed: r.seed,
            last: FinalMetrics::from(rows.last().expect("T >= stride")),
            slopes: slopes(&rows, window),
            invariants: Invariants::from(&r.counters),
        });
    }
    let mean = (runs.len() > 1).then(|| mean_rows(&runs, optimum));
    if let Some(rows) = &mean {
        write_rows(&out.join("mean.csv"), rows)?;
    }
    let headline: Option<FinalMetrics> = match &mean {
        Some(rows) => rows.last().map(FinalMetrics::from),
        None => seed_summaries.first().map(|s| s.last.clone()),
    };

    let rate_summary = rate.as_ref().map(|c| {
        let scale = |v: Option<f64>| headline.as_ref().and_then(|h| v.map(|v| v * h.iter as f64));
        RateSummary {
            q_at_ref: c.q_at_ref,
            q_bar: c.q_bar,
            l_tilde0: c.l_tilde0,
            l_tilde_at_ref: c.l_tilde_at_ref,
            dist_theta: c.dist_theta,
            dist_ref: c.dist_ref,
            dist_z: c.dist_z,
            p_star_inf: c.p_star_inf,
            grid_gap: c.grid_gap,
            directions_tried: c.directions_tried,
            feasibility_bound: c.feasibility_bound(),
            primal_bound: c.primal_bound(),
            scaled_feasibility: scale(headline.as_ref().and_then(|h| h.ergodic_feasibility)),
            scaled_objective_error: scale(headline.as_ref().and_then(|h| h.ergodic_objective_error)),
        }
    });

    let summary = Summary {
        problem: p.description.clone(),
        iterations: cfg.iterations,
        stride: cfg.stride,
        beta: p.problem.beta(),
        seeds: cfg.seeds.clone(),
        fit_window: window,
        optimal_value: optimum,
        reference_source: p.reference.as_ref().map(|r| match r.source {
            ReferenceSource::Analytic => "analytic",
            ReferenceSource::LongRun => "long-run",
            ReferenceSource::External => "external",
        }),
        runs: seed_summaries,
        mean: mean.as_ref().map(|rows| MeanSummary {
            last: FinalMetrics::from(rows.last().expect("T >= stride")),
            slopes: slopes(rows, window),
        }),
        invariants: Invariants::from(&totals),
        rate_bound: rate_summary,
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    let path = out.join("summary.json");
    std::fs::write(&path, json + "\n").map_err(|e| CliError::io(&path, e))?;

    Ok(Outcome {
        dir: out.to_path_buf(),
        prepared,
        runs,
        mean,
        rate,
        summary,
    })
}

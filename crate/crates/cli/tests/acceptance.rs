//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails.

use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use asyncadmm::config::ProblemSource;
use asyncadmm::metrics::{fit_window, read_column};
use asyncadmm::{generate_benchmark, run_experiment, BenchmarkKind, BenchmarkSpec, ExperimentConfig};
use asyncadmm_core::{
    build_reformulation, derive_probabilities, edge_step, lyapunov, residual, run, solve_local,
    step, step_block, sync_admm_step, AsyncAdmm, ConvexTerm, EdgeReformulation, FeasibleSet,
    Graph, LocalSubproblem, PrimalDualState, Probes, ProperPartition, RngStream, RunConfig,
    ScalarConvex, StandardProblem, WeightedNorm,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn consensus(kind: BenchmarkKind, a: &[f64], graph: &Graph, beta: f64) -> asyncadmm::Benchmark {
    let spec = BenchmarkSpec {
        a: a.to_vec(),
        ..BenchmarkSpec::new(kind)
    };
    generate_benchmark(&spec, graph, beta).unwrap()
}

// Standard two-block ADMM written out for two scalar agents
// f_q(x) = (x - a_q)^2 joined by rows x_0 - z_0 = 0, -x_1 - z_1 = 0,
// z_0 + z_1 = 0.
fn two_node_admm(a: [f64; 2], beta: f64, s: &PrimalDualState) -> PrimalDualState {
    let (z, p) = (&s.z, &s.p);
    let x0 = (2.0 * a[0] + p[0] + beta * z[0]) / (2.0 + beta);
    let x1 = (2.0 * a[1] - p[1] - beta * z[1]) / (2.0 + beta);
    let dx = [x0, -x1];
    let t = [dx[0] - p[0] / beta, dx[1] - p[1] / beta];
    let h = 0.5 * (t[0] - t[1]);
    let zn = [h, -h];
    let pn = [p[0] - beta * (dx[0] - zn[0]), p[1] - beta * (dx[1] - zn[1])];
    PrimalDualState {
        x: vec![x0, x1],
        z: zn.to_vec(),
        p: pn.to_vec(),
        k: s.k + 1,
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let a = [1.0, 5.0];
    let beta = 1.0;
    let b = consensus(BenchmarkKind::ConsensusQuadratic, &a, &Graph::path(2).unwrap(), beta);
    let prob = b.reform.problem();
    let part = ProperPartition::single_block(prob.z_set(), prob.constraints()).unwrap();
    let dist = derive_probabilities(&part, &[1.0]).unwrap();
    let std_prob = StandardProblem::from(prob.clone());
    let mut async_s = PrimalDualState::initial(prob, vec![0.5, -1.0]).unwrap();
    let mut sync_s = async_s.clone();
    let mut hand_s = async_s.clone();
    let mut rng = RngStream::new(0);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        async_s = step(prob, &async_s, &part, &dist, &mut rng, false).unwrap().after;
        sync_s = sync_admm_step(&std_prob, &sync_s).unwrap();
        hand_s = two_node_admm(a, beta, &hand_s);
        for other in [&sync_s, &hand_s] {
            let pairs = async_s
                .x
                .iter()
                .chain(&async_s.z)
                .chain(&async_s.p)
                .zip(other.x.iter().chain(&other.z).chain(&other.p));
            for (u, v) in pairs {
                worst = worst.max((u - v).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-10 && elapsed < Duration::from_secs(1),
        format!("max coordinate gap {worst:.3e} (limit 1e-10) over 100 iterations, {elapsed:.2?} (limit 1s)"),
    )
}

fn criterion_2() -> Verdict {
    let g = Graph::cycle(5).unwrap();
    let a = [1.0, 2.0, 3.0, 4.0, 5.0];
    let mut pass = true;
    let mut worst = [0.0f64; 4];
    let mut slowest = Duration::ZERO;
    for (k, (kind, tol)) in [
        (BenchmarkKind::ConsensusQuadratic, 1e-3),
        (BenchmarkKind::ConsensusLad, 1e-2),
    ]
    .into_iter()
    .enumerate()
    {
        let b = consensus(kind, &a, &g, 1.0);
        let prob = b.reform.problem();
        let dist = b.reform.uniform_activation().unwrap();
        for seed in 0..10 {
            let start = Instant::now();
            let cfg = RunConfig {
                iterations: 20_000,
                stride: 20_000,
                probes: Probes::default(),
                reference: None,
                initial: PrimalDualState::initial(prob, vec![0.0; 5]).unwrap(),
            };
            let m = run(prob, b.reform.partition(), &dist, seed, &cfg).unwrap();
            let elapsed = start.elapsed();
            slowest = slowest.max(elapsed);
            let s = &m.final_state;
            let err = s.x.iter().map(|x| (x - 3.0).abs()).fold(0.0, f64::max);
            let feas = norm(&residual(prob, &s.x, &s.z).unwrap());
            worst[2 * k] = worst[2 * k].max(err);
            worst[2 * k + 1] = worst[2 * k + 1].max(feas);
            pass &= err < tol && feas < 1e-3 && elapsed < Duration::from_secs(5);
        }
    }
    verdict(
        pass,
        format!(
            "quadratic max|x-3| {:.2e} feas {:.2e}; lad max|x-3| {:.2e} feas {:.2e}; slowest seed {slowest:.2?} (limit 5s)",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::new(
        10_000,
        ProblemSource {
            graph: Some("cycle:5".into()),
            a: Some(vec![1.0, 2.0, 3.0, 4.0, 5.0]),
            box_bound: Some(10.0),
            z_bound: Some(10.0),
            ..ProblemSource::generator(BenchmarkKind::ConsensusQuadratic)
        },
    );
    cfg.beta = Some(1.0);
    cfg.seeds = (0..200).collect();
    cfg.stride = 100;
    cfg.fit_window = Some([1_000, 10_000]);
    cfg.probes.ergodic = true;
    cfg.probes.rate_bound = true;
    let out = run_experiment(&cfg, dir.path(), dir.path()).unwrap();
    let points = read_column(&dir.path().join("mean.csv"), "ergodic_feasibility").unwrap();
    let fit = fit_window(&points, 1_000, 10_000).unwrap();
    let last = points.iter().find(|(k, _)| *k == 10_000).and_then(|p| p.1).unwrap();
    let scaled = 10_000.0 * last;
    let bound = out.rate.as_ref().unwrap().feasibility_bound();
    let elapsed = start.elapsed();
    verdict(
        fit.slope <= -0.8 && scaled < 1.1 * bound && elapsed < Duration::from_secs(600),
        format!(
            "slope {:.3} over [1e3, 1e4] (limit -0.8), T*mean feasibility {scaled:.3} vs 1.1*bound {:.3}, {elapsed:.2?}",
            fit.slope,
            1.1 * bound
        ),
    )
}

fn criterion_4() -> Verdict {
    let g = Graph::cycle(5).unwrap();
    let b = consensus(BenchmarkKind::ConsensusQuadratic, &[1.0, 2.0, 3.0, 4.0, 5.0], &g, 1.0)
        .with_dual()
        .unwrap();
    let prob = b.reform.problem();
    let part = b.reform.partition();
    let dist = b.reform.uniform_activation().unwrap();
    let wn = WeightedNorm::from_distribution(&dist);
    let reference = &b.reference;
    let steps = 2_000usize;
    let paths = 200u64;
    let mut expected = vec![0.0; steps];
    let mut realized = vec![0.0; steps];
    for seed in 0..paths {
        let initial = PrimalDualState::initial(prob, vec![0.0; 5]).unwrap();
        let mut sim = AsyncAdmm::new(prob, part, &dist, seed, initial).unwrap();
        for k in 0..steps {
            let s = sim.state().clone();
            let v = lyapunov(prob, &s, reference, &wn).unwrap();
            let mut next = 0.0;
            for (blk, pb) in dist.block_probs.iter().enumerate() {
                let after = step_block(prob, &s, part, blk, false).unwrap().after;
                next += pb * lyapunov(prob, &after, reference, &wn).unwrap();
            }
            expected[k] += next - v;
            sim.advance().unwrap();
            realized[k] += lyapunov(prob, sim.state(), reference, &wn).unwrap() - v;
        }
    }
    let worst = expected.iter().map(|e| e / paths as f64).fold(f64::NEG_INFINITY, f64::max);
    let worst_realized = realized.iter().map(|e| e / paths as f64).fold(f64::NEG_INFINITY, f64::max);
    verdict(
        worst <= 1e-6,
        format!(
            "max over {steps} iterations of mean E[V(k+1) - V(k) | state] {worst:.3e} (limit 1e-6); sampled mean increment max {worst_realized:.3e}"
        ),
    )
}

fn criterion_5() -> Verdict {
    let lasso = BenchmarkSpec {
        w: vec![1.0, -2.0, 0.5, 1.5],
        b: vec![2.0, 1.0, -1.0, 3.0],
        pi: 1.5,
        box_bound: Some(4.0),
        z_bound: Some(0.5),
        ..BenchmarkSpec::new(BenchmarkKind::LassoToy)
    };
    let lad = BenchmarkSpec {
        a: vec![-3.0, 0.0, 2.0, 7.0, 1.0, -1.0],
        box_bound: Some(5.0),
        ..BenchmarkSpec::new(BenchmarkKind::ConsensusLad)
    };
    let problems = [
        generate_benchmark(&lasso, &Graph::complete(5).unwrap(), 0.7).unwrap(),
        generate_benchmark(&lad, &Graph::star(6).unwrap(), 2.0).unwrap(),
    ];
    let mut seeds = RngStream::new(20_261_016);
    let mut total = asyncadmm_core::InvariantCounters::default();
    for b in &problems {
        let prob = b.reform.problem();
        let dist = b.reform.uniform_activation().unwrap();
        for _ in 0..5 {
            let cfg = RunConfig {
                iterations: 100,
                stride: 100,
                probes: Probes {
                    shadow: true,
                    ..Probes::default()
                },
                reference: None,
                initial: PrimalDualState::initial(prob, vec![0.0; prob.x_len()]).unwrap(),
            };
            let m = run(prob, b.reform.partition(), &dist, seeds.next_u64(), &cfg).unwrap();
            total.merge(&m.counters);
        }
    }
    verdict(
        total.probed_steps == 1000 && total.shadow_pass == 1000 && total.freeze_pass == 1000,
        format!(
            "{} probed steps: shadow identities {} pass (max gap {:.3e}, limit 1e-9), bitwise freeze {} pass",
            total.probed_steps, total.shadow_pass, total.max_shadow_gap, total.freeze_pass
        ),
    )
}

fn mixed_cycle(beta: f64) -> EdgeReformulation {
    let g = Graph::cycle(5).unwrap();
    let terms = vec![
        ConvexTerm::quadratic(vec![1.0], 1.0).unwrap(),
        ConvexTerm::abs_dev(vec![-2.0]).unwrap(),
        ConvexTerm::l1(0.5, 1).unwrap(),
        ConvexTerm::quadratic(vec![4.0], 0.3).unwrap(),
        ConvexTerm::abs_dev(vec![0.5]).unwrap(),
    ];
    let sets = (0..5)
        .map(|i| {
            if i % 2 == 0 {
                FeasibleSet::free(1)
            } else {
                FeasibleSet::boxed(vec![-3.0], vec![3.0]).unwrap()
            }
        })
        .collect();
    build_reformulation(&g, terms, sets, beta, 1, None).unwrap()
}

fn criterion_6() -> Verdict {
    let mut rng = RngStream::new(6);
    let mut gap: f64 = 0.0;
    let mut pair_sum: f64 = 0.0;
    let mut p_equal = true;
    for _ in 0..100 {
        let beta = 0.1 + 5.0 * rng.next_f64();
        let r = mixed_cycle(beta);
        let prob = r.problem();
        let x: Vec<f64> = (0..5)
            .map(|i| {
                let (lo, hi) = prob.x_sets()[i].coord_bounds(0);
                (2.0 * rng.next_gaussian()).clamp(lo, hi)
            })
            .collect();
        let mut z: Vec<f64> = (0..prob.num_rows()).map(|_| rng.next_gaussian()).collect();
        for pair in z.chunks_mut(2) {
            pair[1] = -pair[0];
        }
        let p: Vec<f64> = (0..prob.num_rows()).map(|_| rng.next_gaussian()).collect();
        let s = PrimalDualState::new(prob, x, z, p).unwrap();
        let e = (rng.next_u64() % 5) as usize;
        let a = edge_step(&r, &s, e).unwrap();
        let b = step_block(prob, &s, r.partition(), e, false).unwrap().after;
        for (u, v) in a.x.iter().chain(&a.z).chain(&a.p).zip(b.x.iter().chain(&b.z).chain(&b.p)) {
            gap = gap.max((u - v).abs());
        }
        let (i, j) = (r.row_index(e, 0, 0), r.row_index(e, 1, 0));
        pair_sum = pair_sum.max((a.z[i] + a.z[j]).abs());
        p_equal &= a.p[i] == a.p[j];
    }
    verdict(
        gap <= 1e-10 && pair_sum <= 1e-12 && p_equal,
        format!(
            "100 random states: max gap to generic step {gap:.3e} (limit 1e-10), max |z_ei + z_ej| {pair_sum:.3e} (limit 1e-12), p_ei == p_ej {p_equal}"
        ),
    )
}

struct Cosh(f64);

impl ScalarConvex for Cosh {
    fn value(&self, u: f64) -> f64 {
        self.0 * (u - 1.0).cosh()
    }
    fn subgradient(&self, u: f64) -> f64 {
        self.0 * (u - 1.0).sinh()
    }
}

// Bisection on the subgradient of f(u) + q u^2/2 - b u over [lo, hi].
fn bisection_oracle(term: &ConvexTerm, q: f64, b: f64, lo: f64, hi: f64) -> f64 {
    let dg = |u: f64| term.coord_subgradient(0, u) + q * u - b;
    let (mut l, mut h) = (if lo.is_finite() { lo } else { -1e6 }, if hi.is_finite() { hi } else { 1e6 });
    if dg(l) >= 0.0 {
        return l;
    }
    if dg(h) <= 0.0 {
        return h;
    }
    for _ in 0..300 {
        let m = 0.5 * (l + h);
        if dg(m) < 0.0 {
            l = m;
        } else {
            h = m;
        }
    }
    0.5 * (l + h)
}

fn criterion_7() -> Verdict {
    let mut rng = RngStream::new(7);
    let mut worst: f64 = 0.0;
    let mut kinds = [0usize; 4];
    for k in 0..1000 {
        let u = |rng: &mut RngStream, a: f64, b: f64| a + (b - a) * rng.next_f64();
        let term = match k % 4 {
            0 => ConvexTerm::quadratic(vec![u(&mut rng, -10.0, 10.0)], u(&mut rng, 0.05, 5.0)).unwrap(),
            1 => ConvexTerm::abs_dev(vec![u(&mut rng, -10.0, 10.0)]).unwrap(),
            2 => ConvexTerm::l1(u(&mut rng, 0.0, 5.0), 1).unwrap(),
            _ => ConvexTerm::custom(Arc::new(Cosh(u(&mut rng, 0.1, 2.0))), true),
        };
        kinds[k % 4] += 1;
        let q = u(&mut rng, 0.05, 5.0);
        let b = u(&mut rng, -20.0, 20.0);
        let set = if rng.next_f64() < 0.5 {
            FeasibleSet::free(1)
        } else {
            let lo = u(&mut rng, -5.0, 2.0);
            FeasibleSet::boxed(vec![lo], vec![lo + u(&mut rng, 0.1, 6.0)]).unwrap()
        };
        let got = solve_local(&LocalSubproblem {
            term: &term,
            quad_diag: vec![q],
            linear: vec![b],
            set: &set,
        })
        .unwrap()[0];
        let (lo, hi) = set.coord_bounds(0);
        worst = worst.max((got - bisection_oracle(&term, q, b, lo, hi)).abs());
    }
    verdict(
        worst <= 1e-7,
        format!(
            "1000 instances (quadratic {}, absdev {}, l1 {}, custom {}): max deviation from bisection {worst:.3e} (limit 1e-7)",
            kinds[0], kinds[1], kinds[2], kinds[3]
        ),
    )
}

fn run_binary(config: &Path, out: &Path) -> bool {
    Command::new(env!("CARGO_BIN_EXE_asyncadmm"))
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .stdout(Stdio::null())
        .status()
        .map(|s| s.success())
        .unwrap_or(false)
}

fn criterion_8() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("det.toml");
    std::fs::write(
        &config,
        "T = 3000\nstride = 7\nseeds = \"0..3\"\n\n[problem]\ngenerator = \"consensus-lad\"\ngraph = \"cycle:5\"\na = [1.0, 2.0, 3.0, 4.0, 5.0]\n\n[probes]\nshadow = true\nlyapunov = true\nergodic = true\n",
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    if !(run_binary(&config, &a) && run_binary(&config, &b)) {
        return verdict(false, "binary run failed".into());
    }
    let mut files: Vec<String> = std::fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    files.sort();
    let same = files
        .iter()
        .all(|f| std::fs::read(a.join(f)).ok() == std::fs::read(b.join(f)).ok());
    verdict(
        same && files.len() == 5,
        format!("{} CSV files compared byte for byte across two runs: identical {same}", files.len()),
    )
}

fn main() {
    type Check = fn() -> Verdict;
    let criteria: [(&str, Check); 8] = [
        ("single-block async equals synchronous ADMM", criterion_1),
        ("5-node consensus, quadratic and LAD", criterion_2),
        ("O(1/T) ergodic feasibility over 200 seeds", criterion_3),
        ("Lyapunov supermartingale over 200 paths", criterion_4),
        ("shadow identities and frozen coordinates", criterion_5),
        ("closed-form edge step", criterion_6),
        ("local solver against bisection", criterion_7),
        ("byte-identical CSVs", criterion_8),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!(
            "criterion {} {}: {name}: {}",
            k + 1,
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}

mod common;

use asyncadmm_core::{
    build_reformulation, consensus_reference, edge_step, run, step_block, ActivationDistribution,
    ConvexTerm, EdgeReformulation, FeasibleSet, Graph, PrimalDualState, Probes, RngStream,
    RunConfig,
};
use proptest::prelude::*;

fn mixed(g: &Graph, n: usize, beta: f64, bound: Option<f64>) -> EdgeReformulation {
    let terms = (0..g.nodes())
        .map(|i| match i % 3 {
            0 => ConvexTerm::quadratic((0..n).map(|c| (i + c) as f64).collect(), 1.0).unwrap(),
            1 => ConvexTerm::abs_dev(vec![-(i as f64); n]).unwrap(),
            _ => ConvexTerm::l1(0.5, n).unwrap(),
        })
        .collect();
    let sets = (0..g.nodes())
        .map(|i| {
            if i % 2 == 0 {
                FeasibleSet::free(n)
            } else {
                FeasibleSet::boxed(vec![-3.0; n], vec![3.0; n]).unwrap()
            }
        })
        .collect();
    build_reformulation(g, terms, sets, beta, n, bound).unwrap()
}

fn random_state(r: &EdgeReformulation, rng: &mut RngStream) -> PrimalDualState {
    let prob = r.problem();
    let n = r.n();
    let x = (0..prob.x_len())
        .map(|j| {
            let (lo, hi) = prob.x_sets()[j / n].coord_bounds(j % n);
            (2.0 * rng.next_gaussian()).clamp(lo, hi)
        })
        .collect();
    let mut z: Vec<f64> = (0..prob.num_rows()).map(|_| rng.next_gaussian()).collect();
    for e in 0..r.graph().num_edges() {
        for c in 0..n {
            let (a, b) = (r.row_index(e, 0, c), r.row_index(e, 1, c));
            z[b] = -z[a];
        }
    }
    let p = (0..prob.num_rows()).map(|_| 3.0 * rng.next_gaussian()).collect();
    PrimalDualState::new(prob, x, z, p).unwrap()
}

#[test]
fn hand_step_values() {
    // local solves land on x_i = 2, x_j = 0 from a zero state
    let g = Graph::path(2).unwrap();
    let terms = vec![
        ConvexTerm::quadratic(vec![4.0], 0.5).unwrap(),
        ConvexTerm::quadratic(vec![0.0], 0.5).unwrap(),
    ];
    let r = build_reformulation(&g, terms, vec![FeasibleSet::free(1); 2], 1.0, 1, None).unwrap();
    let s = common::state(r.problem(), &[0.0; 2], &[0.0; 2], &[0.0; 2]);
    let next = edge_step(&r, &s, 0).unwrap();
    assert_eq!(next.p, vec![-1.0, -1.0]);
    assert_eq!(next.z, vec![1.0, -1.0]);
    assert_eq!(next.z[0] + next.z[1], 0.0);
}

#[test]
fn edge_step_matches_generic_step_on_random_states() {
    let mut rng = RngStream::new(2024);
    for (g, n, bound) in [
        (Graph::cycle(5).unwrap(), 1, None),
        (Graph::complete(4).unwrap(), 2, None),
        (Graph::star(5).unwrap(), 1, Some(1.0)),
    ] {
        let r = mixed(&g, n, 1.4, bound);
        for _ in 0..100 {
            let mut s = random_state(&r, &mut rng);
            if let Some(b) = bound {
                s.z.iter_mut().for_each(|z| *z = z.clamp(-b, b));
            }
            let e = (rng.next_u64() % g.num_edges() as u64) as usize;
            let a = edge_step(&r, &s, e).unwrap();
            let b = step_block(r.problem(), &s, r.partition(), e, false).unwrap().after;
            for (u, v) in a.x.iter().chain(&a.z).chain(&a.p).zip(b.x.iter().chain(&b.z).chain(&b.p)) {
                assert!((u - v).abs() <= 1e-10, "{u} vs {v}");
            }
            for c in 0..n {
                let (li, lj) = (r.row_index(e, 0, c), r.row_index(e, 1, c));
                assert!((a.z[li] + a.z[lj]).abs() <= 1e-12);
                if bound.is_none() {
                    assert_eq!(a.p[li], a.p[lj]);
                }
            }
        }
    }
}

#[test]
fn orientation_does_not_change_x() {
    let g = Graph::cycle(5).unwrap();
    let terms: Vec<_> = (0..5).map(|i| ConvexTerm::quadratic(vec![i as f64], 1.0).unwrap()).collect();
    let sets = vec![FeasibleSet::free(1); 5];
    let a = build_reformulation(&g, terms.clone(), sets.clone(), 1.0, 1, None).unwrap();
    let flips = [true, false, true, true, false];
    let b = EdgeReformulation::with_orientation(&g, terms, sets, 1.0, 1, None, &flips).unwrap();
    let x0 = vec![0.3, -0.2, 1.0, 0.0, 0.5];
    let mut sa = PrimalDualState::initial(a.problem(), x0.clone()).unwrap();
    let mut sb = PrimalDualState::initial(b.problem(), x0).unwrap();
    let mut rng = RngStream::new(1);
    for _ in 0..500 {
        let e = (rng.next_u64() % 5) as usize;
        sa = edge_step(&a, &sa, e).unwrap();
        sb = edge_step(&b, &sb, e).unwrap();
        for (u, v) in sa.x.iter().zip(&sb.x) {
            assert!((u - v).abs() <= 1e-12);
        }
    }
}

#[test]
fn mixed_reference_by_independent_bisection() {
    let terms = vec![
        ConvexTerm::quadratic(vec![1.0], 1.0).unwrap(),
        ConvexTerm::quadratic(vec![2.0], 0.5).unwrap(),
        ConvexTerm::l1(1.2, 1).unwrap(),
        ConvexTerm::abs_dev(vec![5.0]).unwrap(),
    ];
    let u = consensus_reference(&terms).unwrap()[0];
    let o = common::bisect_min(
        |v| terms.iter().map(|t| t.coord_subgradient(0, v)).sum(),
        -100.0,
        100.0,
    );
    assert!((u - o).abs() < 1e-8);
}

#[test]
fn uniform_edges_reach_consensus() {
    let g = Graph::cycle(5).unwrap();
    let terms: Vec<_> = (1..=5).map(|a| ConvexTerm::quadratic(vec![a as f64], 1.0).unwrap()).collect();
    let star = consensus_reference(&terms).unwrap()[0];
    let r = build_reformulation(&g, terms, vec![FeasibleSet::free(1); 5], 1.0, 1, None).unwrap();
    let dist = ActivationDistribution::uniform(r.partition()).unwrap();
    let cfg = RunConfig {
        iterations: 20_000,
        stride: 20_000,
        probes: Probes::default(),
        reference: None,
        initial: PrimalDualState::initial(r.problem(), vec![0.0; 5]).unwrap(),
    };
    let m = run(r.problem(), r.partition(), &dist, 0, &cfg).unwrap();
    assert!(m.final_state.x.iter().all(|x| (x - star).abs() < 1e-3));
}

proptest! {
    #[test]
    fn edge_step_keeps_pairs_and_multipliers_tied(seed in any::<u64>(), beta in 0.1f64..10.0) {
        let r = mixed(&Graph::cycle(6).unwrap(), 1, beta, None);
        let mut rng = RngStream::new(seed);
        let mut s = random_state(&r, &mut rng);
        for _ in 0..20 {
            let e = (rng.next_u64() % 6) as usize;
            s = edge_step(&r, &s, e).unwrap();
            let (li, lj) = (r.row_index(e, 0, 0), r.row_index(e, 1, 0));
            prop_assert!((s.z[li] + s.z[lj]).abs() <= 1e-12);
            prop_assert_eq!(s.p[li], s.p[lj]);
        }
    }
}

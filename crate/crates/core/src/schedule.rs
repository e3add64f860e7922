//! Proper partitions of the constraint rows, activation probabilities and
//! the i.i.d. block sampler.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::problem::{ConstraintSystem, FeasibleSet};

/// A partition of the rows `{0..W}` in which rows coupled by `Z` share a
/// block, together with `Phi(block)`: the components appearing in the
/// block's rows.
#[derive(Clone, Debug, PartialEq)]
pub struct ProperPartition {
    blocks: Vec<Vec<usize>>,
    components: Vec<Vec<usize>>,
    block_of_row: Vec<usize>,
    block_sets: Vec<FeasibleSet>,
    num_components: usize,
}

/// The rows and components touched by one block, and the block's slice of `Z`
/// (indexed like `rows`).
#[derive(Clone, Copy, Debug)]
pub struct ActiveSet<'a> {
    pub rows: &'a [usize],
    pub components: &'a [usize],
    pub z_set: &'a FeasibleSet,
}

pub fn build_partition(
    z_set: &FeasibleSet,
    cs: &ConstraintSystem,
    blocks: Vec<Vec<usize>>,
) -> Result<ProperPartition> {
    let rows = cs.rows();
    if z_set.dim() != rows {
        return Err(Error::DimensionMismatch {
            what: "z set dimension",
            expected: rows,
            found: z_set.dim(),
        });
    }
    let mut block_of_row = vec![usize::MAX; rows];
    let mut blocks = blocks;
    for (b, block) in blocks.iter_mut().enumerate() {
        if block.is_empty() {
            return Err(Error::InvalidArgument(format!("block {b} is empty")));
        }
        block.sort_unstable();
        for &row in block.iter() {
            if row >= rows {
                return Err(Error::InvalidArgument(format!(
                    "block {b} names row {row}, but there are only {rows} rows"
                )));
            }
            if block_of_row[row] != usize::MAX {
                return Err(Error::OverlappingBlocks { row });
            }
            block_of_row[row] = b;
        }
    }
    if let Some(row) = block_of_row.iter().position(|&b| b == usize::MAX) {
        return Err(Error::NonCovering { row });
    }
    if let FeasibleSet::SumZeroPairs { pairs, .. } = z_set {
        for &(a, b) in pairs {
            if block_of_row[a] != block_of_row[b] {
                return Err(Error::ImproperPartition { row_a: a, row_b: b });
            }
        }
    }
    let mut owner = vec![Vec::new(); rows];
    for e in cs.entries().iter().filter(|e| e.coeff != 0.0) {
        owner[e.row].push(e.component);
    }
    let components = blocks
        .iter()
        .map(|block| {
            let mut phi: Vec<usize> = block.iter().flat_map(|&r| owner[r].iter().copied()).collect();
            phi.sort_unstable();
            phi.dedup();
            phi
        })
        .collect();
    let block_sets = blocks
        .iter()
        .map(|block| z_set.restrict(block))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProperPartition {
        blocks,
        components,
        block_of_row,
        block_sets,
        num_components: cs.components(),
    })
}

impl ProperPartition {
    /// The trivial partition: every row in one block.
    pub fn single_block(z_set: &FeasibleSet, cs: &ConstraintSystem) -> Result<Self> {
        build_partition(z_set, cs, vec![(0..cs.rows()).collect()])
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn num_components(&self) -> usize {
        self.num_components
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// `Phi(block)`, sorted.
    pub fn components(&self, block: usize) -> &[usize] {
        &self.components[block]
    }

    pub fn block_of_row(&self, row: usize) -> usize {
        self.block_of_row[row]
    }

    pub fn active_set(&self, block: usize) -> ActiveSet<'_> {
        ActiveSet {
            rows: &self.blocks[block],
            components: &self.components[block],
            z_set: &self.block_sets[block],
        }
    }
}

/// Block probabilities and the derived per-row (`lambda`) and
/// per-component (`alpha`) activation probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationDistribution {
    pub block_probs: Vec<f64>,
    pub lambda: Vec<f64>,
    pub alpha: Vec<f64>,
    /// `1 / lambda_l`, the diagonal of the weighting matrix.
    pub weight_diag: Vec<f64>,
    cumulative: Vec<f64>,
}

pub fn derive_probabilities(
    partition: &ProperPartition,
    block_probs: &[f64],
) -> Result<ActivationDistribution> {
    if block_probs.len() != partition.num_blocks() {
        return Err(Error::DimensionMismatch {
            what: "block probabilities",
            expected: partition.num_blocks(),
            found: block_probs.len(),
        });
    }
    if let Some(p) = block_probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(Error::InvalidProbabilities(format!(
            "probability {p} is not a nonnegative number"
        )));
    }
    let total: f64 = block_probs.iter().sum();
    if libm::fabs(total - 1.0) > 1e-12 {
        return Err(Error::InvalidProbabilities(format!(
            "probabilities sum to {total}, not 1"
        )));
    }
    if let Some(block) = block_probs.iter().position(|&p| p == 0.0) {
        return Err(Error::ZeroProbabilityBlock { block });
    }
    let rows = partition.block_of_row.len();
    let lambda: Vec<f64> = (0..rows)
        .map(|l| block_probs[partition.block_of_row(l)])
        .collect();
    let mut alpha = vec![0.0; partition.num_components];
    for (b, &pb) in block_probs.iter().enumerate() {
        for &i in partition.components(b) {
            alpha[i] += pb;
        }
    }
    let weight_diag = lambda.iter().map(|l| 1.0 / l).collect();
    let mut cumulative = Vec::with_capacity(block_probs.len());
    let mut acc = 0.0;
    for p in block_probs {
        acc += p;
        cumulative.push(acc);
    }
    Ok(ActivationDistribution {
        block_probs: block_probs.to_vec(),
        lambda,
        alpha,
        weight_diag,
        cumulative,
    })
}

impl ActivationDistribution {
    pub fn uniform(partition: &ProperPartition) -> Result<Self> {
        let m = partition.num_blocks();
        derive_probabilities(partition, &vec![1.0 / m as f64; m])
    }
}

/// Deterministic random stream: ChaCha8 keyed by `seed`, so a given seed
/// yields the same draws on every platform. `counter` counts 64-bit draws.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    counter: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            counter: 0,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 bits of resolution.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal draw (Box-Muller).
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
    }
}

/// Draws a block index with probability `block_probs[b]`.
pub fn sample_block(dist: &ActivationDistribution, rng: &mut RngStream) -> usize {
    let u = rng.next_f64();
    dist.cumulative
        .iter()
        .position(|&c| u < c)
        .unwrap_or(dist.cumulative.len() - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::DEntry;

    // 2 scalar nodes joined by one edge: rows (e0, node0), (e0, node1)
    fn edge_system() -> (FeasibleSet, ConstraintSystem) {
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
        (FeasibleSet::sum_zero_pairs(2, vec![(0, 1)], None).unwrap(), cs)
    }

    #[test]
    fn edge_block_is_proper() {
        let (z, cs) = edge_system();
        let part = build_partition(&z, &cs, vec![vec![0, 1]]).unwrap();
        assert_eq!(part.components(0), &[0, 1]);
    }

    #[test]
    fn splitting_coupled_rows_is_improper() {
        let (z, cs) = edge_system();
        assert_eq!(
            build_partition(&z, &cs, vec![vec![0], vec![1]]),
            Err(Error::ImproperPartition { row_a: 0, row_b: 1 })
        );
    }

    #[test]
    fn missing_row_is_non_covering() {
        let (_, cs) = edge_system();
        assert_eq!(
            build_partition(&FeasibleSet::free(2), &cs, vec![vec![1]]),
            Err(Error::NonCovering { row: 0 })
        );
        assert_eq!(
            build_partition(&FeasibleSet::free(2), &cs, vec![vec![0, 1], vec![1]]),
            Err(Error::OverlappingBlocks { row: 1 })
        );
    }

    #[test]
    fn single_block_activates_everything() {
        let (z, cs) = edge_system();
        let part = ProperPartition::single_block(&z, &cs).unwrap();
        let dist = derive_probabilities(&part, &[1.0]).unwrap();
        assert_eq!(dist.lambda, vec![1.0, 1.0]);
        assert_eq!(dist.alpha, vec![1.0, 1.0]);
        assert_eq!(dist.weight_diag, vec![1.0, 1.0]);
    }

    #[test]
    fn two_disjoint_blocks_half_each() {
        let (_, cs) = edge_system();
        let part = build_partition(&FeasibleSet::free(2), &cs, vec![vec![0], vec![1]]).unwrap();
        let dist = derive_probabilities(&part, &[0.5, 0.5]).unwrap();
        assert_eq!(dist.alpha, vec![0.5, 0.5]);
    }

    #[test]
    fn zero_probability_block_is_rejected() {
        let (_, cs) = edge_system();
        let part = build_partition(&FeasibleSet::free(2), &cs, vec![vec![0], vec![1]]).unwrap();
        assert_eq!(
            derive_probabilities(&part, &[1.0, 0.0]),
            Err(Error::ZeroProbabilityBlock { block: 1 })
        );
        assert!(matches!(
            derive_probabilities(&part, &[0.6, 0.6]),
            Err(Error::InvalidProbabilities(_))
        ));
    }

    #[test]
    fn degenerate_distribution_always_picks_block_zero() {
        let (z, cs) = edge_system();
        let part = ProperPartition::single_block(&z, &cs).unwrap();
        let dist = derive_probabilities(&part, &[1.0]).unwrap();
        let mut rng = RngStream::new(3);
        assert!((0..1000).all(|_| sample_block(&dist, &mut rng) == 0));
        assert_eq!(rng.counter(), 1000);
    }

    #[test]
    fn same_seed_same_draws() {
        let mut a = RngStream::new(42);
        let mut b = RngStream::new(42);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_ne!(RngStream::new(1).next_u64(), RngStream::new(2).next_u64());
    }

    #[test]
    fn uniform_draws_in_unit_interval() {
        let mut rng = RngStream::new(7);
        for _ in 0..10_000 {
            let u = rng.next_f64();
            assert!((0.0..1.0).contains(&u));
        }
    }
}

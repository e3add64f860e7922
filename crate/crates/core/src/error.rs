use alloc::string::String;
use core::fmt;

use crate::problem::ValidationReport;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    InvalidTerm(String),
    InvalidSet(String),
    /// The constraint system violates the decoupled-constraint structure.
    InvalidConstraints(ValidationReport),
    InvalidArgument(String),
    UnsupportedTerm(&'static str),
    UnsupportedSet(&'static str),
    NonfiniteInput,
    /// A subproblem has no minimizer (objective unbounded below on its set).
    Unbounded,
    ImproperPartition {
        row_a: usize,
        row_b: usize,
    },
    NonCovering {
        row: usize,
    },
    OverlappingBlocks {
        row: usize,
    },
    ZeroProbabilityBlock {
        block: usize,
    },
    InvalidProbabilities(String),
    InvalidGraph(String),
    DisconnectedGraph,
    UnsupportedMix,
    Diverged {
        iter: u64,
        norm: f64,
    },
    NonFinite {
        iter: u64,
    },
    MissingReference,
    NonPositiveSeries {
        index: usize,
    },
    NonCompactSets,
    GridTooLarge {
        dims: usize,
        points: usize,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch {
                what,
                expected,
                found,
            } => write!(f, "dimension mismatch for {what}: expected {expected}, found {found}"),
            Error::InvalidTerm(msg) => write!(f, "invalid term: {msg}"),
            Error::InvalidSet(msg) => write!(f, "invalid feasible set: {msg}"),
            Error::InvalidConstraints(report) => {
                write!(f, "constraint system is not decoupled: {report}")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::UnsupportedTerm(msg) => write!(f, "unsupported term: {msg}"),
            Error::UnsupportedSet(msg) => write!(f, "unsupported set: {msg}"),
            Error::NonfiniteInput => write!(f, "non-finite subproblem data"),
            Error::Unbounded => write!(f, "subproblem objective is unbounded below"),
            Error::ImproperPartition { row_a, row_b } => write!(
                f,
                "improper partition: coupled rows {row_a} and {row_b} are in different blocks"
            ),
            Error::NonCovering { row } => write!(f, "partition does not cover row {row}"),
            Error::OverlappingBlocks { row } => {
                write!(f, "row {row} appears in more than one block")
            }
            Error::ZeroProbabilityBlock { block } => {
                write!(f, "block {block} has zero activation probability")
            }
            Error::InvalidProbabilities(msg) => write!(f, "invalid block probabilities: {msg}"),
            Error::InvalidGraph(msg) => write!(f, "invalid graph: {msg}"),
            Error::DisconnectedGraph => write!(f, "graph is not connected"),
            Error::UnsupportedMix => write!(f, "unsupported mix of terms for a reference solve"),
            Error::Diverged { iter, norm } => {
                write!(f, "diverged at iteration {iter}: state norm {norm:e}")
            }
            Error::NonFinite { iter } => write!(f, "non-finite state at iteration {iter}"),
            Error::MissingReference => write!(f, "a reference solution is required"),
            Error::NonPositiveSeries { index } => {
                write!(f, "series value at index {index} is not positive")
            }
            Error::NonCompactSets => write!(f, "feasible sets must be compact"),
            Error::GridTooLarge { dims, points } => {
                write!(f, "grid too large: {dims} dimensions, {points} points")
            }
        }
    }
}

impl core::error::Error for Error {}

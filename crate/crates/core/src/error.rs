use alloc::boxed::Box;
use alloc::string::String;

/// Errors produced by the core pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("operator of dimension {dim} is not a two-qudit operator for d = {d}")]
    NotBipartite { dim: usize, d: usize },

    #[error("matrix has {len} entries, expected {expected}")]
    EntryCount { len: usize, expected: usize },

    #[error("support {source_support:?} is not contained in target {target:?}")]
    SupportNotContained {
        source_support: alloc::vec::Vec<usize>,
        target: alloc::vec::Vec<usize>,
    },

    #[error("operator family is empty")]
    EmptyFamily,

    #[error("infeasible regular graph: n = {n}, degree = {degree} ({reason})")]
    InfeasibleGraph { n: usize, degree: usize, reason: &'static str },

    #[error("pairing model rejected {attempts} attempts without producing a simple graph")]
    RejectionBudget { attempts: usize },

    #[error("qudit dimension {d} too small for the requested block structure (need at least {required})")]
    DimensionTooSmall { d: usize, required: usize },

    #[error("perturbation strength must lie in [0, 2], got {0}")]
    DeltaOutOfRange(f64),

    #[error("input already has commutator {measured:e} above the requested delta {requested:e}")]
    DeltaUnreachable { requested: f64, measured: f64 },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("solver did not converge after {iterations} iterations (best residual {best_residual:e})")]
    NonConvergence { iterations: usize, best_residual: f64 },

    #[error("hermitization premise violated for terms {first} and {second}: residual {residual:e}")]
    HermitizePremise { first: usize, second: usize, residual: f64 },

    #[error("rounding failed at vertex {vertex}: {source}")]
    VertexFailed { vertex: usize, source: Box<Error> },

    #[error("commuted instance still has commutator {residual:e} between edges {first} and {second}")]
    CommutationCertificate { first: usize, second: usize, residual: f64 },

    #[error("edge algebras {first} and {second} do not commute (residual {residual:e})")]
    CommutationPremise { first: usize, second: usize, residual: f64 },

    #[error("eigenvalue clustering is ambiguous (gap {gap:e}); adjust the cluster tolerances")]
    ClusterAmbiguity { gap: f64 },

    #[error("structure does not match: {0}")]
    StructureMismatch(String),

    #[error("vertex {vertex} has an empty block")]
    EmptyBlock { vertex: usize },

    #[error("Hilbert space dimension {dim} exceeds the oracle cap {cap}")]
    CapExceeded { dim: usize, cap: usize },

    #[error("state norm deviates from one by {deviation:e}")]
    NormDeviation { deviation: f64 },

    #[error("edge {edge} state is not normalized (deviation {deviation:e})")]
    EdgeStateNorm { edge: usize, deviation: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

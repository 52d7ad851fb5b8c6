use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("triangle {0} has zero area")]
    ZeroAreaTriangle(usize),
    #[error("{} location(s) outside the mesh, first indices: {:?}", .0.len(), &.0[..(.0.len().min(20))])]
    OutsideMesh(Vec<usize>),
    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("design matrix is rank deficient")]
    RankDeficient,
    #[error("problem too large: {0}")]
    TooLarge(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("mesh refinement exceeded {0} vertices")]
    RefinementLimit(usize),
    #[error("chain {chain}, iteration {iteration}: {source}")]
    Sampler {
        chain: u64,
        iteration: usize,
        source: Box<Error>,
    },
}

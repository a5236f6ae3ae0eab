use alloc::string::String;
use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),
    #[error("vertex index {index} out of range for {len} vertices")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("invalid correspondence: {0}")]
    InvalidCorrespondence(String),
    #[error("empty correspondence")]
    EmptyCorrespondence,
    #[error("{kernel}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        kernel: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("{kernel}: non-finite value produced")]
    NonFinite { kernel: &'static str },
    #[error("backward called twice on the same tape")]
    BackwardTwice,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss([usize; 2]),
    #[error("isolated vertex {0}")]
    IsolatedVertex(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(
        "topology mismatch: model expects {expected} vertices / hash {expected_hash:016x}, got {got} / {got_hash:016x}"
    )]
    TopologyMismatch {
        expected: usize,
        got: usize,
        expected_hash: u64,
        got_hash: u64,
    },
    #[error("degenerate configuration")]
    Degenerate,
    #[error("empty partial shape")]
    EmptyPartial,
    #[error("viewpoint lies inside the mesh")]
    ViewpointInside,
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

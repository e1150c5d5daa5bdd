use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    #[error("not a probability vector: {0}")]
    InvalidSimplex(String),

    #[error("cost vector has a non-finite entry at index {0}")]
    NonFiniteCost(usize),

    #[error("entropy gradient requested at zero probability (index {0})")]
    ZeroProbabilityEntropy(usize),

    #[error("dual variables violate complementary slackness at index {0}")]
    InvalidDuals(usize),

    #[error("generator assigns zero probability inside the data support (index {0})")]
    DivisionByZeroSupport(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("batch norm needs at least 2 rows in train mode, got {0}")]
    DegenerateBatch(usize),

    #[error("parameter `{0}` does not reach the loss")]
    DisconnectedNode(String),

    #[error("loss node must be scalar, got shape {0:?}")]
    NonScalarLoss(alloc::vec::Vec<usize>),

    #[error("k = {k} needs a batch of at least {needed} points, got {batch}")]
    KTooLarge { k: usize, batch: usize, needed: usize },

    #[error("{0} requires an entropy term")]
    MissingEntropyTerm(&'static str),

    #[error("non-finite {what} at iteration {iteration}")]
    NonFinite { iteration: usize, what: String },

    #[error("histogram needs at least one sample")]
    EmptySampleSet,

    #[error("grids do not share a common specification")]
    GridMismatch,

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),
}

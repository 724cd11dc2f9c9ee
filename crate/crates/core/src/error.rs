use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed candidate: {0}")]
    Malformed(String),

    #[error("variable index x{index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("non-affine abs argument: {subtree}")]
    NonAffineAbs { subtree: String },

    #[error("invalid game frame: {0}")]
    InvalidFrame(String),

    #[error("dimension n = {n} is not supported (maximum {max})")]
    DimensionUnsupported { n: usize, max: usize },

    #[error("position must lie strictly inside the time horizon")]
    NotInterior,

    #[error("direction must be nonzero")]
    ZeroDirection,

    #[error("gradient {0:?} is not a convex combination of the limiting gradients")]
    NotInHull(Vec<f64>),

    #[error("sample set is empty")]
    EmptySamples,

    #[error("refinement schedule is empty")]
    EmptySchedule,

    #[error("growth condition did not pass; Hamiltonian constants are unavailable")]
    GrowthNotPassed,

    #[error("missing regularity metadata: {0}")]
    MissingMetadata(String),

    #[error("the finite-control game requires n = 1, got n = {0}")]
    IsaacsDimension(usize),

    #[error("min-max dynamics rejected by identity check: {0}")]
    IdentityRejected(String),

    #[error("CFL condition violated: {0}")]
    Cfl(String),

    #[error("non-finite value at time level {level}")]
    NonFinite { level: usize },

    #[error("dynamic-programming step leaves the grid at level {level}; enlarge the box")]
    StepLeavesBox { level: usize },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("hash mismatch for {file}: expected {expected}, found {found}")]
    HashMismatch {
        file: String,
        expected: String,
        found: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

/// Errors raised by the numerical modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("space tag mismatch: expected {expected}, found {found}")]
    TagMismatch { expected: String, found: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("environment energy variance {variance:e} is degenerate; the projection diverges")]
    DegenerateEnvironment { variance: f64 },

    #[error("phase-space grids differ")]
    GridMismatch,

    #[error("cell area {area:e} is below one phase-space quantum 2πħ = {quantum:e}")]
    CellTooSmall { area: f64, quantum: f64 },

    #[error("time step {dt:e} violates the stability bound; use dt <= {suggested:e}")]
    Unstable { dt: f64, suggested: f64 },

    #[error("coupling is not renormalized: max |tr(H1 ρe)| = {residual:e}")]
    NotRenormalized { residual: f64 },

    #[error("decoherence tensor is {found}; this operation requires {required}")]
    WrongDegeneracy { found: String, required: String },

    #[error("basis is not orthonormal (deviation {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("state is not normalized (norm {norm})")]
    Unnormalized { norm: f64 },

    #[error("no quadratic regime resolved in the localization kernel")]
    NoQuadraticRegime { xi: Vec<f64>, f: Vec<f64> },

    #[error("probability mass {mass:e} reached the grid boundary (limit {limit:e})")]
    BoundaryMass { mass: f64, limit: f64 },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

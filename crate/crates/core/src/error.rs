use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("imaginary part of the period matrix is not positive definite")]
    NonPositiveDefinite,
    #[error("period matrix is not symmetric (deviation {0:.3e})")]
    NotSymmetric(f64),
    #[error("overflow while rebalancing a theta evaluation (log scale {0:.3e})")]
    Overflow(f64),
    #[error("theta value too close to zero for a logarithmic derivative (|theta| = {0:.3e})")]
    ThetaZero(f64),
    #[error("every odd theta characteristic is degenerate at this period matrix")]
    Degenerate,
    #[error("quadrature failed to converge (last increment {0:.3e})")]
    QuadratureFailure(f64),
    #[error("no path class declared for a point outside the real locus")]
    PathAmbiguous,
    #[error("local coordinate degenerates at a branch point")]
    BranchPoint,
    #[error("Riemann-constant calibration failed: {0}")]
    CalibrationFailure(String),
    #[error("rotation system does not define a torus embedding: {0}")]
    EmbeddingInvalid(String),
    #[error("Newton polygon has zero area")]
    DegenerateGraph,
    #[error("discrete Abel map does not close around a cycle (residual {0:.3e})")]
    Inconsistent(f64),
    #[error("operation requires a periodic Kasteleyn operator (phi is not integral)")]
    PeriodicityRequired,
    #[error("the two train-track angles of an edge coincide")]
    DegenerateAngles,
    #[error("zero Kasteleyn entry in an alternating face product")]
    ZeroEdge,
    #[error("evaluation point coincides with a train-track angle")]
    AnglePole,
    #[error("kernel function has a pole at the evaluation point")]
    PolePoint,
    #[error("parameter t is non-generic: no sign change on oval {0}")]
    NonGenericT(usize),
    #[error("magnetic field too close to the spectral curve (min |det K| = {0:.3e})")]
    NearSingular(f64),
    #[error("no angle-free crossing interval on the distinguished oval")]
    SectorBlocked,
    #[error("liquid-phase calibration unavailable: {0}")]
    CalibrationNeeded(String),
    #[error("characteristic polynomial vanishes on the quadrature grid")]
    SingularGrid,
    #[error("local configuration does not match the requested move: {0}")]
    PatternMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

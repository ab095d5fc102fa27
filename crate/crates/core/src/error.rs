use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} must be even and at least 16")]
    InvalidGrid(usize),

    #[error("grid mismatch: {0} vs {1}")]
    GridMismatch(usize, usize),

    #[error("non-finite value at grid index ({i}, {j})")]
    NonFinite { i: usize, j: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("outside the Fermi chart: {0}")]
    ChartDomain(String),

    #[error("immersion failure: det sigma = {det:e} at grid index ({i}, {j})")]
    ImmersionFailure { det: f64, i: usize, j: usize },

    #[error("umbilic guard violated: min |A0|^2 = {min} below floor {floor}")]
    UmbilicGuard { min: f64, floor: f64 },

    #[error("point within {distance:e} of the projection pole")]
    PoleProximity { distance: f64 },

    #[error("transformed torus is not a graph over the Clifford torus: {0}")]
    NotAGraph(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("Willmore energy increased by {increase:e} (allowed {slack:e})")]
    EnergyIncrease { increase: f64, slack: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

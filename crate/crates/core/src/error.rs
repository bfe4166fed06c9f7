use thiserror::Error;

/// Errors raised across the solver and verification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("rank mismatch: expected {expected}, found {found}")]
    RankMismatch { expected: usize, found: usize },

    #[error("axis index {index} out of range for a {n_dims}-dimensional torus")]
    AxisOutOfRange { index: usize, n_dims: usize },

    #[error("expression parse error at byte {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    #[error("not locally elliptic on the sampled box: min eigenvalue {min_eigenvalue:.6e} at {violator}")]
    NotElliptic { min_eigenvalue: f64, violator: String },

    #[error("cutoff jet bound {jet_bound} is below the measured initial jet size {measured}")]
    CutoffBelowJet { jet_bound: f64, measured: f64 },

    #[error("time grid error: {0}")]
    TimeGrid(String),

    #[error("Krylov solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    KrylovNonConvergence { iterations: usize, residual: f64 },

    #[error("blow-up at t = {t}: sup norm {sup:.3e} exceeds {limit:.3e}")]
    BlowUp { t: f64, sup: f64, limit: f64 },

    #[error("no short-time solution found at this resolution after {halvings} horizon halvings; residual history {history:?}")]
    NoShortTimeSolution { halvings: usize, history: Vec<f64> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

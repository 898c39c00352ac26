use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("insufficient tail: only {samples} samples in the fit region (need at least 8)")]
    InsufficientTail { samples: usize },

    #[error("Balian–Low regime: no localized orthonormal system exists for rho = {rho}")]
    BalianLow { rho: f64 },

    #[error("frame operator is ill-conditioned: condition number {condition:.3e}")]
    IllConditioned { condition: f64 },

    #[error("quadrature budget exceeded: {nodes} node evaluations (limit {limit}); use a coarser tolerance")]
    QuadratureBudget { nodes: usize, limit: usize },

    #[error("grid too coarse for the twisting phase: {0}")]
    Nyquist(String),

    #[error("symbol has imaginary residue {residue:.3e} above tolerance {tol:.1e}")]
    ImaginaryResidue { residue: f64, tol: f64 },

    #[error("lattice point ({t}, {xi}) lies outside the symbol grid")]
    OutsideGrid { t: f64, xi: f64 },

    #[error("matrix is not Hermitian: asymmetry {asymmetry:.3e}")]
    NotHermitian { asymmetry: f64 },

    #[error("atom budget exceeded: {atoms} atoms requested, limit {limit}")]
    AtomBudget { atoms: usize, limit: usize },

    #[error("empty channel list")]
    EmptyChannels,

    #[error("bound violated: {0}")]
    BoundViolated(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

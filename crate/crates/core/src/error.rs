use thiserror::Error;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("Newton iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    Divergence { iterations: usize, residual: f64 },

    #[error("degenerate system: {0}")]
    Degenerate(String),

    #[error("continuation stalled at amplitude {amplitude} (relative step {step:e})")]
    Stall { amplitude: f64, step: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("no rational p/q with q <= {q_max} within {tol:e} of {value}; increase q_max")]
    Approximation { value: f64, q_max: u64, tol: f64 },

    #[error("no unstable eigenvalue at k = {k} (max Re = {max_re:e})")]
    Stable { k: f64, max_re: f64 },

    #[error("range error: {message}; keep t below {t_cap:e}")]
    Range { message: String, t_cap: f64 },

    #[error("contour error: {0}")]
    Contour(String),

    #[error("structure violation: {0}")]
    Structure(String),

    #[error("blow-up after t = {t}")]
    Blowup { t: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("domain too small: {message}; try Q >= {suggested_q}")]
    DomainTooSmall { message: String, suggested_q: usize },

    #[error("bad data: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True when the error describes unreadable or malformed input data
    /// rather than a failed computation.
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::Format(_) | Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

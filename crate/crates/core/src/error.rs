use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular lattice basis (|det| = {det:e})")]
    SingularBasis { det: f64 },
    #[error("grid of size {grid} cannot resolve cutoff {cutoff} (need at least {})", 2 * cutoff + 1)]
    GridTooCoarse { grid: usize, cutoff: usize },
    #[error("field is not invertible at grid point {index} (min singular value {sigma:e})")]
    SingularPointwise { index: usize, sigma: f64 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("coefficient `{0}` is not Hermitian positive definite")]
    IndefiniteCoefficient(String),
    #[error("linear solve did not converge after {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("lambda = {lambda} is inadmissible: min eigenvalue {min_eig:e} <= 0")]
    LambdaInadmissible { lambda: f64, min_eig: f64 },
    #[error("truncation too tight: {0}")]
    TruncationTooTight(String),
    #[error("lambda search failed: {0}")]
    SearchFailed(String),
    #[error("operator is not positive definite (beta = {beta:e})")]
    NotPositive { beta: f64 },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

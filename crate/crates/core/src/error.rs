use nalgebra::DMatrix;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate matrix: {0}")]
    DegenerateMatrix(String),

    #[error("ill-conditioned matrix: smallest eigenvalue {min_eigenvalue:e} below floor {floor:e}")]
    IllConditioned { min_eigenvalue: f64, floor: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// The Karcher iteration ran out of budget. `last_iterate` is the final
    /// estimate, converted to `f64`.
    #[error("no convergence after {iterations} iterations (update norm {update_norm:e})")]
    Convergence {
        iterations: usize,
        update_norm: f64,
        last_iterate: Box<DMatrix<f64>>,
    },

    #[error("empty input")]
    EmptyInput,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("singular transform (condition estimate {condition:e})")]
    SingularTransform { condition: f64 },

    #[error("labels required")]
    LabelsRequired,

    #[error("degenerate statistics: {0}")]
    DegenerateStatistics(String),

    #[error("at least two classes are required, found {0}")]
    InsufficientClasses(usize),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("unsupported container version {0}")]
    UnsupportedVersion(u32),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerical machinery, as opposed to bad input
    /// or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateMatrix(_)
                | Error::IllConditioned { .. }
                | Error::Convergence { .. }
                | Error::SingularTransform { .. }
                | Error::DegenerateStatistics(_)
                | Error::Solver(_)
        )
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }
}

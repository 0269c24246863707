use thiserror::Error;

pub type Result<T, E = CemError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CemError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("index {index} out of range (size {size})")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("invalid boundary description: {0}")]
    InvalidBoundary(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("non-positive coefficient {value} in cell {cell}")]
    NonPositiveCoefficient { cell: usize, value: f64 },

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("eigensolver failed on coarse element {element}: {reason}")]
    Eigen { element: usize, reason: String },

    #[error("Neumann/Robin boundary is empty")]
    EmptyNeumann,

    #[error("indefinite quadratic form: value {0}")]
    Indefinite(f64),

    #[error("{0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CemError {
    /// Numerical failures as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            CemError::Singular(_)
                | CemError::Eigen { .. }
                | CemError::NonFinite(_)
                | CemError::Indefinite(_)
        )
    }
}

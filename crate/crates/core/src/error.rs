use thiserror::Error;

/// Everything that can go wrong inside the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("zero pivot in tridiagonal solve at row {row}")]
    ZeroPivot { row: usize },

    #[error("unitarity defect {defect:.3e} at k = {k} exceeds {tol:.1e}")]
    Unitarity { k: f64, defect: f64, tol: f64 },

    #[error("amplitudes at k = {k}: {source}")]
    AtMomentum {
        k: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("normalization defect {defect:.3e} exceeds {tol:.1e} (state clipped by the box?)")]
    Normalization { defect: f64, tol: f64 },

    #[error("imaginary part of Gamma at X = {x}: {residue:.3e} exceeds {tol:.3e}")]
    GammaImaginary { x: f64, residue: f64, tol: f64 },

    #[error("packet weight {weight:.3e} falls outside the momentum grid")]
    Coverage { weight: f64 },

    #[error("oracle errors are not monotone in tau: {0}")]
    NonMonotone(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) => 2,
            Error::Unitarity { .. }
            | Error::Normalization { .. }
            | Error::GammaImaginary { .. }
            | Error::Coverage { .. }
            | Error::GridMismatch(_)
            | Error::Invariant(_) => 3,
            Error::AtMomentum { source, .. } => source.exit_code(),
            Error::ZeroPivot { .. } | Error::NonMonotone(_) | Error::Numerical(_) => 4,
            Error::Io(_) | Error::Csv(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

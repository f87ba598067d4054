use thiserror::Error;

/// Errors raised while validating inputs or evaluating landscape quantities.
#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "matrix is not Hermitian: entries ({row},{col}) and ({col},{row}) differ by {deviation:e}"
    )]
    NotHermitian {
        row: usize,
        col: usize,
        deviation: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported dimension {0}: expected 2 <= n <= 64")]
    UnsupportedDimension(usize),

    #[error("density matrix trace is {0}, expected 1")]
    DensityTrace(f64),

    #[error("density matrix is not positive semi-definite (min eigenvalue {0:e})")]
    NotPositive(f64),

    #[error("field horizon {field} does not match task horizon {task}")]
    HorizonMismatch { field: f64, task: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("template `{template}` violated: {reason}")]
    Template { template: String, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("not a kinematic critical point: commutator norm {residual:e} exceeds {tolerance:e}")]
    NotKcp { residual: f64, tolerance: f64 },

    #[error("DEGENERATE_DRESSED_SPECTRUM: dressed energies {first} and {second} are closer than {tolerance:e}")]
    DegenerateDressedSpectrum {
        first: f64,
        second: f64,
        tolerance: f64,
    },

    #[error("dressed dipole elements must vanish, offending (i, k, |<i|mu|k>|): {0:?}")]
    DipoleCondition(Vec<(usize, usize, f64)>),

    #[error("numerical assertion failed: {0}")]
    Numerical(String),

    #[error("parse error: {0}")]
    Parse(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of internal numerical checks, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;

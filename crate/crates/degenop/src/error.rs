use num_complex::Complex64;

/// Errors raised by the library. Variants name the offending quantity so
/// that the CLI can report it verbatim.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("coefficient matrix is not elliptic (min eigenvalue {min_eig:e})")]
    NotElliptic { min_eig: f64 },

    #[error("admissibility window violated: {0}")]
    Window(String),

    #[error("beta = -1 has no power map")]
    BetaMinusOne,

    #[error("shear needs c != 0 when b != 0")]
    ShearNeedsC,

    #[error("shear only reduces to Neumann form when alpha1 == alpha2 (got {0} and {1})")]
    ShearPowerMismatch(f64, f64),

    #[error("grid: {0}")]
    Grid(String),

    #[error("singular system at lambda = {lambda}: {detail}")]
    Singular { lambda: Complex64, detail: String },

    #[error("time {0} lies outside the analyticity sector")]
    OutsideSector(Complex64),

    #[error("internal invariant broken: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam {
        name,
        reason: reason.into(),
    }
}

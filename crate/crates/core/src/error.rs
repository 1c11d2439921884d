use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("state became non-finite at step {step}")]
    Divergence { step: usize },

    #[error("solution norm exceeded 1e300 at step {step}; renormalize more often")]
    Growth { step: usize },

    #[error("Jacobian is singular at step {step}")]
    Singular { step: usize },

    #[error("CLV backward pass did not converge: {0}; use a longer trajectory")]
    Convergence(String),

    #[error("CLV frame at step {step} is ill-conditioned (condition number {condition:.3e})")]
    Conditioning { step: usize, condition: f64 },

    #[error("neutral pairing <ybar, f> is degenerate at step {step} (relative size {ratio:.3e})")]
    DegeneratePairing { step: usize, ratio: f64 },

    #[error("buffer too short: estimated truncation error {estimate:.3e} exceeds {tolerance:.3e}")]
    Truncation { estimate: f64, tolerance: f64 },

    #[error("degenerate window: {0}")]
    DegenerateWindow(String),

    #[error("averaging window is empty")]
    EmptyWindow,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Divergence { .. } => "divergence",
            Error::Growth { .. } => "growth",
            Error::Singular { .. } => "singular-jacobian",
            Error::Convergence(_) => "clv-convergence",
            Error::Conditioning { .. } => "ill-conditioned",
            Error::DegeneratePairing { .. } => "degenerate-pairing",
            Error::Truncation { .. } => "truncation",
            Error::DegenerateWindow(_) => "degenerate-window",
            Error::EmptyWindow => "empty-window",
            Error::InvalidInput(_) => "invalid-input",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }

    /// Whether the failure comes from the numerics rather than from bad input.
    pub fn is_numerical(&self) -> bool {
        !matches!(
            self,
            Error::InvalidInput(_)
                | Error::DegenerateWindow(_)
                | Error::EmptyWindow
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}

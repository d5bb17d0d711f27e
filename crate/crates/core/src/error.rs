//! Error type shared across the crate.

/// Errors produced by estimation, fitting, simulation and the CLI.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller violated an operation's contract (bad argument, mismatched
    /// lengths, wrong nuisance arm, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The input data cannot be used (missing columns, non-binary treatment,
    /// non-finite values, empty file, ...).
    #[error("data error: {0}")]
    Data(String),

    /// A configuration file or command line flag is malformed.
    #[error("config error: {0}")]
    Config(String),

    /// An iterative fit failed to converge (separation, divergence).
    #[error("model did not converge: {0}")]
    NonConvergence(String),

    /// The postulated sensitivity parameter contradicts the observed residual
    /// variance: the corrected-variance denominator is not positive.
    #[error("sensitivity model incompatible with data at rho = {rho}: corrected variance denominator {denom:.3e} <= 1e-8")]
    InvalidRho { rho: f64, denom: f64 },

    /// A numerical failure not tied to a single rho value (e.g. every grid
    /// point of an uncertainty interval was infeasible).
    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code class for the CLI: 2 config, 3 data, 4 numerical
    /// failure, 5 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Csv(_) => 3,
            Error::NonConvergence(_) | Error::InvalidRho { .. } | Error::Numeric(_) => 4,
            Error::InvalidArgument(_) | Error::Io(_) | Error::Json(_) => 5,
        }
    }
}

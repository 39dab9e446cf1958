use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left} bits vs {right} bits")]
    DimensionMismatch { left: usize, right: usize },

    #[error("no comparable bits: joint mask is empty")]
    NoComparableBits,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("unsupported file version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("space too large for exact enumeration: {templates} templates (limit {limit})")]
    SpaceTooLarge { templates: u128, limit: u128 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("degenerate distribution: {0}")]
    DegenerateFit(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("missing calibration for probe {0}")]
    MissingCalibration(String),

    #[error("malformed file: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("csv output failed: {0}")]
    Csv(#[from] csv::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 2 = configuration or input error, 3 = calibration failure,
    /// 4 = evaluation mode incompatible with the population's space.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Calibration(_) | Error::MissingCalibration(_) | Error::DegenerateFit(_) => 3,
            Error::SpaceTooLarge { .. } | Error::NotApplicable(_) => 4,
            _ => 2,
        }
    }
}

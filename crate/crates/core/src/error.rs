use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RomError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: String,
        found: String,
    },

    #[error("iterative solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("CFL violation: {cfl:.3} exceeds the limit {limit}")]
    Cfl { cfl: f64, limit: f64 },

    #[error("Neumann right-hand side is incompatible (weighted mean {mean:.3e})")]
    IncompatibleRhs { mean: f64 },

    #[error("requested {requested} modes but the numerical rank is {available}")]
    RankDeficient { requested: usize, available: usize },

    #[error("rank ordering violated: {0}")]
    RankOrder(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("archive error: {0}")]
    Archive(String),

    #[error("checksum mismatch for archive entry `{0}`")]
    Checksum(String),

    #[error("csv error: {0}")]
    Csv(String),

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<RomError>,
    },
}

pub type Result<T, E = RomError> = std::result::Result<T, E>;

impl RomError {
    pub(crate) fn shape(what: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        RomError::Shape {
            what,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    /// Wraps the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        RomError::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            RomError::Stage { source, .. } => source.exit_code(),
            RomError::Config(_) | RomError::Shape { .. } | RomError::RankOrder(_) => 2,
            RomError::Io(_)
            | RomError::Archive(_)
            | RomError::Checksum(_)
            | RomError::Csv(_)
            | RomError::Json(_) => 4,
            _ => 3,
        }
    }
}

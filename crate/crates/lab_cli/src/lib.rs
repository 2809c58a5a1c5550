//! Experiment runner for the toric lab: configuration, the catalog → flow → ray pipeline,
//! plot data and the acceptance suite.

pub mod accept;
pub mod config;
pub mod pipeline;
pub mod plotdata;

use std::path::PathBuf;

use serde_json::json;

pub use config::ExperimentConfig;
pub use pipeline::{run_experiment, RunOutcome};

/// Environment variable holding the default output root.
pub const OUT_ENV: &str = "TKRL_OUT";

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error(transparent)]
    Lab(#[from] toric_lab::Error),
    #[error("criterion failed: {0}")]
    Criterion(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Lab(e.into())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Lab(e.into())
    }
}

pub type LabResult<T> = std::result::Result<T, LabError>;

impl LabError {
    /// 1 criterion failure, 2 usage error, 3 numerical degeneracy.
    pub fn exit_code(&self) -> i32 {
        use toric_lab::Error as E;
        match self {
            LabError::Criterion(_) => 1,
            LabError::Usage(_) => 2,
            LabError::Lab(e) if e.is_numerical() => 3,
            LabError::Lab(E::Horizon(_) | E::Insufficient(_) | E::Evaluation(_) | E::Domain(_)) => 3,
            LabError::Lab(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        use toric_lab::Error as E;
        match self {
            LabError::Usage(_) => "usage",
            LabError::Criterion(_) => "criterion",
            LabError::Lab(e) => match e {
                E::Catalog { .. } => "catalog",
                E::InvalidPolytope { .. } => "invalid_polytope",
                E::Domain(_) => "domain",
                E::Convexity(_) => "convexity",
                E::Degeneracy { .. } => "degeneracy",
                E::Parameter(_) => "parameter",
                E::Evaluation(_) => "evaluation",
                E::NonGeodesic { .. } => "non_geodesic",
                E::StepRejected { .. } => "step_rejected",
                E::Horizon(_) => "horizon",
                E::Construction(_) => "construction",
                E::Insufficient(_) => "insufficient",
                E::Format(_) => "format",
                E::Io(_) => "io",
                E::Json(_) => "json",
            },
        }
    }

    /// Structured error record printed on failure.
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        })
    }
}

/// Output root: `$TKRL_OUT`, or `out` in the working directory.
pub fn output_root() -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown manifold `{name}`; valid names: {}", valid.join(", "))]
    Catalog { name: String, valid: Vec<String> },

    #[error("invalid polytope data for {name}: {reason}")]
    InvalidPolytope { name: String, reason: String },

    #[error("point outside the polytope domain: {0}")]
    Domain(String),

    #[error("convexity failure: {0}")]
    Convexity(String),

    #[error("degenerate Hessian at node {node} (x = {x:?}): {detail}")]
    Degeneracy {
        node: usize,
        x: [f64; 2],
        detail: String,
    },

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error("speed profile not constant (coefficient of variation {cv:.3e})")]
    NonGeodesic { cv: f64 },

    #[error("step rejected; retry with dt <= {suggested_dt:.3e}")]
    StepRejected { suggested_dt: f64 },

    #[error("horizon error: {0}")]
    Horizon(String),

    #[error("construction error: {0}")]
    Construction(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors that come from the numerics rather than from usage.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Convexity(_)
                | Error::Degeneracy { .. }
                | Error::NonGeodesic { .. }
                | Error::StepRejected { .. }
                | Error::Construction(_)
        )
    }
}

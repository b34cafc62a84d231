use thiserror::Error;

/// Errors raised by the sampler, the estimators and the bound evaluators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite {what} at group {group}, observation {obs}")]
    NonFinite {
        what: &'static str,
        group: usize,
        obs: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// `XᵀX − X̄ᵀMX̄` failed to factorize at the given precisions.
    #[error("singular design: XᵀX − X̄ᵀMX̄ is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    SingularDesign { min_eigenvalue: f64 },

    #[error("matrix is not symmetric positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotSpd { min_eigenvalue: f64 },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("size cap exceeded: {what} = {size} > {cap}")]
    CapExceeded {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("invalid rate inputs: {0}")]
    InvalidRateInputs(String),

    #[error("dataset format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs or I/O.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::SingularDesign { .. }
                | Error::NotSpd { .. }
                | Error::Overflow(_)
                | Error::InvalidRateInputs(_)
        )
    }

    /// Short machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonFinite { .. } => "non_finite",
            Error::Shape(_) => "shape",
            Error::Domain(_) => "domain",
            Error::SingularDesign { .. } => "singular_design",
            Error::NotSpd { .. } => "not_spd",
            Error::Asymmetric(_) => "asymmetric",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::Overflow(_) => "overflow",
            Error::Infeasible(_) => "infeasible",
            Error::InvalidRateInputs(_) => "invalid_rate_inputs",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

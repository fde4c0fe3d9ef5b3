use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// The model description could not be read or has an ill-typed field.
    #[error("model description field `{field}`: {message}")]
    Structure { field: String, message: String },

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("outside domain: {0}")]
    Domain(String),

    /// Every start failed to converge; `best` is the least objective seen.
    #[error("solver did not converge ({message}); best objective {best}")]
    NotConverged { best: f64, message: String },

    #[error("constraint not satisfied: residual {residual:.3e} ({message})")]
    Feasibility { residual: f64, message: String },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("insufficient statistics: {hits} hits ({message})")]
    Statistical { hits: u64, message: String },

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("model error: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for numerical diagnostics (as opposed to bad input).
    pub fn is_diagnostic(&self) -> bool {
        matches!(
            self,
            Error::NotConverged { .. }
                | Error::Feasibility { .. }
                | Error::Capacity(_)
                | Error::Statistical { .. }
                | Error::Resolution(_)
        )
    }

    pub(crate) fn shape(expected: impl Into<String>, found: impl Into<String>) -> Self {
        Error::Shape {
            expected: expected.into(),
            found: found.into(),
        }
    }

    pub(crate) fn structure(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Structure {
            field: field.into(),
            message: message.into(),
        }
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("unknown activation `{0}`")]
    Registry(String),

    #[error("non-finite evaluation in {what} at x = {at}")]
    Evaluation { what: String, at: f64 },

    #[error("integration did not converge in {what}; last panel magnitude {last:e}")]
    Convergence { what: String, last: f64 },

    #[error("missing metadata: {0}")]
    Metadata(String),

    #[error("operation unavailable: {0}")]
    Capability(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invariant violated in {component}: {detail}")]
    Invariant { component: String, detail: String },
}

impl Error {
    /// Re-tag an error with the component it surfaced from.
    pub fn in_component(self, component: &str) -> Error {
        match self {
            Error::Invariant { detail, .. } => Error::Invariant {
                component: component.to_string(),
                detail,
            },
            other => Error::Domain(format!("{component}: {other}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

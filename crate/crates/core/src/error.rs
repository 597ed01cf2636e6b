use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("graph contains a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),

    #[error("ill-conditioned matrix (condition number {condition:.3e}) in {context}")]
    IllConditioned { context: String, condition: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("weak instruments: first-stage R^2 = {r_squared:.3e}")]
    WeakInstruments { r_squared: f64 },

    #[error("lasso did not converge after {sweeps} sweeps (duality gap {gap:.3e})")]
    NonConvergence { sweeps: usize, gap: f64 },

    #[error("model generation failed: {0}")]
    Generation(String),

    #[error("no valid instruments remain after selection")]
    NoInstruments,

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Numerical failures map to a distinct CLI exit code from input errors.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::IllConditioned { .. }
                | Error::Numerical(_)
                | Error::WeakInstruments { .. }
                | Error::NonConvergence { .. }
                | Error::Generation(_)
                | Error::NoInstruments
        )
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

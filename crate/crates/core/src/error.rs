use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the engine can report.
///
/// The variants are grouped by how a caller is expected to react: structural
/// and parameter errors are programming or configuration mistakes, data errors
/// point at an input file, numerical errors mean a computation produced
/// non-finite values or failed to converge.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("structural error: {0}")]
    Structural(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter { name: String, reason: String },

    #[error("sample `{id}` has {nodes} nodes, exceeding batch capacity {capacity}")]
    Capacity {
        id: String,
        nodes: usize,
        capacity: usize,
    },

    #[error("empty batch")]
    EmptyBatch,

    #[error("numerical error in {context}: {detail}")]
    Numerical { context: String, detail: String },

    #[error("power iteration did not converge after {iterations} iterations (last Rayleigh quotients {previous} and {last})")]
    NoConvergence {
        iterations: usize,
        previous: f64,
        last: f64,
    },

    #[error("no supervised signal: every label in the batch is masked")]
    NoSupervisedSignal,

    #[error("data error{}: {message}", location.as_ref().map(|l| format!(" at {l}")).unwrap_or_default())]
    Data {
        location: Option<String>,
        message: String,
    },

    #[error("training diverged at epoch {epoch}, iteration {iteration}: {detail} (last good checkpoint: epoch {last_good_epoch})")]
    Divergence {
        epoch: usize,
        iteration: usize,
        last_good_epoch: usize,
        detail: String,
    },

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

impl Error {
    pub(crate) fn structural(msg: impl Into<String>) -> Self {
        Error::Structural(msg.into())
    }

    pub(crate) fn parameter(name: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parameter {
            name: name.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn numerical(context: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numerical {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn data(location: Option<String>, message: impl Into<String>) -> Self {
        Error::Data {
            location,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }

    /// True for failures caused by non-finite values or non-convergence.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical { .. } | Error::NoConvergence { .. } | Error::Divergence { .. }
        )
    }
}

use thiserror::Error;

use crate::inference::BootstrapResult;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular design: column(s) {} are linearly dependent on earlier columns", .columns.join(", "))]
    SingularDesign { columns: Vec<String> },

    #[error("solver did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize, last: Vec<f64> },

    #[error(
        "category \"{category}\" has no observations; use merged mode or a coarser set of covariates"
    )]
    EmptyCategory { category: String },

    #[error("missing column \"{0}\"")]
    MissingColumn(String),

    #[error("column \"{column}\": {message}")]
    InvalidColumn { column: String, message: String },

    #[error(
        "bootstrap unreliable: {failures} of {replicates} replicates failed (limit is 20%)"
    )]
    InferenceUnreliable {
        failures: usize,
        replicates: usize,
        partial: Box<BootstrapResult>,
    },

    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// Wraps the error with the name of the procedure step that produced it.
    pub fn in_step(self, step: &'static str) -> Self {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    /// Strips any step provenance wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Step { source, .. } => source.root(),
            other => other,
        }
    }
}

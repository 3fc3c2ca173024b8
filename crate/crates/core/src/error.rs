use std::path::PathBuf;

/// Errors raised by the estimators, the simulation harness and file IO.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid panel dimensions: {0}")]
    InvalidSpec(String),

    #[error("non-finite value in class {class}, time {time}, series {series}")]
    NonFinite {
        class: usize,
        time: usize,
        series: usize,
    },

    #[error("unbalanced panel: {0}")]
    Unbalanced(String),

    #[error("VAR order {order} needs more than {order} observations, got T = {time_len}")]
    OrderTooLarge { order: usize, time_len: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix for class {class} is not positive definite")]
    NotPositiveDefinite { class: usize },

    #[error("fusion needs at least two classes, got K = {0}")]
    FusionUndefined(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("least squares is underdetermined for class {class}: N = {n} <= J*P = {params}")]
    Underdetermined { class: usize, n: usize, params: usize },

    #[error("singular normal equations for class {class}")]
    SingularNormalEquations { class: usize },

    #[error("degenerate test statistic: {0}")]
    Degenerate(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {message}")]
    Parse { context: String, message: String },

    #[error("unsupported fit file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
}

impl Error {
    pub(crate) fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Error {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

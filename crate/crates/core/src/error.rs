use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Decode {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("validation failed ({rule}): {msg}")]
    Validation { rule: &'static str, msg: String },

    #[error("transport error: {0}")]
    Transport(String),

    #[error("no complete phenology donor available")]
    NoDonor,

    #[error("probe diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("pipeline stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage { stage, source: Box::new(self) }
    }
}

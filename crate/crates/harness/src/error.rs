use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Bad user input: unreadable or malformed config, unknown names,
    /// incompatible scheme choices.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] hbf_core::Error),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Runtime(String),
}

impl HarnessError {
    /// Process exit status: 1 for configuration problems, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Core(e) => match e {
                hbf_core::Error::InvalidConfig(_)
                | hbf_core::Error::SchemeIncompatible { .. }
                | hbf_core::Error::UnknownName { .. }
                | hbf_core::Error::HypothesisCap { .. } => 1,
                _ => 2,
            },
            HarnessError::Io { .. } | HarnessError::Runtime(_) => 2,
        }
    }

    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.into(), source }
    }
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

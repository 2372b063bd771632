use erd_core::ErdError;
use erd_server::ClientError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] ErdError),

    #[error(transparent)]
    Client(#[from] ClientError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("server failed: {0}")]
    Server(std::io::Error),
}

fn core_code(e: &ErdError) -> i32 {
    match e {
        ErdError::Numerical(_) => 3,
        _ => 2,
    }
}

impl CliError {
    pub fn io(path: impl Into<std::path::PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }

    /// 2 user/config error, 3 numerical failure, 4 protocol or network failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Core(e) => core_code(e),
            CliError::Client(ClientError::Core(e)) => core_code(e),
            CliError::Client(ClientError::Log { .. }) => 2,
            CliError::Client(_) | CliError::Server(_) => 4,
        }
    }
}

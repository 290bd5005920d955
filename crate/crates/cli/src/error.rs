use thiserror::Error;
use ultrawalk::Error as CoreError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("{0}")]
    Core(#[from] CoreError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for diverged or inconclusive computations, 2 for rejected input.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                CoreError::NoConvergence { .. } | CoreError::LevelCap { .. } | CoreError::BeyondTruncation { .. } => 1,
                _ => 2,
            },
            CliError::Io(_) => 1,
        }
    }
}

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: denstopo::Error,
    },
    #[error("writing {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    /// 1 for usage errors, 2 for unreadable or inconsistent data, 3 for
    /// numerical failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Stage { source, .. } => match source {
                denstopo::Error::Numerical(_) => 3,
                denstopo::Error::InvalidParameter(_) => 1,
                _ => 2,
            },
            CliError::Output { .. } => 2,
        }
    }
}

/// Attaches a stage name to library errors.
pub trait StageContext<T> {
    fn stage(self, stage: impl Into<String>) -> Result<T, CliError>;
}

impl<T> StageContext<T> for denstopo::Result<T> {
    fn stage(self, stage: impl Into<String>) -> Result<T, CliError> {
        self.map_err(|source| CliError::Stage {
            stage: stage.into(),
            source,
        })
    }
}

use gaugecraft::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: CoreError,
    },

    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(path: &str, message: impl Into<String>) -> Self {
        CliError::Config { path: path.to_string(), message: message.into() }
    }

    pub fn missing(path: &str) -> Self {
        CliError::config(path, "required key is missing")
    }

    pub fn core(context: &str, source: CoreError) -> Self {
        CliError::Core { context: context.to_string(), source }
    }

    pub fn output(path: &std::path::Path, source: std::io::Error) -> Self {
        CliError::Output { path: path.display().to_string(), source }
    }

    /// 2 configuration, 3 numerical non-convergence, 4 internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } | CliError::Output { .. } => 2,
            CliError::Core { source, .. } => match source {
                CoreError::NonConvergence(_) => 3,
                CoreError::Invariant(_)
                | CoreError::NotHermitian(_)
                | CoreError::NotUnitary(_)
                | CoreError::NonFinite
                | CoreError::Eigen(_) => 4,
                _ => 2,
            },
        }
    }
}

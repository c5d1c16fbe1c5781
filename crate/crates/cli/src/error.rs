use std::path::{Path, PathBuf};

use thiserror::Error;

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Process exit codes.
pub mod exit {
    pub const CONFIG: i32 = 2;
    pub const NUMERICAL: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Core {
        stage: &'static str,
        #[source]
        source: softclamp::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("plot: {0}")]
    Plot(String),
}

impl CliError {
    pub fn core(stage: &'static str, source: softclamp::Error) -> Self {
        CliError::Core { stage, source }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use softclamp::Error as E;
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Core { source, .. } => match source {
                E::Parse { .. } | E::Geometry(_) | E::HoleOverlap { .. } | E::InfeasibleCalibration(_) => exit::CONFIG,
                E::Io(_) => exit::IO,
                E::Domain(_) | E::Mesh(_) | E::Singular(_) | E::NoConvergence { .. } | E::Fit(_) => exit::NUMERICAL,
            },
            CliError::Io { .. } | CliError::Plot(_) => exit::IO,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_by_category() {
        assert_eq!(CliError::Config("x".into()).exit_code(), exit::CONFIG);
        assert_eq!(
            CliError::core("geometry", softclamp::Error::Geometry("x".into())).exit_code(),
            exit::CONFIG
        );
        assert_eq!(
            CliError::core("modes", softclamp::Error::Singular("x".into())).exit_code(),
            exit::NUMERICAL
        );
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(CliError::io(Path::new("x"), io).exit_code(), exit::IO);
    }
}

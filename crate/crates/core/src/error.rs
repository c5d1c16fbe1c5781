use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("infeasible loss calibration: {0}")]
    InfeasibleCalibration(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("holes {first} and {second} overlap (centre distance {distance:.4e} m)")]
    HoleOverlap {
        first: usize,
        second: usize,
        distance: f64,
    },

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error(
        "eigensolver did not converge: {converged}/{wanted} pairs after {iterations} Lanczos steps \
         (worst residual {worst_residual:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        converged: usize,
        wanted: usize,
        worst_residual: f64,
    },

    #[error("fit error: {0}")]
    Fit(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

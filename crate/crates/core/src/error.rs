use thiserror::Error;

/// Errors raised by the numerical kernels, the optimizers and the harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("{op} did not converge after {iterations} iterations")]
    NoConvergence { op: &'static str, iterations: usize },

    #[error("numerical failure in {op}: {detail}")]
    Numerical { op: &'static str, detail: String },

    /// The input lies outside the operation's mathematical domain, e.g. an
    /// indefinite matrix handed to a Cholesky-based kernel.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid configuration: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("config parse error: {0}")]
    ConfigParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable identifier used in machine-readable CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } => "dimension",
            Error::NoConvergence { .. } => "no_convergence",
            Error::Numerical { .. } => "numerical",
            Error::Domain { .. } => "domain",
            Error::Geometry(_) => "geometry",
            Error::Argument(_) => "argument",
            Error::Config(_) => "config",
            Error::ConfigParse(_) => "config_parse",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

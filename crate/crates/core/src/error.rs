use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("graph is disconnected: node {unreachable} is not reachable from node 0")]
    Disconnected { unreachable: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNoConvergence { sweeps: usize, off_norm: f64 },

    #[error("signal is unbounded: {0}")]
    UnboundedSignal(String),

    #[error("agent {l} is not a neighbor of agent {p}")]
    NotNeighbor { p: usize, l: usize },

    #[error("missing observation of agent {0}")]
    MissingObservation(usize),

    #[error("non-finite value in {what} at t = {t}")]
    NonFinite { what: String, t: f64 },

    #[error("trace is empty")]
    EmptyTrace,

    #[error("time grids differ: {0}")]
    GridMismatch(String),

    #[error("topology differs between traces")]
    TopologyMismatch,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown channel `{0}`")]
    UnknownChannel(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by a bad scenario rather than a failed run.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidGraph(_)
                | Error::Disconnected { .. }
                | Error::DimensionMismatch(_)
                | Error::UnboundedSignal(_)
                | Error::NotNeighbor { .. }
                | Error::Config(_)
                | Error::Toml(_)
        )
    }
}

use std::path::PathBuf;

use thiserror::Error;

use crate::topology::Violation;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error("invalid network: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidGraph(Vec<Violation>),

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("degenerate flow: q = {0} kg/s must be positive")]
    DegenerateFlow(f64),

    #[error("flow system unsolvable: {0}")]
    UnsolvableFlow(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("FIT undefined: measured signal has zero spread")]
    UndefinedFit,

    #[error("R^2 undefined for output {0}: zero variance")]
    UndefinedR2(usize),

    #[error("wiring error: {0}")]
    Wiring(String),

    #[error("neuron allocation infeasible: {0}")]
    Allocation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model prediction diverged: {0}")]
    ModelDivergence(String),

    #[error("model format: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

use std::path::PathBuf;

use crate::controller::ControlSetpoints;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("active lines contain a cycle (closing line {line})")]
    CycleDetected { line: usize },

    #[error("bus {bus} is not reachable from the substation")]
    Disconnected { bus: usize },

    #[error("duplicate edge between buses {from} and {to}")]
    DuplicateEdge { from: usize, to: usize },

    #[error("unknown line id {0}")]
    UnknownLine(usize),

    #[error("unknown bus {0}")]
    UnknownBus(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("measurement window is empty")]
    EmptyWindow,

    #[error("no feasible topology configuration")]
    NoFeasibleConfiguration,

    #[error("power flow did not converge after {iterations} iterations (last update {update:e})")]
    PowerFlowNotConverged {
        iterations: usize,
        update: f64,
        voltages: Vec<f64>,
    },

    #[error("control problem did not converge after {iterations} iterations (residual {residual:e})")]
    ControlNotConverged {
        iterations: usize,
        residual: f64,
        best: Box<ControlSetpoints>,
    },

    #[error("every entry is masked out")]
    AllMasked,

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context,
            expected,
            found,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

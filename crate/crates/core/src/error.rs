use std::path::PathBuf;

use crate::sdp::SolveStatus;

/// Errors raised by the simulator.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid panel: {0}")]
    InvalidPanel(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("insufficient snapshots for orthogonality: {waveforms} waveforms need at least {waveforms} snapshots, got {snapshots}")]
    InsufficientSnapshots { waveforms: usize, snapshots: usize },

    #[error("delay {delay} out of range for I_t = {snapshots_tx}, I_r = {snapshots_rx}")]
    DelayOutOfRange {
        delay: usize,
        snapshots_tx: usize,
        snapshots_rx: usize,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate receive chain for pair (p={p}, q={q}): zero interference-plus-noise power")]
    DegenerateReceiveChain { p: usize, q: usize },

    #[error("degenerate pair (p={p}, q={q}): zero denominator in ratio update")]
    DegeneratePair { p: usize, q: usize },

    #[error("non-Hermitian form: {0}")]
    NonHermitian(String),

    #[error("invalid beamformer: {0}")]
    InvalidBeamformer(String),

    #[error("SDP solver returned {status:?} after {iterations} iterations: {detail}")]
    Solver {
        status: SolveStatus,
        iterations: usize,
        detail: String,
    },

    #[error("optimization aborted after {} outer iterations: {source}", trace.len())]
    Aborted {
        #[source]
        source: Box<Error>,
        trace: Vec<crate::draoa::IterationRecord>,
    },

    #[error("budget too small: {0}")]
    BudgetTooSmall(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("spec error: {0}")]
    Spec(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Output { path: PathBuf, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

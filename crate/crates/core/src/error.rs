use thiserror::Error;

/// Errors produced by the simulation core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("qubit index {index} out of range for {n_qubits} qubits")]
    QubitOutOfRange { index: usize, n_qubits: usize },
    #[error("duplicate gate targets ({0}, {0})")]
    DuplicateTargets(usize),
    #[error("dimension mismatch: {left} vs {right} qubits")]
    DimensionMismatch { left: usize, right: usize },
    #[error("qubit {qubit} already used in this layer")]
    LayerConflict { qubit: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported gate `{0}` for noisy compilation")]
    UnsupportedGate(String),
    #[error("{what} needs {qubits} qubits, limit is {limit}")]
    SizeLimit {
        what: &'static str,
        qubits: usize,
        limit: usize,
    },
    #[error("memory estimate {required} bytes exceeds limit {limit} bytes")]
    MemoryLimit { required: u64, limit: u64 },
    #[error("series too short: {len} samples, need at least {min}")]
    SeriesTooShort { len: usize, min: usize },
    #[error("no signal: spectrum has no non-DC peak above the noise floor")]
    NoSignal,
    #[error("reference mass must be nonzero")]
    ZeroReference,
    #[error("no positive root in [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },
    #[error("shard {0} appears more than once")]
    DuplicateShard(usize),
    #[error("shard mismatch in field `{field}`")]
    ShardMismatch { field: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

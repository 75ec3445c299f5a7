use thiserror::Error;

/// Errors produced anywhere in the engine.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration value (unknown env, invalid parameter, unknown key).
    #[error("configuration error: {0}")]
    Config(String),

    /// API misuse: stepping a terminal env, drawing a value head for a
    /// single-value variant, and similar contract violations.
    #[error("usage error: {0}")]
    Usage(String),

    /// Tensor/layer shape mismatch, reporting expected vs actual.
    #[error("shape error in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    /// An index (state, action, parameter name) outside the valid range.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// Not enough stored samples to service a request.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A NaN or infinity appeared where only finite values are allowed.
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    /// Checkpoint file failed validation.
    #[error("corrupt checkpoint at byte {offset}: {reason}")]
    CorruptCheckpoint { offset: u64, reason: String },

    /// Checkpoint format version not understood by this build.
    #[error("unsupported checkpoint version {found} (supported: {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    /// A worker thread panicked during training.
    #[error("training aborted: worker {worker} panicked: {message}")]
    WorkerPanic { worker: usize, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn shape(context: impl Into<String>, expected: &[usize], actual: &[usize]) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_vec(),
            actual: actual.to_vec(),
        }
    }
}

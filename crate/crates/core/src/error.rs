use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("singular regression design: {0}")]
    SingularDesign(String),

    #[error("estimated shift is negative ({0} bp); forward and reverse strands appear inverted")]
    NegativeShift(i64),

    #[error("background rate {lambda} is outside the survival table range [{min}, {max}]")]
    LambdaOutOfRange { lambda: f64, min: f64, max: f64 },

    #[error("kernel fingerprint mismatch: table was built for {table}, kernel is {kernel}")]
    FingerprintMismatch { table: String, kernel: String },

    #[error("unsupported survival table: {0}")]
    TableFormat(String),

    #[error("spike placement failed: {0}")]
    Placement(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}

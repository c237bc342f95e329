use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("level {level} out of range (allowed 0..={max})")]
    LevelOutOfRange { level: u32, max: u32 },

    #[error("index {0} lies outside the window")]
    OutsideWindow(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("scale mismatch: {0}")]
    ScaleMismatch(String),

    #[error("missing table entry for {0}")]
    MissingEntry(String),

    #[error("zero mass: {0}")]
    ZeroMass(String),

    #[error("degenerate-singular exponent configuration: {0}")]
    DegenerateSingular(String),

    #[error("support size {size} exceeds the oracle cap {cap}")]
    SupportCap { size: usize, cap: usize },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("window too small: {0}")]
    WindowTooSmall(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

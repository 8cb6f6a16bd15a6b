use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("column {0} is degenerate (zero or near-zero second moment)")]
    DegenerateColumn(usize),
    #[error("the constant instrument is not in the cone set I")]
    ConstantMissing,
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("invalid specification: {0}")]
    SpecInvalid(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("quantile formula has no valid value: {0}")]
    InfeasibleQuantile(String),
    #[error("solver failure: {0}")]
    SolverFailure(String),
    #[error("block of size {0} exceeds the enumeration limit of 12")]
    BlockTooLarge(usize),
    #[error("sensitivity report does not match the fit: {0}")]
    MismatchedReport(String),
    #[error("first-stage propagation constant is infinite")]
    InfiniteC1,
    #[error("estimated instrument is identically zero")]
    DegenerateInstrument,
    #[error("pilot l1 bound is infinite")]
    InfinitePilotBound,
    #[error("io error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

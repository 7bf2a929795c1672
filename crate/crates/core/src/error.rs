use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("field is not based on the given measure")]
    BaseMismatch,

    #[error("invalid transport plan: {0}")]
    InvalidPlan(String),

    #[error("transport solver did not converge after {0} pivots")]
    SolverStalled(usize),

    #[error("invalid control: {0}")]
    InvalidControl(String),

    #[error("empty control grid")]
    EmptyControlGrid,

    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),

    #[error("integration blew up at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("horizon must be positive, got {0}")]
    InvalidHorizon(f64),

    #[error("step h = {h} is below the time resolution dt = {dt}")]
    BelowResolution { h: f64, dt: f64 },

    #[error("negative time value {0}")]
    NegativeValue(f64),

    #[error("step h = {h} exceeds the value estimate {value}")]
    StepExceedsValue { h: f64, value: f64 },

    #[error("value estimate is infinite; residual undefined")]
    InfiniteValue,

    #[error("functional undefined at the perturbed measure for h = {h}")]
    Domain { h: f64 },

    #[error("invalid search config: {0}")]
    InvalidSearch(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

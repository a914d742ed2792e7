use thiserror::Error;

/// Faults raised by the simulation and solver layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate weights: row {row} has zero sum")]
    DegenerateWeights { row: usize },

    #[error("numerical blow-up at step {step} (neuron/path {index})")]
    NumericalBlowUp { step: usize, index: usize },

    #[error("start at or above threshold (x = {0})")]
    StartAboveThreshold(f64),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("lamperti range [{lo}, {hi}] does not cover {value}")]
    RangeTooSmall { lo: f64, hi: f64, value: f64 },

    #[error("incompatible grids: {0}")]
    IncompatibleGrid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

use crate::expr::{EvalError, ParseError};

/// Errors surfaced by model construction, the solvers and the simulator.
#[derive(Debug, Error)]
pub enum GremError {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("species count {0} is outside 1..=4")]
    SpeciesOutOfRange(usize),

    #[error("symbol {symbol} at coordinate {coordinate} is outside an alphabet of size {alphabet_size}")]
    SymbolOutOfRange {
        coordinate: usize,
        symbol: usize,
        alphabet_size: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("coordinate set is empty")]
    EmptyCoordinates,

    #[error("phi expression: {0}")]
    Parse(#[from] ParseError),

    #[error("phi evaluation: {0}")]
    Eval(#[from] EvalError),

    #[error("volume N={volume} is not a multiple of the species count n={species}")]
    VolumeNotDivisible { volume: usize, species: usize },

    #[error("enumerating 2^{volume} configurations costs {work} units, budget is {budget}")]
    BudgetExceeded { volume: usize, work: u128, budget: u128 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = GremError> = std::result::Result<T, E>;

use alloc::string::String;

/// Everything that can go wrong while building, solving or simulating a model.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown identifier `{0}`")]
    UnknownIdentifier(String),
    #[error("duplicate state name `{0}`")]
    DuplicateState(String),
    #[error("rate cap must be nonnegative, got {0}")]
    NegativeRateCap(f64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive argument {0}")]
    LogDomain(f64),
    #[error("negative rate {value} from state {from} to state {to}")]
    NegativeRate { from: usize, to: usize, value: f64 },
    #[error("row sum {row_sum} of state {state} exceeds rate cap {cap}")]
    RateCapExceeded { state: usize, row_sum: f64, cap: f64 },
    #[error("rate cap {rate_cap} exceeds population size {n}; model not simulable")]
    NotSimulable { rate_cap: f64, n: usize },
    #[error("occupancy measure is not grained to N = {0}")]
    NotGrained(usize),
    #[error("invalid state index {index} (model has {states} states)")]
    InvalidIndex { index: usize, states: usize },
    #[error("invalid occupancy measure: {0}")]
    InvalidMeasure(String),
    #[error("action {0} lies outside the action space")]
    ActionOutOfSpace(String),
    #[error("time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("{what}: {count} exceeds cap {cap}")]
    CapacityExceeded {
        what: &'static str,
        count: u128,
        cap: u128,
    },
    #[error("point left the simplex: {0}")]
    LeftSimplex(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("mismatched horizons: {0} vs {1}")]
    MismatchedHorizon(f64, f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContractError {
    #[error("invalid prices: {0}")]
    InvalidPrices(String),

    #[error("invalid consumer parameters: {0}")]
    InvalidParams(String),

    #[error("invalid report: {0}")]
    InvalidReport(String),

    #[error("call probability {0} is outside [0, 1]")]
    InvalidProbability(f64),

    #[error("call signal must be 0 or 1, got {0}")]
    InvalidSignal(u8),

    #[error("{what} = {value} is outside its domain {domain}")]
    Domain {
        what: &'static str,
        value: f64,
        domain: String,
    },

    /// `q_max` must exceed the saturation point `b + p/gamma`.
    #[error("q_max = {q_max} must exceed the saturation point b + p/gamma = {saturation}")]
    Saturation { q_max: f64, saturation: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid [{lo}, {hi}] has no points inside [0, {q_max}]")]
    EmptyGrid { lo: f64, hi: f64, q_max: f64 },

    #[error("duplicate consumer id `{0}`")]
    DuplicateConsumer(String),

    #[error("no behavior model for consumer `{0}`")]
    MissingBehavior(String),

    #[error("inconsistent event inputs: {0}")]
    InconsistentKeys(String),

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
}

pub type Result<T> = std::result::Result<T, ContractError>;

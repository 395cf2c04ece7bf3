use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("generation mismatch: {left} vs {right}")]
    GenerationMismatch { left: usize, right: usize },

    #[error("separation generation is undefined for identical edges")]
    IdenticalEdges,

    #[error("flow anchor r - depth = {anchor} lies above the asymptotic validity floor {floor}")]
    AnchorTooShallow { anchor: f64, floor: f64 },

    #[error("profile depth {have} is insufficient, need at least {need}")]
    InsufficientDepth { need: usize, have: usize },

    #[error("critical scaling is nonpositive (beta = {beta}) at n = {n}, r = {r}")]
    NonPositiveBeta { beta: f64, n: usize, r: f64 },

    #[error("beta = {beta} is outside the moment generating function domain of the {model} law")]
    OutsideMgfDomain { beta: f64, model: &'static str },

    #[error("budget guard `{guard}` tripped: requested {requested}, limit {limit}")]
    Budget { guard: &'static str, requested: u128, limit: u128 },

    #[error("offspring probabilities sum to {sum} at generation {n}")]
    Normalization { sum: f64, n: usize },

    #[error("zero total weight while descending at generation {generation}")]
    ZeroWeight { generation: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

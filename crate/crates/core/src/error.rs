use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("boundary rejected: Lipschitz constant {lipschitz} exceeds budget {budget}")]
    LipschitzBudget { lipschitz: f64, budget: f64 },
    #[error(
        "resolution too coarse: inner inclusion constant c1 needs 2^-k_max*scale = {finest} >= 2*resolution = {needed}"
    )]
    ResolutionTooCoarse { finest: f64, needed: f64 },
    #[error("empty sample set")]
    EmptySamples,
    #[error("pole at ({0}, {1}) does not lie on the boundary")]
    PoleOffBoundary(f64, f64),
    #[error("point ({0}, {1}) is too close to the boundary for this field")]
    SingularPoint(f64, f64),
    #[error("corona decomposition rejected at cube {cube}: {reason}")]
    Corona { cube: usize, reason: String },
    #[error("point ({0}, {1}) lies outside every cell")]
    OutsideCells(f64, f64),
    #[error("window too small: {0}")]
    WindowTooSmall(String),
    #[error("{check} failed: {detail}")]
    CheckFailed { check: String, detail: String },
    #[error("internal check failed: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("step size underflow at x = {x} (integration towards {target})")]
    StepUnderflow { x: f64, target: f64 },

    #[error("bracket failure: {0}")]
    Bracket(String),

    #[error("wrong branch: {0}")]
    WrongBranch(String),

    #[error("case not covered by the model construction: {0}")]
    Uncovered(String),

    #[error("indicial resonance at series order {k}")]
    Resonance { k: usize },

    #[error("series diagnostics failed: {0}")]
    Series(String),

    #[error("no inflection point found before x = {cap}")]
    NoInflection { cap: f64 },

    #[error("not converged after {iterations} iterations (last update {last_update:e})")]
    NotConverged { iterations: usize, last_update: f64, history: Vec<f64> },

    #[error("scheme not monotone at node (i = {i}, j = {j}): {detail}")]
    NonMonotone { i: usize, j: usize, detail: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("policy chattering near state ({x}, {k})")]
    Chattering { x: f64, k: f64 },
}

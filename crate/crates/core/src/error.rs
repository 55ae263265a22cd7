use std::path::PathBuf;

use crate::instance::{KernelViolation, ValidationReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(ValidationReport),

    #[error("not a kernel instance: {0}")]
    NotKernel(KernelViolation),

    #[error("unknown offline vertex `{0}`")]
    UnknownVertex(String),

    #[error("event refers to online type #{0}, which the instance does not have")]
    UnknownType(usize),

    #[error("fractional solution has no variable for edge ({0}, {1})")]
    MissingVariable(String, String),

    #[error("fractional solution refers to ({0}, {1}), which is not an edge")]
    UnknownEdge(String, String),

    #[error("fractional solution: {0}")]
    InvalidSolution(String),

    #[error("invalid activation function: {0}")]
    InvalidActivation(String),

    #[error("t = {t} lies before the threshold t* = {t_star}")]
    BeforeThreshold { t: f64, t_star: f64 },

    #[error("extended designation is only defined for second-class types")]
    FirstClassDesignation,

    #[error("trial count must be at least 1")]
    ZeroTrials,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("linear program: {0}")]
    Lp(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

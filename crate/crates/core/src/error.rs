use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("parse error: {0}")]
    Parse(String),
    /// A bound's precondition `P(alpha|mu) < Q(mu) < 1` failed under strict checking.
    #[error("precondition violated for committee {committee}: {detail}")]
    Precondition { committee: usize, detail: String },
    /// The saddle equation has no root (requires P < A).
    #[error("saddle equation has no solution: P = {p} must be below A = {a}")]
    NoSaddle { p: f64, a: f64 },
    #[error("no committee size up to {limit} meets the target")]
    NotFound { limit: u64 },
    #[error("numeric failure: {0}")]
    Numeric(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

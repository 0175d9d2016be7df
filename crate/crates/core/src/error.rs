use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("integrand is not finite at x = {abscissa}")]
    Evaluation { abscissa: f64 },

    #[error("no root of the indifference condition within [{lo}, {hi}]")]
    NoRoot { lo: f64, hi: f64 },

    #[error("payoff probe failed: {0}")]
    AssumptionViolated(String),

    #[error("not identified: {0}")]
    NoIdentification(String),

    #[error("outside the characterized case: {0}")]
    OutOfHypothesis(String),

    #[error("fixed-point iteration failed: {detail} (residual {residual:e})")]
    NonContraction { residual: f64, detail: String },

    #[error("minimizer did not converge; best point {best:?} with objective {value:e}")]
    NonConvergence { best: Vec<f64>, value: f64 },

    #[error("no moment solution: {0}")]
    NoSolution(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

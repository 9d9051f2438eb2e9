//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A dimension invariant was violated; the message names the inequality.
    #[error("dimension violation: {0}")]
    Dimension(String),

    /// A closed-form formula was evaluated outside its domain (log of a
    /// non-positive argument or similar).
    #[error("domain error: {0}")]
    Domain(String),

    /// A factorization or solve failed; `block` names the offending matrix.
    #[error("linear algebra failure in {block}: {detail}")]
    LinearAlgebra { block: &'static str, detail: String },

    /// The Stieltjes fixed-point solver did not reach its residual target.
    #[error("solver did not converge at z = {z}: residuals {residuals:?}")]
    Solver { z: String, residuals: [f64; 3] },

    #[error("integration error: {0}")]
    Integration(String),

    /// A covariance scenario could not be built (for instance a non-PD sigma).
    #[error("scenario construction error: {0}")]
    Construction(String),

    #[error("simulation error: {0}")]
    Simulation(String),

    /// A calibration was paired with a statistic it does not belong to.
    #[error("statistic mismatch: {0}")]
    Mismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

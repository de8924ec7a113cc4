// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

/// Errors raised by model construction, sampling and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    /// A feature does not belong to the declared feature space.
    #[error("feature outside the feature space: {0}")]
    Domain(String),

    /// The model is inconsistent (kernel out of range, unbounded rates, ...).
    #[error("model error: {0}")]
    Model(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A fixed-step integrator produced a value outside the admissible band.
    #[error("step size too large: value {value} at t = {t} left [0, 1]")]
    StepRejected { t: f64, value: f64 },

    /// A rate became NaN or infinite during a stochastic run.
    #[error("non-finite rate {rate} at t = {t} after {events} events")]
    NonFiniteRate { t: f64, rate: f64, events: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

pub(crate) fn model(msg: impl Into<String>) -> Error {
    Error::Model(msg.into())
}

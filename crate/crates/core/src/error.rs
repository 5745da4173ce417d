//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpinError {
    /// A behavior probability of zero (or below the floor) breaks importance
    /// sampling; the estimate would be unbounded or silently biased.
    #[error("full-support violation: behavior probability {prob:e} at episode {episode}, step {step}")]
    FullSupport {
        episode: usize,
        step: usize,
        prob: f64,
    },

    #[error("environment has no exact performance oracle")]
    UnsupportedOracle,

    #[error("discount factor {0} outside [0, 1)")]
    GammaDomain(f64),

    #[error(
        "transition distribution at (episode {episode}, state {state}, action {action}) \
         sums to {sum} (must be 1 within 1e-12)"
    )]
    InvalidTransition {
        episode: usize,
        state: usize,
        action: usize,
        sum: f64,
    },

    #[error("need at least {needed} observations to fit {params} basis parameters, got {got}")]
    InsufficientData {
        needed: usize,
        params: usize,
        got: usize,
    },

    /// Raised instead of silently regularizing a rank-deficient design matrix.
    #[error("singular design matrix: |R[{index},{index}]| = {value:e} below tolerance")]
    SingularDesign { index: usize, value: f64 },

    #[error("invalid performance series: {0}")]
    InvalidSeries(String),

    #[error("forecast horizon must be non-empty and lie beyond the fitted episodes")]
    InvalidHorizon,

    #[error("cannot split a batch of {got} trajectories with train fraction {fraction}")]
    BatchTooSmall { got: usize, fraction: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, SpinError>;

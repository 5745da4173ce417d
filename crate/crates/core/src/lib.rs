//! Safe policy improvement for smoothly non-stationary decision problems.
//!
//! The crate is organized around the deployment loop in [`spinloop`]:
//! trajectories collected from a drifting environment ([`envsim`]) are turned
//! into counterfactual performance estimates ([`ope`]), the estimates are
//! treated as a univariate time series and forecast with a Fourier basis
//! ([`forecast`]), wild-bootstrap prediction intervals quantify the forecast
//! uncertainty ([`wildboot`]), and a candidate policy is found by ascending
//! the lower confidence bound ([`candidate`]). A high-confidence safety test
//! gates every deployment.

pub mod candidate;
pub mod envsim;
pub mod error;
pub mod forecast;
pub mod ope;
pub mod policy;
pub mod rngstream;
pub mod spinloop;
pub mod wildboot;

pub use error::{Result, SpinError};

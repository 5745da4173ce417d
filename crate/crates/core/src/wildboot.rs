//! Wild-bootstrap prediction intervals for forecast future performance.
//!
//! Pseudo-series are built by flipping the signs of the regression residuals
//! with independent Rademacher draws (`Y* = Y_hat + residuals ⊙ σ*`), which
//! preserves heteroscedasticity: each pseudo-noise keeps the magnitude of the
//! observed residual at its own time index. Every pseudo-series is refit
//! against the unchanged design matrix, so refits reuse the cached hat matrix.
//!
//! Two interval flavors: the t-statistic method (studentized replicates, used
//! by the safety test) and the cheaper percentile method (raw replicate
//! quantiles, used inside candidate search where the interval must be
//! differentiated).

use nalgebra::DVector;
use rand::{Rng, RngCore};

use crate::error::{Result, SpinError};
use crate::forecast::{fit, forecast, validate_horizon, variance_from_weights, FourierBasis, RegressionFit};
use crate::ope::PerformanceSeries;

/// A frozen matrix of Rademacher signs, one row per bootstrap replicate.
///
/// During candidate search the same draws are reused across every gradient
/// step, so the optimized objective is a fixed deterministic function.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    signs: Vec<f64>,
    replicates: usize,
    series_len: usize,
}

impl BootstrapDraws {
    /// `replicates x series_len` i.i.d. fair ±1 entries.
    pub fn rademacher(rng: &mut dyn RngCore, replicates: usize, series_len: usize) -> Self {
        let signs = (0..replicates * series_len)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        Self {
            signs,
            replicates,
            series_len,
        }
    }

    /// All `2^series_len` sign vectors, for exhaustive-enumeration checks.
    pub fn exhaustive(series_len: usize) -> Self {
        assert!(series_len < 20, "exhaustive draws explode past 2^20");
        let replicates = 1usize << series_len;
        let mut signs = Vec::with_capacity(replicates * series_len);
        for b in 0..replicates {
            for i in 0..series_len {
                signs.push(if (b >> i) & 1 == 1 { 1.0 } else { -1.0 });
            }
        }
        Self {
            signs,
            replicates,
            series_len,
        }
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn series_len(&self) -> usize {
        self.series_len
    }

    pub fn row(&self, replicate: usize) -> &[f64] {
        &self.signs[replicate * self.series_len..(replicate + 1) * self.series_len]
    }
}

/// Spec-named alias for [`BootstrapDraws::rademacher`].
pub fn draw_rademacher(rng: &mut dyn RngCore, replicates: usize, series_len: usize) -> BootstrapDraws {
    BootstrapDraws::rademacher(rng, replicates, series_len)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalMethod {
    TStatistic,
    Percentile,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionInterval {
    pub lb: f64,
    pub ub: f64,
    pub rho_hat: f64,
    pub method: IntervalMethod,
}

/// Which replicate produced each selected order statistic; this is what the
/// straight-through sort gradient differentiates through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PercentileSelection {
    pub lb_replicate: usize,
    pub ub_replicate: usize,
}

/// 0-based index of the lower-quantile order statistic: 1-based `floor(q B)`
/// clamped to `[1, B]`, then shifted down.
pub fn lower_order_index(q: f64, replicates: usize) -> usize {
    let raw = (q * replicates as f64).floor() as i64;
    (raw.clamp(1, replicates as i64) - 1) as usize
}

/// 0-based index of the upper-quantile order statistic: 1-based `ceil(q B)`
/// clamped to `[1, B]`, then shifted down.
pub fn upper_order_index(q: f64, replicates: usize) -> usize {
    let raw = (q * replicates as f64).ceil() as i64;
    (raw.clamp(1, replicates as i64) - 1) as usize
}

fn validate_level(alpha: f64, replicates: usize) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SpinError::InvalidArgument(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    if (replicates as f64) < 2.0 / alpha {
        return Err(SpinError::InvalidArgument(format!(
            "need at least 2/alpha = {} replicates, got {replicates}",
            (2.0 / alpha).ceil()
        )));
    }
    Ok(())
}

/// Stable argsort by value; ties keep replicate order.
fn sorted_indices(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    idx
}

/// Mean-forecast values of every bootstrap replicate, via the refit path
/// `rho*_b = m . (Y_hat + residuals ⊙ σ*_b)` with the cached hat matrix.
pub fn replicate_forecasts(
    fit: &RegressionFit,
    basis: &FourierBasis,
    horizon: &[usize],
    draws: &BootstrapDraws,
) -> Result<Vec<f64>> {
    validate_horizon(fit, horizon)?;
    if draws.series_len() != fit.len() {
        return Err(SpinError::InvalidArgument(format!(
            "draws cover {} points but the fit has {}",
            draws.series_len(),
            fit.len()
        )));
    }
    let weights = fit.forecast_weights(basis, horizon);
    let mut out = Vec::with_capacity(draws.replicates());
    for b in 0..draws.replicates() {
        let sigma = draws.row(b);
        let mut acc = 0.0;
        for l in 0..fit.len() {
            acc += weights[l] * (fit.y_hat[l] + fit.residuals[l] * sigma[l]);
        }
        out.push(acc);
    }
    Ok(out)
}

/// t-statistic prediction interval (Algorithm "PI").
///
/// Per replicate: build the pseudo-series, refit on the same design, compute
/// the studentized statistic `t*_b = (rho*_b - rho_hat) / s*_b`; the interval
/// is `[rho_hat - t*_(1-a/2) s_hat, rho_hat - t*_(a/2) s_hat]` with the order
/// statistics taken from the sorted `t*`. A pseudo-world with zero residual
/// variance carries no uncertainty, so its `t*` is defined as 0.
pub fn prediction_interval_t(
    series: &PerformanceSeries,
    basis: &FourierBasis,
    horizon: &[usize],
    alpha: f64,
    replicates: usize,
    rng: &mut dyn RngCore,
) -> Result<PredictionInterval> {
    validate_level(alpha, replicates)?;
    let fitted = fit(basis, series)?;
    let fc = forecast(&fitted, basis, horizon)?;
    let weights = fitted.forecast_weights(basis, horizon);
    let draws = BootstrapDraws::rademacher(rng, replicates, fitted.len());

    let k = fitted.len();
    let mut t_stats = Vec::with_capacity(replicates);
    let mut y_star = DVector::zeros(k);
    for b in 0..replicates {
        let sigma = draws.row(b);
        for l in 0..k {
            y_star[l] = fitted.y_hat[l] + fitted.residuals[l] * sigma[l];
        }
        // refit against the unchanged design: w* = H y*
        let w_star = &fitted.hat_core * &y_star;
        let rho_star = weights.dot(&y_star);
        let resid_star = &y_star - &fitted.phi * &w_star;
        let v_star = variance_from_weights(&weights, &resid_star);
        let t = if v_star == 0.0 {
            0.0
        } else {
            (rho_star - fc.rho_hat) / v_star.sqrt()
        };
        t_stats.push(t);
    }

    let order = sorted_indices(&t_stats);
    let s_hat = fc.v_hat.sqrt();
    let t_hi = t_stats[order[upper_order_index(1.0 - alpha / 2.0, replicates)]];
    let t_lo = t_stats[order[lower_order_index(alpha / 2.0, replicates)]];
    Ok(PredictionInterval {
        lb: fc.rho_hat - t_hi * s_hat,
        ub: fc.rho_hat - t_lo * s_hat,
        rho_hat: fc.rho_hat,
        method: IntervalMethod::TStatistic,
    })
}

/// Percentile prediction interval over externally supplied (frozen) draws.
///
/// The bounds are order statistics of the replicate forecasts themselves; no
/// studentization. Also reports which replicate landed at each selected order
/// statistic so the caller can differentiate straight through the sort.
pub fn prediction_interval_percentile(
    series: &PerformanceSeries,
    basis: &FourierBasis,
    horizon: &[usize],
    alpha: f64,
    draws: &BootstrapDraws,
) -> Result<(PredictionInterval, PercentileSelection)> {
    validate_level(alpha, draws.replicates())?;
    let fitted = fit(basis, series)?;
    let fc = forecast(&fitted, basis, horizon)?;
    let rho_stars = replicate_forecasts(&fitted, basis, horizon, draws)?;
    let (interval, selection) = percentile_from_replicates(&rho_stars, fc.rho_hat, alpha);
    Ok((interval, selection))
}

/// Order-statistic extraction shared with the candidate-search objective.
pub(crate) fn percentile_from_replicates(
    rho_stars: &[f64],
    rho_hat: f64,
    alpha: f64,
) -> (PredictionInterval, PercentileSelection) {
    let replicates = rho_stars.len();
    let order = sorted_indices(rho_stars);
    let lb_replicate = order[lower_order_index(alpha / 2.0, replicates)];
    let ub_replicate = order[upper_order_index(1.0 - alpha / 2.0, replicates)];
    (
        PredictionInterval {
            lb: rho_stars[lb_replicate],
            ub: rho_stars[ub_replicate],
            rho_hat,
            method: IntervalMethod::Percentile,
        },
        PercentileSelection {
            lb_replicate,
            ub_replicate,
        },
    )
}

//! Per-decision importance sampling.
//!
//! Counterfactual estimates of an evaluation policy's episode performance from
//! trajectories logged under different behavior policies, plus the exact
//! gradient of the estimate with respect to the evaluation policy parameters.

use nalgebra::DMatrix;

use crate::envsim::Trajectory;
use crate::error::{Result, SpinError};
use crate::policy::{SoftmaxPolicy, BEHAVIOR_PROB_FLOOR};

/// Counterfactual per-episode performance estimates, ordered by episode.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceSeries {
    episodes: Vec<usize>,
    estimates: Vec<f64>,
}

impl PerformanceSeries {
    pub fn new(episodes: Vec<usize>, estimates: Vec<f64>) -> Result<Self> {
        if episodes.len() != estimates.len() {
            return Err(SpinError::InvalidSeries(format!(
                "{} episodes vs {} estimates",
                episodes.len(),
                estimates.len()
            )));
        }
        if episodes.is_empty() {
            return Err(SpinError::InvalidSeries("series is empty".into()));
        }
        if episodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SpinError::InvalidSeries(
                "episode indices must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            episodes,
            estimates,
        })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> &[usize] {
        &self.episodes
    }

    pub fn estimates(&self) -> &[f64] {
        &self.estimates
    }

    pub fn last_episode(&self) -> usize {
        *self.episodes.last().expect("series is non-empty")
    }
}

fn step_ratio(traj: &Trajectory, t: usize, prob: f64) -> Result<f64> {
    let beta = traj.steps[t].behavior_prob;
    if !(beta >= BEHAVIOR_PROB_FLOOR) {
        return Err(SpinError::FullSupport {
            episode: traj.episode,
            step: t,
            prob: beta,
        });
    }
    Ok(prob.ln() - beta.ln())
}

/// Per-decision importance sampling estimate:
/// `sum_t (prod_{l<=t} pi(a_l|s_l) / beta_l) gamma^t r_t`.
///
/// The running ratio product is accumulated in log space and exponentiated per
/// step, so long horizons cannot over- or underflow.
pub fn pdis(traj: &Trajectory, policy: &SoftmaxPolicy, gamma: f64) -> Result<f64> {
    let mut value = 0.0;
    let mut log_weight = 0.0;
    let mut discount = 1.0;
    for t in 0..traj.steps.len() {
        let step = &traj.steps[t];
        let prob = policy.action_prob(step.state, step.action);
        log_weight += step_ratio(traj, t, prob)?;
        value += discount * step.reward * log_weight.exp();
        discount *= gamma;
    }
    Ok(value)
}

/// [`pdis`] together with its gradient with respect to `theta`:
/// `sum_t gamma^t r_t w_t (sum_{l<=t} grad log pi(a_l|s_l))` where `w_t` is
/// the running ratio product. The value is computed with the identical
/// arithmetic as [`pdis`], so the two agree bit for bit.
pub fn pdis_with_grad(
    traj: &Trajectory,
    policy: &SoftmaxPolicy,
    gamma: f64,
) -> Result<(f64, DMatrix<f64>)> {
    let mut value = 0.0;
    let mut log_weight = 0.0;
    let mut discount = 1.0;
    // running sum of grad log pi over steps so far
    let mut score_sum = DMatrix::zeros(policy.n_states(), policy.n_actions());
    let mut grad = DMatrix::zeros(policy.n_states(), policy.n_actions());
    for t in 0..traj.steps.len() {
        let step = &traj.steps[t];
        let probs = policy.action_probs(step.state);
        let prob = probs[step.action];
        log_weight += step_ratio(traj, t, prob)?;
        for b in 0..policy.n_actions() {
            let indicator = if b == step.action { 1.0 } else { 0.0 };
            score_sum[(step.state, b)] += (indicator - probs[b]) / policy.temperature();
        }
        let coeff = discount * step.reward * log_weight.exp();
        value += coeff;
        grad += &score_sum * coeff;
        discount *= gamma;
    }
    Ok((value, grad))
}

/// PDIS estimates for a batch of trajectories as a [`PerformanceSeries`],
/// sorted by episode index.
pub fn counterfactual_series(
    trajectories: &[Trajectory],
    policy: &SoftmaxPolicy,
    gamma: f64,
) -> Result<PerformanceSeries> {
    let mut order: Vec<usize> = (0..trajectories.len()).collect();
    order.sort_by_key(|&i| trajectories[i].episode);
    let mut episodes = Vec::with_capacity(trajectories.len());
    let mut estimates = Vec::with_capacity(trajectories.len());
    for i in order {
        episodes.push(trajectories[i].episode);
        estimates.push(pdis(&trajectories[i], policy, gamma)?);
    }
    PerformanceSeries::new(episodes, estimates)
}

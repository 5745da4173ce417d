//! Tabular softmax policies.
//!
//! A policy is a `(n_states, n_actions)` parameter matrix `theta`;
//! probabilities are `softmax(theta[s, :] / temperature)` per state. Softmax
//! with finite parameters assigns strictly positive probability to every
//! action, which is what importance sampling requires of behavior policies.

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Result, SpinError};

/// Behavior probabilities below this floor are treated as a full-support
/// violation rather than clipped; clipping would bias the PDIS estimates.
pub const BEHAVIOR_PROB_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxPolicy {
    theta: DMatrix<f64>,
    temperature: f64,
}

impl SoftmaxPolicy {
    pub fn new(theta: DMatrix<f64>, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) {
            return Err(SpinError::InvalidArgument(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        if theta.nrows() == 0 || theta.ncols() == 0 {
            return Err(SpinError::InvalidArgument(
                "theta must have at least one state and one action".into(),
            ));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(SpinError::InvalidArgument(
                "theta contains non-finite entries".into(),
            ));
        }
        Ok(Self { theta, temperature })
    }

    /// Unit temperature policy.
    pub fn from_theta(theta: DMatrix<f64>) -> Result<Self> {
        Self::new(theta, 1.0)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            theta: DMatrix::zeros(n_states, n_actions),
            temperature: 1.0,
        }
    }

    /// Single-state policy reproducing the given action distribution, used to
    /// encode "probability proportional to ..." baseline policies.
    pub fn from_action_distribution(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() {
            return Err(SpinError::InvalidArgument("empty distribution".into()));
        }
        if probs.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(SpinError::InvalidArgument(
                "distribution entries must be strictly positive".into(),
            ));
        }
        let total: f64 = probs.iter().sum();
        let theta = DMatrix::from_fn(1, probs.len(), |_, j| (probs[j] / total).ln());
        Self::from_theta(theta)
    }

    pub fn n_states(&self) -> usize {
        self.theta.nrows()
    }

    pub fn n_actions(&self) -> usize {
        self.theta.ncols()
    }

    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Action distribution for a state, computed with the row maximum
    /// subtracted before exponentiation so large parameters cannot overflow.
    pub fn action_probs(&self, state: usize) -> DVector<f64> {
        let row = self.theta.row(state);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut exps = DVector::from_fn(self.n_actions(), |a, _| {
            ((row[a] - max) / self.temperature).exp()
        });
        let z: f64 = exps.iter().sum();
        exps /= z;
        exps
    }

    pub fn action_prob(&self, state: usize, action: usize) -> f64 {
        self.action_probs(state)[action]
    }

    pub fn sample_action(&self, state: usize, rng: &mut dyn RngCore) -> usize {
        let probs = self.action_probs(state);
        let u: f64 = rand::Rng::random(rng);
        let mut acc = 0.0;
        for a in 0..probs.len() {
            acc += probs[a];
            if u < acc {
                return a;
            }
        }
        probs.len() - 1
    }

    /// Gradient of `log pi(action | state)` with respect to `theta`.
    ///
    /// Only row `state` is non-zero: `(1{b = action} - pi(b|state)) / temperature`.
    pub fn grad_log_prob(&self, state: usize, action: usize) -> DMatrix<f64> {
        let mut grad = DMatrix::zeros(self.n_states(), self.n_actions());
        let probs = self.action_probs(state);
        for b in 0..self.n_actions() {
            let indicator = if b == action { 1.0 } else { 0.0 };
            grad[(state, b)] = (indicator - probs[b]) / self.temperature;
        }
        grad
    }

    /// Mean Shannon entropy over a multiset of visited states, with its exact
    /// gradient with respect to `theta`.
    ///
    /// For one state, `dH/dtheta[s,b] = -pi(b|s) (ln pi(b|s) + H(s)) / temperature`.
    pub fn entropy(&self, states: &[usize]) -> Result<(f64, DMatrix<f64>)> {
        if states.is_empty() {
            return Err(SpinError::InvalidArgument(
                "entropy requires a non-empty state multiset".into(),
            ));
        }
        let mut value = 0.0;
        let mut grad = DMatrix::zeros(self.n_states(), self.n_actions());
        let weight = 1.0 / states.len() as f64;
        for &s in states {
            let probs = self.action_probs(s);
            let h: f64 = probs.iter().map(|&p| -p * p.ln()).sum();
            value += weight * h;
            for b in 0..self.n_actions() {
                let p = probs[b];
                grad[(s, b)] += weight * (-p * (p.ln() + h) / self.temperature);
            }
        }
        Ok((value, grad))
    }

    /// Serializes `theta` as a CSV matrix (one row per state).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for s in 0..self.n_states() {
            let row: Vec<String> = (0..self.n_actions())
                .map(|a| format!("{}", self.theta[(s, a)]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses a CSV matrix written by [`SoftmaxPolicy::to_csv`]; temperature is 1.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let row: Vec<f64> = line
                .split(',')
                .map(|v| {
                    v.trim().parse::<f64>().map_err(|e| {
                        SpinError::InvalidArgument(format!("policy CSV line {}: {e}", i + 1))
                    })
                })
                .collect::<Result<_>>()?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(SpinError::InvalidArgument(format!(
                        "policy CSV line {}: expected {} columns, got {}",
                        i + 1,
                        first.len(),
                        row.len()
                    )));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(SpinError::InvalidArgument("empty policy CSV".into()));
        }
        let theta = DMatrix::from_fn(rows.len(), rows[0].len(), |s, a| rows[s][a]);
        Self::from_theta(theta)
    }
}

//! Non-stationary environment simulation with exact performance oracles.
//!
//! An environment is an immutable description of a stochastic sequence of
//! stationary MDPs sharing states, actions, discount and start distribution.
//! Rollouts take an explicit RNG, so concurrent rollouts with independent
//! streams are safe.

use nalgebra::DVector;
use rand::{Rng, RngCore};

use crate::error::{Result, SpinError};
use crate::policy::SoftmaxPolicy;

const TRANSITION_SUM_TOL: f64 = 1e-12;

/// One logged interaction step.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    /// Probability the acting (behavior) policy assigned to `action`.
    pub behavior_prob: f64,
    pub reward: f64,
}

/// One episode's trajectory, tagged with its episode index (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub episode: usize,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn discounted_return(&self, gamma: f64) -> f64 {
        let mut total = 0.0;
        let mut discount = 1.0;
        for step in &self.steps {
            total += discount * step.reward;
            discount *= gamma;
        }
        total
    }
}

/// A simulated non-stationary decision problem.
///
/// `true_performance` and `optimal_performance` are exact oracles (dynamic
/// programming or closed form), used by evaluation code only — the learning
/// loop never touches them.
pub trait Env: Send + Sync {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn gamma(&self) -> f64;
    fn r_max(&self) -> f64;

    /// Runs one episode under `policy`, recording the acting probabilities.
    fn rollout(
        &self,
        policy: &SoftmaxPolicy,
        episode: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Trajectory>;

    /// Exact expected discounted return of `policy` for `episode`.
    fn true_performance(&self, policy: &SoftmaxPolicy, episode: usize) -> Result<f64>;

    /// Exact expected discounted return of the best policy for `episode`.
    fn optimal_performance(&self, episode: usize) -> Result<f64>;
}

fn check_full_support(policy: &SoftmaxPolicy, episode: usize) -> Result<()> {
    for s in 0..policy.n_states() {
        let probs = policy.action_probs(s);
        for a in 0..policy.n_actions() {
            if !(probs[a] > 0.0) {
                return Err(SpinError::FullSupport {
                    episode,
                    step: 0,
                    prob: probs[a],
                });
            }
        }
    }
    Ok(())
}

fn sample_categorical(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Zero-mean truncated-uniform reward noise with the given half width.
fn sample_noise(half_width: f64, rng: &mut dyn RngCore) -> f64 {
    if half_width == 0.0 {
        0.0
    } else {
        rng.random_range(-half_width..half_width)
    }
}

// ---------------------------------------------------------------------------
// Finite tabular NS-MDP
// ---------------------------------------------------------------------------

type TransitionFn = dyn Fn(usize, usize, usize) -> Vec<f64> + Send + Sync;
type MeanRewardFn = dyn Fn(usize, usize, usize) -> f64 + Send + Sync;

/// Finite-horizon tabular NS-MDP. Transitions and mean rewards are functions
/// of the episode index, so drift is described once and queried lazily.
pub struct TabularNSMDP {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    r_max: f64,
    start_dist: Vec<f64>,
    horizon: usize,
    /// Half width of the zero-mean truncated-uniform reward noise.
    reward_noise_half_width: f64,
    transition_fn: Box<TransitionFn>,
    mean_reward_fn: Box<MeanRewardFn>,
}

impl TabularNSMDP {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        r_max: f64,
        start_dist: Vec<f64>,
        horizon: usize,
        reward_noise_half_width: f64,
        transition_fn: Box<TransitionFn>,
        mean_reward_fn: Box<MeanRewardFn>,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(SpinError::GammaDomain(gamma));
        }
        if !(r_max > 0.0) {
            return Err(SpinError::InvalidArgument(format!(
                "r_max must be positive, got {r_max}"
            )));
        }
        if start_dist.len() != n_states
            || (start_dist.iter().sum::<f64>() - 1.0).abs() > TRANSITION_SUM_TOL
            || start_dist.iter().any(|&p| p < 0.0)
        {
            return Err(SpinError::InvalidArgument(
                "start_dist must be a probability vector over states".into(),
            ));
        }
        if horizon == 0 {
            return Err(SpinError::InvalidArgument("horizon must be >= 1".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            gamma,
            r_max,
            start_dist,
            horizon,
            reward_noise_half_width,
            transition_fn,
            mean_reward_fn,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Transition distribution for (episode, state, action), validated.
    pub fn transition(&self, episode: usize, state: usize, action: usize) -> Result<Vec<f64>> {
        let probs = (self.transition_fn)(episode, state, action);
        let sum: f64 = probs.iter().sum();
        if probs.len() != self.n_states
            || (sum - 1.0).abs() > TRANSITION_SUM_TOL
            || probs.iter().any(|&p| p < 0.0)
        {
            return Err(SpinError::InvalidTransition {
                episode,
                state,
                action,
                sum,
            });
        }
        Ok(probs)
    }

    pub fn mean_reward(&self, episode: usize, state: usize, action: usize) -> f64 {
        (self.mean_reward_fn)(episode, state, action)
    }

    /// Maximum per-(s,a) L1 transition change and absolute mean-reward change
    /// between episodes `k` and `k + 1`.
    pub fn drift_constants(&self, k: usize) -> Result<(f64, f64)> {
        let mut eps_p: f64 = 0.0;
        let mut eps_r: f64 = 0.0;
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let p0 = self.transition(k, s, a)?;
                let p1 = self.transition(k + 1, s, a)?;
                let l1: f64 = p0.iter().zip(&p1).map(|(x, y)| (x - y).abs()).sum();
                eps_p = eps_p.max(l1);
                eps_r = eps_r.max((self.mean_reward(k, s, a) - self.mean_reward(k + 1, s, a)).abs());
            }
        }
        Ok((eps_p, eps_r))
    }

    /// Expected discounted return by finite-horizon dynamic programming.
    fn dp_performance(&self, episode: usize, action_values: impl Fn(usize, &DVector<f64>) -> f64) -> Result<f64> {
        // v holds the value-to-go with t steps remaining.
        let mut v = DVector::zeros(self.n_states);
        for _ in 0..self.horizon {
            let mut next = DVector::zeros(self.n_states);
            for s in 0..self.n_states {
                // q[a] = r(s,a) + gamma * sum_s' P(s'|s,a) v[s']
                let mut q = DVector::zeros(self.n_actions);
                for a in 0..self.n_actions {
                    let probs = self.transition(episode, s, a)?;
                    let cont: f64 = probs.iter().zip(v.iter()).map(|(p, val)| p * val).sum();
                    q[a] = self.mean_reward(episode, s, a) + self.gamma * cont;
                }
                next[s] = action_values(s, &q);
            }
            v = next;
        }
        Ok(self
            .start_dist
            .iter()
            .zip(v.iter())
            .map(|(p, val)| p * val)
            .sum())
    }

    /// The two-state, one-action example environment where the drift bound
    /// holds with exact equality: between episodes 1 and 2 the self-loop
    /// probability drops from 1 to 0.9 and the mean reward from 1 to 0.8.
    pub fn appendix_b() -> Self {
        Self::new(
            2,
            1,
            0.0,
            1.0,
            vec![1.0, 0.0],
            1,
            0.0,
            Box::new(|episode, state, _| {
                if state == 0 && episode >= 2 {
                    vec![0.9, 0.1]
                } else if state == 0 {
                    vec![1.0, 0.0]
                } else {
                    vec![0.0, 1.0]
                }
            }),
            Box::new(|episode, state, _| {
                if state == 0 {
                    if episode >= 2 {
                        0.8
                    } else {
                        1.0
                    }
                } else {
                    0.0
                }
            }),
        )
        .expect("appendix-b environment is statically valid")
    }
}

impl std::fmt::Debug for TabularNSMDP {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TabularNSMDP")
            .field("n_states", &self.n_states)
            .field("n_actions", &self.n_actions)
            .field("gamma", &self.gamma)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl Env for TabularNSMDP {
    fn n_states(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn r_max(&self) -> f64 {
        self.r_max
    }

    fn rollout(
        &self,
        policy: &SoftmaxPolicy,
        episode: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Trajectory> {
        check_full_support(policy, episode)?;
        let mut state = sample_categorical(&self.start_dist, rng);
        let mut steps = Vec::with_capacity(self.horizon);
        for _ in 0..self.horizon {
            let probs = policy.action_probs(state);
            let action = sample_categorical(probs.as_slice(), rng);
            let reward = self.mean_reward(episode, state, action)
                + sample_noise(self.reward_noise_half_width, rng);
            steps.push(Step {
                state,
                action,
                behavior_prob: probs[action],
                reward,
            });
            let next = self.transition(episode, state, action)?;
            state = sample_categorical(&next, rng);
        }
        Ok(Trajectory { episode, steps })
    }

    fn true_performance(&self, policy: &SoftmaxPolicy, episode: usize) -> Result<f64> {
        self.dp_performance(episode, |s, q| {
            let probs = policy.action_probs(s);
            probs.iter().zip(q.iter()).map(|(p, v)| p * v).sum()
        })
    }

    fn optimal_performance(&self, episode: usize) -> Result<f64> {
        self.dp_performance(episode, |_, q| q.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v)))
    }
}

// ---------------------------------------------------------------------------
// Seasonal recommender system
// ---------------------------------------------------------------------------

/// One-step (bandit) recommender whose item rewards drift on a seasonal cycle:
/// the mean reward of item `j` at episode `k` is
/// `base[j] + amplitude[j] * sin(2 pi speed k / season_length + phase[j])`.
/// `speed = 0` makes every item's mean constant across episodes.
#[derive(Debug, Clone)]
pub struct SeasonalRecoSys {
    n_items: usize,
    base_reward: Vec<f64>,
    amplitude: Vec<f64>,
    phase: Vec<f64>,
    speed: u32,
    season_length: usize,
    noise_scale: f64,
}

impl SeasonalRecoSys {
    pub fn new(
        base_reward: Vec<f64>,
        amplitude: Vec<f64>,
        phase: Vec<f64>,
        speed: u32,
        season_length: usize,
        noise_scale: f64,
    ) -> Result<Self> {
        let n_items = base_reward.len();
        if n_items == 0 {
            return Err(SpinError::InvalidArgument("need at least one item".into()));
        }
        if amplitude.len() != n_items || phase.len() != n_items {
            return Err(SpinError::InvalidArgument(
                "base_reward, amplitude and phase must have equal lengths".into(),
            ));
        }
        if amplitude.iter().any(|&a| a < 0.0) {
            return Err(SpinError::InvalidArgument("amplitudes must be >= 0".into()));
        }
        if season_length == 0 {
            return Err(SpinError::InvalidArgument("season_length must be >= 1".into()));
        }
        if noise_scale < 0.0 {
            return Err(SpinError::InvalidArgument("noise_scale must be >= 0".into()));
        }
        Ok(Self {
            n_items,
            base_reward,
            amplitude,
            phase,
            speed,
            season_length,
            noise_scale,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn speed(&self) -> u32 {
        self.speed
    }

    pub fn mean_reward(&self, episode: usize, item: usize) -> f64 {
        let angle = 2.0 * std::f64::consts::PI * self.speed as f64 * episode as f64
            / self.season_length as f64
            + self.phase[item];
        self.base_reward[item] + self.amplitude[item] * angle.sin()
    }

    /// Baseline safe policy: item probability proportional to the item's mean
    /// reward in the first episode.
    pub fn safe_policy(&self) -> Result<SoftmaxPolicy> {
        let rewards: Vec<f64> = (0..self.n_items).map(|j| self.mean_reward(1, j)).collect();
        SoftmaxPolicy::from_action_distribution(&rewards)
    }
}

impl Env for SeasonalRecoSys {
    fn n_states(&self) -> usize {
        1
    }

    fn n_actions(&self) -> usize {
        self.n_items
    }

    fn gamma(&self) -> f64 {
        0.0
    }

    fn r_max(&self) -> f64 {
        (0..self.n_items)
            .map(|j| self.base_reward[j].abs() + self.amplitude[j])
            .fold(0.0, f64::max)
    }

    fn rollout(
        &self,
        policy: &SoftmaxPolicy,
        episode: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Trajectory> {
        check_full_support(policy, episode)?;
        let probs = policy.action_probs(0);
        let action = sample_categorical(probs.as_slice(), rng);
        let reward = self.mean_reward(episode, action) + sample_noise(self.noise_scale, rng);
        Ok(Trajectory {
            episode,
            steps: vec![Step {
                state: 0,
                action,
                behavior_prob: probs[action],
                reward,
            }],
        })
    }

    fn true_performance(&self, policy: &SoftmaxPolicy, episode: usize) -> Result<f64> {
        let probs = policy.action_probs(0);
        Ok((0..self.n_items)
            .map(|j| probs[j] * self.mean_reward(episode, j))
            .sum())
    }

    fn optimal_performance(&self, episode: usize) -> Result<f64> {
        Ok((0..self.n_items)
            .map(|j| self.mean_reward(episode, j))
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

// ---------------------------------------------------------------------------
// Drift bound
// ---------------------------------------------------------------------------

/// Bound on the performance change of any policy across `delta` episodes when
/// per-episode drift is bounded by `eps_p` (L1 on transitions) and `eps_r`
/// (absolute mean reward):
/// `delta * (gamma * r_max * eps_p / (1 - gamma)^2 + eps_r / (1 - gamma))`.
pub fn lipschitz_bound(gamma: f64, r_max: f64, eps_p: f64, eps_r: f64, delta: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(SpinError::GammaDomain(gamma));
    }
    if eps_p < 0.0 || eps_r < 0.0 || r_max < 0.0 {
        return Err(SpinError::InvalidArgument(
            "eps_p, eps_r and r_max must be non-negative".into(),
        ));
    }
    if delta < 1 {
        return Err(SpinError::InvalidArgument("delta must be >= 1".into()));
    }
    let one_minus = 1.0 - gamma;
    Ok(delta as f64 * (gamma * r_max * eps_p / (one_minus * one_minus) + eps_r / one_minus))
}

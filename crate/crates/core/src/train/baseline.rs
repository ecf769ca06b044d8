use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::Result;
use crate::nn::ParamStore;
use crate::policy::PolicyNet;
use crate::scalar::Scalar;

/// Paired rewards of the current policy and the baseline collected during one epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochStats {
    pub policy_rewards: Vec<f64>,
    pub baseline_rewards: Vec<f64>,
}

impl EpochStats {
    pub fn push(&mut self, policy: f64, baseline: f64) {
        self.policy_rewards.push(policy);
        self.baseline_rewards.push(baseline);
    }

    pub fn len(&self) -> usize {
        self.policy_rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policy_rewards.is_empty()
    }

    pub fn differences(&self) -> Vec<f64> {
        self.policy_rewards.iter().zip(&self.baseline_rewards).map(|(p, b)| p - b).collect()
    }

    pub fn mean_policy(&self) -> f64 {
        mean(&self.policy_rewards)
    }

    pub fn mean_baseline(&self) -> f64 {
        mean(&self.baseline_rewards)
    }
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// One-sided p-value for "mean difference > 0". `None` with fewer than two pairs.
///
/// Zero variance is decided by the sign of the mean: positive gives 0, otherwise 1.
pub fn paired_t_test(differences: &[f64]) -> Option<f64> {
    let n = differences.len();
    if n < 2 {
        return None;
    }
    let m = mean(differences);
    let var = differences.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 {
        return Some(if m > 0.0 { 0.0 } else { 1.0 });
    }
    let t = m / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).ok()?;
    Some(1.0 - dist.cdf(t))
}

/// Frozen copy of the policy used for greedy baseline rollouts.
#[derive(Debug, Clone)]
pub struct BaselineState<S> {
    pub net: PolicyNet<S>,
    pub last: EpochStats,
    pub last_p_value: Option<f64>,
}

impl<S: Scalar> BaselineState<S> {
    pub fn new(policy: &PolicyNet<S>) -> Self {
        BaselineState { net: policy.clone(), last: EpochStats::default(), last_p_value: None }
    }

    pub fn params(&self) -> &ParamStore<S> {
        self.net.params()
    }
}

/// Replaces the baseline by the policy when the policy is significantly better.
/// Returns whether the baseline was refreshed.
pub fn baseline_update<S: Scalar>(
    policy: &PolicyNet<S>,
    baseline: &mut BaselineState<S>,
    stats: EpochStats,
    significance: f64,
) -> Result<bool> {
    let p = paired_t_test(&stats.differences());
    let refresh = p.is_some_and(|p| p < significance);
    if refresh {
        baseline.net.params_mut().copy_values_from(policy.params())?;
    }
    baseline.last = stats;
    baseline.last_p_value = p;
    Ok(refresh)
}

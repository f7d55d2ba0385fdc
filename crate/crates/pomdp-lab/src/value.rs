//! Exact and Monte-Carlo policy evaluation.
//!
//! Latent policies are evaluated by occupancy propagation over states.
//! Window policies are evaluated exactly by propagating the joint
//! distribution of `(state, ragged window)` — a sufficient statistic whose
//! per-step support is at most `S * (X * A)^L`; this cost is paid openly, no
//! silent fallback. History policies are evaluated by trajectory
//! enumeration, subject to the enumeration cap.

use crate::model::LayeredPomdp;
use crate::policy::{PolicyRef, WindowKey, WindowPolicy};
use crate::rng::substream;
use crate::trajectory::{enumerate_trajectories_capped, sample_trajectory};
use crate::{Result, DEFAULT_ENUMERATION_CAP};
use rand::Rng;
use std::collections::BTreeMap;

/// How to evaluate a policy's expected total reward.
#[derive(Debug, Clone, Copy)]
pub enum EvalMode {
    Exact,
    MonteCarlo { n: usize, seed: u64 },
}

/// A computed quantity with an optional Monte-Carlo standard error;
/// `stderr` is `None` exactly when the computation was exact.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub stderr: Option<f64>,
    pub n: Option<usize>,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: None,
            n: None,
        }
    }

    pub fn is_exact(&self) -> bool {
        self.stderr.is_none()
    }
}

/// Mean and standard error of a sample.
pub(crate) fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = samples
        .iter()
        .map(|&x| (x - mean) * (x - mean))
        .sum::<f64>()
        / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Expected total reward of a latent Markov policy, by exact occupancy
/// propagation.
pub fn latent_policy_value(model: &LayeredPomdp, policy: &crate::policy::LatentPolicy) -> f64 {
    let mut occupancy = model.init_dist().to_vec();
    let mut total = 0.0;
    for t in 0..model.horizon() {
        for (s, &p) in occupancy.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (a, &pa) in policy.action_dist(t, s).iter().enumerate() {
                total += p * pa * model.reward_at(t, s, a);
            }
        }
        if t + 1 < model.horizon() {
            let mut next = vec![0.0; model.state_count(t + 1)];
            for (s, &p) in occupancy.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for (a, &pa) in policy.action_dist(t, s).iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    for (s_next, &q) in model.trans_row(t + 1, s, a).iter().enumerate() {
                        next[s_next] += p * pa * q;
                    }
                }
            }
            occupancy = next;
        }
    }
    total
}

/// Per-step joint distributions over `(state, window key)` under a window
/// policy, from which both values and occupancies can be read.
pub(crate) fn window_joint_distributions(
    model: &LayeredPomdp,
    policy: &WindowPolicy,
) -> Vec<BTreeMap<(usize, WindowKey), f64>> {
    let horizon = model.horizon();
    let window_len = policy.window_len();
    let include_actions = policy.include_actions();
    let mut joints: Vec<BTreeMap<(usize, WindowKey), f64>> = Vec::with_capacity(horizon);

    let mut current: BTreeMap<(usize, WindowKey), f64> = BTreeMap::new();
    for (s, &ps) in model.init_dist().iter().enumerate() {
        if ps == 0.0 {
            continue;
        }
        for (x, &px) in model.emit_row(0, s).iter().enumerate() {
            if px == 0.0 {
                continue;
            }
            let key = WindowKey {
                obs: vec![x],
                acts: vec![],
            };
            *current.entry((s, key)).or_insert(0.0) += ps * px;
        }
    }
    joints.push(current.clone());

    for t in 1..horizon {
        let mut next: BTreeMap<(usize, WindowKey), f64> = BTreeMap::new();
        for ((s, key), &p) in &current {
            let row = policy.action_dist(model, t - 1, key);
            for (a, &pa) in row.iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (s_next, &q) in model.trans_row(t, *s, a).iter().enumerate() {
                    if q == 0.0 {
                        continue;
                    }
                    for (x_next, &px) in model.emit_row(t, s_next).iter().enumerate() {
                        if px == 0.0 {
                            continue;
                        }
                        let next_key = key.slide(window_len, include_actions, a, x_next);
                        *next.entry((s_next, next_key)).or_insert(0.0) += p * pa * q * px;
                    }
                }
            }
        }
        joints.push(next.clone());
        current = next;
    }
    joints
}

/// Expected total reward of a window policy, by exact propagation of the
/// joint `(state, window)` distribution.
pub fn window_policy_value(model: &LayeredPomdp, policy: &WindowPolicy) -> f64 {
    let joints = window_joint_distributions(model, policy);
    let mut total = 0.0;
    for (t, joint) in joints.iter().enumerate() {
        for ((s, key), &p) in joint {
            if p == 0.0 {
                continue;
            }
            let row = policy.action_dist(model, t, key);
            for (a, &pa) in row.iter().enumerate() {
                total += p * pa * model.reward_at(t, *s, a);
            }
        }
    }
    total
}

/// Evaluates a policy of any class under the default enumeration cap.
pub fn policy_value<'a>(
    model: &LayeredPomdp,
    policy: impl Into<PolicyRef<'a>>,
    mode: EvalMode,
) -> Result<Estimate> {
    policy_value_capped(model, policy, mode, DEFAULT_ENUMERATION_CAP)
}

/// Evaluates a policy of any class.
///
/// Exact mode dispatches on the policy class: occupancy propagation for
/// latent policies, joint `(state, window)` propagation for window policies,
/// and trajectory enumeration (subject to `cap`) for history policies.
pub fn policy_value_capped<'a>(
    model: &LayeredPomdp,
    policy: impl Into<PolicyRef<'a>>,
    mode: EvalMode,
    cap: usize,
) -> Result<Estimate> {
    let policy = policy.into();
    match mode {
        EvalMode::Exact => match policy {
            PolicyRef::Latent(p) => Ok(Estimate::exact(latent_policy_value(model, p))),
            PolicyRef::Window(p) => Ok(Estimate::exact(window_policy_value(model, p))),
            PolicyRef::History(_) => {
                let table = enumerate_trajectories_capped(model, policy, cap)?;
                Ok(Estimate::exact(table.value(model)))
            }
        },
        EvalMode::MonteCarlo { n, seed } => {
            if n == 0 {
                return Err(crate::LabError::InvalidArgument(
                    "Monte-Carlo evaluation needs at least one sample".into(),
                ));
            }
            let mut samples = Vec::with_capacity(n);
            for trial in 0..n {
                let trial_seed = substream(seed, &[trial as u64]).random();
                let tau = sample_trajectory(model, policy, trial_seed)?;
                samples.push(tau.total_reward(model));
            }
            let (mean, stderr) = mean_stderr(&samples);
            Ok(Estimate {
                value: mean,
                stderr: Some(stderr),
                n: Some(n),
            })
        }
    }
}

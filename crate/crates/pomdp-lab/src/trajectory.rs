//! Trajectory sampling and exact enumeration.
//!
//! [`enumerate_trajectories`] materializes the full joint distribution over
//! trajectories under a policy. It is the brute-force oracle everything else
//! is checked against: conditional state distributions read off the table
//! must agree with the belief filter, and table-weighted reward sums must
//! agree with the dynamic-programming evaluators.

use crate::model::LayeredPomdp;
use crate::policy::{PolicyRef, WindowKey};
use crate::rng::{sample_index, substream};
use crate::{LabError, Result, DEFAULT_ENUMERATION_CAP};

/// One realized episode.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Trajectory {
    pub states: Vec<usize>,
    pub obs: Vec<usize>,
    pub actions: Vec<usize>,
}

impl Trajectory {
    /// Rewards are determined by `(s_t, a_t)`; recompute them on demand.
    pub fn rewards(&self, model: &LayeredPomdp) -> Vec<f64> {
        (0..self.states.len())
            .map(|t| model.reward_at(t, self.states[t], self.actions[t]))
            .collect()
    }

    pub fn total_reward(&self, model: &LayeredPomdp) -> f64 {
        self.rewards(model).iter().sum()
    }
}

/// Exact joint distribution over all positive-probability trajectories.
#[derive(Debug, Clone)]
pub struct TrajectoryTable {
    entries: Vec<(Trajectory, f64)>,
}

impl TrajectoryTable {
    pub fn entries(&self) -> &[(Trajectory, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    /// Expected total reward `sum_tau P(tau) * sum_t r_t`.
    pub fn value(&self, model: &LayeredPomdp) -> f64 {
        self.entries
            .iter()
            .map(|(tau, p)| p * tau.total_reward(model))
            .sum()
    }

    /// Probability of the event defined by `pred`.
    pub fn event_probability(&self, pred: impl Fn(&Trajectory) -> bool) -> f64 {
        self.entries
            .iter()
            .filter(|(tau, _)| pred(tau))
            .map(|(_, p)| p)
            .sum()
    }

    /// Marginal distribution of the latent state at step `t`.
    pub fn occupancy(&self, model: &LayeredPomdp, t: usize) -> Vec<f64> {
        let mut out = vec![0.0; model.state_count(t)];
        for (tau, p) in &self.entries {
            out[tau.states[t]] += p;
        }
        out
    }

    /// Conditional distribution of `s_t` given the observable history
    /// `(x_{0..=t}, a_{0..t})`, read directly off the table. Returns `None`
    /// for zero-probability histories.
    pub fn conditional_state_dist(
        &self,
        model: &LayeredPomdp,
        t: usize,
        obs_prefix: &[usize],
        act_prefix: &[usize],
    ) -> Option<Vec<f64>> {
        let mut out = vec![0.0; model.state_count(t)];
        let mut mass = 0.0;
        for (tau, p) in &self.entries {
            if tau.obs[..=t] == *obs_prefix && tau.actions[..t] == *act_prefix {
                out[tau.states[t]] += p;
                mass += p;
            }
        }
        if mass <= 0.0 {
            return None;
        }
        for v in &mut out {
            *v /= mass;
        }
        Some(out)
    }

    /// Conditional distribution of `s_t` given only the ragged window at
    /// step `t`, marginalizing over everything earlier.
    pub fn conditional_state_dist_given_window(
        &self,
        model: &LayeredPomdp,
        t: usize,
        window_len: usize,
        key: &WindowKey,
    ) -> Option<Vec<f64>> {
        let mut out = vec![0.0; model.state_count(t)];
        let mut mass = 0.0;
        for (tau, p) in &self.entries {
            let tau_key = WindowKey::from_history(window_len, true, t, &tau.obs, &tau.actions);
            if tau_key == *key {
                out[tau.states[t]] += p;
                mass += p;
            }
        }
        if mass <= 0.0 {
            return None;
        }
        for v in &mut out {
            *v /= mass;
        }
        Some(out)
    }

    /// Every positive-probability window key at step `t`, with its
    /// probability, in canonical order.
    pub fn window_distribution(
        &self,
        t: usize,
        window_len: usize,
    ) -> Vec<(WindowKey, f64)> {
        let mut map = std::collections::BTreeMap::new();
        for (tau, p) in &self.entries {
            let key = WindowKey::from_history(window_len, true, t, &tau.obs, &tau.actions);
            *map.entry(key).or_insert(0.0) += p;
        }
        map.into_iter().collect()
    }
}

/// Samples one trajectory. Bit-reproducible given the seed; latent policies
/// condition on the current state, executable policies only on the history.
pub fn sample_trajectory<'a>(
    model: &LayeredPomdp,
    policy: impl Into<PolicyRef<'a>>,
    seed: u64,
) -> Result<Trajectory> {
    let policy = policy.into();
    let mut rng = substream(seed, &[]);
    let horizon = model.horizon();
    let mut states = Vec::with_capacity(horizon);
    let mut obs = Vec::with_capacity(horizon);
    let mut actions = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let s = if t == 0 {
            sample_index(&mut rng, model.init_dist())
        } else {
            sample_index(&mut rng, model.trans_row(t, states[t - 1], actions[t - 1]))
        };
        states.push(s);
        let x = sample_index(&mut rng, model.emit_row(t, s));
        obs.push(x);
        let row = policy.action_dist(model, t, s, &obs, &actions)?;
        actions.push(sample_index(&mut rng, &row));
    }
    Ok(Trajectory {
        states,
        obs,
        actions,
    })
}

/// Exhaustively enumerates the trajectory distribution under the default cap.
pub fn enumerate_trajectories<'a>(
    model: &LayeredPomdp,
    policy: impl Into<PolicyRef<'a>>,
) -> Result<TrajectoryTable> {
    enumerate_trajectories_capped(model, policy, DEFAULT_ENUMERATION_CAP)
}

/// Exhaustively enumerates all positive-probability trajectories.
///
/// Errors when the trajectory space `prod_t S_t * X_t * A_t` exceeds `cap`.
pub fn enumerate_trajectories_capped<'a>(
    model: &LayeredPomdp,
    policy: impl Into<PolicyRef<'a>>,
    cap: usize,
) -> Result<TrajectoryTable> {
    let policy = policy.into();
    let required = model.trajectory_space_size();
    if required > cap as u128 {
        return Err(LabError::CapExceeded {
            required,
            cap: cap as u128,
        });
    }

    struct Dfs<'m, 'p> {
        model: &'m LayeredPomdp,
        policy: PolicyRef<'p>,
        states: Vec<usize>,
        obs: Vec<usize>,
        actions: Vec<usize>,
        entries: Vec<(Trajectory, f64)>,
    }

    impl Dfs<'_, '_> {
        fn go(&mut self, t: usize, prob: f64) -> Result<()> {
            if t == self.model.horizon() {
                self.entries.push((
                    Trajectory {
                        states: self.states.clone(),
                        obs: self.obs.clone(),
                        actions: self.actions.clone(),
                    },
                    prob,
                ));
                return Ok(());
            }
            let state_dist: Vec<f64> = if t == 0 {
                self.model.init_dist().to_vec()
            } else {
                self.model
                    .trans_row(t, self.states[t - 1], self.actions[t - 1])
                    .to_vec()
            };
            for (s, &ps) in state_dist.iter().enumerate() {
                if ps == 0.0 {
                    continue;
                }
                self.states.push(s);
                let emit_row = self.model.emit_row(t, s).to_vec();
                for (x, &px) in emit_row.iter().enumerate() {
                    if px == 0.0 {
                        continue;
                    }
                    self.obs.push(x);
                    let row =
                        self.policy
                            .action_dist(self.model, t, s, &self.obs, &self.actions)?;
                    for (a, &pa) in row.iter().enumerate() {
                        if pa == 0.0 {
                            continue;
                        }
                        self.actions.push(a);
                        self.go(t + 1, prob * ps * px * pa)?;
                        self.actions.pop();
                    }
                    self.obs.pop();
                }
                self.states.pop();
            }
            Ok(())
        }
    }

    let mut dfs = Dfs {
        model,
        policy,
        states: Vec::new(),
        obs: Vec::new(),
        actions: Vec::new(),
        entries: Vec::new(),
    };
    dfs.go(0, 1.0)?;
    Ok(TrajectoryTable {
        entries: dfs.entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators;
    use crate::policy::{LatentPolicy, WindowFallback, WindowPolicy};
    use rand::Rng;

    fn uniform_everything(horizon: usize) -> LayeredPomdp {
        let emit = vec![vec![vec![0.5, 0.5]; 2]; horizon];
        let trans = vec![vec![vec![vec![0.5, 0.5]; 2]; 2]; horizon - 1];
        let reward = vec![vec![vec![0.0, 0.0]; 2]; horizon];
        LayeredPomdp::new(vec![0.5, 0.5], trans, emit, reward).unwrap()
    }

    fn greedy_window_policy(model: &LayeredPomdp) -> WindowPolicy {
        // Plays a = last observation; pure window policy with L = 1.
        let mut wp = WindowPolicy::new(model.horizon(), 1, false, WindowFallback::Uniform).unwrap();
        for t in 0..model.horizon() {
            for x in 0..model.obs_count(t) {
                let mut row = vec![0.0; model.action_count(t)];
                row[x.min(model.action_count(t) - 1)] = 1.0;
                wp.insert(
                    t,
                    WindowKey {
                        obs: vec![x],
                        acts: vec![],
                    },
                    row,
                )
                .unwrap();
            }
        }
        wp
    }

    #[test]
    fn uniform_product_has_eight_equal_trajectories() {
        let model = uniform_everything(1);
        let policy = LatentPolicy::uniform(&model);
        let table = enumerate_trajectories(&model, &policy).unwrap();
        assert_eq!(table.len(), 8);
        for (_, p) in table.entries() {
            assert!((p - 0.125).abs() < 1e-12);
        }
        assert!((table.total_probability() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_model_and_policy_yield_one_trajectory() {
        let emit = vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]; 2];
        let trans = vec![vec![
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
        ]];
        let reward = vec![vec![vec![0.5, 0.0], vec![0.0, 0.5]]; 2];
        let model = LayeredPomdp::new(vec![1.0, 0.0], trans, emit, reward).unwrap();
        let policy = LatentPolicy::from_choices(&model, &[vec![0, 1], vec![0, 1]]).unwrap();
        let table = enumerate_trajectories(&model, &policy).unwrap();
        assert_eq!(table.len(), 1);
        assert!((table.entries()[0].1 - 1.0).abs() < 1e-12);
        // Same uniqueness through the sampler, for any seed.
        let a = sample_trajectory(&model, &policy, 1).unwrap();
        let b = sample_trajectory(&model, &policy, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, table.entries()[0].0);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let model = generators::gen_lower_bound(0.1, 4).unwrap();
        let policy = LatentPolicy::uniform(&model);
        let a = sample_trajectory(&model, &policy, 42).unwrap();
        let b = sample_trajectory(&model, &policy, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_trajectory(&model, &policy, 43).unwrap();
        assert!(a != c || model.horizon() == 0);
    }

    #[test]
    fn reward_identity_holds_on_sampled_trajectories() {
        let model = generators::gen_lower_bound(0.2, 3).unwrap();
        let policy = LatentPolicy::uniform(&model);
        for seed in 0..50 {
            let tau = sample_trajectory(&model, &policy, seed).unwrap();
            for (t, &r) in tau.rewards(&model).iter().enumerate() {
                assert_eq!(r, model.reward_at(t, tau.states[t], tau.actions[t]));
            }
        }
    }

    #[test]
    fn lower_bound_mismatch_probability_exact_and_sampled() {
        // P[exists t: x_t != s_t] = 1 - (1-delta)^H.
        let delta = 0.1;
        let model = generators::gen_lower_bound(delta, 2).unwrap();
        let expert = crate::planning::latent_optimal(&model).policy;
        let table = enumerate_trajectories(&model, &expert).unwrap();
        let mismatch = table.event_probability(|tau| {
            tau.states.iter().zip(&tau.obs).any(|(s, x)| s != x)
        });
        assert!((mismatch - 0.19).abs() < 1e-12);

        // Monte-Carlo agreement within 3 standard errors.
        let n = 100_000u64;
        let mut hits = 0usize;
        for i in 0..n {
            let tau = sample_trajectory(&model, &expert, crate::rng::substream(7, &[i]).random())
                .unwrap();
            if tau.states.iter().zip(&tau.obs).all(|(s, x)| s == x) {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        let p = 0.81;
        let stderr = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (freq - p).abs() <= 3.0 * stderr,
            "freq {freq} vs {p} +- {stderr}"
        );
    }

    #[test]
    fn cap_is_enforced() {
        let model = uniform_everything(4);
        let policy = LatentPolicy::uniform(&model);
        match enumerate_trajectories_capped(&model, &policy, 100) {
            Err(LabError::CapExceeded { required, cap }) => {
                assert_eq!(required, 8u128.pow(4));
                assert_eq!(cap, 100);
            }
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn conditional_state_dist_matches_hand_computation() {
        // Lower-bound instance at H=1: belief after observing x is
        // (1-delta) on x.
        let delta = 0.3;
        let model = generators::gen_lower_bound(delta, 2).unwrap();
        let wp = greedy_window_policy(&model);
        let table = enumerate_trajectories(&model, &wp).unwrap();
        let cond = table
            .conditional_state_dist(&model, 0, &[1], &[])
            .unwrap();
        assert!((cond[1] - (1.0 - delta)).abs() < 1e-12);
        assert!(table.conditional_state_dist(&model, 0, &[5], &[]).is_none());
    }
}

//! Expert distillation: imitating a privileged latent policy with an
//! executable window policy.
//!
//! Three distillers are provided. [`forward_population`] is the
//! infinite-sample limit of the non-stationary forward imitation procedure
//! with trailing random actions: step `t`'s row composes the expert with
//! the windowed posterior whose prior is the exact state occupancy at the
//! window start under the already-built prefix. [`forward_finite`] is the
//! same procedure with `n` rollouts per step and empirical rows.
//! [`behavior_cloning`] fits rows offline from full expert trajectories;
//! conditioning on the expert's own past actions (`include_actions`) is the
//! latching ingredient, so the default mirrors observation-only stacking.

use crate::belief::{belief_for_window, Belief};
use crate::model::LayeredPomdp;
use crate::planning::compose_rows;
use crate::policy::{
    window_keys_for_step, LatentPolicy, PolicyRef, WindowFallback, WindowKey, WindowPolicy,
};
use crate::rng::{sample_index, substream};
use crate::value::window_joint_distributions;
use crate::{LabError, Result};
use std::collections::BTreeMap;

/// Exact state occupancies per step under a window policy.
pub fn window_policy_occupancies(model: &LayeredPomdp, policy: &WindowPolicy) -> Vec<Vec<f64>> {
    window_joint_distributions(model, policy)
        .iter()
        .enumerate()
        .map(|(t, joint)| {
            let mut occ = vec![0.0; model.state_count(t)];
            for ((s, _), &p) in joint {
                occ[*s] += p;
            }
            occ
        })
        .collect()
}

/// The population (infinite-sample) forward distillation of `expert` into
/// an `L`-step window policy.
///
/// Rows are built in increasing `t`. For windows covering the whole history
/// the row is `expert` composed with the exact posterior; otherwise it is
/// `expert` composed with the windowed posterior whose prior is the exact
/// occupancy at step `t - L` under the already-built prefix (occupancies at
/// the window start are unaffected by the later trailing actions). Windows
/// that are impossible under that prior fall back to the uniform row.
pub fn forward_population(
    model: &LayeredPomdp,
    expert: &LatentPolicy,
    window_len: usize,
) -> Result<WindowPolicy> {
    let horizon = model.horizon();
    let mut wp = WindowPolicy::new(horizon, window_len, true, WindowFallback::Uniform)?;

    // Joint (state, window) distribution under the policy built so far,
    // advanced one step at a time.
    let mut joint: BTreeMap<(usize, WindowKey), f64> = BTreeMap::new();
    let mut occupancies: Vec<Vec<f64>> = Vec::with_capacity(horizon);

    for t in 0..horizon {
        if t == 0 {
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
                    *joint.entry((s, key)).or_insert(0.0) += ps * px;
                }
            }
        } else {
            let mut next: BTreeMap<(usize, WindowKey), f64> = BTreeMap::new();
            for ((s, key), &p) in &joint {
                let row = wp.action_dist(model, t - 1, key);
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
                            let next_key = key.slide(window_len, true, a, x_next);
                            *next.entry((s_next, next_key)).or_insert(0.0) += p * pa * q * px;
                        }
                    }
                }
            }
            joint = next;
        }
        let mut occ = vec![0.0; model.state_count(t)];
        for ((s, _), &p) in &joint {
            occ[*s] += p;
        }
        occupancies.push(occ);

        let prior = if t >= window_len {
            Belief::new(t - window_len, occupancies[t - window_len].clone())?
        } else {
            Belief::uniform(model, 0) // unused: windows cover the history
        };
        for key in window_keys_for_step(model, window_len, true, t) {
            match belief_for_window(model, t, &key, &prior) {
                Ok(b) => {
                    let row = compose_rows(&b, expert, t, model.action_count(t));
                    wp.insert(t, key, row)?;
                }
                Err(LabError::ImpossibleObservation { .. })
                | Err(LabError::ImpossibleHistory { .. }) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(wp)
}

/// One finite-sample rollout for the forward procedure: follow `built` up
/// to step `cutoff`, then uniform actions; stop after observing step
/// `t_target` and return the trajectory so far.
fn forward_rollout(
    model: &LayeredPomdp,
    built: &WindowPolicy,
    cutoff: usize,
    t_target: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut states = Vec::with_capacity(t_target + 1);
    let mut obs = Vec::with_capacity(t_target + 1);
    let mut actions = Vec::with_capacity(t_target);
    for t in 0..=t_target {
        let s = if t == 0 {
            sample_index(rng, model.init_dist())
        } else {
            sample_index(rng, model.trans_row(t, states[t - 1], actions[t - 1]))
        };
        states.push(s);
        obs.push(sample_index(rng, model.emit_row(t, s)));
        if t == t_target {
            break;
        }
        let a_count = model.action_count(t);
        let a = if t < cutoff {
            let key = built.key_for(t, &obs, &actions);
            sample_index(rng, &built.action_dist(model, t, &key))
        } else {
            sample_index(rng, &vec![1.0 / a_count as f64; a_count])
        };
        actions.push(a);
    }
    (states, obs, actions)
}

/// Finite-sample forward distillation.
///
/// For each step `t`, rolls `n_per_step` trajectories that follow the
/// already-built prefix and then play uniformly random actions for the last
/// `L` steps, and sets the row at each visited window to the empirical
/// distribution of expert labels (the expert's sampled action at the true
/// state). Unvisited windows fall back to the uniform row. Reproducible
/// given the seed.
pub fn forward_finite(
    model: &LayeredPomdp,
    expert: &LatentPolicy,
    window_len: usize,
    n_per_step: usize,
    seed: u64,
) -> Result<WindowPolicy> {
    let horizon = model.horizon();
    let mut wp = WindowPolicy::new(horizon, window_len, true, WindowFallback::Uniform)?;
    for t in 0..horizon {
        let cutoff = (t + 1).saturating_sub(window_len + 1);
        let mut counts: BTreeMap<WindowKey, Vec<f64>> = BTreeMap::new();
        for i in 0..n_per_step {
            let mut rng = substream(seed, &[0x46, t as u64, i as u64]);
            let (states, obs, actions) = forward_rollout(model, &wp, cutoff, t, &mut rng);
            let key = WindowKey::from_history(window_len, true, t, &obs, &actions);
            let label = sample_index(&mut rng, expert.action_dist(t, states[t]));
            counts
                .entry(key)
                .or_insert_with(|| vec![0.0; model.action_count(t)])[label] += 1.0;
        }
        for (key, mut row) in counts {
            let total: f64 = row.iter().sum();
            for v in &mut row {
                *v /= total;
            }
            wp.insert(t, key, row)?;
        }
    }
    Ok(wp)
}

/// Offline behavior cloning: collect `n_trajectories` full episodes under
/// the expert (acting on the true latent state) and fit the empirical
/// conditional distribution of the taken action given the ragged window.
/// With `include_actions` the window key also carries the expert's own past
/// actions. Unvisited windows fall back to the uniform row.
pub fn behavior_cloning(
    model: &LayeredPomdp,
    expert: &LatentPolicy,
    window_len: usize,
    n_trajectories: usize,
    include_actions: bool,
    seed: u64,
) -> Result<WindowPolicy> {
    let horizon = model.horizon();
    let mut wp = WindowPolicy::new(horizon, window_len, include_actions, WindowFallback::Uniform)?;
    let mut counts: Vec<BTreeMap<WindowKey, Vec<f64>>> = vec![BTreeMap::new(); horizon];
    for i in 0..n_trajectories {
        let trial_seed = {
            use rand::Rng;
            substream(seed, &[0x42, i as u64]).random()
        };
        let tau = crate::trajectory::sample_trajectory(model, PolicyRef::Latent(expert), trial_seed)?;
        for t in 0..horizon {
            let key =
                WindowKey::from_history(window_len, include_actions, t, &tau.obs, &tau.actions);
            counts[t]
                .entry(key)
                .or_insert_with(|| vec![0.0; model.action_count(t)])[tau.actions[t]] += 1.0;
        }
    }
    for (t, step_counts) in counts.into_iter().enumerate() {
        for (key, mut row) in step_counts {
            let total: f64 = row.iter().sum();
            for v in &mut row {
                *v /= total;
            }
            wp.insert(t, key, row)?;
        }
    }
    Ok(wp)
}

/// Largest total-variation gap between two window policies' rows over the
/// positive-probability windows of `reference` (probability-weighted
/// support under exact propagation).
pub fn max_reachable_window_tv(
    model: &LayeredPomdp,
    reference: &WindowPolicy,
    candidate: &WindowPolicy,
) -> f64 {
    let joints = window_joint_distributions(model, reference);
    let mut worst = 0.0f64;
    for (t, joint) in joints.iter().enumerate() {
        let mut windows: BTreeMap<&WindowKey, f64> = BTreeMap::new();
        for ((_, key), &p) in joint {
            *windows.entry(key).or_insert(0.0) += p;
        }
        for (key, p) in windows {
            if p <= 0.0 {
                continue;
            }
            let a = reference.action_dist(model, t, key);
            let b = candidate.action_dist(model, t, key);
            let tv = 0.5
                * a.iter()
                    .zip(&b)
                    .map(|(&x, &y)| (x - y).abs())
                    .sum::<f64>();
            worst = worst.max(tv);
        }
    }
    worst
}

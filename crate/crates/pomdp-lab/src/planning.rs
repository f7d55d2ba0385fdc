//! Finite-horizon planners and frame-stacked baselines.
//!
//! All planners break ties toward the lowest action index, so equal inputs
//! produce identical policy tables.

use crate::belief::{belief_for_window, initial_belief, belief_update, Belief};
use crate::model::LayeredPomdp;
use crate::policy::{
    window_keys_for_step, HistoryPolicy, LatentPolicy, WindowFallback, WindowKey, WindowPolicy,
};
use crate::rng::{sample_index, substream};
use crate::{LabError, Result, DEFAULT_ENUMERATION_CAP};
use std::collections::BTreeMap;

/// Index of the maximal entry, lowest index first on ties.
pub(crate) fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// A solved latent MDP: the deterministic optimal policy with its value and
/// action-value tables.
#[derive(Debug, Clone)]
pub struct LatentSolution {
    pub policy: LatentPolicy,
    /// `values[t][s]` — optimal value-to-go.
    pub values: Vec<Vec<f64>>,
    /// `q[t][s][a]` — optimal action values.
    pub q: Vec<Vec<Vec<f64>>>,
}

impl LatentSolution {
    /// Optimal value of the latent MDP from the initial distribution.
    pub fn initial_value(&self, model: &LayeredPomdp) -> f64 {
        model
            .init_dist()
            .iter()
            .zip(&self.values[0])
            .map(|(&p, &v)| p * v)
            .sum()
    }
}

fn backward_induction(
    horizon: usize,
    state_count: impl Fn(usize) -> usize,
    action_count: impl Fn(usize) -> usize,
    reward: impl Fn(usize, usize, usize) -> f64,
    trans_row: impl Fn(usize, usize, usize) -> Vec<f64>,
) -> LatentSolution {
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    let mut q: Vec<Vec<Vec<f64>>> = vec![Vec::new(); horizon];
    let mut choices: Vec<Vec<usize>> = vec![Vec::new(); horizon];
    for t in (0..horizon).rev() {
        let s_count = state_count(t);
        let a_count = action_count(t);
        let mut v_t = vec![0.0; s_count];
        let mut q_t = vec![vec![0.0; a_count]; s_count];
        let mut c_t = vec![0usize; s_count];
        for s in 0..s_count {
            for a in 0..a_count {
                let mut val = reward(t, s, a);
                if t + 1 < horizon {
                    for (s_next, &p) in trans_row(t + 1, s, a).iter().enumerate() {
                        if p > 0.0 {
                            val += p * values[t + 1][s_next];
                        }
                    }
                }
                q_t[s][a] = val;
            }
            let best = argmax_lowest(&q_t[s]);
            v_t[s] = q_t[s][best];
            c_t[s] = best;
        }
        values[t] = v_t;
        q[t] = q_t;
        choices[t] = c_t;
    }
    let act = choices
        .iter()
        .enumerate()
        .map(|(t, per_state)| {
            per_state
                .iter()
                .map(|&a| {
                    let mut row = vec![0.0; action_count(t)];
                    row[a] = 1.0;
                    row
                })
                .collect()
        })
        .collect();
    LatentSolution {
        policy: LatentPolicy::new(act).expect("point-mass rows are valid"),
        values,
        q,
    }
}

/// Optimal deterministic policy of the latent MDP, by backward induction.
pub fn latent_optimal(model: &LayeredPomdp) -> LatentSolution {
    backward_induction(
        model.horizon(),
        |t| model.state_count(t),
        |t| model.action_count(t),
        |t, s, a| model.reward_at(t, s, a),
        |t, s, a| model.trans_row(t, s, a).to_vec(),
    )
}

/// Optimal policy of the latent MDP with motor noise: with probability
/// `eta` the chosen action is replaced by a uniformly random one before it
/// affects transitions and rewards. The returned policy is for the original
/// action interface; its value tables refer to the noisy MDP.
pub fn smoothed_latent_optimal(model: &LayeredPomdp, eta: f64) -> Result<LatentSolution> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(LabError::InvalidArgument(format!(
            "eta {eta} outside [0, 1]"
        )));
    }
    let smoothed_reward = |t: usize, s: usize, a: usize| {
        let a_count = model.action_count(t);
        let avg: f64 = (0..a_count)
            .map(|a2| model.reward_at(t, s, a2))
            .sum::<f64>()
            / a_count as f64;
        (1.0 - eta) * model.reward_at(t, s, a) + eta * avg
    };
    let smoothed_row = |t: usize, s: usize, a: usize| {
        let a_count = model.action_count(t - 1);
        let n = model.state_count(t);
        let mut row = vec![0.0; n];
        for a2 in 0..a_count {
            let w = if a2 == a { 1.0 - eta } else { 0.0 } + eta / a_count as f64;
            for (s_next, &p) in model.trans_row(t, s, a2).iter().enumerate() {
                row[s_next] += w * p;
            }
        }
        row
    };
    Ok(backward_induction(
        model.horizon(),
        |t| model.state_count(t),
        |t| model.action_count(t),
        smoothed_reward,
        smoothed_row,
    ))
}

/// Composes a latent expert with the exact belief filter: the resulting
/// history policy plays `sum_s b_t(s) * expert(a | s)`.
pub fn compose_with_true_belief(model: &LayeredPomdp, expert: &LatentPolicy) -> HistoryPolicy {
    let model = model.clone();
    let expert = expert.clone();
    HistoryPolicy::new(move |t, obs_hist, act_hist| {
        let b = crate::belief::true_belief(&model, &obs_hist[..=t], &act_hist[..t])?;
        Ok(compose_rows(&b, &expert, t, model.action_count(t)))
    })
}

pub(crate) fn compose_rows(
    belief: &Belief,
    expert: &LatentPolicy,
    t: usize,
    action_count: usize,
) -> Vec<f64> {
    let mut row = vec![0.0; action_count];
    for (s, &p) in belief.probs().iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        for (a, &pa) in expert.action_dist(t, s).iter().enumerate() {
            row[a] += p * pa;
        }
    }
    row
}

/// Composes a latent expert with windowed beliefs into an `L`-step window
/// policy. `priors[k]` is the prior over states at step `k` used for windows
/// starting there; windows that cover the whole history use the exact
/// filter instead. Windows that are impossible under the prior get the
/// uniform row.
pub fn compose_with_approx_belief(
    model: &LayeredPomdp,
    expert: &LatentPolicy,
    window_len: usize,
    priors: &[Belief],
) -> Result<WindowPolicy> {
    let horizon = model.horizon();
    let mut wp = WindowPolicy::new(horizon, window_len, true, WindowFallback::Uniform)?;
    for t in 0..horizon {
        let prior = if t >= window_len {
            let k = t - window_len;
            let p = priors.get(k).ok_or_else(|| {
                LabError::InvalidArgument(format!("missing prior for window start step {k}"))
            })?;
            if p.step() != k {
                return Err(LabError::InvalidArgument(format!(
                    "prior at index {k} is tagged step {}",
                    p.step()
                )));
            }
            p.clone()
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
                | Err(LabError::ImpossibleHistory { .. }) => {
                    // Unreachable window: leave it to the uniform fallback.
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(wp)
}

/// A solved executable-policy optimum.
#[derive(Debug)]
pub struct ExecutableSolution {
    pub policy: HistoryPolicy,
    pub value: f64,
}

/// Exact optimum over all history policies, by backward induction on
/// reachable beliefs, under the default enumeration cap.
pub fn optimal_executable(model: &LayeredPomdp) -> Result<ExecutableSolution> {
    optimal_executable_capped(model, DEFAULT_ENUMERATION_CAP)
}

/// Exact optimum over all history policies.
///
/// Recurses over every positive-probability history (all actions branch,
/// observations with positive predictive probability branch), so the policy
/// table is total on reachable histories. Errors when the history count
/// exceeds `cap`.
pub fn optimal_executable_capped(model: &LayeredPomdp, cap: usize) -> Result<ExecutableSolution> {
    let required = model.history_space_size();
    if required > cap as u128 {
        return Err(LabError::CapExceeded {
            required,
            cap: cap as u128,
        });
    }

    struct Solver<'m> {
        model: &'m LayeredPomdp,
        table: BTreeMap<(usize, Vec<usize>, Vec<usize>), Vec<f64>>,
        obs_hist: Vec<usize>,
        act_hist: Vec<usize>,
    }

    impl Solver<'_> {
        /// Value-to-go after observing `x_t`, with posterior `belief`.
        fn solve(&mut self, t: usize, belief: &Belief) -> f64 {
            let a_count = self.model.action_count(t);
            let mut q = vec![0.0; a_count];
            for a in 0..a_count {
                let mut val = 0.0;
                for (s, &p) in belief.probs().iter().enumerate() {
                    val += p * self.model.reward_at(t, s, a);
                }
                if t + 1 < self.model.horizon() {
                    let pushed = self.model.push_state_dist(t + 1, belief.probs(), a);
                    let obs_dist = self.model.obs_dist(t + 1, &pushed);
                    for (x_next, &px) in obs_dist.iter().enumerate() {
                        if px == 0.0 {
                            continue;
                        }
                        let next_belief = belief_update(self.model, belief, a, x_next)
                            .expect("positive predictive probability");
                        self.obs_hist.push(x_next);
                        self.act_hist.push(a);
                        val += px * self.solve(t + 1, &next_belief);
                        self.act_hist.pop();
                        self.obs_hist.pop();
                    }
                }
                q[a] = val;
            }
            let best = argmax_lowest(&q);
            let mut row = vec![0.0; a_count];
            row[best] = 1.0;
            self.table.insert(
                (t, self.obs_hist.clone(), self.act_hist.clone()),
                row,
            );
            q[best]
        }
    }

    let mut solver = Solver {
        model,
        table: BTreeMap::new(),
        obs_hist: Vec::new(),
        act_hist: Vec::new(),
    };
    let prior = Belief::new(0, model.init_dist().to_vec())?;
    let first_obs = model.obs_dist(0, prior.probs());
    let mut value = 0.0;
    for (x, &px) in first_obs.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        let belief = initial_belief(model, x)?;
        solver.obs_hist.push(x);
        value += px * solver.solve(0, &belief);
        solver.obs_hist.pop();
    }
    Ok(ExecutableSolution {
        policy: HistoryPolicy::from_table(solver.table),
        value,
    })
}

/// Plans on the frame-stack surrogate MDP under the default cap.
pub fn framestack_plan(model: &LayeredPomdp, window_len: usize) -> Result<WindowPolicy> {
    framestack_plan_capped(model, window_len, DEFAULT_ENUMERATION_CAP)
}

/// Treats the ragged window as a Markov state: the surrogate belief for a
/// window is the windowed posterior with uniform prior at the window start,
/// the surrogate reward is the belief-averaged reward, and the surrogate
/// next-observation kernel pushes the surrogate belief through the model.
/// Backward induction on this surrogate yields an executable window policy;
/// its value on the true model is obtained separately by exact evaluation.
///
/// Errors when the total number of windows exceeds `cap`.
pub fn framestack_plan_capped(
    model: &LayeredPomdp,
    window_len: usize,
    cap: usize,
) -> Result<WindowPolicy> {
    if window_len == 0 {
        return Err(LabError::InvalidArgument(
            "window length must be at least 1".into(),
        ));
    }
    let horizon = model.horizon();
    let mut total_windows: u128 = 0;
    for t in 0..horizon {
        let mut count: u128 = 1;
        let n_obs = window_len.min(t + 1);
        for u in t + 1 - n_obs..=t {
            count = count.saturating_mul(model.obs_count(u) as u128);
        }
        let n_acts = window_len.min(t);
        for u in t - n_acts..t {
            count = count.saturating_mul(model.action_count(u) as u128);
        }
        total_windows = total_windows.saturating_add(count);
    }
    if total_windows > cap as u128 {
        return Err(LabError::CapExceeded {
            required: total_windows,
            cap: cap as u128,
        });
    }

    // Surrogate beliefs per window; unreachable windows are dropped.
    let mut beliefs: Vec<BTreeMap<WindowKey, Belief>> = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let prior = if t >= window_len {
            Belief::uniform(model, t - window_len)
        } else {
            Belief::uniform(model, 0) // unused for full-history windows
        };
        let mut step_beliefs = BTreeMap::new();
        for key in window_keys_for_step(model, window_len, true, t) {
            match belief_for_window(model, t, &key, &prior) {
                Ok(b) => {
                    step_beliefs.insert(key, b);
                }
                Err(LabError::ImpossibleObservation { .. })
                | Err(LabError::ImpossibleHistory { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        beliefs.push(step_beliefs);
    }

    let mut wp = WindowPolicy::new(horizon, window_len, true, WindowFallback::Uniform)?;
    let mut next_values: BTreeMap<WindowKey, f64> = BTreeMap::new();
    for t in (0..horizon).rev() {
        let mut values: BTreeMap<WindowKey, f64> = BTreeMap::new();
        for (key, belief) in &beliefs[t] {
            let a_count = model.action_count(t);
            let mut q = vec![0.0; a_count];
            for (a, q_a) in q.iter_mut().enumerate() {
                let mut val = 0.0;
                for (s, &p) in belief.probs().iter().enumerate() {
                    val += p * model.reward_at(t, s, a);
                }
                if t + 1 < horizon {
                    let pushed = model.push_state_dist(t + 1, belief.probs(), a);
                    let obs_dist = model.obs_dist(t + 1, &pushed);
                    for (x_next, &px) in obs_dist.iter().enumerate() {
                        if px == 0.0 {
                            continue;
                        }
                        let next_key = key.slide(window_len, true, a, x_next);
                        // Successors of reachable windows are reachable
                        // under the uniform prior, so the lookup succeeds.
                        val += px * next_values.get(&next_key).copied().unwrap_or(0.0);
                    }
                }
                *q_a = val;
            }
            let best = argmax_lowest(&q);
            let mut row = vec![0.0; a_count];
            row[best] = 1.0;
            wp.insert(t, key.clone(), row)?;
            values.insert(key.clone(), q[best]);
        }
        next_values = values;
    }
    Ok(wp)
}

/// Hyperparameters for tabular Q-learning over ragged windows.
///
/// The learning rate for the `k`-th visit to a `(window, action)` pair is
/// `learning_rate / sqrt(k)`; exploration is epsilon-greedy.
#[derive(Debug, Clone, Copy)]
pub struct QLearningConfig {
    pub episodes: usize,
    pub learning_rate: f64,
    pub explore_eps: f64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self {
            episodes: 20_000,
            learning_rate: 0.1,
            explore_eps: 0.1,
        }
    }
}

/// Tabular Q-learning over ragged windows; returns the greedy policy.
/// Windows never visited fall back to the tie-break default (action 0).
/// Reproducible given the seed.
pub fn framestack_q_learning(
    model: &LayeredPomdp,
    window_len: usize,
    config: QLearningConfig,
    seed: u64,
) -> Result<WindowPolicy> {
    if window_len == 0 {
        return Err(LabError::InvalidArgument(
            "window length must be at least 1".into(),
        ));
    }
    let horizon = model.horizon();
    let mut q: Vec<BTreeMap<WindowKey, Vec<f64>>> = vec![BTreeMap::new(); horizon];
    let mut visits: Vec<BTreeMap<WindowKey, Vec<u64>>> = vec![BTreeMap::new(); horizon];

    for episode in 0..config.episodes {
        let mut rng = substream(seed, &[0x51, episode as u64]);
        let mut state = sample_index(&mut rng, model.init_dist());
        let mut x = sample_index(&mut rng, model.emit_row(0, state));
        let mut key = WindowKey {
            obs: vec![x],
            acts: vec![],
        };
        for t in 0..horizon {
            let a_count = model.action_count(t);
            let q_row = q[t]
                .entry(key.clone())
                .or_insert_with(|| vec![0.0; a_count]);
            let explore: f64 = rand::Rng::random(&mut rng);
            let a = if explore < config.explore_eps {
                sample_index(&mut rng, &vec![1.0 / a_count as f64; a_count])
            } else {
                argmax_lowest(q_row)
            };
            let r = model.reward_at(t, state, a);

            let mut target = r;
            let mut next: Option<(usize, WindowKey)> = None;
            if t + 1 < horizon {
                let s_next = sample_index(&mut rng, model.trans_row(t + 1, state, a));
                x = sample_index(&mut rng, model.emit_row(t + 1, s_next));
                let next_key = key.slide(window_len, true, a, x);
                let next_best = q[t + 1]
                    .get(&next_key)
                    .map(|row| row[argmax_lowest(row)])
                    .unwrap_or(0.0);
                target += next_best;
                next = Some((s_next, next_key));
            }

            let visit_row = visits[t]
                .entry(key.clone())
                .or_insert_with(|| vec![0; a_count]);
            visit_row[a] += 1;
            let alpha = config.learning_rate / (visit_row[a] as f64).sqrt();
            let q_row = q[t].get_mut(&key).expect("row was just inserted");
            q_row[a] += alpha * (target - q_row[a]);

            match next {
                Some((s_next, next_key)) => {
                    state = s_next;
                    key = next_key;
                }
                None => break,
            }
        }
    }

    let mut wp = WindowPolicy::new(horizon, window_len, true, WindowFallback::FirstAction)?;
    for (t, step_q) in q.iter().enumerate() {
        for (key, row) in step_q {
            let mut point = vec![0.0; row.len()];
            point[argmax_lowest(row)] = 1.0;
            wp.insert(t, key.clone(), point)?;
        }
    }
    Ok(wp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{self, DynamicsMode, NoiseStyle};
    use crate::policy::PolicyRef;
    use crate::rng::dirichlet_row;
    use crate::value::{latent_policy_value, policy_value, window_policy_value, EvalMode};

    #[test]
    fn latent_optimal_on_lower_bound_matches_state() {
        let model = generators::gen_lower_bound(0.1, 3).unwrap();
        let sol = latent_optimal(&model);
        for t in 0..3 {
            for s in 0..2 {
                assert_eq!(sol.policy.action_choice(t, s), Some(s));
            }
        }
        assert!((sol.initial_value(&model) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_reward_model_ties_to_first_action() {
        let emit = vec![vec![vec![0.5, 0.5]; 2]; 2];
        let trans = vec![vec![vec![vec![0.5, 0.5]; 3]; 2]];
        let reward = vec![vec![vec![0.0; 3]; 2]; 2];
        let model = crate::model::LayeredPomdp::new(vec![0.5, 0.5], trans, emit, reward).unwrap();
        let sol = latent_optimal(&model);
        for t in 0..2 {
            for s in 0..2 {
                assert_eq!(sol.policy.action_choice(t, s), Some(0));
            }
        }
        assert_eq!(sol.initial_value(&model), 0.0);
    }

    #[test]
    fn horizon_one_matches_brute_force_over_deterministic_policies() {
        for seed in 0..10u64 {
            let mut rng = substream(seed, &[7]);
            let s_count = 3;
            let a_count = 3;
            let reward: Vec<Vec<f64>> = (0..s_count)
                .map(|_| dirichlet_row(&mut rng, a_count))
                .collect();
            let emit = vec![(0..s_count).map(|_| vec![1.0]).collect()];
            let model = crate::model::LayeredPomdp::new(
                dirichlet_row(&mut rng, s_count),
                vec![],
                emit,
                vec![reward.clone()],
            )
            .unwrap();
            let sol = latent_optimal(&model);
            let planned = latent_policy_value(&model, &sol.policy);
            // Brute force over all A^S deterministic policies.
            let mut best = f64::NEG_INFINITY;
            for assignment in crate::policy::index_tuples(&vec![a_count; s_count]) {
                let policy =
                    LatentPolicy::from_choices(&model, &[assignment.clone()]).unwrap();
                best = best.max(latent_policy_value(&model, &policy));
            }
            assert!((planned - best).abs() < 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn bellman_residual_is_zero() {
        let (model, _) = generators::gen_perturbed_block(
            3,
            5,
            2,
            4,
            0.1,
            DynamicsMode::Stochastic,
            NoiseStyle::Uniform,
            21,
        )
        .unwrap();
        let sol = latent_optimal(&model);
        for t in 0..model.horizon() {
            for s in 0..model.state_count(t) {
                for a in 0..model.action_count(t) {
                    let mut rhs = model.reward_at(t, s, a);
                    if t + 1 < model.horizon() {
                        for (s2, &p) in model.trans_row(t + 1, s, a).iter().enumerate() {
                            rhs += p * sol.values[t + 1][s2];
                        }
                    }
                    assert!((sol.q[t][s][a] - rhs).abs() < 1e-10);
                }
                let best = sol.q[t][s].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!((sol.values[t][s] - best).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn smoothing_at_zero_is_table_equal() {
        let (model, _) = generators::gen_perturbed_block(
            2,
            4,
            3,
            3,
            0.2,
            DynamicsMode::Stochastic,
            NoiseStyle::Uniform,
            5,
        )
        .unwrap();
        let plain = latent_optimal(&model);
        let smoothed = smoothed_latent_optimal(&model, 0.0).unwrap();
        assert_eq!(plain.policy.tables(), smoothed.policy.tables());
    }

    #[test]
    fn smoothing_at_one_degenerates_to_uniform_value() {
        let (model, _) = generators::gen_perturbed_block(
            2,
            4,
            3,
            3,
            0.2,
            DynamicsMode::Stochastic,
            NoiseStyle::Uniform,
            6,
        )
        .unwrap();
        let smoothed = smoothed_latent_optimal(&model, 1.0).unwrap();
        // All action values coincide, so the tie-break default is played.
        for t in 0..model.horizon() {
            for s in 0..model.state_count(t) {
                assert_eq!(smoothed.policy.action_choice(t, s), Some(0));
            }
        }
        // The smoothed MDP's value equals the uniform policy's value on the
        // original model.
        let uniform_value = latent_policy_value(&model, &LatentPolicy::uniform(&model));
        assert!((smoothed.initial_value(&model) - uniform_value).abs() < 1e-12);
    }

    #[test]
    fn smoothing_toy_experts_behave_as_constructed() {
        let model = generators::gen_smoothing_toy(0.25).unwrap();
        let plain = latent_optimal(&model);
        assert_eq!(plain.policy.action_choice(0, 0), Some(0));
        assert_eq!(plain.policy.action_choice(0, 1), Some(2));
        let smoothed = smoothed_latent_optimal(&model, 0.2).unwrap();
        assert_eq!(smoothed.policy.action_choice(0, 0), Some(2));
        assert_eq!(smoothed.policy.action_choice(0, 1), Some(2));
    }

    #[test]
    fn composed_policy_on_lower_bound_is_worth_0_82() {
        let model = generators::gen_lower_bound(0.1, 2).unwrap();
        let expert = latent_optimal(&model).policy;
        let composed = compose_with_true_belief(&model, &expert);
        let est = policy_value(&model, &composed, EvalMode::Exact).unwrap();
        assert!((est.value - 0.82).abs() < 1e-12);
    }

    #[test]
    fn composed_policy_with_uniform_expert_is_uniform() {
        let model = generators::gen_lower_bound(0.1, 2).unwrap();
        let expert = LatentPolicy::uniform(&model);
        let composed = compose_with_true_belief(&model, &expert);
        let row = composed.action_dist(0, &[1], &[]).unwrap();
        assert_eq!(row, vec![0.5, 0.5]);
    }

    #[test]
    fn composed_policy_on_block_model_matches_expert_value() {
        let (model, _) = generators::gen_perturbed_block(
            3,
            6,
            2,
            3,
            0.0,
            DynamicsMode::Deterministic,
            NoiseStyle::Uniform,
            8,
        )
        .unwrap();
        let expert = latent_optimal(&model).policy;
        let composed = compose_with_true_belief(&model, &expert);
        let expert_value = latent_policy_value(&model, &expert);
        let composed_value = policy_value(&model, &composed, EvalMode::Exact).unwrap().value;
        assert!((expert_value - composed_value).abs() < 1e-9);
    }

    #[test]
    fn approx_composition_with_uniform_priors_reproduces_0_82() {
        let model = generators::gen_lower_bound(0.1, 3).unwrap();
        let expert = latent_optimal(&model).policy;
        let priors: Vec<Belief> = (0..3).map(|t| Belief::uniform(&model, t)).collect();
        let wp = compose_with_approx_belief(&model, &expert, 1, &priors).unwrap();
        let v = window_policy_value(&model, &wp);
        assert!((v - 0.82).abs() < 1e-12);
    }

    #[test]
    fn optimal_executable_lower_bound_is_greedy() {
        let model = generators::gen_lower_bound(0.1, 2).unwrap();
        let sol = optimal_executable(&model).unwrap();
        assert!((sol.value - 0.9).abs() < 1e-12);
        // The policy plays a = x at every reachable history.
        let row = sol.policy.action_dist(0, &[1], &[]).unwrap();
        assert_eq!(row, vec![0.0, 1.0]);
        let row = sol.policy.action_dist(1, &[1, 0], &[1]).unwrap();
        assert_eq!(row, vec![1.0, 0.0]);
    }

    #[test]
    fn optimal_executable_matches_brute_force_at_h2() {
        // Exhaustive search over all deterministic history policies on the
        // lower-bound instance at H = 2.
        let model = generators::gen_lower_bound(0.1, 2).unwrap();
        let sol = optimal_executable(&model).unwrap();

        // Histories at step 0: x0 in {0,1}; at step 1: (x0, a0, x1).
        let mut best = f64::NEG_INFINITY;
        for c0 in crate::policy::index_tuples(&[2, 2]) {
            for c1 in crate::policy::index_tuples(&[2; 8]) {
                let c0 = c0.clone();
                let hp = HistoryPolicy::new(move |t, obs, acts| {
                    let a = if t == 0 {
                        c0[obs[0]]
                    } else {
                        c1[obs[0] * 4 + acts[0] * 2 + obs[1]]
                    };
                    let mut row = vec![0.0, 0.0];
                    row[a] = 1.0;
                    Ok(row)
                });
                let v = policy_value(&model, &hp, EvalMode::Exact).unwrap().value;
                best = best.max(v);
            }
        }
        assert!((sol.value - best).abs() < 1e-9, "{} vs {best}", sol.value);
    }

    #[test]
    fn fully_observed_model_executable_equals_latent() {
        let (model, _) = generators::gen_perturbed_block(
            2,
            4,
            2,
            3,
            0.0,
            DynamicsMode::Stochastic,
            NoiseStyle::Uniform,
            31,
        )
        .unwrap();
        let latent = latent_optimal(&model);
        let exec = optimal_executable(&model).unwrap();
        assert!((exec.value - latent.initial_value(&model)).abs() < 1e-9);
    }

    #[test]
    fn latent_dominates_executable_on_random_instances() {
        for seed in 0..25 {
            let (model, _) = generators::gen_perturbed_block(
                2,
                3,
                2,
                3,
                0.3,
                DynamicsMode::Stochastic,
                NoiseStyle::RandomDirichlet,
                seed,
            )
            .unwrap();
            let latent = latent_optimal(&model).initial_value(&model);
            let exec = optimal_executable(&model).unwrap().value;
            assert!(exec <= latent + 1e-9, "seed {seed}: {exec} > {latent}");
        }
    }

    #[test]
    fn framestack_plan_recovers_latent_value_on_block_model() {
        let (model, _) = generators::gen_perturbed_block(
            3,
            6,
            2,
            4,
            0.0,
            DynamicsMode::Deterministic,
            NoiseStyle::Uniform,
            41,
        )
        .unwrap();
        let wp = framestack_plan(&model, 1).unwrap();
        let latent = latent_optimal(&model).initial_value(&model);
        let v = window_policy_value(&model, &wp);
        assert!((v - latent).abs() < 1e-9, "{v} vs {latent}");
    }

    #[test]
    fn framestack_plan_on_lower_bound_is_greedy() {
        for window_len in 1..=2 {
            let model = generators::gen_lower_bound(0.2, 4).unwrap();
            let wp = framestack_plan(&model, window_len).unwrap();
            let v = window_policy_value(&model, &wp);
            assert!((v - 0.8).abs() < 1e-9, "L={window_len}: {v}");
        }
    }

    #[test]
    fn q_learning_zero_episodes_is_tie_break_default() {
        let model = generators::gen_lower_bound(0.1, 2).unwrap();
        let wp = framestack_q_learning(
            &model,
            1,
            QLearningConfig {
                episodes: 0,
                ..QLearningConfig::default()
            },
            7,
        )
        .unwrap();
        assert_eq!(wp.stored_row_count(), 0);
        // Every window gets the first action.
        let key = WindowKey {
            obs: vec![1],
            acts: vec![],
        };
        assert_eq!(wp.action_dist(&model, 0, &key), vec![1.0, 0.0]);
    }

    #[test]
    fn q_learning_is_reproducible() {
        let model = generators::gen_lower_bound(0.1, 3).unwrap();
        let config = QLearningConfig {
            episodes: 500,
            ..QLearningConfig::default()
        };
        let a = framestack_q_learning(&model, 1, config, 3).unwrap();
        let b = framestack_q_learning(&model, 1, config, 3).unwrap();
        for t in 0..3 {
            let rows_a: Vec<_> = a.rows(t).collect();
            let rows_b: Vec<_> = b.rows(t).collect();
            assert_eq!(rows_a, rows_b);
        }
    }

    #[test]
    fn q_learning_approaches_the_analytic_optimum() {
        // Lower bound: executable optimum is 1 - delta.
        let delta = 0.1;
        let model = generators::gen_lower_bound(delta, 3).unwrap();
        let wp = framestack_q_learning(
            &model,
            1,
            QLearningConfig {
                episodes: 30_000,
                ..QLearningConfig::default()
            },
            11,
        )
        .unwrap();
        let v = window_policy_value(&model, &wp);
        assert!(
            (v - (1.0 - delta)).abs() <= 0.02,
            "learned value {v}, target {}",
            1.0 - delta
        );

        // Decodable block model: Q-learning approaches the latent optimum.
        let (model, _) = generators::gen_perturbed_block(
            2,
            4,
            2,
            3,
            0.0,
            DynamicsMode::Deterministic,
            NoiseStyle::Uniform,
            13,
        )
        .unwrap();
        let latent = latent_optimal(&model).initial_value(&model);
        let wp = framestack_q_learning(
            &model,
            1,
            QLearningConfig {
                episodes: 30_000,
                ..QLearningConfig::default()
            },
            17,
        )
        .unwrap();
        let v = window_policy_value(&model, &wp);
        assert!((v - latent).abs() <= 0.02, "learned {v}, latent {latent}");
    }

    #[test]
    fn policies_are_shape_checked() {
        let model = generators::gen_lower_bound(0.1, 2).unwrap();
        let other = generators::gen_lower_bound(0.1, 3).unwrap();
        let expert = latent_optimal(&other).policy;
        let r = PolicyRef::from(&expert).action_dist(&model, 0, 0, &[0], &[]);
        assert!(matches!(r, Err(LabError::ShapeMismatch(_))));
    }
}

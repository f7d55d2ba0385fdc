//! Error functionals over policies: decodability error, belief contraction
//! error (plain and generalized), action-prediction error, trajectory-level
//! total variation, and suboptimality.
//!
//! Exact modes walk every positive-probability history (weights come from
//! the filter's predictive probabilities), subject to the enumeration cap.
//! Monte-Carlo modes sample trajectories with split seeds and report the
//! sample mean with its standard error.

use crate::belief::{approx_belief, belief_update, initial_belief, l1_dist, true_belief, v_inf, Belief};
use crate::model::LayeredPomdp;
use crate::planning::compose_rows;
use crate::policy::{LatentPolicy, PolicyRef};
use crate::rng::{sample_index, substream};
use crate::trajectory::{enumerate_trajectories_capped, sample_trajectory, Trajectory};
use crate::value::{mean_stderr, policy_value_capped, Estimate, EvalMode};
use crate::{LabError, Result, DEFAULT_ENUMERATION_CAP};
use rand::Rng;
use std::collections::BTreeMap;

/// How to compute a metric.
#[derive(Debug, Clone, Copy)]
pub enum MetricMode {
    Exact,
    MonteCarlo { n: usize, seed: u64 },
}

fn require_executable(policy: PolicyRef<'_>, what: &str) -> Result<()> {
    if !policy.is_executable() {
        return Err(LabError::InvalidArgument(format!(
            "{what} is defined for executable policies; got a latent policy"
        )));
    }
    Ok(())
}

/// Number of histories `(x_{0..=t}, a_{0..t-1})`.
fn history_count(model: &LayeredPomdp, t: usize) -> u128 {
    let mut count: u128 = 1;
    for u in 0..=t {
        count = count.saturating_mul(model.obs_count(u) as u128);
        if u < t {
            count = count.saturating_mul(model.action_count(u) as u128);
        }
    }
    count
}

/// Visits every positive-probability history at depth `t_target` under an
/// executable policy, passing the history, its probability, and the exact
/// posterior.
fn walk_histories<F>(
    model: &LayeredPomdp,
    policy: PolicyRef<'_>,
    t_target: usize,
    cap: usize,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(&[usize], &[usize], f64, &Belief) -> Result<()>,
{
    let required = history_count(model, t_target);
    if required > cap as u128 {
        return Err(LabError::CapExceeded {
            required,
            cap: cap as u128,
        });
    }

    fn go<F>(
        model: &LayeredPomdp,
        policy: PolicyRef<'_>,
        t_target: usize,
        obs_hist: &mut Vec<usize>,
        act_hist: &mut Vec<usize>,
        prob: f64,
        belief: &Belief,
        visit: &mut F,
    ) -> Result<()>
    where
        F: FnMut(&[usize], &[usize], f64, &Belief) -> Result<()>,
    {
        let t = obs_hist.len() - 1;
        if t == t_target {
            return visit(obs_hist, act_hist, prob, belief);
        }
        // Executable policies never read the state; pass a placeholder.
        let row = policy.action_dist(model, t, usize::MAX, obs_hist, act_hist)?;
        for (a, &pa) in row.iter().enumerate() {
            if pa == 0.0 {
                continue;
            }
            let pushed = model.push_state_dist(t + 1, belief.probs(), a);
            let obs_dist = model.obs_dist(t + 1, &pushed);
            for (x_next, &px) in obs_dist.iter().enumerate() {
                if px == 0.0 {
                    continue;
                }
                let next_belief = belief_update(model, belief, a, x_next)?;
                obs_hist.push(x_next);
                act_hist.push(a);
                go(
                    model,
                    policy,
                    t_target,
                    obs_hist,
                    act_hist,
                    prob * pa * px,
                    &next_belief,
                    visit,
                )?;
                act_hist.pop();
                obs_hist.pop();
            }
        }
        Ok(())
    }

    let first_obs = model.obs_dist(0, model.init_dist());
    for (x, &px) in first_obs.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        let belief = initial_belief(model, x)?;
        let mut obs_hist = vec![x];
        let mut act_hist = Vec::new();
        go(
            model,
            policy,
            t_target,
            &mut obs_hist,
            &mut act_hist,
            px,
            &belief,
            &mut visit,
        )?;
    }
    Ok(())
}

fn exact_or_mc<FX, FS>(
    model: &LayeredPomdp,
    policy: PolicyRef<'_>,
    t: usize,
    mode: MetricMode,
    exact: FX,
    per_sample: FS,
) -> Result<Estimate>
where
    FX: FnOnce() -> Result<f64>,
    FS: Fn(&Trajectory) -> Result<f64>,
{
    match mode {
        MetricMode::Exact => Ok(Estimate::exact(exact()?)),
        MetricMode::MonteCarlo { n, seed } => {
            if n == 0 {
                return Err(LabError::InvalidArgument(
                    "Monte-Carlo metrics need at least one sample".into(),
                ));
            }
            let _ = t;
            let mut samples = Vec::with_capacity(n);
            for trial in 0..n {
                let trial_seed = substream(seed, &[trial as u64]).random();
                let tau = sample_trajectory(model, policy, trial_seed)?;
                samples.push(per_sample(&tau)?);
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

/// Expected residual belief mass at step `t` under an executable policy:
/// `E[1 - max_s b_t(s)]`.
pub fn decodability_error(
    model: &LayeredPomdp,
    policy: PolicyRef<'_>,
    t: usize,
    mode: MetricMode,
) -> Result<Estimate> {
    require_executable(policy, "decodability error")?;
    exact_or_mc(
        model,
        policy,
        t,
        mode,
        || {
            let mut total = 0.0;
            walk_histories(model, policy, t, DEFAULT_ENUMERATION_CAP, |_, _, p, b| {
                total += p * v_inf(b);
                Ok(())
            })?;
            Ok(total)
        },
        |tau| {
            let b = true_belief(model, &tau.obs[..=t], &tau.actions[..t])?;
            Ok(v_inf(&b))
        },
    )
}

fn windowed_belief_from_history(
    model: &LayeredPomdp,
    t: usize,
    window_len: usize,
    obs_hist: &[usize],
    act_hist: &[usize],
    prior: &Belief,
) -> Result<Belief> {
    let start = t - window_len;
    debug_assert_eq!(prior.step(), start);
    approx_belief(
        model,
        prior,
        &act_hist[start..t],
        &obs_hist[start + 1..=t],
    )
}

/// Expected L1 gap at step `t` between the exact posterior and the windowed
/// posterior over the last `window_len` steps, with `prior` (default:
/// uniform at the window start). Zero by convention when the window covers
/// the whole history (`t < window_len`).
pub fn belief_contraction_error(
    model: &LayeredPomdp,
    policy: PolicyRef<'_>,
    t: usize,
    window_len: usize,
    prior: Option<&Belief>,
    mode: MetricMode,
) -> Result<Estimate> {
    require_executable(policy, "belief contraction error")?;
    if t < window_len {
        return Ok(Estimate::exact(0.0));
    }
    let start = t - window_len;
    let prior = match prior {
        Some(p) => {
            if p.step() != start {
                return Err(LabError::InvalidArgument(format!(
                    "prior is tagged step {}, window starts at {start}",
                    p.step()
                )));
            }
            p.clone()
        }
        None => Belief::uniform(model, start),
    };
    exact_or_mc(
        model,
        policy,
        t,
        mode,
        || {
            let mut total = 0.0;
            walk_histories(model, policy, t, DEFAULT_ENUMERATION_CAP, |obs, acts, p, b| {
                let apx = windowed_belief_from_history(model, t, window_len, obs, acts, &prior)?;
                total += p * l1_dist(b, &apx);
                Ok(())
            })?;
            Ok(total)
        },
        |tau| {
            let b = true_belief(model, &tau.obs[..=t], &tau.actions[..t])?;
            let apx =
                windowed_belief_from_history(model, t, window_len, &tau.obs, &tau.actions, &prior)?;
            Ok(l1_dist(&b, &apx))
        },
    )
}

/// A generalized contraction measurement together with the prior density
/// ratio that decides whether the corresponding bound is vacuous.
#[derive(Debug, Clone, Copy)]
pub struct ContractionReport {
    pub estimate: Estimate,
    /// `||d_init / d_ref||_inf`; infinite means the bound is vacuous.
    pub prior_ratio: f64,
}

/// Expected L1 gap between windowed posteriors seeded with `d_init` and
/// `d_ref`, over partial rollouts of `window_len` steps started from
/// `s ~ d_init` at step `t - window_len`, with the policy conditioned on
/// the fixed history `(cond_obs, cond_acts)` up to the window start.
pub fn generalized_contraction(
    model: &LayeredPomdp,
    policy: PolicyRef<'_>,
    t: usize,
    window_len: usize,
    d_init: &Belief,
    d_ref: &Belief,
    cond_obs: &[usize],
    cond_acts: &[usize],
    mode: MetricMode,
) -> Result<ContractionReport> {
    require_executable(policy, "generalized belief contraction")?;
    if t < window_len || t >= model.horizon() {
        return Err(LabError::InvalidArgument(format!(
            "need window_len <= t < horizon, got t={t}, window_len={window_len}"
        )));
    }
    let start = t - window_len;
    if d_init.step() != start || d_ref.step() != start {
        return Err(LabError::InvalidArgument(format!(
            "priors must sit at the window start step {start}"
        )));
    }
    if cond_obs.len() != start + 1 || cond_acts.len() != start {
        return Err(LabError::ShapeMismatch(format!(
            "conditioning history must reach step {start}: got {} obs, {} acts",
            cond_obs.len(),
            cond_acts.len()
        )));
    }
    let prior_ratio = crate::belief::density_ratio(d_init, d_ref);

    let estimate = match mode {
        MetricMode::Exact => {
            // Branch over s ~ d_init, then over (action, state, observation)
            // triples for window_len steps; states are latent and integrate
            // out of the L1 term, which depends only on the window.
            fn go(
                model: &LayeredPomdp,
                policy: PolicyRef<'_>,
                t_target: usize,
                state: usize,
                obs_hist: &mut Vec<usize>,
                act_hist: &mut Vec<usize>,
                weight: f64,
                d_init: &Belief,
                d_ref: &Belief,
                total: &mut f64,
            ) -> Result<()> {
                let u = obs_hist.len() - 1;
                if u == t_target {
                    let start = d_init.step();
                    let window_acts = &act_hist[start..t_target];
                    let window_obs = &obs_hist[start + 1..=t_target];
                    let from_init = approx_belief(model, d_init, window_acts, window_obs)?;
                    let from_ref = approx_belief(model, d_ref, window_acts, window_obs)?;
                    *total += weight * l1_dist(&from_init, &from_ref);
                    return Ok(());
                }
                let row = policy.action_dist(model, u, usize::MAX, obs_hist, act_hist)?;
                for (a, &pa) in row.iter().enumerate() {
                    if pa == 0.0 {
                        continue;
                    }
                    for (s_next, &ps) in model.trans_row(u + 1, state, a).iter().enumerate() {
                        if ps == 0.0 {
                            continue;
                        }
                        for (x_next, &px) in model.emit_row(u + 1, s_next).iter().enumerate() {
                            if px == 0.0 {
                                continue;
                            }
                            obs_hist.push(x_next);
                            act_hist.push(a);
                            go(
                                model,
                                policy,
                                t_target,
                                s_next,
                                obs_hist,
                                act_hist,
                                weight * pa * ps * px,
                                d_init,
                                d_ref,
                                total,
                            )?;
                            act_hist.pop();
                            obs_hist.pop();
                        }
                    }
                }
                Ok(())
            }

            let mut total = 0.0;
            let mut obs_hist = cond_obs.to_vec();
            let mut act_hist = cond_acts.to_vec();
            for (s, &ps) in d_init.probs().iter().enumerate() {
                if ps == 0.0 {
                    continue;
                }
                let mut partial = 0.0;
                go(
                    model,
                    policy,
                    t,
                    s,
                    &mut obs_hist,
                    &mut act_hist,
                    1.0,
                    d_init,
                    d_ref,
                    &mut partial,
                )?;
                total += ps * partial;
            }
            Estimate::exact(total)
        }
        MetricMode::MonteCarlo { n, seed } => {
            if n == 0 {
                return Err(LabError::InvalidArgument(
                    "Monte-Carlo metrics need at least one sample".into(),
                ));
            }
            let mut samples = Vec::with_capacity(n);
            for trial in 0..n {
                let mut rng = substream(seed, &[0x47, trial as u64]);
                let mut state = sample_index(&mut rng, d_init.probs());
                let mut obs_hist = cond_obs.to_vec();
                let mut act_hist = cond_acts.to_vec();
                for u in start..t {
                    let row = policy.action_dist(model, u, usize::MAX, &obs_hist, &act_hist)?;
                    let a = sample_index(&mut rng, &row);
                    act_hist.push(a);
                    state = sample_index(&mut rng, model.trans_row(u + 1, state, a));
                    obs_hist.push(sample_index(&mut rng, model.emit_row(u + 1, state)));
                }
                let window_acts = &act_hist[start..t];
                let window_obs = &obs_hist[start + 1..=t];
                let from_init = approx_belief(model, d_init, window_acts, window_obs)?;
                let from_ref = approx_belief(model, d_ref, window_acts, window_obs)?;
                samples.push(l1_dist(&from_init, &from_ref));
            }
            let (mean, stderr) = mean_stderr(&samples);
            Estimate {
                value: mean,
                stderr: Some(stderr),
                n: Some(n),
            }
        }
    };
    Ok(ContractionReport {
        estimate,
        prior_ratio,
    })
}

/// Expected residual mass of the expert's composed action distribution at
/// step `t`: `E[1 - max_a (expert o b_t)(a)]`.
pub fn action_prediction_error(
    model: &LayeredPomdp,
    expert: &LatentPolicy,
    policy: PolicyRef<'_>,
    t: usize,
    mode: MetricMode,
) -> Result<Estimate> {
    require_executable(policy, "action-prediction error")?;
    let residual = |b: &Belief| {
        let row = compose_rows(b, expert, t, model.action_count(t));
        1.0 - row.iter().copied().fold(0.0, f64::max)
    };
    exact_or_mc(
        model,
        policy,
        t,
        mode,
        || {
            let mut total = 0.0;
            walk_histories(model, policy, t, DEFAULT_ENUMERATION_CAP, |_, _, p, b| {
                total += p * residual(b);
                Ok(())
            })?;
            Ok(total)
        },
        |tau| {
            let b = true_belief(model, &tau.obs[..=t], &tau.actions[..t])?;
            Ok(residual(&b))
        },
    )
}

/// How to compare two trajectory distributions.
#[derive(Debug, Clone, Copy)]
pub enum TvMode {
    /// Enumerate both distributions and return the exact total variation.
    Exact,
    /// The hybrid-argument upper bound
    /// `sum_t E^{pi_A}[TV(A_t(ctx), B_t(ctx))]`, computed exactly.
    PerStepBound,
    /// Monte-Carlo estimate of the per-step bound.
    MonteCarloBound { n: usize, seed: u64 },
}

/// Total variation distance between the trajectory distributions of two
/// policies (exact), or the per-step upper bound on it.
pub fn trajectory_tv(
    model: &LayeredPomdp,
    policy_a: PolicyRef<'_>,
    policy_b: PolicyRef<'_>,
    mode: TvMode,
) -> Result<Estimate> {
    match mode {
        TvMode::Exact => {
            let table_a = enumerate_trajectories_capped(model, policy_a, DEFAULT_ENUMERATION_CAP)?;
            let table_b = enumerate_trajectories_capped(model, policy_b, DEFAULT_ENUMERATION_CAP)?;
            let mut probs_a: BTreeMap<&Trajectory, f64> = BTreeMap::new();
            for (tau, p) in table_a.entries() {
                *probs_a.entry(tau).or_insert(0.0) += *p;
            }
            let mut probs_b: BTreeMap<&Trajectory, f64> = BTreeMap::new();
            for (tau, p) in table_b.entries() {
                *probs_b.entry(tau).or_insert(0.0) += *p;
            }
            let mut tv = 0.0;
            for (tau, &pa) in &probs_a {
                tv += (pa - probs_b.get(tau).copied().unwrap_or(0.0)).abs();
            }
            for (tau, &pb) in &probs_b {
                if !probs_a.contains_key(tau) {
                    tv += pb;
                }
            }
            Ok(Estimate::exact(0.5 * tv))
        }
        TvMode::PerStepBound => {
            let table_a = enumerate_trajectories_capped(model, policy_a, DEFAULT_ENUMERATION_CAP)?;
            let mut total = 0.0;
            for (tau, p) in table_a.entries() {
                total += p * per_step_tv_sum(model, policy_a, policy_b, tau)?;
            }
            Ok(Estimate::exact(total))
        }
        TvMode::MonteCarloBound { n, seed } => {
            if n == 0 {
                return Err(LabError::InvalidArgument(
                    "Monte-Carlo metrics need at least one sample".into(),
                ));
            }
            let mut samples = Vec::with_capacity(n);
            for trial in 0..n {
                let trial_seed = substream(seed, &[trial as u64]).random();
                let tau = sample_trajectory(model, policy_a, trial_seed)?;
                samples.push(per_step_tv_sum(model, policy_a, policy_b, &tau)?);
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

fn per_step_tv_sum(
    model: &LayeredPomdp,
    policy_a: PolicyRef<'_>,
    policy_b: PolicyRef<'_>,
    tau: &Trajectory,
) -> Result<f64> {
    let mut total = 0.0;
    for t in 0..model.horizon() {
        let obs = &tau.obs[..=t];
        let acts = &tau.actions[..t];
        let row_a = policy_a.action_dist(model, t, tau.states[t], obs, acts)?;
        let row_b = policy_b.action_dist(model, t, tau.states[t], obs, acts)?;
        total += 0.5
            * row_a
                .iter()
                .zip(&row_b)
                .map(|(&x, &y)| (x - y).abs())
                .sum::<f64>();
    }
    Ok(total)
}

/// Baseline against which suboptimality is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    /// The optimal latent (privileged) policy.
    LatentOptimum,
    /// The optimal executable policy.
    ExecutableOptimum,
}

/// `J(reference) - J(policy)`, both evaluated exactly.
pub fn suboptimality<'a>(
    model: &LayeredPomdp,
    policy: impl Into<PolicyRef<'a>>,
    reference: Reference,
) -> Result<f64> {
    let reference_value = match reference {
        Reference::LatentOptimum => {
            crate::planning::latent_optimal(model).initial_value(model)
        }
        Reference::ExecutableOptimum => crate::planning::optimal_executable(model)?.value,
    };
    let value = policy_value_capped(model, policy, EvalMode::Exact, DEFAULT_ENUMERATION_CAP)?.value;
    Ok(reference_value - value)
}

//! Bound-verification suites and the supermartingale checker.
//!
//! Each suite generates fresh instances from a seed, runs one family of
//! checks, and reports per-check margins in a machine-readable form. The
//! suites cover: the filter against enumeration conditionals, windowed
//! beliefs against window conditionals with occupancy priors, latent-over-
//! executable value dominance, the two misspecification decompositions, the
//! decodability ceiling under deterministic dynamics, the closed-form
//! lower-bound instance, and the decay shape of belief contraction.

use crate::belief::{approx_belief, l1_dist, true_belief, Belief};
use crate::distill::forward_population;
use crate::generators::{gen_lower_bound, gen_perturbed_block, DynamicsMode, NoiseStyle};
use crate::metrics::{
    action_prediction_error, decodability_error, trajectory_tv, MetricMode, TvMode,
};
use crate::model::LayeredPomdp;
use crate::planning::{compose_rows, compose_with_true_belief, latent_optimal, optimal_executable};
use crate::policy::{
    window_keys_for_step, HistoryPolicy, LatentPolicy, PolicyRef, WindowFallback, WindowKey,
    WindowPolicy,
};
use crate::rng::{dirichlet_row, sample_index, substream};
use crate::trajectory::{enumerate_trajectories, sample_trajectory};
use crate::value::{latent_policy_value, mean_stderr, policy_value, EvalMode};
use crate::{LabError, Result};
use rand::Rng;
use serde::Serialize;

/// Outcome of one check: `margin` is the worst observed slack (negative
/// values mean the tolerance was violated by that amount).
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub id: String,
    pub pass: bool,
    /// Tolerance minus worst deviation; nonnegative iff the check passed.
    pub margin: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub pass: bool,
    pub checks: Vec<CheckResult>,
}

impl SuiteResult {
    fn from_checks(name: &str, checks: Vec<CheckResult>) -> Self {
        Self {
            name: name.to_string(),
            pass: checks.iter().all(|c| c.pass),
            checks,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub pass: bool,
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

/// The named verification suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    FilterOracle,
    WindowOracle,
    LatentDominance,
    Misspecification,
    DecodabilityDecay,
    LowerBound,
    ContractionShape,
}

impl Suite {
    pub fn all() -> Vec<Suite> {
        vec![
            Suite::FilterOracle,
            Suite::WindowOracle,
            Suite::LatentDominance,
            Suite::Misspecification,
            Suite::DecodabilityDecay,
            Suite::LowerBound,
            Suite::ContractionShape,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            Suite::FilterOracle => "filterOracle",
            Suite::WindowOracle => "windowOracle",
            Suite::LatentDominance => "latentDominance",
            Suite::Misspecification => "misspecification",
            Suite::DecodabilityDecay => "decodabilityDecay",
            Suite::LowerBound => "lowerBound",
            Suite::ContractionShape => "contractionShape",
        }
    }

    pub fn from_name(name: &str) -> Option<Suite> {
        Suite::all().into_iter().find(|s| s.name() == name)
    }
}

/// Instance budget and base seed for the verification suites.
#[derive(Debug, Clone, Copy)]
pub struct VerifyConfig {
    pub seed: u64,
    pub instances: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 50,
        }
    }
}

/// A small random POMDP with dimensions at most 4 and horizon at most 4,
/// and a random window policy on it. The horizon shrinks until exhaustive
/// enumeration stays comfortably cheap.
fn random_instance(seed: u64) -> (LayeredPomdp, WindowPolicy) {
    let mut rng = substream(seed, &[0x1357]);
    let mut horizon = 2 + (rng.random::<u64>() % 3) as usize;
    let states = 2 + (rng.random::<u64>() % 3) as usize;
    let obs = (states + (rng.random::<u64>() % 2) as usize).min(4);
    let actions = 2 + (rng.random::<u64>() % 2) as usize;
    let per_step = (states * obs * actions) as u128;
    while horizon > 2 && per_step.pow(horizon as u32) > 60_000 {
        horizon -= 1;
    }
    let dynamics = match rng.random::<u64>() % 3 {
        0 => DynamicsMode::Deterministic,
        1 => DynamicsMode::Stochastic,
        _ => DynamicsMode::UniformMixing,
    };
    let delta = 0.05 + 0.3 * rng.random::<f64>();
    let (model, _) = gen_perturbed_block(
        states,
        obs,
        actions,
        horizon,
        delta,
        dynamics,
        NoiseStyle::Uniform,
        seed ^ 0xabcd,
    )
    .expect("valid generator arguments");
    let window_len = 1 + (rng.random::<u64>() % 2) as usize;
    let policy = random_window_policy(&model, window_len, seed ^ 0x1111);
    (model, policy)
}

fn random_window_policy(model: &LayeredPomdp, window_len: usize, seed: u64) -> WindowPolicy {
    let mut rng = substream(seed, &[0x2468]);
    let mut wp =
        WindowPolicy::new(model.horizon(), window_len, true, WindowFallback::Uniform).unwrap();
    for t in 0..model.horizon() {
        for key in window_keys_for_step(model, window_len, true, t) {
            let row = dirichlet_row(&mut rng, model.action_count(t));
            wp.insert(t, key, row).unwrap();
        }
    }
    wp
}

fn check(id: String, tolerance: f64, worst: f64, detail: String) -> CheckResult {
    CheckResult {
        id,
        pass: worst <= tolerance,
        margin: tolerance - worst,
        tolerance,
        detail,
    }
}

/// Filter oracle: for every positive-probability history, the conditional
/// state distribution read off the trajectory table must match the filter.
/// `belief_fn` computes the candidate posterior; production callers pass
/// the exact filter, tests may inject a corrupted one.
pub(crate) fn filter_oracle_check_with(
    belief_fn: &dyn Fn(&LayeredPomdp, &[usize], &[usize]) -> Result<Belief>,
    config: VerifyConfig,
) -> Result<Vec<CheckResult>> {
    let tolerance = 1e-9;
    let mut checks = Vec::new();
    for i in 0..config.instances {
        let (model, policy) = random_instance(config.seed ^ ((i as u64) << 8));
        let table = enumerate_trajectories(&model, &policy)?;
        let mut worst = 0.0f64;
        let mut histories = 0usize;
        for t in 0..model.horizon() {
            // Group the table by observable prefix in one pass.
            let mut groups: std::collections::BTreeMap<(Vec<usize>, Vec<usize>), Vec<f64>> =
                std::collections::BTreeMap::new();
            for (tau, p) in table.entries() {
                let key = (tau.obs[..=t].to_vec(), tau.actions[..t].to_vec());
                groups.entry(key).or_insert_with(|| vec![0.0; model.state_count(t)])
                    [tau.states[t]] += p;
            }
            for ((obs_prefix, act_prefix), mut cond) in groups {
                let mass: f64 = cond.iter().sum();
                for v in &mut cond {
                    *v /= mass;
                }
                let filtered = belief_fn(&model, &obs_prefix, &act_prefix)?;
                let gap = cond
                    .iter()
                    .zip(filtered.probs())
                    .map(|(&a, &b)| (a - b).abs())
                    .fold(0.0, f64::max);
                worst = worst.max(gap);
                histories += 1;
            }
        }
        checks.push(check(
            format!("filter_oracle/instance_{i}"),
            tolerance,
            worst,
            format!("{histories} histories, worst entry gap {worst:.3e}"),
        ));
    }
    Ok(checks)
}

fn filter_oracle_suite(config: VerifyConfig) -> Result<SuiteResult> {
    let checks = filter_oracle_check_with(
        &|model, obs, acts| true_belief(model, obs, acts),
        config,
    )?;
    Ok(SuiteResult::from_checks(Suite::FilterOracle.name(), checks))
}

/// Window oracle: with the trailing actions uniform, the conditional of the
/// state given only the ragged window must equal the windowed posterior
/// seeded with the exact occupancy at the window start.
fn window_oracle_suite(config: VerifyConfig) -> Result<SuiteResult> {
    let tolerance = 1e-9;
    let mut checks = Vec::new();
    for i in 0..config.instances {
        let (model, random_policy) = random_instance(config.seed ^ 0x77 ^ ((i as u64) << 8));
        let horizon = model.horizon();
        let t = horizon - 1;
        let window_len = (1 + i % 2).min(t);
        let start = t - window_len;

        // Random rows before the window, uniform rows inside it.
        let mut policy = WindowPolicy::new(
            horizon,
            random_policy.window_len(),
            true,
            WindowFallback::Uniform,
        )
        .unwrap();
        for u in 0..start {
            for key in window_keys_for_step(&model, random_policy.window_len(), true, u) {
                let row = random_policy.action_dist(&model, u, &key);
                policy.insert(u, key, row).unwrap();
            }
        }
        // Steps start..t keep no rows: the uniform fallback plays there.

        let table = enumerate_trajectories(&model, &policy)?;
        let occupancy = table.occupancy(&model, start);
        let prior = Belief::new(start, occupancy)?;
        let mut worst = 0.0f64;
        let mut windows = 0usize;
        for (key, mass) in table.window_distribution(t, window_len) {
            if mass <= 0.0 {
                continue;
            }
            let cond = table
                .conditional_state_dist_given_window(&model, t, window_len, &key)
                .expect("window came from the table");
            let apx = approx_belief(&model, &prior, &key.acts, &key.obs)?;
            let gap = cond
                .iter()
                .zip(apx.probs())
                .map(|(&a, &b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(gap);
            windows += 1;
        }
        checks.push(check(
            format!("window_oracle/instance_{i}"),
            tolerance,
            worst,
            format!("L={window_len}, {windows} windows, worst entry gap {worst:.3e}"),
        ));
    }
    Ok(SuiteResult::from_checks(Suite::WindowOracle.name(), checks))
}

fn latent_dominance_suite(config: VerifyConfig) -> Result<SuiteResult> {
    let tolerance = 1e-9;
    let mut checks = Vec::new();
    for i in 0..config.instances {
        let (model, _) = random_instance(config.seed ^ 0xd0 ^ ((i as u64) << 8));
        let latent = latent_optimal(&model).initial_value(&model);
        let exec = optimal_executable(&model)?.value;
        checks.push(check(
            format!("latent_dominance/instance_{i}"),
            tolerance,
            exec - latent,
            format!("J_exec = {exec:.12}, J_latent = {latent:.12}"),
        ));
    }
    Ok(SuiteResult::from_checks(
        Suite::LatentDominance.name(),
        checks,
    ))
}

/// Deterministic pseudo-random surrogate belief for a history; the same
/// `(salt, t, history)` always yields the same belief.
fn surrogate_belief(
    model: &LayeredPomdp,
    salt: u64,
    t: usize,
    obs: &[usize],
    acts: &[usize],
) -> Belief {
    let mut path = vec![0x5a, t as u64];
    path.extend(obs.iter().map(|&v| v as u64 + 1));
    path.push(u64::MAX);
    path.extend(acts.iter().map(|&v| v as u64 + 1));
    let mut rng = substream(salt, &path);
    Belief::new(t, dirichlet_row(&mut rng, model.state_count(t))).unwrap()
}

fn random_deterministic_expert(model: &LayeredPomdp, seed: u64) -> LatentPolicy {
    let mut rng = substream(seed, &[0xe1]);
    let choices: Vec<Vec<usize>> = (0..model.horizon())
        .map(|t| {
            (0..model.state_count(t))
                .map(|_| {
                    let a = model.action_count(t);
                    sample_index(&mut rng, &vec![1.0 / a as f64; a])
                })
                .collect()
        })
        .collect();
    LatentPolicy::from_choices(model, &choices).unwrap()
}

/// Sum over steps of `E^pi[f(history)]`, by exhaustive trajectory
/// enumeration under `pi`.
fn expected_per_step_sum<'a>(
    model: &LayeredPomdp,
    policy: impl Into<PolicyRef<'a>>,
    f: impl Fn(usize, &[usize], &[usize]) -> Result<f64>,
) -> Result<f64> {
    let table = enumerate_trajectories(model, policy)?;
    let mut total = 0.0;
    for (tau, p) in table.entries() {
        for t in 0..model.horizon() {
            total += p * f(t, &tau.obs[..=t], &tau.actions[..t])?;
        }
    }
    Ok(total)
}

/// Both misspecification decompositions: the exact TV between the latent
/// expert's and the surrogate-composed policy's trajectory laws is bounded
/// by the decodability form and by the action-prediction form.
fn misspecification_suite(config: VerifyConfig) -> Result<SuiteResult> {
    let tolerance = 1e-9;
    let mut checks = Vec::new();
    for i in 0..config.instances {
        let (model, _) = random_instance(config.seed ^ 0x3b ^ ((i as u64) << 8));
        let expert = random_deterministic_expert(&model, config.seed ^ 0xaa ^ (i as u64));
        let salt = config.seed ^ 0xbb ^ (i as u64);

        let surrogate_model = model.clone();
        let surrogate_expert = expert.clone();
        let composed_surrogate = HistoryPolicy::new(move |t, obs, acts| {
            let b = surrogate_belief(&surrogate_model, salt, t, &obs[..=t], &acts[..t]);
            Ok(compose_rows(
                &b,
                &surrogate_expert,
                t,
                surrogate_model.action_count(t),
            ))
        });
        let composed_true = compose_with_true_belief(&model, &expert);

        let lhs = trajectory_tv(
            &model,
            PolicyRef::Latent(&expert),
            PolicyRef::History(&composed_surrogate),
            TvMode::Exact,
        )?
        .value;

        // Decodability form: 2 * sum_t eps_dec(pi) under the true-belief
        // composition, plus the belief approximation error under the
        // surrogate-composed policy.
        let mut dec_sum = 0.0;
        for t in 0..model.horizon() {
            dec_sum += decodability_error(
                &model,
                PolicyRef::History(&composed_true),
                t,
                MetricMode::Exact,
            )?
            .value;
        }
        let belief_gap = expected_per_step_sum(
            &model,
            PolicyRef::History(&composed_surrogate),
            |t, obs, acts| {
                let b = true_belief(&model, obs, acts)?;
                let surrogate = surrogate_belief(&model, salt, t, obs, acts);
                Ok(l1_dist(&b, &surrogate))
            },
        )?;
        let rhs_dec = 2.0 * dec_sum + belief_gap;
        checks.push(check(
            format!("misspec_decodability/instance_{i}"),
            tolerance,
            lhs - rhs_dec,
            format!("TV = {lhs:.12} <= {rhs_dec:.12}"),
        ));

        // Action-prediction form: both terms under the true-belief
        // composition.
        let mut apred_sum = 0.0;
        for t in 0..model.horizon() {
            apred_sum += action_prediction_error(
                &model,
                &expert,
                PolicyRef::History(&composed_true),
                t,
                MetricMode::Exact,
            )?
            .value;
        }
        let action_gap = expected_per_step_sum(
            &model,
            PolicyRef::History(&composed_true),
            |t, obs, acts| {
                let b = true_belief(&model, obs, acts)?;
                let surrogate = surrogate_belief(&model, salt, t, obs, acts);
                let row_true = compose_rows(&b, &expert, t, model.action_count(t));
                let row_surr = compose_rows(&surrogate, &expert, t, model.action_count(t));
                Ok(row_true
                    .iter()
                    .zip(&row_surr)
                    .map(|(&a, &b)| (a - b).abs())
                    .sum::<f64>())
            },
        )?;
        let rhs_apred = 2.0 * apred_sum + action_gap;
        checks.push(check(
            format!("misspec_action_prediction/instance_{i}"),
            tolerance,
            lhs - rhs_apred,
            format!("TV = {lhs:.12} <= {rhs_apred:.12}"),
        ));
    }
    Ok(SuiteResult::from_checks(
        Suite::Misspecification.name(),
        checks,
    ))
}

/// Decodability stays at or below delta under deterministic dynamics.
fn decodability_decay_suite(config: VerifyConfig) -> Result<SuiteResult> {
    let mut checks = Vec::new();
    let instances = config.instances.min(20).max(1);
    for i in 0..instances {
        let delta = if i % 2 == 0 { 0.05 } else { 0.1 };
        let mut rng = substream(config.seed ^ 0x4d ^ (i as u64), &[]);
        let states = 2 + (rng.random::<u64>() % 3) as usize;
        let obs = states + (rng.random::<u64>() % 3) as usize;
        let horizon = 4 + (rng.random::<u64>() % 3) as usize;
        let (model, _) = gen_perturbed_block(
            states,
            obs,
            2,
            horizon,
            delta,
            DynamicsMode::Deterministic,
            NoiseStyle::Uniform,
            config.seed ^ 0x4e ^ (i as u64),
        )?;
        // The empty-table window policy is the uniform executable policy.
        let uniform = WindowPolicy::new(horizon, 1, false, WindowFallback::Uniform)?;
        let mut worst = f64::NEG_INFINITY;
        let mut detail = String::new();
        for t in 0..horizon {
            let est = decodability_error(
                &model,
                PolicyRef::Window(&uniform),
                t,
                MetricMode::MonteCarlo {
                    n: 10_000,
                    seed: config.seed ^ 0x4f ^ (i as u64) ^ ((t as u64) << 16),
                },
            )?;
            let slack = est.value - (delta + 3.0 * est.stderr.unwrap());
            if slack > worst {
                worst = slack;
                detail = format!(
                    "worst step {t}: estimate {:.5} vs delta {delta} + 3se {:.5}",
                    est.value,
                    3.0 * est.stderr.unwrap()
                );
            }
        }
        checks.push(check(
            format!("decodability_decay/instance_{i}"),
            0.0,
            worst,
            detail,
        ));
    }
    Ok(SuiteResult::from_checks(
        Suite::DecodabilityDecay.name(),
        checks,
    ))
}

fn greedy_policy(model: &LayeredPomdp) -> WindowPolicy {
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

/// Closed-form checks on the lower-bound instance.
fn lower_bound_suite(_config: VerifyConfig) -> Result<SuiteResult> {
    let tolerance = 1e-9;
    let mut checks = Vec::new();
    for &delta in &[0.05, 0.1, 0.3] {
        for horizon in 2..=6usize {
            let model = gen_lower_bound(delta, horizon)?;
            let expert = latent_optimal(&model).policy;
            let greedy = greedy_policy(&model);

            let tv = trajectory_tv(
                &model,
                PolicyRef::Latent(&expert),
                PolicyRef::Window(&greedy),
                TvMode::Exact,
            )?
            .value;
            let tv_expected = 1.0 - (1.0 - delta).powi(horizon as i32);
            let j_latent = latent_policy_value(&model, &expert);
            let j_greedy = policy_value(&model, &greedy, EvalMode::Exact)?.value;
            let fwd_expected = (1.0 - delta) * (1.0 - delta) + delta * delta;
            let mut worst = (tv - tv_expected)
                .abs()
                .max((j_latent - 1.0).abs())
                .max((j_greedy - (1.0 - delta)).abs());
            for window_len in 1..=3usize.min(horizon - 1) {
                let fwd = forward_population(&model, &expert, window_len)?;
                let j_fwd = policy_value(&model, &fwd, EvalMode::Exact)?.value;
                worst = worst.max((j_fwd - fwd_expected).abs());
            }
            checks.push(check(
                format!("lower_bound/delta_{delta}/h_{horizon}"),
                tolerance,
                worst,
                format!("TV = {tv:.12} (want {tv_expected:.12}), worst deviation {worst:.3e}"),
            ));
        }
    }
    Ok(SuiteResult::from_checks(Suite::LowerBound.name(), checks))
}

/// Monte-Carlo decay shape of belief contraction in the window length, with
/// common random numbers across window lengths, plus exactness on the
/// uniform-mixing family.
fn contraction_shape_suite(config: VerifyConfig) -> Result<SuiteResult> {
    let mut checks = Vec::new();
    let instances = config.instances.min(10).max(1);
    let delta = 0.05;
    let n = 4_000;
    for i in 0..instances {
        let horizon = 6;
        let (model, _) = gen_perturbed_block(
            3,
            4,
            2,
            horizon,
            delta,
            DynamicsMode::Stochastic,
            NoiseStyle::Uniform,
            config.seed ^ 0x6c ^ (i as u64),
        )?;
        let uniform = WindowPolicy::new(horizon, 1, false, WindowFallback::Uniform)?;
        let t = horizon - 1;

        // One shared trajectory batch; per-sample windowed gaps per L.
        let mut per_l: Vec<Vec<f64>> = vec![Vec::with_capacity(n); 4];
        for trial in 0..n {
            let trial_seed = substream(config.seed ^ 0x6d ^ (i as u64), &[trial as u64]).random();
            let tau = sample_trajectory(&model, &uniform, trial_seed)?;
            let exact = true_belief(&model, &tau.obs[..=t], &tau.actions[..t])?;
            for (li, samples) in per_l.iter_mut().enumerate() {
                let window_len = li + 1;
                let start = t - window_len;
                let prior = Belief::uniform(&model, start);
                let apx = approx_belief(
                    &model,
                    &prior,
                    &tau.actions[start..t],
                    &tau.obs[start + 1..=t],
                )?;
                samples.push(l1_dist(&exact, &apx));
            }
        }
        let mut worst = f64::NEG_INFINITY;
        let mut detail = String::new();
        for li in 0..3 {
            let diffs: Vec<f64> = per_l[li + 1]
                .iter()
                .zip(&per_l[li])
                .map(|(&next, &prev)| next - prev)
                .collect();
            let (mean_diff, stderr) = mean_stderr(&diffs);
            let slack = mean_diff - 3.0 * stderr;
            if slack > worst {
                worst = slack;
                detail = format!(
                    "L {} -> {}: paired diff {mean_diff:.5} (se {stderr:.5})",
                    li + 1,
                    li + 2
                );
            }
        }
        checks.push(check(
            format!("contraction_decay/instance_{i}"),
            0.0,
            worst,
            detail,
        ));
    }

    // Uniform mixing: the windowed posterior is exact for any L >= 1.
    let model = gen_lower_bound(0.1, 5)?;
    let greedy = greedy_policy(&model);
    let mut worst = 0.0f64;
    for t in 1..5 {
        for window_len in 1..=t.min(4) {
            let e = crate::metrics::belief_contraction_error(
                &model,
                PolicyRef::Window(&greedy),
                t,
                window_len,
                None,
                MetricMode::Exact,
            )?;
            worst = worst.max(e.value.abs());
        }
    }
    checks.push(check(
        "contraction_zero_uniform_mixing".to_string(),
        1e-9,
        worst,
        format!("max |eps_con| over steps and windows: {worst:.3e}"),
    ));
    Ok(SuiteResult::from_checks(
        Suite::ContractionShape.name(),
        checks,
    ))
}

/// Runs the selected suites over freshly generated instances.
pub fn verify_bounds(suites: &[Suite], config: VerifyConfig) -> Result<VerifyReport> {
    let mut results = Vec::new();
    for suite in suites {
        let result = match suite {
            Suite::FilterOracle => filter_oracle_suite(config)?,
            Suite::WindowOracle => window_oracle_suite(config)?,
            Suite::LatentDominance => latent_dominance_suite(config)?,
            Suite::Misspecification => misspecification_suite(config)?,
            Suite::DecodabilityDecay => decodability_decay_suite(config)?,
            Suite::LowerBound => lower_bound_suite(config)?,
            Suite::ContractionShape => contraction_shape_suite(config)?,
        };
        results.push(result);
    }
    Ok(VerifyReport {
        pass: results.iter().all(|s| s.pass),
        suites: results,
    })
}

/// Report for one `(epsilon, L)` cell of the supermartingale check.
#[derive(Debug, Clone, Serialize)]
pub struct MartingaleCell {
    pub epsilon: f64,
    pub window_len: usize,
    pub estimate: f64,
    pub stderr: f64,
    /// Closed-form expectation for the reference chain,
    /// `S * (eps * (2 - eps))^L`.
    pub closed_form: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MartingaleReport {
    pub trials: usize,
    pub scale: f64,
    pub cells: Vec<MartingaleCell>,
    pub pass: bool,
}

impl MartingaleReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

/// Simulates the reference supermartingale `X_{n+1} = eps * X_n` with
/// probability `1 - eps`, `X_n` otherwise, started at `X_0 = scale`, and
/// checks `E[min(X_L, scale)] <= 2 * 3^L * eps^(L/3) * scale` with Monte-
/// Carlo error bars. The chain satisfies both hypotheses of the bound:
/// `E[X_{n+1} | X_n] = eps * (2 - eps) * X_n <= X_n` and
/// `P[X_{n+1} > eps * X_n | X_n] = eps`.
///
/// Rejects `epsilon >= 3^-6`, outside the bound's validity range.
pub fn martingale_check(
    epsilons: &[f64],
    window_lens: &[usize],
    scale: f64,
    trials: usize,
    seed: u64,
) -> Result<MartingaleReport> {
    let eps_max = 3.0f64.powi(-6);
    if epsilons.is_empty() || window_lens.is_empty() {
        return Err(LabError::InvalidArgument(
            "epsilons and window lengths must be nonempty".into(),
        ));
    }
    if trials == 0 {
        return Err(LabError::InvalidArgument("trials must be positive".into()));
    }
    if !(scale > 0.0) {
        return Err(LabError::InvalidArgument("scale must be positive".into()));
    }
    for &eps in epsilons {
        if !(0.0 < eps && eps < eps_max) {
            return Err(LabError::InvalidArgument(format!(
                "epsilon {eps} outside (0, 3^-6 = {eps_max:.6e})"
            )));
        }
    }
    let mut cells = Vec::new();
    for (ei, &eps) in epsilons.iter().enumerate() {
        for &window_len in window_lens {
            let mut samples = Vec::with_capacity(trials);
            for trial in 0..trials {
                let mut rng = substream(seed, &[ei as u64, window_len as u64, trial as u64]);
                let mut x = scale;
                for _ in 0..window_len {
                    let u: f64 = rng.random();
                    if u >= eps {
                        x *= eps;
                    }
                }
                samples.push(x.min(scale));
            }
            let (estimate, stderr) = mean_stderr(&samples);
            let bound = 2.0 * 3.0f64.powi(window_len as i32) * eps.powf(window_len as f64 / 3.0)
                * scale;
            let closed_form = scale * (eps * (2.0 - eps)).powi(window_len as i32);
            cells.push(MartingaleCell {
                epsilon: eps,
                window_len,
                estimate,
                stderr,
                closed_form,
                bound,
                pass: estimate + 3.0 * stderr <= bound,
            });
        }
    }
    Ok(MartingaleReport {
        trials,
        scale,
        cells: cells.clone(),
        pass: cells.iter().all(|c| c.pass),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> VerifyConfig {
        VerifyConfig {
            seed: 1,
            instances: 6,
        }
    }

    #[test]
    fn filter_oracle_passes_and_catches_mutations() {
        let report = filter_oracle_suite(small_config()).unwrap();
        assert!(report.pass, "{report:?}");

        // Off-by-one emission index: condition on the wrong observation.
        let corrupted = |model: &LayeredPomdp, obs: &[usize], acts: &[usize]| {
            let shifted: Vec<usize> = obs
                .iter()
                .enumerate()
                .map(|(t, &x)| (x + 1) % model.obs_count(t))
                .collect();
            true_belief(model, &shifted, acts)
        };
        let checks = filter_oracle_check_with(&corrupted, small_config());
        match checks {
            Ok(checks) => assert!(
                checks.iter().any(|c| !c.pass),
                "corrupted filter must fail somewhere"
            ),
            // The shifted observation may be impossible outright, which is
            // an equally loud failure.
            Err(LabError::ImpossibleObservation { .. }) => {}
            Err(e) => panic!("unexpected error {e:?}"),
        }
    }

    #[test]
    fn window_oracle_passes() {
        let report = window_oracle_suite(small_config()).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn latent_dominance_passes() {
        let report = latent_dominance_suite(small_config()).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn misspecification_passes() {
        let report = misspecification_suite(small_config()).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn lower_bound_suite_passes() {
        let report = lower_bound_suite(small_config()).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn martingale_reference_chain_matches_closed_form() {
        let report = martingale_check(&[1e-3], &[0, 1, 2, 3], 1.0, 50_000, 3).unwrap();
        assert!(report.pass);
        // The closed form S * (eps(2-eps))^L sits below the bound with a
        // large margin at every cell.
        for cell in &report.cells {
            assert!(
                cell.closed_form <= cell.bound,
                "closed form {} above bound {}",
                cell.closed_form,
                cell.bound
            );
        }
        // The Monte-Carlo estimate is checked against the closed form only
        // where the no-contraction event (probability eps^L) is observable
        // at this trial count; for larger L it carries a constant share of
        // the expectation but essentially never appears in the sample.
        for cell in report.cells.iter().filter(|c| c.window_len <= 1) {
            assert!(
                (cell.estimate - cell.closed_form).abs() <= 4.0 * cell.stderr.max(1e-12),
                "estimate {} vs closed form {} (se {})",
                cell.estimate,
                cell.closed_form,
                cell.stderr
            );
        }
        // L = 0 passes trivially: E[min(X_0, S)] = S <= 2S.
        let l0 = &report.cells[0];
        assert_eq!(l0.window_len, 0);
        assert_eq!(l0.estimate, 1.0);
    }

    #[test]
    fn martingale_rejects_large_epsilon() {
        assert!(matches!(
            martingale_check(&[0.5], &[1], 1.0, 10, 1),
            Err(LabError::InvalidArgument(_))
        ));
        assert!(matches!(
            martingale_check(&[3.0f64.powi(-6)], &[1], 1.0, 10, 1),
            Err(LabError::InvalidArgument(_))
        ));
    }

    #[test]
    fn verify_report_serializes() {
        let report = verify_bounds(
            &[Suite::LatentDominance],
            VerifyConfig {
                seed: 2,
                instances: 2,
            },
        )
        .unwrap();
        let text = report.to_json().unwrap();
        assert!(text.contains("latentDominance"));
    }
}

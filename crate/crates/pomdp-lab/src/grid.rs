//! Declarative experiment grids producing CSV rows.
//!
//! A grid sweeps instance parameters, algorithms, window lengths, smoothing
//! levels, and seeds; each cell yields one CSV row with the policy value,
//! suboptimalities, and per-step error metrics. Cells are computed in
//! canonical order and all randomness is seed-derived, so a rerun with the
//! same configuration reproduces the CSV byte for byte except for the
//! trailing wall-clock column.

use crate::belief::Belief;
use crate::distill::{behavior_cloning, forward_finite, forward_population};
use crate::generators::{
    gen_lower_bound, gen_noisy_sensor, gen_perturbed_block, gen_smoothing_toy, DynamicsMode,
    NoiseStyle,
};
use crate::metrics::{
    action_prediction_error, belief_contraction_error, decodability_error, MetricMode,
};
use crate::model::LayeredPomdp;
use crate::planning::{
    compose_with_true_belief, framestack_plan_capped, framestack_q_learning, latent_optimal,
    optimal_executable_capped, smoothed_latent_optimal, LatentSolution, QLearningConfig,
};
use crate::policy::{HistoryPolicy, PolicyRef, WindowPolicy};
use crate::value::{latent_policy_value, policy_value_capped, window_policy_value, EvalMode};
use crate::{LabError, Result, DEFAULT_ENUMERATION_CAP};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Instance family swept by a grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Family {
    PerturbedBlock,
    NoisySensor,
    /// Ignores the size lists; `deltas` and `horizons` apply.
    LowerBound,
    /// Ignores sizes, horizons, and dynamics; `deltas` are confusion levels.
    SmoothingToy,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Family::PerturbedBlock => "perturbedBlock",
            Family::NoisySensor => "noisySensor",
            Family::LowerBound => "lowerBound",
            Family::SmoothingToy => "smoothingToy",
        };
        f.write_str(s)
    }
}

/// Algorithm evaluated in a grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Algorithm {
    LatentExpert,
    ComposeTrue,
    ForwardPopulation,
    ForwardFinite,
    BehaviorCloning,
    FramestackPlan,
    FramestackQLearning,
    OptimalExecutable,
}

impl Algorithm {
    fn name(&self) -> &'static str {
        match self {
            Algorithm::LatentExpert => "latentExpert",
            Algorithm::ComposeTrue => "composeTrue",
            Algorithm::ForwardPopulation => "forwardPopulation",
            Algorithm::ForwardFinite => "forwardFinite",
            Algorithm::BehaviorCloning => "behaviorCloning",
            Algorithm::FramestackPlan => "framestackPlan",
            Algorithm::FramestackQLearning => "framestackQLearning",
            Algorithm::OptimalExecutable => "optimalExecutable",
        }
    }

    fn uses_window(&self) -> bool {
        matches!(
            self,
            Algorithm::ForwardPopulation
                | Algorithm::ForwardFinite
                | Algorithm::BehaviorCloning
                | Algorithm::FramestackPlan
                | Algorithm::FramestackQLearning
        )
    }

    fn uses_expert(&self) -> bool {
        matches!(
            self,
            Algorithm::LatentExpert
                | Algorithm::ComposeTrue
                | Algorithm::ForwardPopulation
                | Algorithm::ForwardFinite
                | Algorithm::BehaviorCloning
        )
    }
}

fn default_counts() -> Vec<usize> {
    vec![2]
}

fn default_dynamics() -> Vec<DynamicsMode> {
    vec![DynamicsMode::Stochastic]
}

fn default_noise() -> NoiseStyle {
    NoiseStyle::Uniform
}

fn default_window_lens() -> Vec<usize> {
    vec![1]
}

fn default_etas() -> Vec<f64> {
    vec![0.0]
}

fn default_mc_samples() -> usize {
    10_000
}

fn default_metric_samples() -> usize {
    4_000
}

fn default_distill_samples() -> usize {
    1_000
}

fn default_ql_episodes() -> usize {
    20_000
}

/// A declarative sweep; deserializable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentGrid {
    pub family: Family,
    pub deltas: Vec<f64>,
    pub horizons: Vec<usize>,
    #[serde(default = "default_counts")]
    pub state_counts: Vec<usize>,
    #[serde(default = "default_counts")]
    pub obs_counts: Vec<usize>,
    #[serde(default = "default_counts")]
    pub action_counts: Vec<usize>,
    #[serde(default = "default_dynamics")]
    pub dynamics: Vec<DynamicsMode>,
    #[serde(default = "default_noise")]
    pub noise: NoiseStyle,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_window_lens")]
    pub window_lens: Vec<usize>,
    #[serde(default = "default_etas")]
    pub etas: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Samples for Monte-Carlo value evaluation when exact is infeasible.
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
    /// Samples for Monte-Carlo metric estimation when exact is infeasible.
    #[serde(default = "default_metric_samples")]
    pub metric_samples: usize,
    /// Trajectories (or rollouts per step) for the sampling distillers.
    #[serde(default = "default_distill_samples")]
    pub distill_samples: usize,
    #[serde(default = "default_ql_episodes")]
    pub ql_episodes: usize,
}

impl ExperimentGrid {
    /// Checks list nonemptiness and returns the number of CSV rows the grid
    /// will produce.
    pub fn validate(&self) -> Result<usize> {
        for (name, empty) in [
            ("deltas", self.deltas.is_empty()),
            ("horizons", self.horizons.is_empty()),
            ("state_counts", self.state_counts.is_empty()),
            ("obs_counts", self.obs_counts.is_empty()),
            ("action_counts", self.action_counts.is_empty()),
            ("dynamics", self.dynamics.is_empty()),
            ("algorithms", self.algorithms.is_empty()),
            ("window_lens", self.window_lens.is_empty()),
            ("etas", self.etas.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return Err(LabError::InvalidArgument(format!(
                    "grid lists must be nonempty: {name} is empty"
                )));
            }
        }
        let instances = self.instance_params().len();
        let per_instance: usize = self
            .algorithms
            .iter()
            .map(|alg| {
                let l = if alg.uses_window() {
                    self.window_lens.len()
                } else {
                    1
                };
                let e = if alg.uses_expert() { self.etas.len() } else { 1 };
                l * e
            })
            .sum();
        Ok(instances * per_instance * self.seeds.len())
    }

    fn instance_params(&self) -> Vec<(f64, usize, usize, usize, usize, DynamicsMode)> {
        let mut out = Vec::new();
        match self.family {
            Family::LowerBound => {
                for &delta in &self.deltas {
                    for &h in &self.horizons {
                        out.push((delta, h, 2, 2, 2, DynamicsMode::UniformMixing));
                    }
                }
            }
            Family::SmoothingToy => {
                for &delta in &self.deltas {
                    out.push((delta, 2, 2, 2, 5, DynamicsMode::Deterministic));
                }
            }
            Family::NoisySensor => {
                for &delta in &self.deltas {
                    for &h in &self.horizons {
                        for &s in &self.state_counts {
                            for &dyn_ in &self.dynamics {
                                out.push((delta, h, s, s, s, dyn_));
                            }
                        }
                    }
                }
            }
            Family::PerturbedBlock => {
                for &delta in &self.deltas {
                    for &h in &self.horizons {
                        for &s in &self.state_counts {
                            for &x in &self.obs_counts {
                                for &a in &self.action_counts {
                                    for &dyn_ in &self.dynamics {
                                        out.push((delta, h, s, x, a, dyn_));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    fn build_instance(
        &self,
        delta: f64,
        horizon: usize,
        states: usize,
        obs: usize,
        actions: usize,
        dynamics: DynamicsMode,
        seed: u64,
    ) -> Result<LayeredPomdp> {
        match self.family {
            Family::PerturbedBlock => Ok(gen_perturbed_block(
                states, obs, actions, horizon, delta, dynamics, self.noise, seed,
            )?
            .0),
            Family::NoisySensor => {
                Ok(gen_noisy_sensor(states, horizon, delta, dynamics, seed)?.0)
            }
            Family::LowerBound => gen_lower_bound(delta, horizon),
            Family::SmoothingToy => gen_smoothing_toy(delta),
        }
    }
}

/// The CSV column names, in order. `wall_clock_ms` is last so that
/// reproducibility checks can strip it.
pub const CSV_COLUMNS: [&str; 24] = [
    "family",
    "delta",
    "horizon",
    "states",
    "obs",
    "actions",
    "dynamics",
    "noise",
    "seed",
    "algorithm",
    "window_len",
    "eta",
    "j_mode",
    "j",
    "j_stderr",
    "subopt_latent",
    "subopt_exec",
    "subopt_latent_norm",
    "eps_dec",
    "eps_con",
    "eps_apred",
    "eps_mode",
    "flags",
    "wall_clock_ms",
];

/// Result of running a grid.
#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub rows: Vec<Vec<String>>,
}

impl GridOutcome {
    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(CSV_COLUMNS)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| LabError::InvalidArgument(format!("csv flush failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_csv()?)?;
        Ok(())
    }

    /// The CSV with the wall-clock column removed, for byte-level
    /// reproducibility comparisons.
    pub fn to_csv_without_timing(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer.write_record(&CSV_COLUMNS[..CSV_COLUMNS.len() - 1])?;
        for row in &self.rows {
            writer.write_record(&row[..row.len() - 1])?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| LabError::InvalidArgument(format!("csv flush failed: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

enum BuiltPolicy {
    Latent(crate::policy::LatentPolicy),
    Window(WindowPolicy),
    History(HistoryPolicy),
    /// Construction infeasible (cap exceeded); carries the flag text.
    Skipped(String),
}

struct RowContext<'a> {
    grid: &'a ExperimentGrid,
    model: &'a LayeredPomdp,
    j_latent: f64,
    j_exec: Option<f64>,
    seed: u64,
}

fn build_policy(
    ctx: &RowContext<'_>,
    algorithm: Algorithm,
    window_len: usize,
    expert: Option<&LatentSolution>,
) -> Result<BuiltPolicy> {
    let model = ctx.model;
    let grid = ctx.grid;
    Ok(match algorithm {
        Algorithm::LatentExpert => {
            BuiltPolicy::Latent(expert.expect("expert-based").policy.clone())
        }
        Algorithm::ComposeTrue => BuiltPolicy::History(compose_with_true_belief(
            model,
            &expert.expect("expert-based").policy,
        )),
        Algorithm::ForwardPopulation => {
            match forward_population(model, &expert.expect("expert-based").policy, window_len) {
                Ok(wp) => BuiltPolicy::Window(wp),
                Err(LabError::CapExceeded { .. }) => {
                    BuiltPolicy::Skipped("window_space_exceeded".into())
                }
                Err(e) => return Err(e),
            }
        }
        Algorithm::ForwardFinite => BuiltPolicy::Window(forward_finite(
            model,
            &expert.expect("expert-based").policy,
            window_len,
            grid.distill_samples,
            ctx.seed,
        )?),
        Algorithm::BehaviorCloning => BuiltPolicy::Window(behavior_cloning(
            model,
            &expert.expect("expert-based").policy,
            window_len,
            grid.distill_samples,
            false,
            ctx.seed,
        )?),
        Algorithm::FramestackPlan => {
            match framestack_plan_capped(model, window_len, DEFAULT_ENUMERATION_CAP) {
                Ok(wp) => BuiltPolicy::Window(wp),
                Err(LabError::CapExceeded { .. }) => {
                    BuiltPolicy::Skipped("window_space_exceeded".into())
                }
                Err(e) => return Err(e),
            }
        }
        Algorithm::FramestackQLearning => BuiltPolicy::Window(framestack_q_learning(
            model,
            window_len,
            QLearningConfig {
                episodes: grid.ql_episodes,
                ..QLearningConfig::default()
            },
            ctx.seed,
        )?),
        Algorithm::OptimalExecutable => {
            match optimal_executable_capped(model, DEFAULT_ENUMERATION_CAP) {
                Ok(sol) => BuiltPolicy::History(sol.policy),
                Err(LabError::CapExceeded { .. }) => {
                    BuiltPolicy::Skipped("history_space_exceeded".into())
                }
                Err(e) => return Err(e),
            }
        }
    })
}

#[allow(clippy::too_many_arguments)]
fn compute_row(
    ctx: &RowContext<'_>,
    algorithm: Algorithm,
    window_len: Option<usize>,
    eta: Option<f64>,
    expert: Option<&LatentSolution>,
    instance_fields: &[String],
) -> Result<Vec<String>> {
    let started = Instant::now();
    let model = ctx.model;
    let grid = ctx.grid;
    let mut flags: Vec<String> = Vec::new();

    let built = build_policy(ctx, algorithm, window_len.unwrap_or(1), expert)?;

    // Value.
    let (j_mode, j, j_stderr) = match &built {
        BuiltPolicy::Latent(p) => ("exact".to_string(), Some(latent_policy_value(model, p)), None),
        BuiltPolicy::Window(p) => ("exact".to_string(), Some(window_policy_value(model, p)), None),
        BuiltPolicy::History(p) => {
            if model.trajectory_space_size() <= DEFAULT_ENUMERATION_CAP as u128 {
                let est = policy_value_capped(model, p, EvalMode::Exact, DEFAULT_ENUMERATION_CAP)?;
                ("exact".to_string(), Some(est.value), None)
            } else {
                flags.push("j_downgraded_to_mc".into());
                let est = policy_value_capped(
                    model,
                    p,
                    EvalMode::MonteCarlo {
                        n: grid.mc_samples,
                        seed: ctx.seed ^ 0x9e37,
                    },
                    DEFAULT_ENUMERATION_CAP,
                )?;
                (format!("mc({})", grid.mc_samples), Some(est.value), est.stderr)
            }
        }
        BuiltPolicy::Skipped(reason) => {
            flags.push(reason.clone());
            ("".to_string(), None, None)
        }
    };

    let subopt_latent = j.map(|v| ctx.j_latent - v);
    let subopt_exec = match (ctx.j_exec, j) {
        (Some(exec), Some(v)) => Some(exec - v),
        _ => None,
    };

    // Per-step error metrics for executable policies.
    let policy_ref: Option<PolicyRef<'_>> = match &built {
        BuiltPolicy::Window(p) => Some(PolicyRef::Window(p)),
        BuiltPolicy::History(p) => Some(PolicyRef::History(p)),
        _ => None,
    };
    let horizon = model.horizon();
    let mut eps_dec = Vec::new();
    let mut eps_con = Vec::new();
    let mut eps_apred = Vec::new();
    let mut eps_mode = String::new();
    if let Some(p) = policy_ref {
        let exact_ok = model.history_space_size() <= DEFAULT_ENUMERATION_CAP as u128;
        let mode = if exact_ok {
            eps_mode = "exact".into();
            MetricMode::Exact
        } else {
            eps_mode = format!("mc({})", grid.metric_samples);
            MetricMode::MonteCarlo {
                n: grid.metric_samples,
                seed: ctx.seed ^ 0x517c,
            }
        };
        for t in 0..horizon {
            eps_dec.push(decodability_error(model, p, t, mode)?.value);
        }
        if let Some(l) = window_len {
            for t in 0..horizon {
                eps_con.push(belief_contraction_error(model, p, t, l, None, mode)?.value);
            }
        }
        if let Some(exp) = expert {
            for t in 0..horizon {
                eps_apred.push(action_prediction_error(model, &exp.policy, p, t, mode)?.value);
            }
        }
    }

    // Horizon-and-error normalized suboptimality; interpretation is left to
    // the consumer.
    let subopt_norm = match (subopt_latent, eps_apred.is_empty()) {
        (Some(gap), false) => {
            let mean_err: f64 = eps_apred.iter().sum::<f64>() / eps_apred.len() as f64;
            if mean_err > 0.0 {
                Some(gap / (horizon as f64 * mean_err))
            } else {
                None
            }
        }
        _ => None,
    };

    let join = |values: &[f64]| {
        values
            .iter()
            .map(|v| fmt_f64(*v))
            .collect::<Vec<_>>()
            .join("|")
    };

    let mut row = instance_fields.to_vec();
    row.push(ctx.seed.to_string());
    row.push(algorithm.name().to_string());
    row.push(window_len.map(|l| l.to_string()).unwrap_or_default());
    row.push(eta.map(fmt_f64).unwrap_or_default());
    row.push(j_mode);
    row.push(fmt_opt(j));
    row.push(fmt_opt(j_stderr));
    row.push(fmt_opt(subopt_latent));
    row.push(fmt_opt(subopt_exec));
    row.push(fmt_opt(subopt_norm));
    row.push(join(&eps_dec));
    row.push(join(&eps_con));
    row.push(join(&eps_apred));
    row.push(eps_mode);
    row.push(flags.join(";"));
    row.push(started.elapsed().as_millis().to_string());
    Ok(row)
}

/// Runs every cell of the grid in canonical order.
pub fn run_grid(grid: &ExperimentGrid) -> Result<GridOutcome> {
    grid.validate()?;
    let mut rows = Vec::new();
    for (delta, horizon, states, obs, actions, dynamics) in grid.instance_params() {
        for &seed in &grid.seeds {
            let model = grid.build_instance(delta, horizon, states, obs, actions, dynamics, seed)?;
            let latent = latent_optimal(&model);
            let j_latent = latent.initial_value(&model);
            let j_exec = match optimal_executable_capped(&model, DEFAULT_ENUMERATION_CAP) {
                Ok(sol) => Some(sol.value),
                Err(LabError::CapExceeded { .. }) => None,
                Err(e) => return Err(e),
            };
            let instance_fields = vec![
                grid.family.to_string(),
                fmt_f64(delta),
                horizon.to_string(),
                states.to_string(),
                obs.to_string(),
                actions.to_string(),
                dynamics.to_string(),
                match grid.noise {
                    NoiseStyle::Uniform => "uniform".to_string(),
                    NoiseStyle::RandomDirichlet => "randomDirichlet".to_string(),
                },
            ];
            let ctx = RowContext {
                grid,
                model: &model,
                j_latent,
                j_exec,
                seed,
            };
            for &algorithm in &grid.algorithms {
                let etas: Vec<Option<f64>> = if algorithm.uses_expert() {
                    grid.etas.iter().map(|&e| Some(e)).collect()
                } else {
                    vec![None]
                };
                let lens: Vec<Option<usize>> = if algorithm.uses_window() {
                    grid.window_lens.iter().map(|&l| Some(l)).collect()
                } else {
                    vec![None]
                };
                for &eta in &etas {
                    let expert_solution = match eta {
                        Some(e) if e > 0.0 => Some(smoothed_latent_optimal(&model, e)?),
                        Some(_) => Some(latent.clone()),
                        None => None,
                    };
                    for &l in &lens {
                        let row = compute_row(
                            &ctx,
                            algorithm,
                            l,
                            eta,
                            expert_solution.as_ref(),
                            &instance_fields,
                        )?;
                        rows.push(row);
                    }
                }
            }
        }
    }
    Ok(GridOutcome { rows })
}

/// Exact occupancy prior helper for window-policy construction from grids.
pub fn uniform_priors(model: &LayeredPomdp) -> Vec<Belief> {
    (0..model.horizon())
        .map(|t| Belief::uniform(model, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_grid() -> ExperimentGrid {
        ExperimentGrid {
            family: Family::LowerBound,
            deltas: vec![0.1],
            horizons: vec![2],
            state_counts: vec![2],
            obs_counts: vec![2],
            action_counts: vec![2],
            dynamics: vec![DynamicsMode::UniformMixing],
            noise: NoiseStyle::Uniform,
            algorithms: vec![
                Algorithm::LatentExpert,
                Algorithm::ComposeTrue,
                Algorithm::ForwardPopulation,
                Algorithm::FramestackPlan,
            ],
            window_lens: vec![1],
            etas: vec![0.0],
            seeds: vec![7],
            mc_samples: 1000,
            metric_samples: 500,
            distill_samples: 200,
            ql_episodes: 200,
        }
    }

    #[test]
    fn empty_seed_list_is_rejected() {
        let mut grid = tiny_grid();
        grid.seeds.clear();
        match grid.validate() {
            Err(LabError::InvalidArgument(msg)) => assert!(msg.contains("nonempty")),
            other => panic!("expected nonempty-list error, got {other:?}"),
        }
    }

    #[test]
    fn row_count_matches_validate() {
        let grid = tiny_grid();
        let expected = grid.validate().unwrap();
        let outcome = run_grid(&grid).unwrap();
        assert_eq!(outcome.rows.len(), expected);
        for row in &outcome.rows {
            assert_eq!(row.len(), CSV_COLUMNS.len());
        }
    }

    #[test]
    fn lower_bound_grid_has_known_values() {
        let grid = tiny_grid();
        let outcome = run_grid(&grid).unwrap();
        let by_algorithm = |name: &str| {
            outcome
                .rows
                .iter()
                .find(|r| r[9] == name)
                .unwrap_or_else(|| panic!("no row for {name}"))
                .clone()
        };
        let latent = by_algorithm("latentExpert");
        assert_eq!(latent[13], "1");
        let compose = by_algorithm("composeTrue");
        let j: f64 = compose[13].parse().unwrap();
        assert!((j - 0.82).abs() < 1e-9);
        let plan = by_algorithm("framestackPlan");
        let j: f64 = plan[13].parse().unwrap();
        assert!((j - 0.9).abs() < 1e-9);
    }

    #[test]
    fn reruns_are_byte_identical_without_timing() {
        let grid = tiny_grid();
        let a = run_grid(&grid).unwrap().to_csv_without_timing().unwrap();
        let b = run_grid(&grid).unwrap().to_csv_without_timing().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decodable_rows_have_zero_forward_suboptimality() {
        let grid = ExperimentGrid {
            family: Family::PerturbedBlock,
            deltas: vec![0.0, 0.1],
            horizons: vec![3],
            state_counts: vec![2],
            obs_counts: vec![4],
            action_counts: vec![2],
            dynamics: vec![DynamicsMode::Deterministic],
            noise: NoiseStyle::Uniform,
            algorithms: vec![Algorithm::ForwardPopulation, Algorithm::FramestackPlan],
            window_lens: vec![1],
            etas: vec![0.0],
            seeds: vec![3, 4],
            mc_samples: 1000,
            metric_samples: 500,
            distill_samples: 200,
            ql_episodes: 200,
        };
        let outcome = run_grid(&grid).unwrap();
        for row in &outcome.rows {
            if row[1] == "0" && row[9] == "forwardPopulation" {
                let subopt: f64 = row[15].parse().unwrap();
                assert!(subopt.abs() < 1e-9, "delta=0 forward subopt {subopt}");
            }
        }
    }

    #[test]
    fn uniform_mixing_rows_favor_planning_over_distillation() {
        let grid = ExperimentGrid {
            family: Family::NoisySensor,
            deltas: vec![0.1],
            horizons: vec![5],
            state_counts: vec![2],
            obs_counts: vec![2],
            action_counts: vec![2],
            dynamics: vec![DynamicsMode::UniformMixing],
            noise: NoiseStyle::Uniform,
            algorithms: vec![Algorithm::ForwardPopulation, Algorithm::FramestackPlan],
            window_lens: vec![1, 2],
            etas: vec![0.0],
            seeds: vec![5, 6],
            mc_samples: 1000,
            metric_samples: 500,
            distill_samples: 200,
            ql_episodes: 200,
        };
        let outcome = run_grid(&grid).unwrap();
        // Pair rows by (seed, window length).
        for seed in ["5", "6"] {
            for l in ["1", "2"] {
                let j = |alg: &str| -> f64 {
                    outcome
                        .rows
                        .iter()
                        .find(|r| r[8] == seed && r[9] == alg && r[10] == l)
                        .unwrap()[13]
                        .parse()
                        .unwrap()
                };
                assert!(
                    j("framestackPlan") >= j("forwardPopulation"),
                    "seed {seed} L {l}"
                );
            }
        }
    }

    #[test]
    fn grid_config_roundtrips_through_json() {
        let grid = tiny_grid();
        let text = serde_json::to_string(&grid).unwrap();
        let parsed: ExperimentGrid = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed.validate().unwrap(), grid.validate().unwrap());
        // Defaults fill in omitted fields.
        let minimal = r#"{
            "family": "lowerBound",
            "deltas": [0.1],
            "horizons": [2],
            "algorithms": ["latentExpert"],
            "seeds": [1]
        }"#;
        let parsed: ExperimentGrid = serde_json::from_str(minimal).unwrap();
        assert_eq!(parsed.window_lens, vec![1]);
        assert_eq!(parsed.mc_samples, 10_000);
    }
}

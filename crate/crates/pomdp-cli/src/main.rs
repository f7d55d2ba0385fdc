//! Command-line front end for the tabular POMDP laboratory.
//!
//! Subcommands: `gen` (build a model file), `filter` (run the belief
//! filter), `plan` / `distill` (compute policies), `eval` (evaluate a saved
//! policy), `grid` (run an experiment sweep to CSV), `verify` (run the
//! bound-verification suites), and `martingale` (the supermartingale
//! checker). Stochastic subcommands require an explicit `--seed`.

mod policy_file;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pomdp_lab::belief::{approx_belief, true_belief, Belief};
use pomdp_lab::generators::{
    gen_lower_bound, gen_noisy_sensor, gen_perturbed_block, gen_smoothing_toy, load_model,
    save_model, DynamicsMode, NoiseStyle,
};
use pomdp_lab::grid::{run_grid, ExperimentGrid};
use pomdp_lab::planning::{
    framestack_plan, framestack_q_learning, latent_optimal, optimal_executable,
    smoothed_latent_optimal, QLearningConfig,
};
use pomdp_lab::value::{policy_value, EvalMode};
use pomdp_lab::verify::{martingale_check, verify_bounds, Suite, VerifyConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "pomdp-lab",
    about = "Tabular POMDP laboratory: filtering, planning, distillation, metrics, experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    PerturbedBlock,
    NoisySensor,
    LowerBound,
    SmoothingToy,
}

#[derive(Clone, Copy, ValueEnum)]
enum DynamicsArg {
    Deterministic,
    Stochastic,
    UniformMixing,
}

impl From<DynamicsArg> for DynamicsMode {
    fn from(d: DynamicsArg) -> Self {
        match d {
            DynamicsArg::Deterministic => DynamicsMode::Deterministic,
            DynamicsArg::Stochastic => DynamicsMode::Stochastic,
            DynamicsArg::UniformMixing => DynamicsMode::UniformMixing,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Uniform,
    RandomDirichlet,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanAlgorithm {
    Latent,
    Smoothed,
    FramestackPlan,
    FramestackQlearning,
    OptimalExecutable,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistillAlgorithm {
    ForwardPopulation,
    ForwardFinite,
    BehaviorCloning,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalModeArg {
    Exact,
    Mc,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    #[arg(long, default_value_t = 2)]
    states: usize,
    /// Observation count (perturbed-block only; noisy-sensor uses X = S).
    #[arg(long, default_value_t = 4)]
    obs: usize,
    #[arg(long, default_value_t = 2)]
    actions: usize,
    #[arg(long, default_value_t = 4)]
    horizon: usize,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = DynamicsArg::Stochastic)]
    dynamics: DynamicsArg,
    #[arg(long, value_enum, default_value_t = NoiseArg::Uniform)]
    noise: NoiseArg,
    /// Observation confusion level for the smoothing toy.
    #[arg(long, default_value_t = 0.25)]
    confusion: f64,
    /// Required for the randomized families (perturbed-block, noisy-sensor).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FilterArgs {
    #[arg(long)]
    model: PathBuf,
    /// Comma-separated observation indices `x_0,...,x_t`.
    #[arg(long, value_delimiter = ',')]
    obs: Vec<usize>,
    /// Comma-separated action indices `a_0,...,a_{t-1}` (one fewer).
    #[arg(long, value_delimiter = ',', default_value = "")]
    acts: Vec<usize>,
    /// Also report the windowed posterior with a uniform prior over this
    /// window length.
    #[arg(long)]
    window_len: Option<usize>,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    algorithm: PlanAlgorithm,
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long, default_value_t = 1)]
    window_len: usize,
    #[arg(long, default_value_t = 20_000)]
    episodes: usize,
    /// Required for framestack-qlearning.
    #[arg(long)]
    seed: Option<u64>,
    /// Write the computed policy (latent and window policies only).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DistillArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    algorithm: DistillAlgorithm,
    #[arg(long, default_value_t = 1)]
    window_len: usize,
    /// Motor-noise level used when computing the expert to distill.
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    /// Trajectories (behavior cloning) or rollouts per step (forward).
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Stack actions as well as observations (behavior cloning).
    #[arg(long)]
    include_actions: bool,
    /// Required for the sampling distillers.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, value_enum, default_value_t = EvalModeArg::Exact)]
    mode: EvalModeArg,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Required for Monte-Carlo evaluation.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct GridArgs {
    /// Grid configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override the seed list from the config.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Comma-separated suite names, or `all`.
    #[arg(long, default_value = "all")]
    suites: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    instances: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MartingaleArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1e-3, 1e-4])]
    epsilons: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 5])]
    window_lens: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    scale: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a model file.
    Gen(GenArgs),
    /// Run the exact belief filter on a history.
    Filter(FilterArgs),
    /// Compute a planner policy and report its exact value.
    Plan(PlanArgs),
    /// Distill the latent expert into a window policy.
    Distill(DistillArgs),
    /// Evaluate a saved policy.
    Eval(EvalArgs),
    /// Run an experiment grid and write CSV.
    Grid(GridArgs),
    /// Run bound-verification suites. Exits nonzero if any check fails.
    Verify(VerifyArgs),
    /// Check the supermartingale bound on the reference chain.
    Martingale(MartingaleArgs),
}

fn require_seed(seed: Option<u64>, what: &str) -> Result<u64> {
    seed.with_context(|| format!("--seed is required for {what}"))
}

fn cmd_gen(args: GenArgs) -> Result<()> {
    let (model, meta) = match args.family {
        FamilyArg::PerturbedBlock => {
            let seed = require_seed(args.seed, "the perturbed-block family")?;
            let (model, meta) = gen_perturbed_block(
                args.states,
                args.obs,
                args.actions,
                args.horizon,
                args.delta,
                args.dynamics.into(),
                match args.noise {
                    NoiseArg::Uniform => NoiseStyle::Uniform,
                    NoiseArg::RandomDirichlet => NoiseStyle::RandomDirichlet,
                },
                seed,
            )?;
            (model, Some(meta))
        }
        FamilyArg::NoisySensor => {
            let seed = require_seed(args.seed, "the noisy-sensor family")?;
            let (model, meta) =
                gen_noisy_sensor(args.states, args.horizon, args.delta, args.dynamics.into(), seed)?;
            (model, Some(meta))
        }
        FamilyArg::LowerBound => (gen_lower_bound(args.delta, args.horizon)?, None),
        FamilyArg::SmoothingToy => (gen_smoothing_toy(args.confusion)?, None),
    };
    save_model(&model, meta.as_ref(), &args.out)?;
    println!(
        "wrote {} (horizon {}, trajectory space {})",
        args.out.display(),
        model.horizon(),
        model.trajectory_space_size()
    );
    Ok(())
}

fn cmd_filter(args: FilterArgs) -> Result<()> {
    let (model, _) = load_model(&args.model)?;
    if args.obs.is_empty() {
        bail!("--obs must list at least the first observation");
    }
    let t = args.obs.len() - 1;
    let exact = true_belief(&model, &args.obs, &args.acts)?;
    let mut report = serde_json::json!({
        "step": t,
        "belief": exact.probs(),
    });
    if let Some(window_len) = args.window_len {
        if window_len > t {
            bail!("window length {window_len} exceeds history length {t}");
        }
        let start = t - window_len;
        let prior = Belief::uniform(&model, start);
        let windowed = approx_belief(
            &model,
            &prior,
            &args.acts[start..t],
            &args.obs[start + 1..=t],
        )?;
        report["windowed_belief"] = serde_json::json!(windowed.probs());
        report["window_len"] = serde_json::json!(window_len);
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_plan(args: PlanArgs) -> Result<()> {
    let (model, _) = load_model(&args.model)?;
    match args.algorithm {
        PlanAlgorithm::Latent | PlanAlgorithm::Smoothed => {
            let solution = if matches!(args.algorithm, PlanAlgorithm::Latent) {
                latent_optimal(&model)
            } else {
                smoothed_latent_optimal(&model, args.eta)?
            };
            let value = pomdp_lab::value::latent_policy_value(&model, &solution.policy);
            println!(
                "{}",
                serde_json::json!({
                    "algorithm": "latent",
                    "eta": args.eta,
                    "j": value,
                    "planned_value": solution.initial_value(&model),
                })
            );
            if let Some(out) = &args.out {
                policy_file::save_latent(&solution.policy, out)?;
            }
        }
        PlanAlgorithm::FramestackPlan => {
            let policy = framestack_plan(&model, args.window_len)?;
            let value = pomdp_lab::value::window_policy_value(&model, &policy);
            println!(
                "{}",
                serde_json::json!({
                    "algorithm": "framestackPlan",
                    "window_len": args.window_len,
                    "j": value,
                })
            );
            if let Some(out) = &args.out {
                policy_file::save_window(&policy, out)?;
            }
        }
        PlanAlgorithm::FramestackQlearning => {
            let seed = require_seed(args.seed, "framestack-qlearning")?;
            let policy = framestack_q_learning(
                &model,
                args.window_len,
                QLearningConfig {
                    episodes: args.episodes,
                    ..QLearningConfig::default()
                },
                seed,
            )?;
            let value = pomdp_lab::value::window_policy_value(&model, &policy);
            println!(
                "{}",
                serde_json::json!({
                    "algorithm": "framestackQLearning",
                    "window_len": args.window_len,
                    "episodes": args.episodes,
                    "j": value,
                })
            );
            if let Some(out) = &args.out {
                policy_file::save_window(&policy, out)?;
            }
        }
        PlanAlgorithm::OptimalExecutable => {
            let solution = optimal_executable(&model)?;
            println!(
                "{}",
                serde_json::json!({
                    "algorithm": "optimalExecutable",
                    "j": solution.value,
                })
            );
            if args.out.is_some() {
                bail!("optimal-executable policies are history tables; re-derive them from the model instead of saving");
            }
        }
    }
    Ok(())
}

fn cmd_distill(args: DistillArgs) -> Result<()> {
    let (model, _) = load_model(&args.model)?;
    let expert = if args.eta > 0.0 {
        smoothed_latent_optimal(&model, args.eta)?
    } else {
        latent_optimal(&model)
    };
    let policy = match args.algorithm {
        DistillAlgorithm::ForwardPopulation => {
            pomdp_lab::distill::forward_population(&model, &expert.policy, args.window_len)?
        }
        DistillAlgorithm::ForwardFinite => {
            let seed = require_seed(args.seed, "forward-finite")?;
            pomdp_lab::distill::forward_finite(
                &model,
                &expert.policy,
                args.window_len,
                args.samples,
                seed,
            )?
        }
        DistillAlgorithm::BehaviorCloning => {
            let seed = require_seed(args.seed, "behavior-cloning")?;
            pomdp_lab::distill::behavior_cloning(
                &model,
                &expert.policy,
                args.window_len,
                args.samples,
                args.include_actions,
                seed,
            )?
        }
    };
    let value = pomdp_lab::value::window_policy_value(&model, &policy);
    policy_file::save_window(&policy, &args.out)?;
    println!(
        "{}",
        serde_json::json!({
            "window_len": args.window_len,
            "eta": args.eta,
            "j": value,
            "stored_rows": policy.stored_row_count(),
            "out": args.out.display().to_string(),
        })
    );
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let (model, _) = load_model(&args.model)?;
    let policy = policy_file::load(&args.policy, &model)?;
    let mode = match args.mode {
        EvalModeArg::Exact => EvalMode::Exact,
        EvalModeArg::Mc => EvalMode::MonteCarlo {
            n: args.samples,
            seed: require_seed(args.seed, "Monte-Carlo evaluation")?,
        },
    };
    let est = policy_value(&model, policy.as_ref(), mode)?;
    println!(
        "{}",
        serde_json::json!({
            "j": est.value,
            "stderr": est.stderr,
            "n": est.n,
            "exact": est.is_exact(),
        })
    );
    Ok(())
}

fn cmd_grid(args: GridArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut grid: ExperimentGrid = serde_json::from_str(&text)?;
    if !args.seeds.is_empty() {
        grid.seeds = args.seeds.clone();
    }
    let rows = grid.validate()?;
    println!("grid size: {rows} rows");
    let outcome = run_grid(&grid)?;
    outcome.write_csv(&args.out)?;
    println!("wrote {} ({} rows)", args.out.display(), outcome.rows.len());
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> Result<bool> {
    let suites = if args.suites == "all" {
        Suite::all()
    } else {
        args.suites
            .split(',')
            .map(|name| {
                Suite::from_name(name.trim())
                    .with_context(|| format!("unknown suite {name:?}"))
            })
            .collect::<Result<Vec<_>>>()?
    };
    let report = verify_bounds(
        &suites,
        VerifyConfig {
            seed: args.seed,
            instances: args.instances,
        },
    )?;
    for suite in &report.suites {
        let failed = suite.checks.iter().filter(|c| !c.pass).count();
        println!(
            "suite {:-<24} {} ({} checks, {} failed)",
            format!("{} ", suite.name),
            if suite.pass { "PASS" } else { "FAIL" },
            suite.checks.len(),
            failed
        );
        for check in suite.checks.iter().filter(|c| !c.pass) {
            println!("  FAIL {}: {} (margin {})", check.id, check.detail, check.margin);
        }
    }
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_json()?)?;
        println!("wrote {}", out.display());
    }
    Ok(report.pass)
}

fn cmd_martingale(args: MartingaleArgs) -> Result<bool> {
    let report = martingale_check(
        &args.epsilons,
        &args.window_lens,
        args.scale,
        args.trials,
        args.seed,
    )?;
    for cell in &report.cells {
        println!(
            "eps {:<8} L {:>2}: estimate {:.6e} + 3se {:.6e} vs bound {:.6e} -> {}",
            cell.epsilon,
            cell.window_len,
            cell.estimate,
            3.0 * cell.stderr,
            cell.bound,
            if cell.pass { "PASS" } else { "FAIL" }
        );
    }
    if let Some(out) = &args.out {
        std::fs::write(out, report.to_json()?)?;
        println!("wrote {}", out.display());
    }
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen(args) => cmd_gen(args).map(|()| true),
        Command::Filter(args) => cmd_filter(args).map(|()| true),
        Command::Plan(args) => cmd_plan(args).map(|()| true),
        Command::Distill(args) => cmd_distill(args).map(|()| true),
        Command::Eval(args) => cmd_eval(args).map(|()| true),
        Command::Grid(args) => cmd_grid(args).map(|()| true),
        Command::Verify(args) => cmd_verify(args),
        Command::Martingale(args) => cmd_martingale(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

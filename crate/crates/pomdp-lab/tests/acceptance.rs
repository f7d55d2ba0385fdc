//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its margins (visible with `--nocapture`).
//!
//! Everything here is pinned: tolerances, instance counts, seeds, and
//! sample sizes. Exact checks use enumeration oracles; statistical checks
//! state their error bars explicitly.

use pomdp_lab::distill::{forward_population, max_reachable_window_tv};
use pomdp_lab::generators::{
    gen_lower_bound, gen_noisy_sensor, gen_perturbed_block, gen_smoothing_toy, load_model,
    lower_bound_meta, model_to_json, DynamicsMode, NoiseStyle,
};
use pomdp_lab::grid::{run_grid, Algorithm, ExperimentGrid, Family};
use pomdp_lab::metrics::{action_prediction_error, trajectory_tv, MetricMode, TvMode};
use pomdp_lab::planning::{
    framestack_plan, latent_optimal, smoothed_latent_optimal,
};
use pomdp_lab::policy::PolicyRef;
use pomdp_lab::value::{latent_policy_value, window_policy_value};
use pomdp_lab::verify::{martingale_check, verify_bounds, Suite, VerifyConfig};
use std::time::Instant;

fn fixture_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/lower_bound_delta01_h2.json")
}

#[test]
fn criterion_01_filter_oracle() {
    let started = Instant::now();
    let report = verify_bounds(
        &[Suite::FilterOracle],
        VerifyConfig {
            seed: 101,
            instances: 50,
        },
    )
    .unwrap();
    let elapsed = started.elapsed();
    let worst = report.suites[0]
        .checks
        .iter()
        .map(|c| c.tolerance - c.margin)
        .fold(0.0f64, f64::max);
    assert!(report.pass, "{report:?}");
    assert!(
        elapsed.as_secs() < 60,
        "filter oracle took {elapsed:?}, budget is one minute"
    );
    println!(
        "criterion 1 (filter oracle, 50 instances, tol 1e-9): PASS — worst gap {worst:.3e}, {elapsed:?}"
    );
}

#[test]
fn criterion_02_window_prior_oracle() {
    let report = verify_bounds(
        &[Suite::WindowOracle],
        VerifyConfig {
            seed: 102,
            instances: 50,
        },
    )
    .unwrap();
    let worst = report.suites[0]
        .checks
        .iter()
        .map(|c| c.tolerance - c.margin)
        .fold(0.0f64, f64::max);
    assert!(report.pass, "{report:?}");
    println!(
        "criterion 2 (window-prior oracle, 50 instances, tol 1e-9): PASS — worst gap {worst:.3e}"
    );
}

#[test]
fn criterion_03_latent_dominance() {
    let report = verify_bounds(
        &[Suite::LatentDominance],
        VerifyConfig {
            seed: 103,
            instances: 50,
        },
    )
    .unwrap();
    let worst = report.suites[0]
        .checks
        .iter()
        .map(|c| c.tolerance - c.margin)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(report.pass, "{report:?}");
    println!(
        "criterion 3 (latent dominance, 50 instances, tol 1e-9): PASS — worst J_exec - J_latent = {worst:.3e}"
    );
}

#[test]
fn criterion_04_misspecification_decompositions() {
    let report = verify_bounds(
        &[Suite::Misspecification],
        VerifyConfig {
            seed: 104,
            instances: 50,
        },
    )
    .unwrap();
    let worst = report.suites[0]
        .checks
        .iter()
        .map(|c| c.tolerance - c.margin)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(report.pass, "{report:?}");
    println!(
        "criterion 4 (misspecification decompositions, 50 triples x 2 forms, tol 1e-9): PASS — worst LHS - RHS = {worst:.3e}"
    );
}

#[test]
fn criterion_05_lower_bound_instance() {
    let started = Instant::now();
    let report = verify_bounds(&[Suite::LowerBound], VerifyConfig::default()).unwrap();
    assert!(report.pass, "{report:?}");
    let worst = report.suites[0]
        .checks
        .iter()
        .map(|c| c.tolerance - c.margin)
        .fold(0.0f64, f64::max);

    // The shipped fixture byte-matches regeneration and reproduces the
    // closed-form TV at delta = 0.1, H = 2.
    let fixture = std::fs::read_to_string(fixture_path()).expect("fixture is committed");
    let model = gen_lower_bound(0.1, 2).unwrap();
    let regenerated = model_to_json(&model, Some(&lower_bound_meta(2, 0.1))).unwrap();
    assert_eq!(fixture, regenerated, "fixture drifted from the generator");
    let (loaded, meta) = load_model(fixture_path()).unwrap();
    meta.expect("fixture carries its block decomposition")
        .check(&loaded)
        .unwrap();
    let expert = latent_optimal(&loaded).policy;
    let mut greedy =
        pomdp_lab::policy::WindowPolicy::new(2, 1, false, pomdp_lab::policy::WindowFallback::Uniform)
            .unwrap();
    for t in 0..2 {
        for x in 0..2 {
            let mut row = vec![0.0, 0.0];
            row[x] = 1.0;
            greedy
                .insert(
                    t,
                    pomdp_lab::policy::WindowKey {
                        obs: vec![x],
                        acts: vec![],
                    },
                    row,
                )
                .unwrap();
        }
    }
    let tv = trajectory_tv(
        &loaded,
        PolicyRef::Latent(&expert),
        PolicyRef::Window(&greedy),
        TvMode::Exact,
    )
    .unwrap()
    .value;
    assert!((tv - 0.19).abs() < 1e-9, "fixture TV {tv}");

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "lower-bound suite took {elapsed:?}, budget is one minute"
    );
    println!(
        "criterion 5 (lower-bound closed forms, deltas x horizons, tol 1e-9): PASS — worst deviation {worst:.3e}, fixture TV {tv:.12}, {elapsed:?}"
    );
}

#[test]
fn criterion_06_deterministic_decodability() {
    let report = verify_bounds(
        &[Suite::DecodabilityDecay],
        VerifyConfig {
            seed: 106,
            instances: 20,
        },
    )
    .unwrap();
    let worst = report.suites[0]
        .checks
        .iter()
        .map(|c| c.tolerance - c.margin)
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(report.pass, "{report:?}");
    println!(
        "criterion 6 (decodability <= delta under deterministic dynamics, 20 instances, n=10^4, 3 stderr): PASS — worst slack {worst:.3e}"
    );
}

#[test]
fn criterion_07_stochasticity_tradeoff() {
    // Uniform-mixing family: frame-stacked planning strictly beats forward
    // distillation at every window length.
    let mut worst_margin = f64::INFINITY;
    for seed in [1, 2, 3] {
        let (model, _) =
            gen_noisy_sensor(2, 10, 0.1, DynamicsMode::UniformMixing, seed).unwrap();
        let expert = latent_optimal(&model).policy;
        for window_len in [1, 2, 3] {
            let plan = framestack_plan(&model, window_len).unwrap();
            let fwd = forward_population(&model, &expert, window_len).unwrap();
            let j_plan = window_policy_value(&model, &plan);
            let j_fwd = window_policy_value(&model, &fwd);
            let margin = j_plan - j_fwd;
            assert!(
                margin > 1e-9,
                "seed {seed} L={window_len}: planning margin {margin} not strictly positive"
            );
            worst_margin = worst_margin.min(margin);
        }
    }

    // Decodable deterministic family: the two coincide exactly.
    let mut worst_gap = 0.0f64;
    for seed in [4, 5, 6] {
        let (model, _) = gen_perturbed_block(
            2,
            4,
            2,
            6,
            0.0,
            DynamicsMode::Deterministic,
            NoiseStyle::Uniform,
            seed,
        )
        .unwrap();
        let expert = latent_optimal(&model).policy;
        for window_len in [1, 2] {
            let plan = framestack_plan(&model, window_len).unwrap();
            let fwd = forward_population(&model, &expert, window_len).unwrap();
            let gap = (window_policy_value(&model, &plan) - window_policy_value(&model, &fwd)).abs();
            assert!(gap <= 1e-9, "seed {seed} L={window_len}: gap {gap}");
            worst_gap = worst_gap.max(gap);
        }
    }
    println!(
        "criterion 7 (stochasticity trade-off): PASS — uniform-mixing min margin {worst_margin:.4}, delta=0 max |gap| {worst_gap:.3e}"
    );
}

#[test]
fn criterion_08_contraction_decay() {
    let report = verify_bounds(
        &[Suite::ContractionShape],
        VerifyConfig {
            seed: 108,
            instances: 10,
        },
    )
    .unwrap();
    assert!(report.pass, "{report:?}");
    println!(
        "criterion 8 (belief-contraction decay in L, 10 instances, paired 3 stderr; exact 0 under uniform mixing): PASS"
    );
}

#[test]
fn criterion_09_forward_consistency() {
    // Ten tiny instances, two seeds each; a run passes when the worst
    // reachable-window TV between the finite-sample and population forward
    // policies is at most 0.05. At least 18 of the 20 runs must pass.
    let n_per_step = 10_000;
    let mut passes = 0usize;
    let mut worst = 0.0f64;
    for instance in 0..10u64 {
        let (model, _) = gen_noisy_sensor(
            2 + (instance % 2) as usize,
            3,
            0.15 + 0.05 * (instance % 3) as f64,
            if instance % 2 == 0 {
                DynamicsMode::UniformMixing
            } else {
                DynamicsMode::Stochastic
            },
            900 + instance,
        )
        .unwrap();
        let expert = latent_optimal(&model).policy;
        let population = forward_population(&model, &expert, 1).unwrap();
        for seed in [instance * 2, instance * 2 + 1] {
            let finite = forward_population_finite(&model, &expert, n_per_step, seed);
            let gap = max_reachable_window_tv(&model, &population, &finite);
            worst = worst.max(gap);
            if gap <= 0.05 {
                passes += 1;
            }
        }
    }
    assert!(
        passes >= 18,
        "only {passes}/20 runs within TV 0.05 (worst {worst})"
    );
    println!(
        "criterion 9 (forward finite-sample consistency, n=10^4, TV <= 0.05): PASS — {passes}/20 runs, worst TV {worst:.4}"
    );
}

fn forward_population_finite(
    model: &pomdp_lab::model::LayeredPomdp,
    expert: &pomdp_lab::policy::LatentPolicy,
    n_per_step: usize,
    seed: u64,
) -> pomdp_lab::policy::WindowPolicy {
    pomdp_lab::distill::forward_finite(model, expert, 1, n_per_step, seed).unwrap()
}

#[test]
fn criterion_10_martingale_bound() {
    let report = martingale_check(&[1e-3, 1e-4], &[1, 2, 3, 4, 5], 1.0, 100_000, 110).unwrap();
    assert!(report.pass, "{report:?}");
    let tightest = report
        .cells
        .iter()
        .map(|c| c.bound - (c.estimate + 3.0 * c.stderr))
        .fold(f64::INFINITY, f64::min);
    println!(
        "criterion 10 (supermartingale bound, eps in {{1e-3, 1e-4}}, L in 1..=5, 10^5 trials): PASS — tightest margin {tightest:.3e}"
    );
}

#[test]
fn criterion_11_smoothing() {
    // On the toy instance the smoothed expert has strictly smaller
    // action-prediction error and distills to a strictly better policy.
    let model = gen_smoothing_toy(0.25).unwrap();
    let plain = latent_optimal(&model);
    let smoothed = smoothed_latent_optimal(&model, 0.2).unwrap();

    let apred_sum = |expert: &pomdp_lab::policy::LatentPolicy| -> f64 {
        let composed = pomdp_lab::planning::compose_with_true_belief(&model, expert);
        (0..model.horizon())
            .map(|t| {
                action_prediction_error(
                    &model,
                    expert,
                    PolicyRef::History(&composed),
                    t,
                    MetricMode::Exact,
                )
                .unwrap()
                .value
            })
            .sum()
    };
    let err_plain = apred_sum(&plain.policy);
    let err_smoothed = apred_sum(&smoothed.policy);
    assert!(
        err_smoothed < err_plain,
        "smoothed action-prediction error {err_smoothed} not below {err_plain}"
    );
    assert!(err_smoothed.abs() < 1e-12, "toy smoothed expert is exactly predictable");

    let distilled_plain = forward_population(&model, &plain.policy, 1).unwrap();
    let distilled_smoothed = forward_population(&model, &smoothed.policy, 1).unwrap();
    let j_plain = window_policy_value(&model, &distilled_plain);
    let j_smoothed = window_policy_value(&model, &distilled_smoothed);
    assert!(
        j_smoothed >= j_plain,
        "distilled smoothed {j_smoothed} below distilled plain {j_plain}"
    );

    // Both experts are latent-optimal on the true model, so the distilled
    // improvement is pure smoothing gain.
    assert!(
        (latent_policy_value(&model, &plain.policy)
            - latent_policy_value(&model, &smoothed.policy))
        .abs()
            < 1e-12
    );

    // On the decodable variant the effect vanishes.
    let decodable = gen_smoothing_toy(0.0).unwrap();
    let plain0 = latent_optimal(&decodable);
    let smoothed0 = smoothed_latent_optimal(&decodable, 0.2).unwrap();
    let d_plain = forward_population(&decodable, &plain0.policy, 1).unwrap();
    let d_smoothed = forward_population(&decodable, &smoothed0.policy, 1).unwrap();
    let gap = window_policy_value(&decodable, &d_smoothed)
        - window_policy_value(&decodable, &d_plain);
    assert!(
        gap.abs() <= 1e-9,
        "smoothing effect should vanish on the decodable instance, gap {gap}"
    );
    println!(
        "criterion 11 (smoothing): PASS — action-prediction {err_plain:.4} -> {err_smoothed:.1e}, distilled J {j_plain:.5} -> {j_smoothed:.5}, decodable gap {gap:.1e}"
    );
}

#[test]
fn criterion_12_reproducibility() {
    let grid = ExperimentGrid {
        family: Family::LowerBound,
        deltas: vec![0.1],
        horizons: vec![2, 3],
        state_counts: vec![2],
        obs_counts: vec![2],
        action_counts: vec![2],
        dynamics: vec![DynamicsMode::UniformMixing],
        noise: NoiseStyle::Uniform,
        algorithms: vec![
            Algorithm::LatentExpert,
            Algorithm::ComposeTrue,
            Algorithm::ForwardPopulation,
            Algorithm::ForwardFinite,
            Algorithm::BehaviorCloning,
            Algorithm::FramestackPlan,
            Algorithm::FramestackQLearning,
            Algorithm::OptimalExecutable,
        ],
        window_lens: vec![1, 2],
        etas: vec![0.0, 0.3],
        seeds: vec![11, 12],
        mc_samples: 2_000,
        metric_samples: 1_000,
        distill_samples: 400,
        ql_episodes: 1_000,
    };
    let first = run_grid(&grid).unwrap().to_csv_without_timing().unwrap();
    let second = run_grid(&grid).unwrap().to_csv_without_timing().unwrap();
    assert_eq!(first, second, "grid rerun with identical seeds must be byte-identical");
    println!(
        "criterion 12 (reproducibility): PASS — {} bytes of CSV identical across reruns",
        first.len()
    );
}

/// Regenerates the shipped lower-bound fixture. Run explicitly with
/// `cargo test -p pomdp-lab --test acceptance regenerate_fixture -- --ignored`.
#[test]
#[ignore]
fn regenerate_fixture() {
    let model = gen_lower_bound(0.1, 2).unwrap();
    let text = model_to_json(&model, Some(&lower_bound_meta(2, 0.1))).unwrap();
    std::fs::create_dir_all(fixture_path().parent().unwrap()).unwrap();
    std::fs::write(fixture_path(), text).unwrap();
}

// ---------------------------------------------------------------------------
// Cross-cutting invariants exercised at the integration level.
// ---------------------------------------------------------------------------

#[test]
fn window_values_match_enumeration_everywhere() {
    // Exact window-policy evaluation equals the enumeration value on every
    // instance under the cap (here: the verify instances).
    for seed in 0..10u64 {
        let (model, _) = gen_perturbed_block(
            2,
            3,
            2,
            3,
            0.2,
            DynamicsMode::Stochastic,
            NoiseStyle::Uniform,
            700 + seed,
        )
        .unwrap();
        let expert = latent_optimal(&model).policy;
        let wp = forward_population(&model, &expert, 1).unwrap();
        let direct = window_policy_value(&model, &wp);
        let table = pomdp_lab::trajectory::enumerate_trajectories(&model, &wp).unwrap();
        assert!((direct - table.value(&model)).abs() < 1e-9);
        assert!((table.total_probability() - 1.0).abs() < 1e-8);
    }
}

#[test]
fn smoothing_interpolates_lower_bound_family() {
    // On the lower-bound instance the smoothed expert keeps playing a = s
    // (rewards separate the actions), so composed values are unchanged.
    let model = gen_lower_bound(0.1, 3).unwrap();
    for eta in [0.0, 0.25, 0.5] {
        let smoothed = smoothed_latent_optimal(&model, eta).unwrap();
        for t in 0..3 {
            for s in 0..2 {
                assert_eq!(smoothed.policy.action_choice(t, s), Some(s));
            }
        }
    }
}

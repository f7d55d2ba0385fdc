//! Model families and on-disk persistence.
//!
//! The central family is the perturbed Block MDP: emissions are the convex
//! mixture `(1 - delta) * blockEmit + delta * noiseEmit`, where the block
//! kernel has pairwise disjoint supports across states (so at `delta = 0`
//! one observation decodes the state exactly). The noisy sensor is the
//! special case `X = S` with identity block kernel. The lower-bound
//! instance pairs a noisy sensor with uniformly mixing dynamics and the
//! match-the-state reward, making one observation a sufficient statistic
//! while keeping the latent expert inimitable. The smoothing toy is a
//! two-step instance on which motor-noise smoothing strictly changes which
//! expert gets distilled.
//!
//! Models serialize to a single JSON document; numbers use the shortest
//! decimal form that round-trips to the same IEEE double, so
//! save -> load -> save is byte-identical.

use crate::model::LayeredPomdp;
use crate::rng::{dirichlet_row, sample_index, substream};
use crate::{LabError, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Latent transition regime of a generated instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DynamicsMode {
    /// Each `(s, a)` row is a point mass (a random function into states).
    #[serde(rename = "deterministic")]
    Deterministic,
    /// Each `(s, a)` row is a random distribution.
    #[serde(rename = "stochastic")]
    Stochastic,
    /// Rows are uniform and independent of `(s, a)`; prior observations
    /// carry no information about the current state.
    #[serde(rename = "uniformMixing")]
    UniformMixing,
}

impl std::fmt::Display for DynamicsMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DynamicsMode::Deterministic => f.write_str("deterministic"),
            DynamicsMode::Stochastic => f.write_str("stochastic"),
            DynamicsMode::UniformMixing => f.write_str("uniformMixing"),
        }
    }
}

/// Shape of the noise kernel mixed into block emissions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NoiseStyle {
    /// Uniform over all observations (maximally spread noise).
    #[serde(rename = "uniform")]
    Uniform,
    /// An independent random distribution per state (adversarially
    /// confusable noise).
    #[serde(rename = "randomDirichlet")]
    RandomDirichlet,
}

/// The block decomposition behind a generated emission kernel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbedBlockMeta {
    pub delta: f64,
    /// `decode[t][x]` is the unique state whose block contains `x`.
    pub decode: Vec<Vec<usize>>,
    /// `blockEmit[t][s][x]`: disjoint-support kernel.
    #[serde(rename = "blockEmit")]
    pub block_emit: Vec<Vec<Vec<f64>>>,
    /// `noiseEmit[t][s][x]`: arbitrary kernel.
    #[serde(rename = "noiseEmit")]
    pub noise_emit: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "dynamicsMode")]
    pub dynamics: DynamicsMode,
}

impl PerturbedBlockMeta {
    /// Checks the block decomposition against a model: block supports are
    /// pairwise disjoint, the decode map matches them, and the emission
    /// kernel equals `(1 - delta) * blockEmit + delta * noiseEmit`
    /// entrywise within `1e-12`.
    pub fn check(&self, model: &LayeredPomdp) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(LabError::InvalidModel(format!(
                "delta {} outside [0, 1]",
                self.delta
            )));
        }
        for t in 0..model.horizon() {
            let states = model.state_count(t);
            let obs = model.obs_count(t);
            let mut owner: Vec<Option<usize>> = vec![None; obs];
            for s in 0..states {
                for x in 0..obs {
                    if self.block_emit[t][s][x] > 0.0 {
                        if let Some(prev) = owner[x] {
                            if prev != s {
                                return Err(LabError::InvalidModel(format!(
                                    "block supports overlap on observation {x} at step {t}"
                                )));
                            }
                        }
                        owner[x] = Some(s);
                        if self.decode[t][x] != s {
                            return Err(LabError::InvalidModel(format!(
                                "decode map disagrees with block support at step {t}, obs {x}"
                            )));
                        }
                    }
                }
            }
            for s in 0..states {
                for x in 0..obs {
                    let mixed = (1.0 - self.delta) * self.block_emit[t][s][x]
                        + self.delta * self.noise_emit[t][s][x];
                    if (mixed - model.emit_row(t, s)[x]).abs() > 1e-12 {
                        return Err(LabError::InvalidModel(format!(
                            "emission ({t},{s},{x}) is {} but mixture gives {mixed}",
                            model.emit_row(t, s)[x]
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

fn gen_transitions(
    dims_s: &[usize],
    dims_a: &[usize],
    dynamics: DynamicsMode,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<Vec<Vec<Vec<f64>>>> {
    let horizon = dims_s.len();
    let mut trans = Vec::with_capacity(horizon - 1);
    for t in 1..horizon {
        let mut kernel = Vec::with_capacity(dims_s[t - 1]);
        for _ in 0..dims_s[t - 1] {
            let mut per_action = Vec::with_capacity(dims_a[t - 1]);
            for _ in 0..dims_a[t - 1] {
                let row = match dynamics {
                    DynamicsMode::Deterministic => {
                        let target =
                            sample_index(rng, &vec![1.0 / dims_s[t] as f64; dims_s[t]]);
                        let mut row = vec![0.0; dims_s[t]];
                        row[target] = 1.0;
                        row
                    }
                    DynamicsMode::Stochastic => dirichlet_row(rng, dims_s[t]),
                    DynamicsMode::UniformMixing => vec![1.0 / dims_s[t] as f64; dims_s[t]],
                };
                per_action.push(row);
            }
            kernel.push(per_action);
        }
        trans.push(kernel);
    }
    trans
}

/// Rewards drawn uniformly in `[0, 1/H]`, then globally rescaled so the
/// per-episode budget `sum_t max reward[t] = 1` holds with equality.
fn gen_rewards(
    dims_s: &[usize],
    dims_a: &[usize],
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Vec<Vec<Vec<f64>>> {
    use rand::Rng;
    let horizon = dims_s.len();
    let mut reward: Vec<Vec<Vec<f64>>> = (0..horizon)
        .map(|t| {
            (0..dims_s[t])
                .map(|_| {
                    (0..dims_a[t])
                        .map(|_| rng.random::<f64>() / horizon as f64)
                        .collect()
                })
                .collect()
        })
        .collect();
    let budget: f64 = (0..horizon)
        .map(|t| {
            reward[t]
                .iter()
                .flat_map(|row| row.iter().copied())
                .fold(0.0, f64::max)
        })
        .sum();
    for table in &mut reward {
        for row in table {
            for v in row {
                *v /= budget;
            }
        }
    }
    reward
}

/// Generates a delta-perturbed Block MDP.
///
/// Observations are partitioned into contiguous blocks of `floor(X/S)` per
/// state (the remainder goes to the last state); the block kernel is uniform
/// within each block. Requires `obs >= states`.
pub fn gen_perturbed_block(
    states: usize,
    obs: usize,
    actions: usize,
    horizon: usize,
    delta: f64,
    dynamics: DynamicsMode,
    noise: NoiseStyle,
    seed: u64,
) -> Result<(LayeredPomdp, PerturbedBlockMeta)> {
    if states == 0 || actions == 0 || horizon == 0 {
        return Err(LabError::InvalidArgument(
            "states, actions, and horizon must be positive".into(),
        ));
    }
    if obs < states {
        return Err(LabError::InvalidArgument(format!(
            "need at least as many observations as states ({obs} < {states})"
        )));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(LabError::InvalidArgument(format!(
            "delta {delta} outside [0, 1]"
        )));
    }
    let mut rng = substream(seed, &[0x67]);
    let dims_s = vec![states; horizon];
    let dims_a = vec![actions; horizon];

    // Contiguous block partition, deterministic given (S, X).
    let block_size = obs / states;
    let mut decode_step = vec![states - 1; obs];
    let mut block_step = vec![vec![0.0; obs]; states];
    for s in 0..states {
        let start = s * block_size;
        let end = if s + 1 == states {
            obs
        } else {
            start + block_size
        };
        for x in start..end {
            decode_step[x] = s;
        }
        let width = end - start;
        for x in start..end {
            block_step[s][x] = 1.0 / width as f64;
        }
    }

    let mut emit = Vec::with_capacity(horizon);
    let mut noise_emit = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut noise_step = Vec::with_capacity(states);
        for _ in 0..states {
            let row = match noise {
                NoiseStyle::Uniform => vec![1.0 / obs as f64; obs],
                NoiseStyle::RandomDirichlet => dirichlet_row(&mut rng, obs),
            };
            noise_step.push(row);
        }
        let emit_step: Vec<Vec<f64>> = (0..states)
            .map(|s| {
                (0..obs)
                    .map(|x| (1.0 - delta) * block_step[s][x] + delta * noise_step[s][x])
                    .collect()
            })
            .collect();
        emit.push(emit_step);
        noise_emit.push(noise_step);
    }

    let init = dirichlet_row(&mut rng, states);
    let trans = gen_transitions(&dims_s, &dims_a, dynamics, &mut rng);
    let reward = gen_rewards(&dims_s, &dims_a, &mut rng);
    let model = LayeredPomdp::new(init, trans, emit, reward)?;
    let meta = PerturbedBlockMeta {
        delta,
        decode: vec![decode_step; horizon],
        block_emit: vec![block_step; horizon],
        noise_emit,
        dynamics,
    };
    meta.check(&model)?;
    Ok((model, meta))
}

/// The noisy sensor special case: `X = S`, identity block kernel, noise
/// uniform over the `S - 1` wrong symbols, so the true state is observed
/// with probability exactly `1 - delta`.
pub fn gen_noisy_sensor(
    states: usize,
    horizon: usize,
    delta: f64,
    dynamics: DynamicsMode,
    seed: u64,
) -> Result<(LayeredPomdp, PerturbedBlockMeta)> {
    if states == 0 || horizon == 0 {
        return Err(LabError::InvalidArgument(
            "states and horizon must be positive".into(),
        ));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(LabError::InvalidArgument(format!(
            "delta {delta} outside [0, 1]"
        )));
    }
    if states == 1 && delta > 0.0 {
        return Err(LabError::InvalidArgument(
            "a one-state sensor has no wrong symbols to flip to".into(),
        ));
    }
    let mut rng = substream(seed, &[0x68]);
    let dims_s = vec![states; horizon];
    let dims_a = vec![states; horizon];

    let mut block_step = vec![vec![0.0; states]; states];
    let mut noise_step = vec![vec![0.0; states]; states];
    for s in 0..states {
        block_step[s][s] = 1.0;
        for x in 0..states {
            if x != s {
                noise_step[s][x] = 1.0 / (states - 1).max(1) as f64;
            }
        }
        if states == 1 {
            noise_step[s][s] = 1.0;
        }
    }
    let emit_step: Vec<Vec<f64>> = (0..states)
        .map(|s| {
            (0..states)
                .map(|x| (1.0 - delta) * block_step[s][x] + delta * noise_step[s][x])
                .collect()
        })
        .collect();

    let init = dirichlet_row(&mut rng, states);
    let trans = gen_transitions(&dims_s, &dims_a, dynamics, &mut rng);
    let reward = gen_rewards(&dims_s, &dims_a, &mut rng);
    let model = LayeredPomdp::new(init, trans, vec![emit_step; horizon], reward)?;
    let meta = PerturbedBlockMeta {
        delta,
        decode: vec![(0..states).collect(); horizon],
        block_emit: vec![block_step; horizon],
        noise_emit: vec![noise_step; horizon],
        dynamics,
    };
    meta.check(&model)?;
    Ok((model, meta))
}

/// The hard instance for distillation: two states, observations, and
/// actions per step; uniform initial distribution and uniformly mixing
/// transitions; reward `1/H` for matching the state; the state is observed
/// with probability `1 - delta`. Deterministic construction, no seed.
///
/// The latent expert (play `a = s`) is worth exactly 1, any executable
/// policy at most `1 - delta`, and the trajectory distributions of the
/// latent expert and the greedy rule `a = x` are at total variation
/// `1 - (1 - delta)^H`.
pub fn gen_lower_bound(delta: f64, horizon: usize) -> Result<LayeredPomdp> {
    if horizon == 0 {
        return Err(LabError::InvalidArgument("horizon must be positive".into()));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(LabError::InvalidArgument(format!(
            "delta {delta} outside [0, 1]"
        )));
    }
    let emit_step = vec![
        vec![1.0 - delta, delta],
        vec![delta, 1.0 - delta],
    ];
    let r = 1.0 / horizon as f64;
    let reward_step = vec![vec![r, 0.0], vec![0.0, r]];
    let trans = vec![vec![vec![vec![0.5, 0.5]; 2]; 2]; horizon - 1];
    LayeredPomdp::new(
        vec![0.5, 0.5],
        trans,
        vec![emit_step; horizon],
        vec![reward_step; horizon],
    )
}

/// The decode map of [`gen_lower_bound`], packaged for bound checks.
pub fn lower_bound_meta(horizon: usize, delta: f64) -> PerturbedBlockMeta {
    let block = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let noise = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    PerturbedBlockMeta {
        delta,
        decode: vec![vec![0, 1]; horizon],
        block_emit: vec![block; horizon],
        noise_emit: vec![noise; horizon],
        dynamics: DynamicsMode::UniformMixing,
    }
}

/// A two-step instance where motor-noise smoothing changes which expert is
/// distilled.
///
/// Step 0 has two states on a line and five actions `0..5`; the good-action
/// intervals are `G(0) = {0,1,2}` and `G(1) = {2,3,4}` with binary reward
/// (scaled to `1/2`), and the observation confuses the two states with
/// probability `confusion`. The action taken at step 0 routes to one of two
/// step-1 states: the shared interior action `2` leads to a *flat* state
/// where every action pays `1/2`; every other action leads to a *fragile*
/// state where only action 0 pays. Without smoothing all of `G(s)` ties, so
/// the lowest-index tie-break picks the boundary of each interval and the
/// two experts disagree on confusable states. Under motor noise the fragile
/// state loses value, so the smoothed optimum strictly prefers the shared
/// interior action in both states — any smoothing level in `(0, 1)` exceeds
/// the confusion radius of this construction. At `confusion = 0` the
/// instance is decodable and the effect vanishes.
pub fn gen_smoothing_toy(confusion: f64) -> Result<LayeredPomdp> {
    if !(0.0..0.5).contains(&confusion) {
        return Err(LabError::InvalidArgument(format!(
            "confusion {confusion} outside [0, 0.5)"
        )));
    }
    let emit0 = vec![
        vec![1.0 - confusion, confusion],
        vec![confusion, 1.0 - confusion],
    ];
    let emit1 = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
    let good: [&[usize]; 2] = [&[0, 1, 2], &[2, 3, 4]];
    let reward0: Vec<Vec<f64>> = (0..2)
        .map(|s| {
            (0..5)
                .map(|a| if good[s].contains(&a) { 0.5 } else { 0.0 })
                .collect()
        })
        .collect();
    // Flat state 0: every action pays. Fragile state 1: only action 0 pays.
    let reward1 = vec![vec![0.5, 0.5], vec![0.5, 0.0]];
    let mut kernel = vec![vec![vec![0.0; 2]; 5]; 2];
    for s in 0..2 {
        for a in 0..5 {
            let target = if a == 2 { 0 } else { 1 };
            kernel[s][a][target] = 1.0;
        }
    }
    LayeredPomdp::new(
        vec![0.5, 0.5],
        vec![kernel],
        vec![emit0, emit1],
        vec![reward0, reward1],
    )
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct DimsFile {
    #[serde(rename = "S")]
    states: Vec<usize>,
    #[serde(rename = "X")]
    obs: Vec<usize>,
    #[serde(rename = "A")]
    actions: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    horizon: usize,
    dims: DimsFile,
    init: Vec<f64>,
    trans: Vec<Vec<Vec<Vec<f64>>>>,
    emit: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<PerturbedBlockMeta>,
}

/// Serializes a model (and optional block decomposition) to JSON text.
pub fn model_to_json(model: &LayeredPomdp, meta: Option<&PerturbedBlockMeta>) -> Result<String> {
    let horizon = model.horizon();
    let file = ModelFile {
        horizon,
        dims: DimsFile {
            states: (0..horizon).map(|t| model.state_count(t)).collect(),
            obs: (0..horizon).map(|t| model.obs_count(t)).collect(),
            actions: (0..horizon).map(|t| model.action_count(t)).collect(),
        },
        init: model.init_dist().to_vec(),
        trans: (1..horizon)
            .map(|t| {
                (0..model.state_count(t - 1))
                    .map(|s| {
                        (0..model.action_count(t - 1))
                            .map(|a| model.trans_row(t, s, a).to_vec())
                            .collect()
                    })
                    .collect()
            })
            .collect(),
        emit: (0..horizon)
            .map(|t| {
                (0..model.state_count(t))
                    .map(|s| model.emit_row(t, s).to_vec())
                    .collect()
            })
            .collect(),
        reward: (0..horizon)
            .map(|t| {
                (0..model.state_count(t))
                    .map(|s| {
                        (0..model.action_count(t))
                            .map(|a| model.reward_at(t, s, a))
                            .collect()
                    })
                    .collect()
            })
            .collect(),
        meta: meta.cloned(),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    Ok(text)
}

/// Parses a model from JSON text, validating it fully and checking the
/// block decomposition when a meta section is present.
pub fn model_from_json(text: &str) -> Result<(LayeredPomdp, Option<PerturbedBlockMeta>)> {
    let file: ModelFile = serde_json::from_str(text)?;
    let declared = file.horizon;
    let model = LayeredPomdp::from_parts(file.init, file.trans, file.emit, file.reward)?;
    if model.horizon() != declared {
        return Err(LabError::InvalidModel(format!(
            "declared horizon {declared} but tables span {}",
            model.horizon()
        )));
    }
    for t in 0..model.horizon() {
        if file.dims.states[t] != model.state_count(t)
            || file.dims.obs[t] != model.obs_count(t)
            || file.dims.actions[t] != model.action_count(t)
        {
            return Err(LabError::InvalidModel(format!(
                "dimension header disagrees with tables at step {t}"
            )));
        }
    }
    let model = model.into_checked()?;
    if let Some(meta) = &file.meta {
        meta.check(&model)?;
    }
    Ok((model, file.meta))
}

/// Writes a model to disk as JSON.
pub fn save_model(
    model: &LayeredPomdp,
    meta: Option<&PerturbedBlockMeta>,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, model_to_json(model, meta)?)?;
    Ok(())
}

/// Reads and validates a model from disk.
pub fn load_model(path: impl AsRef<Path>) -> Result<(LayeredPomdp, Option<PerturbedBlockMeta>)> {
    let text = std::fs::read_to_string(path)?;
    model_from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perturbed_block_endpoints() {
        // delta = 0: emissions exactly block-structured.
        let (model, meta) =
            gen_perturbed_block(3, 7, 2, 3, 0.0, DynamicsMode::Stochastic, NoiseStyle::Uniform, 1)
                .unwrap();
        for t in 0..3 {
            for s in 0..3 {
                for x in 0..7 {
                    assert_eq!(model.emit_row(t, s)[x], meta.block_emit[t][s][x]);
                }
            }
        }
        // delta = 1: emissions equal the noise kernel.
        let (model, meta) =
            gen_perturbed_block(2, 4, 2, 2, 1.0, DynamicsMode::Stochastic, NoiseStyle::RandomDirichlet, 2)
                .unwrap();
        for t in 0..2 {
            for s in 0..2 {
                for x in 0..4 {
                    assert!((model.emit_row(t, s)[x] - meta.noise_emit[t][s][x]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn perturbed_block_hand_mixture() {
        // S = X = 2, uniform noise, delta = 0.2: emit(x=s|s) = 0.8 + 0.2/2.
        let (model, _) =
            gen_perturbed_block(2, 2, 2, 2, 0.2, DynamicsMode::Stochastic, NoiseStyle::Uniform, 3)
                .unwrap();
        assert!((model.emit_row(0, 0)[0] - 0.9).abs() < 1e-12);
        assert!((model.emit_row(0, 1)[1] - 0.9).abs() < 1e-12);
    }

    #[test]
    fn generated_models_validate_and_meta_holds() {
        for seed in 0..20 {
            let (model, meta) = gen_perturbed_block(
                2 + (seed % 3) as usize,
                5,
                2,
                3,
                0.15,
                match seed % 3 {
                    0 => DynamicsMode::Deterministic,
                    1 => DynamicsMode::Stochastic,
                    _ => DynamicsMode::UniformMixing,
                },
                if seed % 2 == 0 {
                    NoiseStyle::Uniform
                } else {
                    NoiseStyle::RandomDirichlet
                },
                seed,
            )
            .unwrap();
            assert!(model.validate().is_ok());
            meta.check(&model).unwrap();
            let (sensor, smeta) = gen_noisy_sensor(
                2 + (seed % 2) as usize,
                3,
                0.1,
                DynamicsMode::Stochastic,
                seed,
            )
            .unwrap();
            assert!(sensor.validate().is_ok());
            smeta.check(&sensor).unwrap();
        }
    }

    #[test]
    fn deterministic_mode_yields_point_mass_rows() {
        let (model, _) = gen_perturbed_block(
            3,
            6,
            2,
            4,
            0.1,
            DynamicsMode::Deterministic,
            NoiseStyle::Uniform,
            11,
        )
        .unwrap();
        assert!(model.has_deterministic_transitions());
    }

    #[test]
    fn noisy_sensor_flip_probability() {
        let (model, _) =
            gen_noisy_sensor(2, 2, 0.1, DynamicsMode::UniformMixing, 5).unwrap();
        assert!((model.emit_row(0, 0)[1] - 0.1).abs() < 1e-12);
        assert!((model.emit_row(1, 1)[1] - 0.9).abs() < 1e-12);
        // delta = 0 gives identity emissions.
        let (model, _) = gen_noisy_sensor(3, 2, 0.0, DynamicsMode::Stochastic, 5).unwrap();
        for s in 0..3 {
            assert_eq!(model.emit_row(0, s)[s], 1.0);
        }
    }

    #[test]
    fn lower_bound_is_a_valid_noisy_sensor() {
        let model = gen_lower_bound(0.1, 3).unwrap();
        assert!(model.validate().is_ok());
        lower_bound_meta(3, 0.1).check(&model).unwrap();
        // Budget is met with equality: H * (1/H).
        let budget: f64 = (0..3).map(|t| model.max_step_reward(t)).sum();
        assert!((budget - 1.0).abs() < 1e-12);
    }

    #[test]
    fn smoothing_toy_is_valid_and_budgeted() {
        let model = gen_smoothing_toy(0.25).unwrap();
        assert!(model.validate().is_ok());
        let budget: f64 = (0..2).map(|t| model.max_step_reward(t)).sum();
        assert!((budget - 1.0).abs() < 1e-12);
        assert!(gen_smoothing_toy(0.6).is_err());
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let (model, meta) = gen_perturbed_block(
            2,
            5,
            3,
            3,
            0.07,
            DynamicsMode::Stochastic,
            NoiseStyle::RandomDirichlet,
            9,
        )
        .unwrap();
        let first = model_to_json(&model, Some(&meta)).unwrap();
        let (loaded, loaded_meta) = model_from_json(&first).unwrap();
        let second = model_to_json(&loaded, loaded_meta.as_ref()).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn loading_a_bad_row_sum_fails_validation() {
        let model = gen_lower_bound(0.1, 2).unwrap();
        let text = model_to_json(&model, None).unwrap();
        let corrupted = text.replacen("0.9", "0.7", 1);
        match model_from_json(&corrupted) {
            Err(LabError::InvalidModel(msg)) => assert!(msg.contains("row sum"), "{msg}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn roundtrip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let (model, meta) =
            gen_noisy_sensor(3, 2, 0.2, DynamicsMode::Deterministic, 13).unwrap();
        save_model(&model, Some(&meta), &path).unwrap();
        let (loaded, loaded_meta) = load_model(&path).unwrap();
        assert_eq!(loaded.horizon(), model.horizon());
        for t in 0..model.horizon() {
            for s in 0..model.state_count(t) {
                assert_eq!(loaded.emit_row(t, s), model.emit_row(t, s));
            }
        }
        loaded_meta.unwrap().check(&loaded).unwrap();
    }

    #[test]
    fn obs_fewer_than_states_is_rejected() {
        assert!(matches!(
            gen_perturbed_block(
                4,
                3,
                2,
                2,
                0.1,
                DynamicsMode::Stochastic,
                NoiseStyle::Uniform,
                1
            ),
            Err(LabError::InvalidArgument(_))
        ));
    }
}

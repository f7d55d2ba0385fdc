//! Exact Bayesian belief filtering and the divergences used to compare
//! beliefs.
//!
//! A belief is a posterior over latent states at a fixed step. The filter is
//! built from two operators: a Bayes update conditioning on an observation,
//! and a transition push moving a belief one step forward under an action.
//! Windowed (approximate) beliefs apply the same updates starting from an
//! explicit prior at the window start instead of the full history.
//!
//! Conditioning on an observation with zero probability under the prior is a
//! hard error: sampled trajectories can never produce one, so silently
//! resetting would only mask model bugs.

use crate::model::LayeredPomdp;
use crate::{LabError, Result, ROW_SUM_TOLERANCE};

/// A step-tagged probability vector over latent states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    step: usize,
    probs: Vec<f64>,
}

impl Belief {
    /// Validates entries (nonnegative, summing to 1 within tolerance) and
    /// renormalizes exactly.
    pub fn new(step: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(LabError::ShapeMismatch("empty belief".into()));
        }
        let mut sum = 0.0;
        for &p in &probs {
            if !p.is_finite() || p < 0.0 {
                return Err(LabError::ShapeMismatch(format!(
                    "bad belief entry {p} at step {step}"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(LabError::ShapeMismatch(format!(
                "belief at step {step} sums to {sum}"
            )));
        }
        let probs = probs.iter().map(|&p| p / sum).collect();
        Ok(Self { step, probs })
    }

    pub fn uniform(model: &LayeredPomdp, step: usize) -> Self {
        let n = model.state_count(step);
        Self {
            step,
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(model: &LayeredPomdp, step: usize, state: usize) -> Self {
        let mut probs = vec![0.0; model.state_count(step)];
        probs[state] = 1.0;
        Self { step, probs }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    fn from_unnormalized(step: usize, mut probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if sum <= 0.0 {
            return Err(LabError::ImpossibleHistory { step });
        }
        for p in &mut probs {
            *p /= sum;
        }
        Ok(Self { step, probs })
    }
}

/// Conditions a belief on observing `x` at its step:
/// `post(s) = emit(x|s) * prior(s) / sum_z emit(x|z) * prior(z)`.
pub fn bayes_update(model: &LayeredPomdp, prior: &Belief, x: usize) -> Result<Belief> {
    let t = prior.step;
    if x >= model.obs_count(t) {
        return Err(LabError::ShapeMismatch(format!(
            "observation {x} out of range at step {t}"
        )));
    }
    let mut post = vec![0.0; prior.probs.len()];
    let mut normalizer = 0.0;
    for (s, &p) in prior.probs.iter().enumerate() {
        let w = model.emit_row(t, s)[x] * p;
        post[s] = w;
        normalizer += w;
    }
    if normalizer <= 0.0 {
        return Err(LabError::ImpossibleObservation { step: t, obs: x });
    }
    for v in &mut post {
        *v /= normalizer;
    }
    Ok(Belief { step: t, probs: post })
}

/// Pushes a belief at step `t` through the transition kernel for action `a`,
/// yielding the predictive belief at step `t + 1`.
pub fn transition_push(model: &LayeredPomdp, prior: &Belief, a: usize) -> Result<Belief> {
    let t_next = prior.step + 1;
    if t_next >= model.horizon() {
        return Err(LabError::ShapeMismatch(format!(
            "no transition out of the final step {}",
            prior.step
        )));
    }
    if a >= model.action_count(prior.step) {
        return Err(LabError::ShapeMismatch(format!(
            "action {a} out of range at step {}",
            prior.step
        )));
    }
    let pushed = model.push_state_dist(t_next, &prior.probs, a);
    Belief::from_unnormalized(t_next, pushed)
}

/// One full filtering step: transition push by `a`, then Bayes update on the
/// next observation `x`.
pub fn belief_update(model: &LayeredPomdp, prior: &Belief, a: usize, x: usize) -> Result<Belief> {
    bayes_update(model, &transition_push(model, prior, a)?, x)
}

/// The posterior at step 0 after the first observation.
pub fn initial_belief(model: &LayeredPomdp, x: usize) -> Result<Belief> {
    let prior = Belief::new(0, model.init_dist().to_vec())?;
    bayes_update(model, &prior, x)
}

/// The exact posterior over `s_t` given the full history
/// `(x_{0..=t}, a_{0..t})`, obtained by running the filter from the initial
/// distribution.
pub fn true_belief(model: &LayeredPomdp, obs_hist: &[usize], act_hist: &[usize]) -> Result<Belief> {
    if obs_hist.is_empty() || act_hist.len() + 1 != obs_hist.len() {
        return Err(LabError::ShapeMismatch(format!(
            "history with {} observations and {} actions",
            obs_hist.len(),
            act_hist.len()
        )));
    }
    let mut belief = initial_belief(model, obs_hist[0])?;
    for (a, x) in act_hist.iter().zip(&obs_hist[1..]) {
        belief = belief_update(model, &belief, *a, *x)?;
    }
    Ok(belief)
}

/// The windowed posterior: starts from `prior` and applies one filtering
/// step per `(action, observation)` pair. `acts` and `obs` must have equal
/// length `L`; with `L = 0` the prior is returned unchanged.
pub fn approx_belief(
    model: &LayeredPomdp,
    prior: &Belief,
    acts: &[usize],
    obs: &[usize],
) -> Result<Belief> {
    if acts.len() != obs.len() {
        return Err(LabError::ShapeMismatch(format!(
            "window with {} actions but {} observations",
            acts.len(),
            obs.len()
        )));
    }
    let mut belief = prior.clone();
    for (a, x) in acts.iter().zip(obs) {
        belief = belief_update(model, &belief, *a, *x)?;
    }
    Ok(belief)
}

/// Belief for a ragged window key at step `t`: the exact posterior when the
/// window covers the whole history, otherwise the windowed posterior from
/// `prior` (which must sit at step `t - L`). The key must carry actions.
pub fn belief_for_window(
    model: &LayeredPomdp,
    t: usize,
    key: &crate::policy::WindowKey,
    prior: &Belief,
) -> Result<Belief> {
    if key.covers_full_history(t) {
        true_belief(model, &key.obs, &key.acts)
    } else {
        if prior.step + key.obs.len() != t {
            return Err(LabError::ShapeMismatch(format!(
                "prior at step {} cannot start a length-{} window ending at step {t}",
                prior.step,
                key.obs.len()
            )));
        }
        approx_belief(model, prior, &key.acts, &key.obs)
    }
}

/// Residual mass outside the modal state: `1 - max_s b(s)`.
pub fn v_inf(b: &Belief) -> f64 {
    1.0 - b.max_prob()
}

fn assert_same_step(a: &Belief, b: &Belief) {
    assert_eq!(
        a.step, b.step,
        "beliefs live at different steps ({} vs {})",
        a.step, b.step
    );
    assert_eq!(a.probs.len(), b.probs.len());
}

/// Total variation distance `0.5 * sum_s |a(s) - b(s)|`.
pub fn tv_dist(a: &Belief, b: &Belief) -> f64 {
    assert_same_step(a, b);
    0.5 * a
        .probs
        .iter()
        .zip(&b.probs)
        .map(|(&p, &q)| (p - q).abs())
        .sum::<f64>()
}

/// L1 distance `sum_s |a(s) - b(s)| = 2 * TV`.
pub fn l1_dist(a: &Belief, b: &Belief) -> f64 {
    2.0 * tv_dist(a, b)
}

/// Density ratio `sup_s a(s) / b(s)` with the convention `0/0 = 1`;
/// returns `f64::INFINITY` when `a` puts mass outside the support of `b`.
pub fn density_ratio(a: &Belief, b: &Belief) -> f64 {
    assert_same_step(a, b);
    let mut ratio = 1.0f64;
    for (&p, &q) in a.probs.iter().zip(&b.probs) {
        if q > 0.0 {
            ratio = ratio.max(p / q);
        } else if p > 0.0 {
            return f64::INFINITY;
        }
        // 0/0 contributes 1, already the floor.
    }
    ratio
}

/// The product metric `TV(a, b) * ||a/b||_inf`. Upper bounds TV, is bounded
/// by the density ratio, and satisfies the data processing inequality.
pub fn d_pr(a: &Belief, b: &Belief) -> f64 {
    let tv = tv_dist(a, b);
    if tv == 0.0 {
        // 0 * inf would poison the vacuous case; an identical pair is at
        // distance 0 regardless of support.
        return 0.0;
    }
    tv * density_ratio(a, b)
}

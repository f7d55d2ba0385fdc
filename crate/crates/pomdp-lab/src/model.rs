//! The layered tabular POMDP data model.
//!
//! Steps are indexed `0..H`. All kernels are stored row-major:
//! `trans[t-1][s_prev][a_prev]` is the distribution over states at step `t`
//! (for `t >= 1`), `emit[t][s]` the distribution over observations at step
//! `t`, and `reward[t][s][a]` a scalar in `[0, 1]`. The per-episode budget
//! `sum_t max_{s,a} reward[t](s,a) <= 1` guarantees that total trajectory
//! reward never exceeds 1 under any policy.

use crate::{LabError, Result, ROW_SUM_TOLERANCE};
use std::fmt;

/// A finite-horizon POMDP with per-step state, observation, and action
/// spaces. Immutable after construction; safe to share across threads.
#[derive(Debug, Clone)]
pub struct LayeredPomdp {
    horizon: usize,
    state_count: Vec<usize>,
    obs_count: Vec<usize>,
    action_count: Vec<usize>,
    init: Vec<f64>,
    /// `trans[t-1][s_prev][a_prev][s]` for `t` in `1..H`.
    trans: Vec<Vec<Vec<Vec<f64>>>>,
    /// `emit[t][s][x]`.
    emit: Vec<Vec<Vec<f64>>>,
    /// `reward[t][s][a]`.
    reward: Vec<Vec<Vec<f64>>>,
}

/// Kind of invariant violated by a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    RowSum,
    Negative,
    NonFinite,
    RewardRange,
    RewardBudget,
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ViolationKind::RowSum => "row sum",
            ViolationKind::Negative => "negative entry",
            ViolationKind::NonFinite => "non-finite entry",
            ViolationKind::RewardRange => "reward range",
            ViolationKind::RewardBudget => "reward budget",
        };
        f.write_str(name)
    }
}

/// A single validation failure with its location in the model.
#[derive(Debug, Clone)]
pub struct Violation {
    pub kind: ViolationKind,
    pub location: String,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.kind, self.location, self.detail)
    }
}

/// Result of checking every model invariant; empty means the model is valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

fn check_row(report: &mut ValidationReport, row: &[f64], location: &str) {
    let mut sum = 0.0;
    for (i, &v) in row.iter().enumerate() {
        if !v.is_finite() {
            report.violations.push(Violation {
                kind: ViolationKind::NonFinite,
                location: format!("{location}[{i}]"),
                detail: format!("{v}"),
            });
            return;
        }
        if v < 0.0 {
            report.violations.push(Violation {
                kind: ViolationKind::Negative,
                location: format!("{location}[{i}]"),
                detail: format!("{v}"),
            });
        }
        sum += v;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        report.violations.push(Violation {
            kind: ViolationKind::RowSum,
            location: location.to_string(),
            detail: format!("sums to {sum}"),
        });
    }
}

fn renormalize(row: &mut [f64]) {
    let sum: f64 = row.iter().sum();
    // Rows that are off by no more than accumulated rounding noise are taken
    // as exact; dividing by a sum within a few ulps of 1 would perturb the
    // last bits and break bit-exact save/load round-trips.
    if sum > 0.0 && (sum - 1.0).abs() > 1e-13 {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

impl LayeredPomdp {
    /// Assembles a model from raw tables, checking only shape coherence.
    /// Probability rows may still violate invariants; run [`validate`]
    /// (or construct through [`new`]) to check them.
    ///
    /// [`validate`]: LayeredPomdp::validate
    /// [`new`]: LayeredPomdp::new
    pub fn from_parts(
        init: Vec<f64>,
        trans: Vec<Vec<Vec<Vec<f64>>>>,
        emit: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let horizon = emit.len();
        if horizon == 0 {
            return Err(LabError::ShapeMismatch("horizon must be positive".into()));
        }
        if reward.len() != horizon {
            return Err(LabError::ShapeMismatch(format!(
                "reward has {} steps, emissions have {horizon}",
                reward.len()
            )));
        }
        if trans.len() + 1 != horizon {
            return Err(LabError::ShapeMismatch(format!(
                "expected {} transition kernels for horizon {horizon}, got {}",
                horizon - 1,
                trans.len()
            )));
        }

        let state_count: Vec<usize> = emit.iter().map(|e| e.len()).collect();
        if init.len() != state_count[0] {
            return Err(LabError::ShapeMismatch(format!(
                "initial distribution over {} states, emissions expect {}",
                init.len(),
                state_count[0]
            )));
        }
        let mut obs_count = Vec::with_capacity(horizon);
        for (t, e) in emit.iter().enumerate() {
            if e.is_empty() {
                return Err(LabError::ShapeMismatch(format!("no states at step {t}")));
            }
            let x = e[0].len();
            if x == 0 || e.iter().any(|row| row.len() != x) {
                return Err(LabError::ShapeMismatch(format!(
                    "ragged emission table at step {t}"
                )));
            }
            obs_count.push(x);
        }
        let mut action_count = Vec::with_capacity(horizon);
        for (t, r) in reward.iter().enumerate() {
            if r.len() != state_count[t] {
                return Err(LabError::ShapeMismatch(format!(
                    "reward table at step {t} has {} states, expected {}",
                    r.len(),
                    state_count[t]
                )));
            }
            let a = r[0].len();
            if a == 0 || r.iter().any(|row| row.len() != a) {
                return Err(LabError::ShapeMismatch(format!(
                    "ragged reward table at step {t}"
                )));
            }
            action_count.push(a);
        }
        for (i, kernel) in trans.iter().enumerate() {
            let t = i + 1;
            if kernel.len() != state_count[t - 1] {
                return Err(LabError::ShapeMismatch(format!(
                    "transition kernel into step {t} has {} source states, expected {}",
                    kernel.len(),
                    state_count[t - 1]
                )));
            }
            for (s, per_action) in kernel.iter().enumerate() {
                if per_action.len() != action_count[t - 1] {
                    return Err(LabError::ShapeMismatch(format!(
                        "transition kernel into step {t}, state {s}: {} actions, expected {}",
                        per_action.len(),
                        action_count[t - 1]
                    )));
                }
                for (a, row) in per_action.iter().enumerate() {
                    if row.len() != state_count[t] {
                        return Err(LabError::ShapeMismatch(format!(
                            "transition row ({s},{a}) into step {t} has {} entries, expected {}",
                            row.len(),
                            state_count[t]
                        )));
                    }
                }
            }
        }

        Ok(Self {
            horizon,
            state_count,
            obs_count,
            action_count,
            init,
            trans,
            emit,
            reward,
        })
    }

    /// Assembles and fully validates a model, renormalizing probability rows
    /// that are within [`ROW_SUM_TOLERANCE`] of 1. Any violation is an error.
    pub fn new(
        init: Vec<f64>,
        trans: Vec<Vec<Vec<Vec<f64>>>>,
        emit: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        Self::from_parts(init, trans, emit, reward)?.into_checked()
    }

    /// Checks every invariant: probability rows sum to 1 within tolerance and
    /// are nonnegative, rewards lie in `[0, 1]`, and the per-episode reward
    /// budget `sum_t max_{s,a} reward[t](s,a) <= 1` holds.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        check_row(&mut report, &self.init, "init");
        for (i, kernel) in self.trans.iter().enumerate() {
            let t = i + 1;
            for (s, per_action) in kernel.iter().enumerate() {
                for (a, row) in per_action.iter().enumerate() {
                    check_row(&mut report, row, &format!("trans[{t}][{s}][{a}]"));
                }
            }
        }
        for (t, table) in self.emit.iter().enumerate() {
            for (s, row) in table.iter().enumerate() {
                check_row(&mut report, row, &format!("emit[{t}][{s}]"));
            }
        }
        let mut budget = 0.0;
        for (t, table) in self.reward.iter().enumerate() {
            let mut step_max = 0.0f64;
            for (s, row) in table.iter().enumerate() {
                for (a, &v) in row.iter().enumerate() {
                    if !v.is_finite() {
                        report.violations.push(Violation {
                            kind: ViolationKind::NonFinite,
                            location: format!("reward[{t}][{s}][{a}]"),
                            detail: format!("{v}"),
                        });
                    } else if !(0.0..=1.0).contains(&v) {
                        report.violations.push(Violation {
                            kind: ViolationKind::RewardRange,
                            location: format!("reward[{t}][{s}][{a}]"),
                            detail: format!("{v}"),
                        });
                    } else {
                        step_max = step_max.max(v);
                    }
                }
            }
            budget += step_max;
        }
        if budget > 1.0 + ROW_SUM_TOLERANCE {
            report.violations.push(Violation {
                kind: ViolationKind::RewardBudget,
                location: "reward".to_string(),
                detail: format!("sum of per-step maxima is {budget}"),
            });
        }
        report
    }

    /// Validates, then renormalizes every probability row exactly.
    pub fn into_checked(mut self) -> Result<Self> {
        let report = self.validate();
        if !report.is_ok() {
            return Err(LabError::InvalidModel(report.to_string()));
        }
        renormalize(&mut self.init);
        for kernel in &mut self.trans {
            for per_action in kernel {
                for row in per_action {
                    renormalize(row);
                }
            }
        }
        for table in &mut self.emit {
            for row in table {
                renormalize(row);
            }
        }
        Ok(self)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn state_count(&self, t: usize) -> usize {
        self.state_count[t]
    }

    pub fn obs_count(&self, t: usize) -> usize {
        self.obs_count[t]
    }

    pub fn action_count(&self, t: usize) -> usize {
        self.action_count[t]
    }

    /// Initial distribution over states at step 0.
    pub fn init_dist(&self) -> &[f64] {
        &self.init
    }

    /// Distribution over states at step `t` given `(s_prev, a_prev)` at
    /// step `t - 1`. Requires `t >= 1`.
    pub fn trans_row(&self, t: usize, s_prev: usize, a_prev: usize) -> &[f64] {
        &self.trans[t - 1][s_prev][a_prev]
    }

    /// Distribution over observations emitted from state `s` at step `t`.
    pub fn emit_row(&self, t: usize, s: usize) -> &[f64] {
        &self.emit[t][s]
    }

    pub fn reward_at(&self, t: usize, s: usize, a: usize) -> f64 {
        self.reward[t][s][a]
    }

    pub fn max_step_reward(&self, t: usize) -> f64 {
        self.reward[t]
            .iter()
            .flat_map(|row| row.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Pushes a distribution over states at step `t - 1` through the
    /// transition kernel for action `a`, yielding an (unnormalized, if the
    /// input is unnormalized) distribution over states at step `t`.
    pub fn push_state_dist(&self, t: usize, dist: &[f64], a: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.state_count[t]];
        for (s_prev, &p) in dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (s, &q) in self.trans[t - 1][s_prev][a].iter().enumerate() {
                out[s] += p * q;
            }
        }
        out
    }

    /// Marginal observation distribution at step `t` induced by a state
    /// distribution at the same step.
    pub fn obs_dist(&self, t: usize, state_dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.obs_count[t]];
        for (s, &p) in state_dist.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (x, &q) in self.emit[t][s].iter().enumerate() {
                out[x] += p * q;
            }
        }
        out
    }

    /// True when every transition row is a point mass.
    pub fn has_deterministic_transitions(&self) -> bool {
        self.trans.iter().all(|kernel| {
            kernel.iter().all(|per_action| {
                per_action
                    .iter()
                    .all(|row| row.iter().filter(|&&p| p > 0.0).count() == 1)
            })
        })
    }

    /// Total number of trajectories `prod_t S_t * X_t * A_t`, saturating.
    pub fn trajectory_space_size(&self) -> u128 {
        let mut total: u128 = 1;
        for t in 0..self.horizon {
            let per_step = (self.state_count[t] as u128)
                .saturating_mul(self.obs_count[t] as u128)
                .saturating_mul(self.action_count[t] as u128);
            total = total.saturating_mul(per_step);
        }
        total
    }

    /// Total number of observation/action histories `sum_t prod_{u<=t} X_u * A_u`.
    pub fn history_space_size(&self) -> u128 {
        let mut total: u128 = 0;
        let mut level: u128 = 1;
        for t in 0..self.horizon {
            level = level.saturating_mul(self.obs_count[t] as u128);
            total = total.saturating_add(level);
            level = level.saturating_mul(self.action_count[t] as u128);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn noisy_sensor_2state(delta: f64, horizon: usize) -> LayeredPomdp {
        let emit = vec![vec![vec![1.0 - delta, delta], vec![delta, 1.0 - delta]]; horizon];
        let trans = vec![vec![vec![vec![0.5, 0.5]; 2]; 2]; horizon - 1];
        let reward_step = 1.0 / horizon as f64;
        let reward = vec![
            vec![
                vec![reward_step, 0.0],
                vec![0.0, reward_step],
            ];
            horizon
        ];
        LayeredPomdp::new(vec![0.5, 0.5], trans, emit, reward).unwrap()
    }

    #[test]
    fn well_formed_model_validates() {
        let model = noisy_sensor_2state(0.1, 3);
        assert!(model.validate().is_ok());
        assert_eq!(model.horizon(), 3);
        assert_eq!(model.state_count(0), 2);
        assert_eq!(model.obs_count(1), 2);
        assert_eq!(model.action_count(2), 2);
    }

    #[test]
    fn bad_row_sum_is_reported() {
        let emit = vec![vec![vec![0.6, 0.3], vec![0.2, 0.8]]];
        let reward = vec![vec![vec![0.5, 0.0], vec![0.0, 0.5]]];
        let model = LayeredPomdp::from_parts(vec![0.5, 0.5], vec![], emit, reward).unwrap();
        let report = model.validate();
        assert!(!report.is_ok());
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::RowSum && v.location == "emit[0][0]"));
    }

    #[test]
    fn reward_budget_violation_is_reported() {
        let emit = vec![vec![vec![1.0]]; 2];
        let trans = vec![vec![vec![vec![1.0]]]];
        let reward = vec![vec![vec![0.9]], vec![vec![0.6]]];
        let model = LayeredPomdp::from_parts(vec![1.0], trans, emit, reward).unwrap();
        let report = model.validate();
        assert!(report
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::RewardBudget));
    }

    #[test]
    fn near_normalized_rows_are_renormalized() {
        let eps = 5e-10;
        let emit = vec![vec![vec![0.5 + eps, 0.5], vec![0.5, 0.5]]];
        let reward = vec![vec![vec![0.5, 0.0], vec![0.0, 0.5]]];
        let model = LayeredPomdp::new(vec![0.5, 0.5], vec![], emit, reward).unwrap();
        let sum: f64 = model.emit_row(0, 0).iter().sum();
        assert_eq!(sum, 1.0);
    }

    #[test]
    fn far_from_normalized_rows_are_hard_errors() {
        let emit = vec![vec![vec![0.7, 0.2], vec![0.5, 0.5]]];
        let reward = vec![vec![vec![0.5, 0.0], vec![0.0, 0.5]]];
        assert!(LayeredPomdp::new(vec![0.5, 0.5], vec![], emit, reward).is_err());
    }

    #[test]
    fn negative_entries_are_reported() {
        let emit = vec![vec![vec![1.2, -0.2], vec![0.5, 0.5]]];
        let reward = vec![vec![vec![0.5, 0.0], vec![0.0, 0.5]]];
        let model = LayeredPomdp::from_parts(vec![0.5, 0.5], vec![], emit, reward).unwrap();
        assert!(model
            .validate()
            .violations
            .iter()
            .any(|v| v.kind == ViolationKind::Negative));
    }

    #[test]
    fn space_sizes() {
        let model = noisy_sensor_2state(0.1, 2);
        assert_eq!(model.trajectory_space_size(), 64); // (2*2*2)^2
        assert_eq!(model.history_space_size(), 2 + 8); // x0 plus (x0,a0,x1)
    }
}

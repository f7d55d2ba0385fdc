//! Policy representations.
//!
//! Three classes are distinguished by what they may read when choosing the
//! action at step `t`:
//!
//! - [`LatentPolicy`]: the true latent state `s_t` (privileged; available
//!   only where the caller has simulator access);
//! - [`WindowPolicy`]: the ragged window of the last `L` observations and,
//!   optionally, the last `L` actions;
//! - [`HistoryPolicy`]: the full observable history `(x_{0..=t}, a_{0..t})`.
//!
//! Window and history policies are *executable*; latent policies are not.

use crate::model::LayeredPomdp;
use crate::{LabError, Result, ROW_SUM_TOLERANCE};
use std::collections::BTreeMap;
use std::sync::Arc;

fn check_action_row(row: &[f64], what: &str) -> Result<Vec<f64>> {
    if row.is_empty() {
        return Err(LabError::ShapeMismatch(format!("{what}: empty action row")));
    }
    let mut sum = 0.0;
    for &v in row {
        if !v.is_finite() || v < 0.0 {
            return Err(LabError::ShapeMismatch(format!(
                "{what}: bad probability {v}"
            )));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(LabError::ShapeMismatch(format!(
            "{what}: action row sums to {sum}"
        )));
    }
    Ok(row.iter().map(|&v| v / sum).collect())
}

/// A Markovian policy over latent states: `act[t][s]` is a distribution
/// over actions at step `t`.
#[derive(Debug, Clone)]
pub struct LatentPolicy {
    act: Vec<Vec<Vec<f64>>>,
    deterministic: bool,
}

impl LatentPolicy {
    pub fn new(act: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let mut checked = Vec::with_capacity(act.len());
        for (t, table) in act.into_iter().enumerate() {
            let mut rows = Vec::with_capacity(table.len());
            for (s, row) in table.into_iter().enumerate() {
                rows.push(check_action_row(&row, &format!("latent policy [{t}][{s}]"))?);
            }
            checked.push(rows);
        }
        let deterministic = checked
            .iter()
            .flatten()
            .all(|row| row.iter().any(|&p| p == 1.0));
        Ok(Self {
            act: checked,
            deterministic,
        })
    }

    /// The deterministic policy that plays `choices[t][s]` at `(t, s)`.
    pub fn from_choices(model: &LayeredPomdp, choices: &[Vec<usize>]) -> Result<Self> {
        let mut act = Vec::with_capacity(model.horizon());
        for t in 0..model.horizon() {
            let mut table = Vec::with_capacity(model.state_count(t));
            for s in 0..model.state_count(t) {
                let a = choices[t][s];
                if a >= model.action_count(t) {
                    return Err(LabError::ShapeMismatch(format!(
                        "action {a} out of range at step {t}"
                    )));
                }
                let mut row = vec![0.0; model.action_count(t)];
                row[a] = 1.0;
                table.push(row);
            }
            act.push(table);
        }
        Self::new(act)
    }

    pub fn uniform(model: &LayeredPomdp) -> Self {
        let act = (0..model.horizon())
            .map(|t| {
                let a = model.action_count(t);
                vec![vec![1.0 / a as f64; a]; model.state_count(t)]
            })
            .collect();
        Self::new(act).expect("uniform rows are valid")
    }

    pub fn horizon(&self) -> usize {
        self.act.len()
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn action_dist(&self, t: usize, s: usize) -> &[f64] {
        &self.act[t][s]
    }

    /// The action played at `(t, s)` when the policy is deterministic.
    pub fn action_choice(&self, t: usize, s: usize) -> Option<usize> {
        self.act[t][s].iter().position(|&p| p == 1.0)
    }

    pub fn tables(&self) -> &[Vec<Vec<f64>>] {
        &self.act
    }
}

/// Identifies a ragged window: the most recent `min(L, t+1)` observations
/// and (when the policy conditions on actions) the most recent `min(L, t)`
/// actions, oldest first.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WindowKey {
    pub obs: Vec<usize>,
    pub acts: Vec<usize>,
}

impl WindowKey {
    /// Extracts the window for step `t` from a full history.
    pub fn from_history(
        window_len: usize,
        include_actions: bool,
        t: usize,
        obs_hist: &[usize],
        act_hist: &[usize],
    ) -> Self {
        debug_assert!(obs_hist.len() >= t + 1 && act_hist.len() >= t);
        let n_obs = window_len.min(t + 1);
        let obs = obs_hist[t + 1 - n_obs..=t].to_vec();
        let acts = if include_actions {
            let n_acts = window_len.min(t);
            act_hist[t - n_acts..t].to_vec()
        } else {
            Vec::new()
        };
        Self { obs, acts }
    }

    /// Advances the window by one step: append `(a, x_next)` and trim to the
    /// window length. `include_actions` must match how the key was built.
    pub fn slide(&self, window_len: usize, include_actions: bool, a: usize, x_next: usize) -> Self {
        let mut obs = self.obs.clone();
        obs.push(x_next);
        if obs.len() > window_len {
            obs.remove(0);
        }
        let mut acts = self.acts.clone();
        if include_actions {
            acts.push(a);
            if acts.len() > window_len {
                acts.remove(0);
            }
        }
        Self { obs, acts }
    }

    /// True when the window spans the entire history at step `t`.
    pub fn covers_full_history(&self, t: usize) -> bool {
        self.obs.len() == t + 1
    }
}

/// Row served for windows absent from a [`WindowPolicy`] table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowFallback {
    /// Uniform over actions (the maximum-likelihood default outside the
    /// visited support).
    Uniform,
    /// Point mass on action 0 (the planners' tie-break default).
    FirstAction,
}

/// An `L`-step executable policy stored as per-step tables from window keys
/// to action distributions. Missing keys fall back per [`WindowFallback`],
/// keeping the policy total.
#[derive(Debug, Clone)]
pub struct WindowPolicy {
    window_len: usize,
    include_actions: bool,
    fallback: WindowFallback,
    table: Vec<BTreeMap<WindowKey, Vec<f64>>>,
}

impl WindowPolicy {
    pub fn new(
        horizon: usize,
        window_len: usize,
        include_actions: bool,
        fallback: WindowFallback,
    ) -> Result<Self> {
        if window_len == 0 {
            return Err(LabError::InvalidArgument(
                "window length must be at least 1".into(),
            ));
        }
        Ok(Self {
            window_len,
            include_actions,
            fallback,
            table: vec![BTreeMap::new(); horizon],
        })
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn include_actions(&self) -> bool {
        self.include_actions
    }

    pub fn fallback(&self) -> WindowFallback {
        self.fallback
    }

    pub fn horizon(&self) -> usize {
        self.table.len()
    }

    fn check_key_arity(&self, t: usize, key: &WindowKey) -> Result<()> {
        let n_obs = self.window_len.min(t + 1);
        let n_acts = if self.include_actions {
            self.window_len.min(t)
        } else {
            0
        };
        if key.obs.len() != n_obs || key.acts.len() != n_acts {
            return Err(LabError::ShapeMismatch(format!(
                "window key at step {t} has {} obs / {} acts, expected {n_obs} / {n_acts}",
                key.obs.len(),
                key.acts.len()
            )));
        }
        Ok(())
    }

    pub fn insert(&mut self, t: usize, key: WindowKey, row: Vec<f64>) -> Result<()> {
        self.check_key_arity(t, &key)?;
        let row = check_action_row(&row, &format!("window policy step {t}"))?;
        self.table[t].insert(key, row);
        Ok(())
    }

    pub fn key_for(&self, t: usize, obs_hist: &[usize], act_hist: &[usize]) -> WindowKey {
        WindowKey::from_history(self.window_len, self.include_actions, t, obs_hist, act_hist)
    }

    /// The stored row for `key`, or the fallback row when absent.
    pub fn action_dist(&self, model: &LayeredPomdp, t: usize, key: &WindowKey) -> Vec<f64> {
        if let Some(row) = self.table[t].get(key) {
            return row.clone();
        }
        let a = model.action_count(t);
        match self.fallback {
            WindowFallback::Uniform => vec![1.0 / a as f64; a],
            WindowFallback::FirstAction => {
                let mut row = vec![0.0; a];
                row[0] = 1.0;
                row
            }
        }
    }

    pub fn stored_row(&self, t: usize, key: &WindowKey) -> Option<&[f64]> {
        self.table[t].get(key).map(|r| r.as_slice())
    }

    /// Iterates stored rows at step `t` in canonical key order.
    pub fn rows(&self, t: usize) -> impl Iterator<Item = (&WindowKey, &[f64])> {
        self.table[t].iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn stored_row_count(&self) -> usize {
        self.table.iter().map(|m| m.len()).sum()
    }
}

type HistoryFn = dyn Fn(usize, &[usize], &[usize]) -> Result<Vec<f64>> + Send + Sync;

/// A policy over full observable histories, realized as an evaluable rule.
///
/// The rule receives `(t, x_{0..=t}, a_{0..t})` and must return a
/// distribution over actions at step `t`. Impossible histories may error.
#[derive(Clone)]
pub struct HistoryPolicy {
    rule: Arc<HistoryFn>,
}

impl std::fmt::Debug for HistoryPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("HistoryPolicy(<rule>)")
    }
}

impl HistoryPolicy {
    pub fn new(
        rule: impl Fn(usize, &[usize], &[usize]) -> Result<Vec<f64>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            rule: Arc::new(rule),
        }
    }

    /// An explicit table over `(t, obs_hist, act_hist)` triples; histories
    /// absent from the table are treated as impossible.
    pub fn from_table(table: BTreeMap<(usize, Vec<usize>, Vec<usize>), Vec<f64>>) -> Self {
        Self::new(move |t, obs, acts| {
            table
                .get(&(t, obs.to_vec(), acts.to_vec()))
                .cloned()
                .ok_or(LabError::ImpossibleHistory { step: t })
        })
    }

    pub fn action_dist(&self, t: usize, obs_hist: &[usize], act_hist: &[usize]) -> Result<Vec<f64>> {
        (self.rule)(t, obs_hist, act_hist)
    }
}

/// A borrowed reference to a policy of any class.
#[derive(Clone, Copy, Debug)]
pub enum PolicyRef<'a> {
    Latent(&'a LatentPolicy),
    Window(&'a WindowPolicy),
    History(&'a HistoryPolicy),
}

impl<'a> From<&'a LatentPolicy> for PolicyRef<'a> {
    fn from(p: &'a LatentPolicy) -> Self {
        PolicyRef::Latent(p)
    }
}

impl<'a> From<&'a WindowPolicy> for PolicyRef<'a> {
    fn from(p: &'a WindowPolicy) -> Self {
        PolicyRef::Window(p)
    }
}

impl<'a> From<&'a HistoryPolicy> for PolicyRef<'a> {
    fn from(p: &'a HistoryPolicy) -> Self {
        PolicyRef::History(p)
    }
}

impl<'a> PolicyRef<'a> {
    /// Executable policies read only the observable history, never the
    /// latent state.
    pub fn is_executable(&self) -> bool {
        !matches!(self, PolicyRef::Latent(_))
    }

    /// Action distribution at step `t`. Latent policies read `state`;
    /// executable policies read only the history slices.
    pub fn action_dist(
        &self,
        model: &LayeredPomdp,
        t: usize,
        state: usize,
        obs_hist: &[usize],
        act_hist: &[usize],
    ) -> Result<Vec<f64>> {
        let row = match self {
            PolicyRef::Latent(p) => {
                if p.horizon() != model.horizon() || p.tables()[t].len() != model.state_count(t) {
                    return Err(LabError::ShapeMismatch(format!(
                        "latent policy does not match model at step {t}"
                    )));
                }
                p.action_dist(t, state).to_vec()
            }
            PolicyRef::Window(p) => {
                let key = p.key_for(t, obs_hist, act_hist);
                p.action_dist(model, t, &key)
            }
            PolicyRef::History(p) => p.action_dist(t, obs_hist, act_hist)?,
        };
        if row.len() != model.action_count(t) {
            return Err(LabError::ShapeMismatch(format!(
                "policy row at step {t} has {} actions, model expects {}",
                row.len(),
                model.action_count(t)
            )));
        }
        Ok(row)
    }
}

/// Enumerates every index tuple for the given per-position cardinalities,
/// in lexicographic order. An empty `dims` yields the single empty tuple.
pub(crate) fn index_tuples(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &d in dims {
        let mut next = Vec::with_capacity(out.len() * d);
        for prefix in &out {
            for v in 0..d {
                let mut tuple = prefix.clone();
                tuple.push(v);
                next.push(tuple);
            }
        }
        out = next;
    }
    out
}

/// All window keys for step `t`, in canonical order.
pub(crate) fn window_keys_for_step(
    model: &LayeredPomdp,
    window_len: usize,
    include_actions: bool,
    t: usize,
) -> Vec<WindowKey> {
    let n_obs = window_len.min(t + 1);
    let obs_dims: Vec<usize> = (t + 1 - n_obs..=t).map(|u| model.obs_count(u)).collect();
    let act_dims: Vec<usize> = if include_actions {
        let n_acts = window_len.min(t);
        (t - n_acts..t).map(|u| model.action_count(u)).collect()
    } else {
        Vec::new()
    };
    let mut keys = Vec::new();
    for obs in index_tuples(&obs_dims) {
        for acts in index_tuples(&act_dims) {
            keys.push(WindowKey {
                obs: obs.clone(),
                acts,
            });
        }
    }
    keys
}

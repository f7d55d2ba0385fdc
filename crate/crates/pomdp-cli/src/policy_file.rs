//! JSON persistence for latent and window policies.
//!
//! Window tables serialize as per-step row lists in canonical key order, so
//! writing the same policy twice produces identical bytes.

use anyhow::{bail, Context, Result};
use pomdp_lab::model::LayeredPomdp;
use pomdp_lab::policy::{LatentPolicy, PolicyRef, WindowFallback, WindowKey, WindowPolicy};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct WindowRow {
    obs: Vec<usize>,
    acts: Vec<usize>,
    row: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
enum PolicyFile {
    #[serde(rename_all = "camelCase")]
    Latent { act: Vec<Vec<Vec<f64>>> },
    #[serde(rename_all = "camelCase")]
    Window {
        window_len: usize,
        include_actions: bool,
        fallback: String,
        steps: Vec<Vec<WindowRow>>,
    },
}

/// A policy loaded from disk, in either supported representation.
pub enum LoadedPolicy {
    Latent(LatentPolicy),
    Window(WindowPolicy),
}

impl LoadedPolicy {
    pub fn as_ref(&self) -> PolicyRef<'_> {
        match self {
            LoadedPolicy::Latent(p) => PolicyRef::Latent(p),
            LoadedPolicy::Window(p) => PolicyRef::Window(p),
        }
    }
}

pub fn save_latent(policy: &LatentPolicy, path: &Path) -> Result<()> {
    let file = PolicyFile::Latent {
        act: policy.tables().to_vec(),
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn save_window(policy: &WindowPolicy, path: &Path) -> Result<()> {
    let steps = (0..policy.horizon())
        .map(|t| {
            policy
                .rows(t)
                .map(|(key, row)| WindowRow {
                    obs: key.obs.clone(),
                    acts: key.acts.clone(),
                    row: row.to_vec(),
                })
                .collect()
        })
        .collect();
    let file = PolicyFile::Window {
        window_len: policy.window_len(),
        include_actions: policy.include_actions(),
        fallback: match policy.fallback() {
            WindowFallback::Uniform => "uniform".to_string(),
            WindowFallback::FirstAction => "firstAction".to_string(),
        },
        steps,
    };
    let mut text = serde_json::to_string_pretty(&file)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load(path: &Path, model: &LayeredPomdp) -> Result<LoadedPolicy> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: PolicyFile = serde_json::from_str(&text)?;
    Ok(match file {
        PolicyFile::Latent { act } => LoadedPolicy::Latent(LatentPolicy::new(act)?),
        PolicyFile::Window {
            window_len,
            include_actions,
            fallback,
            steps,
        } => {
            let fallback = match fallback.as_str() {
                "uniform" => WindowFallback::Uniform,
                "firstAction" => WindowFallback::FirstAction,
                other => bail!("unknown fallback {other:?}"),
            };
            if steps.len() != model.horizon() {
                bail!(
                    "policy spans {} steps, model horizon is {}",
                    steps.len(),
                    model.horizon()
                );
            }
            let mut policy =
                WindowPolicy::new(model.horizon(), window_len, include_actions, fallback)?;
            for (t, rows) in steps.into_iter().enumerate() {
                for row in rows {
                    policy.insert(
                        t,
                        WindowKey {
                            obs: row.obs,
                            acts: row.acts,
                        },
                        row.row,
                    )?;
                }
            }
            LoadedPolicy::Window(policy)
        }
    })
}

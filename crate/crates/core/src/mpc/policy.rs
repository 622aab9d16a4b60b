use serde::{Deserialize, Serialize};

use super::objective::ConstraintReport;
use super::solver::SolverDiagnostics;
use super::MpcConfig;
use crate::{ActivityVector, ACTIVITIES};

/// Optimized decisions for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyPlan {
    /// Policy in force when the window opened.
    pub base: ActivityVector,
    /// `Nd` increments; decision `j` takes effect on day `(j - 1) * Ta + 1`.
    pub deltas: Vec<ActivityVector>,
    /// Per-day policy over the prediction horizon.
    pub expanded: Vec<ActivityVector>,
    pub objective_value: f64,
    pub feasibility: ConstraintReport,
    pub diagnostics: SolverDiagnostics,
}

impl PolicyPlan {
    /// Policy enacted over the first action period.
    pub fn first_action(&self) -> ActivityVector {
        self.expanded[0]
    }
}

/// Per-day policy from zero: day `t` in `1..=Tp` sums every decision already active.
pub fn expand_policy(deltas: &[ActivityVector], cfg: &MpcConfig) -> Vec<ActivityVector> {
    expand_policy_from(&[0.0; ACTIVITIES], deltas, cfg)
}

/// As [`expand_policy`], on top of the policy `base` already in force.
/// Days past the control horizon keep the last cumulative value.
pub fn expand_policy_from(
    base: &ActivityVector,
    deltas: &[ActivityVector],
    cfg: &MpcConfig,
) -> Vec<ActivityVector> {
    let mut out = Vec::with_capacity(cfg.tp);
    let mut level = *base;
    for t in 1..=cfg.tp {
        // Heaviside with H(0) = 1: decision j switches on at day (j - 1) * Ta + 1.
        if cfg.ta > 0 && (t - 1) % cfg.ta == 0 {
            let j = (t - 1) / cfg.ta;
            if let Some(d) = deltas.get(j) {
                for k in 0..ACTIVITIES {
                    level[k] += d[k];
                }
            }
        }
        out.push(level);
    }
    out
}

/// Nearest admissible increments in the sequential sense: each increment is
/// capped at `delta_alpha_c`, then the running policy is clipped into
/// `[0, alpha_upper]` and the increment recomputed from the clipped level.
pub fn project_deltas(
    base: &ActivityVector,
    deltas: &[ActivityVector],
    cfg: &MpcConfig,
) -> Vec<ActivityVector> {
    let mut level: ActivityVector = std::array::from_fn(|k| base[k].clamp(0.0, cfg.alpha_upper[k]));
    deltas
        .iter()
        .map(|d| {
            std::array::from_fn(|k| {
                let step = d[k].min(cfg.delta_alpha_c[k]);
                let next = (level[k] + step).clamp(0.0, cfg.alpha_upper[k]);
                let applied = next - level[k];
                level[k] = next;
                applied
            })
        })
        .collect()
}

//! Interventions on the contact graph and their paired evaluation.
//!
//! Quarantine caps how many students a target can reach (lowers `k`);
//! treatment scales a target's transmission probabilities (lowers `p`). Both
//! return a new graph over the same students, so a baseline and an
//! intervened run can share random draws.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ContactGraph, StudentId};
use crate::sim::{run_replicas, ReplicaSummary, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Intervention {
    Quarantine { targets: Vec<StudentId>, cap: usize },
    Treat { targets: Vec<StudentId>, factor: f64 },
}

/// Which out-edges survive a quarantine cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Retain {
    #[default]
    HighestP,
    LowestP,
}

fn target_mask(g: &ContactGraph, targets: &[StudentId]) -> Result<Vec<bool>> {
    let mut mask = vec![false; g.node_count()];
    for t in targets {
        let i = g.index_of(t.as_str()).ok_or_else(|| Error::UnknownStudent(t.to_string()))?;
        mask[i] = true;
    }
    Ok(mask)
}

/// Keeps only the `cap` highest-probability out-edges of each target
/// (ties go to the lexicographically smaller destination).
pub fn apply_quarantine(g: &ContactGraph, targets: &[StudentId], cap: usize) -> Result<ContactGraph> {
    apply_quarantine_with(g, targets, cap, Retain::HighestP)
}

pub fn apply_quarantine_with(
    g: &ContactGraph,
    targets: &[StudentId],
    cap: usize,
    retain: Retain,
) -> Result<ContactGraph> {
    let mask = target_mask(g, targets)?;
    Ok(g.map_out_edges(|src, list| {
        if !mask[src] || list.len() <= cap {
            return list.to_vec();
        }
        let mut kept = list.to_vec();
        kept.sort_by(|a, b| {
            let by_p = match retain {
                Retain::HighestP => b.1.total_cmp(&a.1),
                Retain::LowestP => a.1.total_cmp(&b.1),
            };
            by_p.then(a.0.cmp(&b.0))
        });
        kept.truncate(cap);
        kept.sort_by_key(|e| e.0);
        kept
    }))
}

/// Multiplies every out-edge probability of each target by `factor`.
pub fn apply_treatment(g: &ContactGraph, targets: &[StudentId], factor: f64) -> Result<ContactGraph> {
    if !(0.0..=1.0).contains(&factor) {
        return Err(Error::Config(format!("treatment factor {factor} outside [0, 1]")));
    }
    let mask = target_mask(g, targets)?;
    Ok(g.map_out_edges(|src, list| {
        if mask[src] {
            list.iter().map(|&(d, p)| (d, p * factor)).collect()
        } else {
            list.to_vec()
        }
    }))
}

impl Intervention {
    pub fn apply(&self, g: &ContactGraph) -> Result<ContactGraph> {
        match self {
            Intervention::Quarantine { targets, cap } => apply_quarantine(g, targets, *cap),
            Intervention::Treat { targets, factor } => apply_treatment(g, targets, *factor),
        }
    }
}

/// Applies the interventions in order.
pub fn apply_plan(g: &ContactGraph, plan: &[Intervention]) -> Result<ContactGraph> {
    plan.iter().try_fold(g.clone(), |acc, iv| iv.apply(&acc))
}

/// Students by out-strength `sum_w p(v, w)`, the expected size of the first
/// wave each would start; descending, ties by id.
pub fn rank_spreaders(g: &ContactGraph) -> Vec<(StudentId, f64)> {
    let mut out: Vec<(StudentId, f64)> = (0..g.node_count())
        .map(|v| (g.id(v).clone(), out_strength(g, v)))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

fn out_strength(g: &ContactGraph, v: usize) -> f64 {
    g.out_edges(v).iter().fold(0.0, |acc, &(_, p)| acc + p)
}

/// Mean out-strength over all students. On a k-regular graph with uniform
/// `p` this is `p * k`; elsewhere it is only an estimate of the
/// reproduction number.
pub fn r0_estimate(g: &ContactGraph) -> Result<f64> {
    if g.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let total: f64 = (0..g.node_count()).map(|v| out_strength(g, v)).fold(0.0, |a, b| a + b);
    Ok(total / g.node_count() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEvaluation {
    pub baseline_mean_removed: f64,
    pub intervened_mean_removed: f64,
    pub delta: f64,
    #[serde(rename = "baseline_R0_estimate")]
    pub baseline_r0_estimate: f64,
    #[serde(rename = "intervened_R0_estimate")]
    pub intervened_r0_estimate: f64,
}

/// Runs the baseline and the intervened graph with the same `cfg.seed`, so
/// every transmission attempt sees the same uniform in both ensembles.
pub fn evaluate_plan(
    g: &ContactGraph,
    seeds: &[StudentId],
    cfg: &SimConfig,
    plan: &[Intervention],
) -> Result<PlanEvaluation> {
    let treated = apply_plan(g, plan)?;
    let (base, after) = run_pair(g, &treated, seeds, cfg)?;
    Ok(PlanEvaluation {
        baseline_mean_removed: base.mean_final_removed,
        intervened_mean_removed: after.mean_final_removed,
        delta: base.mean_final_removed - after.mean_final_removed,
        baseline_r0_estimate: r0_estimate(g)?,
        intervened_r0_estimate: r0_estimate(&treated)?,
    })
}

#[cfg(feature = "parallel")]
fn run_pair(
    a: &ContactGraph,
    b: &ContactGraph,
    seeds: &[StudentId],
    cfg: &SimConfig,
) -> Result<(ReplicaSummary, ReplicaSummary)> {
    let (x, y) = rayon::join(|| run_replicas(a, seeds, cfg), || run_replicas(b, seeds, cfg));
    Ok((x?, y?))
}

#[cfg(not(feature = "parallel"))]
fn run_pair(
    a: &ContactGraph,
    b: &ContactGraph,
    seeds: &[StudentId],
    cfg: &SimConfig,
) -> Result<(ReplicaSummary, ReplicaSummary)> {
    Ok((run_replicas(a, seeds, cfg)?, run_replicas(b, seeds, cfg)?))
}

/// Every target named in the plan.
pub fn plan_targets(plan: &[Intervention]) -> BTreeSet<&StudentId> {
    plan.iter()
        .flat_map(|iv| match iv {
            Intervention::Quarantine { targets, .. } | Intervention::Treat { targets, .. } => targets.iter(),
        })
        .collect()
}

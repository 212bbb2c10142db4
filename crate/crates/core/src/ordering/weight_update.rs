use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{classify_tensors, Graph, OpId, OpKind, ScheduleBounds, TensorCategory, TensorId};
use crate::segmentation::{Segmentation, SubgraphTree};

/// The weight-update ops fed by one gradient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UpdateBranch {
    pub gradient: TensorId,
    /// Ascending op ids.
    pub ops: Vec<OpId>,
    pub size_grad: u64,
}

impl UpdateBranch {
    /// Optimizer key for `alpha`: the first key (in map order) found in an
    /// op name of the branch.
    fn optimizer<'a>(&self, g: &Graph, alpha: &'a BTreeMap<String, f64>) -> Option<&'a str> {
        alpha.keys().map(String::as_str).find(|key| {
            let key = key.to_ascii_lowercase();
            self.ops.iter().any(|&v| g.op(v).name.to_ascii_lowercase().contains(&key))
        })
    }
}

/// Groups the weight-update ops of `g` by the gradient they descend from.
/// Branches are ordered by gradient id.
pub fn update_branches(g: &Graph) -> Result<Vec<UpdateBranch>> {
    let mut root: Vec<Option<TensorId>> = vec![None; g.num_ops()];
    let order = g.topo_order()?;
    let mut by_grad: BTreeMap<TensorId, Vec<OpId>> = BTreeMap::new();
    for v in order {
        let op = g.op(v);
        if op.kind != OpKind::WeightUpdate {
            continue;
        }
        let mut roots: Vec<TensorId> = op
            .inputs
            .iter()
            .map(|&t| {
                let p = g.tensor(t).producer;
                if g.op(p).kind == OpKind::WeightUpdate {
                    root[p]
                } else {
                    Some(t)
                }
            })
            .collect::<Option<Vec<_>>>()
            .unwrap_or_default();
        roots.sort_unstable();
        roots.dedup();
        match roots.as_slice() {
            [r] => {
                root[v] = Some(*r);
                by_grad.entry(*r).or_default().push(v);
            }
            [] => return Err(Error::Structural(format!("weight-update op '{}' has no gradient input", op.name))),
            _ => {
                return Err(Error::Structural(format!(
                    "weight-update op '{}' depends on {} gradients",
                    op.name,
                    roots.len()
                )))
            }
        }
    }
    Ok(by_grad
        .into_iter()
        .map(|(gradient, mut ops)| {
            ops.sort_unstable();
            UpdateBranch { gradient, ops, size_grad: g.tensor(gradient).size }
        })
        .collect())
}

/// Estimated footprint of running a weight-update branch at timestep `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightUpdateCost {
    /// Summed size of all activations.
    pub esti_pm: u64,
    /// Summed size of activations that may be alive at `t`.
    pub mem_atvs: u64,
    /// `mem_atvs + alpha * size_grad`.
    pub mem_used: f64,
}

/// Activation lifetimes widened to every timestep they might occupy.
#[derive(Debug, Clone)]
pub(crate) struct ActivationWindows {
    windows: Vec<(usize, usize, u64)>,
    pub(crate) total: u64,
}

impl ActivationWindows {
    pub(crate) fn new(g: &Graph, bounds: &ScheduleBounds) -> Self {
        let cats = classify_tensors(g);
        let windows: Vec<(usize, usize, u64)> = g
            .tensors()
            .iter()
            .filter(|t| cats[t.id] == TensorCategory::Activation)
            .map(|t| {
                let start = bounds.asap[t.producer];
                let end = t.consumers.iter().map(|&c| bounds.alap[c]).max().unwrap_or(usize::MAX);
                (start, end, t.size)
            })
            .collect();
        let total = windows.iter().map(|w| w.2).sum();
        ActivationWindows { windows, total }
    }

    pub(crate) fn alive_at(&self, t: usize) -> u64 {
        self.windows.iter().filter(|&&(s, e, _)| s <= t && t <= e).map(|w| w.2).sum()
    }

    fn cost(&self, t: usize, size_grad: u64, alpha: f64) -> WeightUpdateCost {
        let mem_atvs = self.alive_at(t);
        WeightUpdateCost { esti_pm: self.total, mem_atvs, mem_used: mem_atvs as f64 + alpha * size_grad as f64 }
    }
}

pub fn weight_update_cost(g: &Graph, bounds: &ScheduleBounds, t: usize, branch: &UpdateBranch, alpha: f64) -> WeightUpdateCost {
    ActivationWindows::new(g, bounds).cost(t, branch.size_grad, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightUpdatePolicy {
    /// Delay branches whose estimated footprint would raise the peak.
    Adaptive,
    /// Every branch runs in the slot where its gradient becomes available.
    Immediate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchPlacement {
    pub branch: UpdateBranch,
    /// Slot unit the branch runs in.
    pub target: usize,
    pub delayed: bool,
    pub alpha: f64,
    pub optimizer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightUpdatePlan {
    pub policy: WeightUpdatePolicy,
    pub esti_pm: u64,
    pub placements: Vec<BranchPlacement>,
}

impl WeightUpdatePlan {
    pub fn assignments(&self) -> Vec<(Vec<OpId>, usize)> {
        self.placements.iter().map(|p| (p.branch.ops.clone(), p.target)).collect()
    }

    pub fn num_delayed(&self) -> usize {
        self.placements.iter().filter(|p| p.delayed).count()
    }
}

/// Chooses a slot for every weight-update branch.
///
/// A branch is delayed when its gradient is large relative to the mean
/// tensor (`size_grad / mean > r`) and running it as soon as the gradient
/// exists is estimated to exceed the activation total. A delayed branch goes
/// to the first later slot whose estimate at the slot's first timestep fits
/// under that total, or to the slot after the last boundary. `optimizer`
/// overrides name-based lookup of the branch's `alpha`.
pub fn place_weight_updates(
    g: &Graph,
    tree: &SubgraphTree,
    bounds: &ScheduleBounds,
    r: f64,
    alpha: &BTreeMap<String, f64>,
    optimizer: Option<&str>,
    policy: WeightUpdatePolicy,
) -> Result<WeightUpdatePlan> {
    let seg = &tree.segmentation;
    let branches = update_branches(g)?;
    let windows = ActivationWindows::new(g, bounds);
    let mean = g.mean_tensor_size();
    let last_slot = seg.num_units() - 1;
    let slot_start = |u: usize| if u == 0 { 0 } else { bounds.asap[seg.boundaries[u / 2 - 1]] + 1 };

    let mut placements = Vec::with_capacity(branches.len());
    for branch in branches {
        let name = match optimizer {
            Some(name) => name,
            None => branch.optimizer(g, alpha).ok_or_else(|| {
                Error::Config(format!(
                    "no alpha for the optimizer of weight-update op '{}'",
                    g.op(branch.ops[0]).name
                ))
            })?,
        };
        let a = *alpha
            .get(name)
            .ok_or_else(|| Error::Config(format!("no alpha configured for optimizer '{name}'")))?;
        let producer = g.tensor(branch.gradient).producer;
        let ready = seg.ready_slot(producer).ok_or_else(|| {
            Error::Structural(format!("gradient {} is produced by a weight-update op", branch.gradient))
        })?;
        let ratio = if mean > 0.0 { branch.size_grad as f64 / mean } else { 0.0 };
        let cost = windows.cost(bounds.asap[producer], branch.size_grad, a);
        let delayed =
            policy == WeightUpdatePolicy::Adaptive && ratio > r && cost.mem_used > windows.total as f64;
        let target = if delayed {
            (ready + 2..=last_slot)
                .step_by(2)
                .find(|&u| windows.cost(slot_start(u), branch.size_grad, a).mem_used <= windows.total as f64)
                .unwrap_or(last_slot)
        } else {
            ready
        };
        debug_assert!(!Segmentation::is_boundary(target));
        placements.push(BranchPlacement { branch, target, delayed, alpha: a, optimizer: name.to_string() });
    }
    Ok(WeightUpdatePlan { policy, esti_pm: windows.total, placements })
}

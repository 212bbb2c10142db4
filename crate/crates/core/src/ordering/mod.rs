//! Operator ordering: exact and greedy solvers over one segment, weight
//! update placement, and assembly of the global schedule.

mod assemble;
mod exact;
mod greedy;
mod weight_update;

use std::time::Duration;

use serde::Serialize;

use crate::graph::{Graph, OpId};

pub use assemble::{assemble_order, AssembledSchedule, LeafOrdering};
pub use exact::exact_order;
pub use greedy::greedy_order;
pub use weight_update::{
    place_weight_updates, update_branches, weight_update_cost, BranchPlacement, UpdateBranch,
    WeightUpdateCost, WeightUpdatePlan, WeightUpdatePolicy,
};

/// Where an op sits relative to the segment being ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Before,
    Member,
    After,
}

/// A tensor as seen from inside one ordering problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalTensor {
    pub tensor: usize,
    pub size: u64,
    /// Local producer, or `None` for a tensor that is live on entry.
    pub producer: Option<usize>,
    /// Local consumers.
    pub consumers: Vec<usize>,
    /// Still needed after the segment ends (or never freed).
    pub escapes: bool,
}

/// The ops of one segment plus everything needed to evaluate the memory
/// footprint of any order of them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderingProblem {
    /// Global op ids; a local op index is a position in this list.
    pub ops: Vec<OpId>,
    pub preds: Vec<Vec<usize>>,
    pub inputs: Vec<Vec<usize>>,
    pub outputs: Vec<Vec<usize>>,
    pub tensors: Vec<LocalTensor>,
    /// Bytes held throughout the segment by tensors it neither produces nor
    /// consumes.
    pub background: u64,
    pub ops_per_step: usize,
}

impl OrderingProblem {
    /// The problem of ordering every op of `g` at once.
    pub fn whole_graph(g: &Graph, ops_per_step: usize) -> Self {
        Self::from_phases(g, &vec![Phase::Member; g.num_ops()], ops_per_step)
    }

    /// The problem of ordering the `Member` ops, given that all `Before` ops
    /// have already run and all `After` ops run later.
    pub fn from_phases(g: &Graph, phase: &[Phase], ops_per_step: usize) -> Self {
        let ops: Vec<OpId> = (0..g.num_ops()).filter(|&v| phase[v] == Phase::Member).collect();
        let mut local_of = vec![usize::MAX; g.num_ops()];
        for (i, &v) in ops.iter().enumerate() {
            local_of[v] = i;
        }
        let mut tensors = Vec::new();
        let mut background = 0u64;
        let mut inputs = vec![Vec::new(); ops.len()];
        let mut outputs = vec![Vec::new(); ops.len()];
        for t in g.tensors() {
            let local_consumers: Vec<usize> = t
                .consumers
                .iter()
                .filter(|&&c| phase[c] == Phase::Member)
                .map(|&c| local_of[c])
                .collect();
            let escapes = t.consumers.is_empty() || t.consumers.iter().any(|&c| phase[c] == Phase::After);
            let producer = match phase[t.producer] {
                Phase::After => continue,
                Phase::Member => Some(local_of[t.producer]),
                Phase::Before => {
                    if local_consumers.is_empty() {
                        if escapes {
                            background += t.size;
                        }
                        continue;
                    }
                    None
                }
            };
            let idx = tensors.len();
            if let Some(p) = producer {
                outputs[p].push(idx);
            }
            for &c in &local_consumers {
                inputs[c].push(idx);
            }
            tensors.push(LocalTensor { tensor: t.id, size: t.size, producer, consumers: local_consumers, escapes });
        }
        let preds = (0..ops.len())
            .map(|i| {
                let mut p: Vec<usize> = inputs[i].iter().filter_map(|&t| tensors[t].producer).collect();
                p.sort_unstable();
                p.dedup();
                p
            })
            .collect();
        OrderingProblem { ops, preds, inputs, outputs, tensors, background, ops_per_step }
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Peak footprint of a sequence of local steps, or `None` when the steps
    /// are not a valid order of this problem.
    pub fn evaluate_steps(&self, steps: &[Vec<usize>]) -> Option<u64> {
        let n = self.len();
        let mut done = vec![false; n];
        let mut remaining: Vec<usize> = self.tensors.iter().map(|t| t.consumers.len()).collect();
        let mut resident: u64 = self.background
            + self.tensors.iter().filter(|t| t.producer.is_none()).map(|t| t.size).sum::<u64>();
        let mut peak = 0u64;
        for step in steps {
            if step.is_empty() || step.len() > self.ops_per_step {
                return None;
            }
            for &v in step {
                if v >= n || done[v] || self.preds[v].iter().any(|&p| !done[p]) {
                    return None;
                }
            }
            let alloc: u64 = step.iter().flat_map(|&v| &self.outputs[v]).map(|&t| self.tensors[t].size).sum();
            resident += alloc;
            peak = peak.max(resident);
            for &v in step {
                done[v] = true;
            }
            for &v in step {
                for &t in &self.inputs[v] {
                    remaining[t] -= 1;
                    if remaining[t] == 0 && !self.tensors[t].escapes {
                        resident -= self.tensors[t].size;
                    }
                }
            }
        }
        done.iter().all(|&d| d).then_some(peak)
    }

    /// Lower bound on the footprint of running `v`: its inputs, outputs and
    /// the background are all resident at that moment.
    pub(crate) fn op_lower_bound(&self, v: usize) -> u64 {
        self.background
            + self.inputs[v].iter().chain(&self.outputs[v]).map(|&t| self.tensors[t].size).sum::<u64>()
    }

    pub(crate) fn to_global(&self, steps: &[Vec<usize>]) -> Vec<Vec<OpId>> {
        steps.iter().map(|s| s.iter().map(|&v| self.ops[v]).collect()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SolverStats {
    pub nodes_explored: u64,
    #[serde(serialize_with = "serialize_duration_ms")]
    pub elapsed: Duration,
}

fn serialize_duration_ms<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1000.0)
}

/// An ordering of one problem's ops, in global ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderingSolution {
    pub steps: Vec<Vec<OpId>>,
    pub peak: u64,
    pub optimal: bool,
    pub stats: SolverStats,
}

impl OrderingSolution {
    pub fn order(&self) -> Vec<OpId> {
        self.steps.iter().flatten().copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::{diamond, MB};

    #[test]
    fn whole_diamond_problem_evaluates_like_the_graph() {
        let p = OrderingProblem::whole_graph(&diamond(), 1);
        assert_eq!(p.evaluate_steps(&[vec![0], vec![1], vec![2], vec![3]]), Some(120 * MB));
        assert_eq!(p.evaluate_steps(&[vec![0], vec![2], vec![1], vec![3]]), Some(90 * MB));
        assert_eq!(p.evaluate_steps(&[vec![1], vec![0], vec![2], vec![3]]), None);
    }

    #[test]
    fn boundary_tensors_are_classified() {
        // A | B C | D : B and C are members.
        let g = diamond();
        let phase = [Phase::Before, Phase::Member, Phase::Member, Phase::After];
        let p = OrderingProblem::from_phases(&g, &phase, 1);
        assert_eq!(p.ops, vec![1, 2]);
        assert_eq!(p.background, 0);
        let live_in: Vec<u64> = p.tensors.iter().filter(|t| t.producer.is_none()).map(|t| t.size).collect();
        assert_eq!(live_in, vec![60 * MB, 20 * MB]);
        assert!(p.tensors.iter().filter(|t| t.producer.is_some()).all(|t| t.escapes));
        assert_eq!(p.evaluate_steps(&[vec![1], vec![0]]), Some(90 * MB));
    }
}

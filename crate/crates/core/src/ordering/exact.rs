use std::collections::HashMap;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};

use super::{greedy_order, OrderingProblem, OrderingSolution, SolverStats};

/// Largest problem the bitmask search handles; bigger ones get the greedy order.
pub const MAX_EXACT_OPS: usize = 128;

/// Minimizes the peak footprint over all valid orders of `p`.
///
/// Depth-first branch and bound over sets of already-executed ops. The
/// resident bytes after a set of ops depend only on the set, so a state
/// reached again with a prefix peak no better than before is dropped. The
/// search starts from the greedy order and stops early when the incumbent
/// meets the per-op lower bound. If `budget` runs out the incumbent is
/// returned with `optimal = false`.
pub fn exact_order(p: &OrderingProblem, budget: Duration) -> Result<OrderingSolution> {
    if p.ops_per_step == 0 {
        return Err(Error::Config("ops_per_step must be at least 1".into()));
    }
    if budget.is_zero() {
        return Err(Error::Config("ordering time budget must be positive".into()));
    }
    let start = Instant::now();
    let greedy = greedy_order(p);
    if p.len() > MAX_EXACT_OPS {
        return Ok(OrderingSolution { optimal: false, ..greedy });
    }
    if p.is_empty() {
        return Ok(OrderingSolution { optimal: true, ..greedy });
    }

    let mut search = Search::new(p, start + budget);
    let incumbent_steps: Vec<Vec<usize>> = greedy
        .steps
        .iter()
        .map(|s| s.iter().map(|&g| p.ops.binary_search(&g).expect("member op")).collect())
        .collect();
    search.best_peak = greedy.peak;
    search.best_steps = incumbent_steps;

    let initial_resident =
        p.background + p.tensors.iter().filter(|t| t.producer.is_none()).map(|t| t.size).sum::<u64>();
    if search.best_peak > search.global_lb {
        search.dfs(0, initial_resident, 0);
    }
    let optimal = !search.timed_out;
    let peak = p.evaluate_steps(&search.best_steps).expect("search produces valid orders");
    debug_assert_eq!(peak, search.best_peak);
    Ok(OrderingSolution {
        steps: p.to_global(&search.best_steps),
        peak,
        optimal,
        stats: SolverStats { nodes_explored: search.nodes, elapsed: start.elapsed() },
    })
}

struct Search<'a> {
    p: &'a OrderingProblem,
    full: u128,
    pred_mask: Vec<u128>,
    consumer_mask: Vec<u128>,
    out_bytes: Vec<u64>,
    op_lb: Vec<u64>,
    global_lb: u64,
    memo: HashMap<u128, u64>,
    path: Vec<Vec<usize>>,
    best_peak: u64,
    best_steps: Vec<Vec<usize>>,
    nodes: u64,
    deadline: Instant,
    timed_out: bool,
}

impl<'a> Search<'a> {
    fn new(p: &'a OrderingProblem, deadline: Instant) -> Self {
        let n = p.len();
        let bit = |v: usize| 1u128 << v;
        let pred_mask = p.preds.iter().map(|ps| ps.iter().fold(0, |m, &u| m | bit(u))).collect();
        let consumer_mask = p.tensors.iter().map(|t| t.consumers.iter().fold(0, |m, &c| m | bit(c))).collect();
        let out_bytes = p.outputs.iter().map(|o| o.iter().map(|&t| p.tensors[t].size).sum()).collect();
        let op_lb: Vec<u64> = (0..n).map(|v| p.op_lower_bound(v)).collect();
        let global_lb = op_lb.iter().copied().max().unwrap_or(0);
        Search {
            p,
            full: if n == 128 { u128::MAX } else { (1u128 << n) - 1 },
            pred_mask,
            consumer_mask,
            out_bytes,
            op_lb,
            global_lb,
            memo: HashMap::new(),
            path: Vec::with_capacity(n),
            best_peak: u64::MAX,
            best_steps: Vec::new(),
            nodes: 0,
            deadline,
            timed_out: false,
        }
    }

    fn ready(&self, done: u128) -> Vec<usize> {
        (0..self.p.len())
            .filter(|&v| done & (1u128 << v) == 0 && self.pred_mask[v] & !done == 0)
            .collect()
    }

    /// Resident bytes after running `step` on top of `done`.
    fn resident_after(&self, done: u128, resident: u64, step: &[usize]) -> u64 {
        let next = done | step.iter().fold(0u128, |m, &v| m | (1u128 << v));
        let alloc: u64 = step.iter().map(|&v| self.out_bytes[v]).sum();
        let mut freed = 0u64;
        for &v in step {
            for &t in &self.p.inputs[v] {
                let lt = &self.p.tensors[t];
                let cm = self.consumer_mask[t];
                // Count each tensor once: only at its lowest-index consumer in the step.
                let first_in_step = step.iter().filter(|&&u| cm & (1u128 << u) != 0).min() == Some(&v);
                if !lt.escapes && cm & !next == 0 && first_in_step {
                    freed += lt.size;
                }
            }
        }
        resident + alloc - freed
    }

    fn candidate_steps(&self, ready: &[usize]) -> Vec<Vec<usize>> {
        let k = self.p.ops_per_step.min(ready.len());
        let mut out = Vec::new();
        let mut current = Vec::with_capacity(k);
        fn rec(ready: &[usize], from: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if !current.is_empty() {
                out.push(current.clone());
            }
            if current.len() == k {
                return;
            }
            for i in from..ready.len() {
                current.push(ready[i]);
                rec(ready, i + 1, k, current, out);
                current.pop();
            }
        }
        rec(ready, 0, k, &mut current, &mut out);
        out
    }

    fn dfs(&mut self, done: u128, resident: u64, prefix: u64) {
        if self.timed_out {
            return;
        }
        self.nodes += 1;
        if self.nodes.is_multiple_of(4096) && Instant::now() >= self.deadline {
            self.timed_out = true;
            return;
        }
        if done == self.full {
            if prefix < self.best_peak {
                self.best_peak = prefix;
                self.best_steps = self.path.clone();
            }
            return;
        }
        match self.memo.get(&done) {
            Some(&seen) if seen <= prefix => return,
            _ => {
                self.memo.insert(done, prefix);
            }
        }
        let remaining_lb = (0..self.p.len())
            .filter(|&v| done & (1u128 << v) == 0)
            .map(|v| self.op_lb[v])
            .max()
            .unwrap_or(0);
        if prefix.max(remaining_lb) >= self.best_peak {
            return;
        }

        let ready = self.ready(done);
        let mut children: Vec<(u64, u64, Vec<usize>)> = self
            .candidate_steps(&ready)
            .into_iter()
            .map(|step| {
                let alloc: u64 = step.iter().map(|&v| self.out_bytes[v]).sum();
                let step_peak = prefix.max(resident + alloc);
                let after = self.resident_after(done, resident, &step);
                (step_peak, after, step)
            })
            .collect();
        children.sort();
        for (step_peak, after, step) in children {
            if step_peak >= self.best_peak {
                continue;
            }
            let next = done | step.iter().fold(0u128, |m, &v| m | (1u128 << v));
            self.path.push(step);
            self.dfs(next, after, step_peak);
            self.path.pop();
            if self.timed_out || self.best_peak <= self.global_lb {
                return;
            }
        }
    }
}

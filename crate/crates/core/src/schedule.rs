use crate::error::{Error, Result};
use crate::graph::{Graph, OpId};

/// An execution order of all ops, grouped into timesteps.
///
/// With `ops_per_step == 1` every op gets its own timestep and the order is
/// a plain topological sort.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    order: Vec<OpId>,
    timestep_of: Vec<usize>,
    ops_per_step: usize,
}

impl Schedule {
    /// One op per timestep, in the given order. `num_ops` sizes the
    /// timestep table so that schedules over a subset can be detected.
    pub fn sequential(order: Vec<OpId>, num_ops: usize) -> Self {
        let mut timestep_of = vec![usize::MAX; num_ops];
        for (t, &op) in order.iter().enumerate() {
            if op < num_ops {
                timestep_of[op] = t;
            }
        }
        Schedule { order, timestep_of, ops_per_step: 1 }
    }

    /// Builds a schedule from explicit timestep groups.
    pub fn from_steps(steps: &[Vec<OpId>], num_ops: usize, ops_per_step: usize) -> Self {
        let mut timestep_of = vec![usize::MAX; num_ops];
        let mut order = Vec::with_capacity(num_ops);
        for (t, step) in steps.iter().enumerate() {
            for &op in step {
                if op < num_ops {
                    timestep_of[op] = t;
                }
                order.push(op);
            }
        }
        Schedule { order, timestep_of, ops_per_step }
    }

    /// Rebuilds a schedule from an order and an explicit timestep table.
    pub fn from_parts(order: Vec<OpId>, timestep_of: Vec<usize>, ops_per_step: usize) -> Self {
        Schedule { order, timestep_of, ops_per_step }
    }

    pub fn order(&self) -> &[OpId] {
        &self.order
    }

    pub fn timestep_of(&self, op: OpId) -> usize {
        self.timestep_of[op]
    }

    pub fn timesteps(&self) -> &[usize] {
        &self.timestep_of
    }

    pub fn ops_per_step(&self) -> usize {
        self.ops_per_step
    }

    pub fn num_steps(&self) -> usize {
        self.order.iter().map(|&op| self.timestep_of[op] + 1).max().unwrap_or(0)
    }

    /// Ops grouped by timestep.
    pub fn steps(&self) -> Vec<Vec<OpId>> {
        let mut steps = vec![Vec::new(); self.num_steps()];
        for &op in &self.order {
            steps[self.timestep_of[op]].push(op);
        }
        steps
    }

    /// Checks that every op appears exactly once, producers run strictly
    /// before their consumers and no timestep exceeds `ops_per_step`.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        let n = g.num_ops();
        if self.ops_per_step == 0 {
            return Err(Error::InvalidSchedule("ops_per_step must be at least 1".into()));
        }
        if self.order.len() != n || self.timestep_of.len() != n {
            return Err(Error::InvalidSchedule(format!(
                "schedule covers {} ops, graph has {n}",
                self.order.len()
            )));
        }
        let mut seen = vec![false; n];
        for &op in &self.order {
            if op >= n || seen[op] {
                return Err(Error::InvalidSchedule(format!("op {op} missing or repeated")));
            }
            seen[op] = true;
        }
        let steps = self.num_steps();
        let mut per_step = vec![0usize; steps];
        for &op in &self.order {
            per_step[self.timestep_of[op]] += 1;
        }
        if let Some(t) = per_step.iter().position(|&c| c > self.ops_per_step) {
            return Err(Error::InvalidSchedule(format!(
                "timestep {t} holds {} ops, limit is {}",
                per_step[t], self.ops_per_step
            )));
        }
        // Timesteps must follow the order so that order[] is a faithful listing.
        if self.order.windows(2).any(|w| self.timestep_of[w[0]] > self.timestep_of[w[1]]) {
            return Err(Error::InvalidSchedule("order is not sorted by timestep".into()));
        }
        for t in g.tensors() {
            for &c in &t.consumers {
                if self.timestep_of[t.producer] >= self.timestep_of[c] {
                    return Err(Error::InvalidSchedule(format!(
                        "op {c} consumes tensor {} before or while op {} produces it",
                        t.id, t.producer
                    )));
                }
            }
        }
        Ok(())
    }
}

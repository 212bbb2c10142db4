//! Plan documents: the JSON form of an execution plan, keyed by the ids of
//! the graph document it was made for.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{classify_tensors, live_intervals, peak_memory, Graph, TensorCategory};
use crate::layout::{fragmentation_pct, validate_layout, LayoutViolation, MemoryLayout};
use crate::planner::ExecutionPlan;
use crate::schedule::Schedule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDocStats {
    pub theoretical_peak: u64,
    pub fragmentation_pct: f64,
    pub optimal_leaves: usize,
    pub total_leaves: usize,
}

/// Size and lifetime of a tensor, carried so a plan can be drawn without
/// its graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpan {
    pub size_bytes: u64,
    pub start: usize,
    pub end: usize,
    pub activation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDoc {
    pub schedule: Vec<i64>,
    pub timesteps: BTreeMap<i64, usize>,
    pub layout: BTreeMap<i64, u64>,
    pub capacity: u64,
    pub stats: PlanDocStats,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tensors: BTreeMap<i64, TensorSpan>,
}

impl PlanDoc {
    pub fn from_plan(g: &Graph, plan: &ExecutionPlan) -> Self {
        let s = &plan.schedule;
        let intervals = live_intervals(g, s);
        let cats = classify_tensors(g);
        PlanDoc {
            schedule: s.order().iter().map(|&v| g.op(v).ext_id).collect(),
            timesteps: s.order().iter().map(|&v| (g.op(v).ext_id, s.timestep_of(v))).collect(),
            layout: plan.layout.offsets.iter().map(|(&t, &o)| (g.tensor(t).ext_id, o)).collect(),
            capacity: plan.layout.capacity,
            stats: PlanDocStats {
                theoretical_peak: plan.stats.theoretical_peak,
                fragmentation_pct: plan.stats.fragmentation_pct,
                optimal_leaves: plan.stats.optimal_leaves,
                total_leaves: plan.stats.total_leaves,
            },
            tensors: g
                .tensors()
                .iter()
                .map(|t| {
                    let (start, end) = intervals[t.id];
                    let span = TensorSpan {
                        size_bytes: t.size,
                        start,
                        end,
                        activation: cats[t.id] == TensorCategory::Activation,
                    };
                    (t.ext_id, span)
                })
                .collect(),
        }
    }

    pub fn from_json(json: &str) -> Result<Self> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan documents serialize")
    }

    /// The schedule and layout in the internal ids of `g`.
    pub fn resolve(&self, g: &Graph) -> Result<(Schedule, MemoryLayout)> {
        let mut order = Vec::with_capacity(self.schedule.len());
        let mut timestep_of = vec![usize::MAX; g.num_ops()];
        for &ext in &self.schedule {
            let v = g.op_by_ext(ext).ok_or_else(|| Error::DanglingReference(format!("plan schedules unknown op {ext}")))?;
            let step = *self
                .timesteps
                .get(&ext)
                .ok_or_else(|| Error::InvalidSchedule(format!("op {ext} has no timestep")))?;
            order.push(v);
            timestep_of[v] = step;
        }
        let mut per_step: BTreeMap<usize, usize> = BTreeMap::new();
        for &v in &order {
            *per_step.entry(timestep_of[v]).or_default() += 1;
        }
        let k = per_step.values().copied().max().unwrap_or(1);
        let schedule = Schedule::from_parts(order, timestep_of, k);
        let mut layout = MemoryLayout { capacity: self.capacity, ..Default::default() };
        for (&ext, &o) in &self.layout {
            let t = g
                .tensor_by_ext(ext)
                .ok_or_else(|| Error::DanglingReference(format!("plan places unknown tensor {ext}")))?;
            layout.offsets.insert(t, o);
        }
        Ok((schedule, layout))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub stats: PlanDocStats,
    pub capacity: u64,
    /// Violations with tensor ids of the graph document.
    pub violations: Vec<LayoutViolation>,
}

/// Recomputes a plan's statistics from `g` alone. Leaf counts are taken
/// from the document since they describe how the plan was produced.
pub fn evaluate(g: &Graph, doc: &PlanDoc) -> Result<EvalReport> {
    let (schedule, layout) = doc.resolve(g)?;
    schedule.validate(g)?;
    let ext = |t: usize| g.tensor(t).ext_id as usize;
    let violations: Vec<LayoutViolation> = validate_layout(g, &schedule, &layout)
        .into_iter()
        .map(|v| match v {
            LayoutViolation::Missing { tensor } => LayoutViolation::Missing { tensor: ext(tensor) },
            LayoutViolation::Extent { tensor } => LayoutViolation::Extent { tensor: ext(tensor) },
            LayoutViolation::Overlap { a, b } => LayoutViolation::Overlap { a: ext(a), b: ext(b) },
        })
        .collect();
    let (theoretical_peak, _) = peak_memory(g, &schedule)?;
    let fragmentation = if violations.is_empty() { fragmentation_pct(layout.capacity, theoretical_peak)? } else { f64::NAN };
    Ok(EvalReport {
        stats: PlanDocStats {
            theoretical_peak,
            fragmentation_pct: fragmentation,
            optimal_leaves: doc.stats.optimal_leaves,
            total_leaves: doc.stats.total_leaves,
        },
        capacity: layout.capacity,
        violations,
    })
}

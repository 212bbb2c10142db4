//! Replays a schedule against memory: once through a caching allocator that
//! decides offsets at runtime, once against a fixed layout.

use std::collections::BTreeSet;
use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::graph::{peak_memory, Graph, TensorId};
use crate::layout::{fragmentation_pct, LayoutViolation, MemoryLayout};
use crate::schedule::Schedule;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocPolicy {
    /// Smallest free block that fits, lowest offset on ties.
    #[default]
    BestFit,
    /// Lowest free block that fits.
    FirstFit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Block {
    pub offset: u64,
    pub size: u64,
    pub free: bool,
}

/// A memory pool that splits free blocks on allocation and merges adjacent
/// free blocks on release. Blocks tile `[0, high_water)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AllocatorModel {
    pub policy: AllocPolicy,
    blocks: Vec<Block>,
}

impl AllocatorModel {
    pub fn new(policy: AllocPolicy) -> Self {
        AllocatorModel { policy, blocks: Vec::new() }
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn high_water(&self) -> u64 {
        self.blocks.last().map_or(0, |b| b.offset + b.size)
    }

    /// Returns the offset of a fresh `size`-byte block.
    pub fn alloc(&mut self, size: u64) -> u64 {
        let fits = self.blocks.iter().enumerate().filter(|(_, b)| b.free && b.size >= size);
        let chosen = match self.policy {
            AllocPolicy::BestFit => fits.min_by_key(|(_, b)| (b.size, b.offset)).map(|(i, _)| i),
            AllocPolicy::FirstFit => fits.map(|(i, _)| i).next(),
        };
        if let Some(i) = chosen {
            let b = self.blocks[i];
            self.blocks[i] = Block { offset: b.offset, size, free: false };
            if b.size > size {
                self.blocks.insert(i + 1, Block { offset: b.offset + size, size: b.size - size, free: true });
            }
            return b.offset;
        }
        // Grow the pool, reusing a free block at the top if there is one.
        match self.blocks.last_mut() {
            Some(top) if top.free => {
                top.size = size;
                top.free = false;
                top.offset
            }
            _ => {
                let offset = self.high_water();
                self.blocks.push(Block { offset, size, free: false });
                offset
            }
        }
    }

    /// Releases the block starting at `offset`.
    pub fn free(&mut self, offset: u64) {
        let i = self.blocks.iter().position(|b| b.offset == offset && !b.free).expect("freeing a live block");
        self.blocks[i].free = true;
        if i + 1 < self.blocks.len() && self.blocks[i + 1].free {
            self.blocks[i].size += self.blocks[i + 1].size;
            self.blocks.remove(i + 1);
        }
        if i > 0 && self.blocks[i - 1].free {
            self.blocks[i - 1].size += self.blocks[i].size;
            self.blocks.remove(i);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Alloc,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub timestep: usize,
    pub action: Action,
    pub tensor: TensorId,
    pub offset: u64,
    pub size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicReplay {
    pub actual_peak: u64,
    pub theoretical_peak: u64,
    pub fragmentation_pct: f64,
    pub trace: Vec<TraceEvent>,
}

/// Runs `s` through a caching allocator: each step allocates its outputs,
/// then frees every tensor whose last consumer ran in that step. Tensors
/// without consumers are never freed.
pub fn replay_dynamic(g: &Graph, s: &Schedule, policy: AllocPolicy) -> Result<DynamicReplay> {
    let (theoretical_peak, _) = peak_memory(g, s)?;
    let mut pool = AllocatorModel::new(policy);
    let mut offsets = vec![0u64; g.num_tensors()];
    let mut remaining: Vec<usize> = g.tensors().iter().map(|t| t.consumers.len()).collect();
    let mut trace = Vec::new();
    for (timestep, step) in s.steps().into_iter().enumerate() {
        for &v in &step {
            for &t in &g.op(v).outputs {
                let size = g.tensor(t).size;
                offsets[t] = pool.alloc(size);
                trace.push(TraceEvent { timestep, action: Action::Alloc, tensor: t, offset: offsets[t], size });
            }
        }
        let mut freed = BTreeSet::new();
        for &v in &step {
            for &t in &g.op(v).inputs {
                remaining[t] -= 1;
                if remaining[t] == 0 {
                    freed.insert(t);
                }
            }
        }
        for t in freed {
            pool.free(offsets[t]);
            trace.push(TraceEvent { timestep, action: Action::Free, tensor: t, offset: offsets[t], size: g.tensor(t).size });
        }
    }
    let actual_peak = pool.high_water();
    Ok(DynamicReplay {
        actual_peak,
        theoretical_peak,
        fragmentation_pct: fragmentation_pct(actual_peak, theoretical_peak)?,
        trace,
    })
}

/// Writes one JSON record per event.
pub fn write_trace<W: Write>(trace: &[TraceEvent], mut out: W) -> Result<()> {
    for e in trace {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StaticReplay {
    pub actual_peak: u64,
    pub violations: Vec<LayoutViolation>,
}

/// Checks, step by step, that the tensors live at each step occupy disjoint
/// byte ranges of `m`. Each overlapping pair is reported once.
pub fn replay_static(g: &Graph, s: &Schedule, m: &MemoryLayout) -> Result<StaticReplay> {
    s.validate(g)?;
    let intervals = crate::graph::live_intervals(g, s);
    let mut violations = Vec::new();
    for t in g.tensors() {
        if !m.offsets.contains_key(&t.id) {
            violations.push(LayoutViolation::Missing { tensor: t.id });
        }
    }
    let mut reported = BTreeSet::new();
    let mut actual_peak = 0u64;
    let mut live: Vec<(u64, u64, TensorId)> = Vec::new();
    for step in 0..s.num_steps() {
        live.clear();
        for t in g.tensors() {
            let (a, b) = intervals[t.id];
            if let (true, Some(&o)) = (a <= step && step <= b, m.offsets.get(&t.id)) {
                live.push((o, o + t.size, t.id));
            }
        }
        live.sort_unstable();
        for (i, &(lo, hi, x)) in live.iter().enumerate() {
            actual_peak = actual_peak.max(hi);
            for &(lo2, _, y) in &live[i + 1..] {
                if lo2 >= hi {
                    break;
                }
                debug_assert!(lo <= lo2);
                if reported.insert((x.min(y), x.max(y))) {
                    violations.push(LayoutViolation::Overlap { a: x.min(y), b: x.max(y) });
                }
            }
        }
    }
    Ok(StaticReplay { actual_peak, violations })
}

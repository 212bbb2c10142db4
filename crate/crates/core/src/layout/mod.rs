//! Static memory layout: assigning each tensor a byte offset so that tensors
//! alive at the same time never share bytes.

mod concat;
mod exact;
mod llfb;

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{classify_tensors, live_intervals, Graph, TensorCategory, TensorId};
use crate::schedule::Schedule;

pub use concat::{compact_layout, concat_layouts, repair_conflicts};
pub use exact::{exact_layout, heuristic_layout, LayoutSolution};
pub use llfb::{llfb_gap_fixture, llfb_layout};

/// A tensor to place: `size` bytes, alive over the inclusive timesteps
/// `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LayoutItem {
    pub tensor: TensorId,
    pub size: u64,
    pub start: usize,
    pub end: usize,
    pub activation: bool,
}

impl LayoutItem {
    pub fn overlaps_in_time(&self, other: &LayoutItem) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn lifetime(&self) -> usize {
        self.end - self.start + 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayoutProblem {
    pub items: Vec<LayoutItem>,
    /// Stack activations contiguously from offset 0 and keep every other
    /// item that is alive together with an activation above them.
    pub activations_at_bottom: bool,
}

impl LayoutProblem {
    pub fn new(items: Vec<LayoutItem>, activations_at_bottom: bool) -> Self {
        LayoutProblem { items, activations_at_bottom }
    }

    /// Items for `tensors` of `g` on the lifetimes induced by `s`.
    pub fn from_schedule(g: &Graph, s: &Schedule, tensors: &[TensorId], activations_at_bottom: bool) -> Self {
        let intervals = live_intervals(g, s);
        let cats = classify_tensors(g);
        Self::with_intervals(g, &intervals, &cats, tensors, activations_at_bottom)
    }

    pub(crate) fn with_intervals(
        g: &Graph,
        intervals: &[(usize, usize)],
        cats: &[TensorCategory],
        tensors: &[TensorId],
        activations_at_bottom: bool,
    ) -> Self {
        let items = tensors
            .iter()
            .map(|&t| LayoutItem {
                tensor: t,
                size: g.tensor(t).size,
                start: intervals[t].0,
                end: intervals[t].1,
                activation: cats[t] == TensorCategory::Activation,
            })
            .collect();
        LayoutProblem { items, activations_at_bottom }
    }

    /// Summed size of the activations; the activation block when stacked.
    pub fn activation_bytes(&self) -> u64 {
        self.items.iter().filter(|i| i.activation).map(|i| i.size).sum()
    }

    /// Largest total size alive at any one timestep; no layout is smaller.
    pub fn clique_bound(&self) -> u64 {
        max_load(&self.items)
    }
}

/// Largest summed size of items alive at one timestep.
pub(crate) fn max_load<'a>(items: impl IntoIterator<Item = &'a LayoutItem>) -> u64 {
    let mut events: Vec<(usize, i128)> = Vec::new();
    for i in items {
        events.push((i.start, i.size as i128));
        events.push((i.end + 1, -(i.size as i128)));
    }
    // Frees at a timestep apply before allocations at the same timestep.
    events.sort_unstable_by_key(|&(t, d)| (t, d > 0));
    let (mut acc, mut best) = (0i128, 0i128);
    for (_, d) in events {
        acc += d;
        best = best.max(acc);
    }
    best as u64
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MemoryLayout {
    pub offsets: BTreeMap<TensorId, u64>,
    pub capacity: u64,
    pub activation_block_size: u64,
}

impl MemoryLayout {
    /// Layout with the given offsets and the smallest capacity holding them.
    pub fn from_offsets(items: &[LayoutItem], offsets: &[u64], activation_block_size: u64) -> Self {
        let capacity = items.iter().zip(offsets).map(|(i, &o)| o + i.size).max().unwrap_or(0);
        MemoryLayout {
            offsets: items.iter().zip(offsets).map(|(i, &o)| (i.tensor, o)).collect(),
            capacity,
            activation_block_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayoutViolation {
    Missing { tensor: TensorId },
    Overlap { a: TensorId, b: TensorId },
    Extent { tensor: TensorId },
}

/// Every overlap and extent violation of `m` for `g` under `s`.
pub fn validate_layout(g: &Graph, s: &Schedule, m: &MemoryLayout) -> Vec<LayoutViolation> {
    let intervals = live_intervals(g, s);
    let mut out = Vec::new();
    let mut items = Vec::new();
    for t in g.tensors() {
        if m.offsets.contains_key(&t.id) {
            items.push(LayoutItem {
                tensor: t.id,
                size: t.size,
                start: intervals[t.id].0,
                end: intervals[t.id].1,
                activation: false,
            });
        } else {
            out.push(LayoutViolation::Missing { tensor: t.id });
        }
    }
    out.extend(validate_items(&items, m));
    out
}

/// Overlap and extent violations among `items`; items missing from `m` are
/// reported as missing.
pub fn validate_items(items: &[LayoutItem], m: &MemoryLayout) -> Vec<LayoutViolation> {
    let mut out = Vec::new();
    let mut placed: Vec<(u64, &LayoutItem)> = Vec::with_capacity(items.len());
    for item in items {
        match m.offsets.get(&item.tensor) {
            Some(&o) => {
                if o + item.size > m.capacity {
                    out.push(LayoutViolation::Extent { tensor: item.tensor });
                }
                placed.push((o, item));
            }
            None => out.push(LayoutViolation::Missing { tensor: item.tensor }),
        }
    }
    for (i, &(oa, a)) in placed.iter().enumerate() {
        for &(ob, b) in &placed[i + 1..] {
            if a.overlaps_in_time(b) && oa < ob + b.size && ob < oa + a.size {
                out.push(LayoutViolation::Overlap { a: a.tensor, b: b.tensor });
            }
        }
    }
    out
}

/// Share of the actual requirement that is lost to fragmentation, in percent.
pub fn fragmentation_pct(actual: u64, theoretical: u64) -> Result<f64> {
    if actual < theoretical {
        return Err(Error::Invariant(format!(
            "actual requirement {actual} is below the theoretical peak {theoretical}"
        )));
    }
    if actual == theoretical {
        return Ok(0.0);
    }
    Ok(100.0 * (actual - theoretical) as f64 / actual as f64)
}

/// Lowest offset `>= floor` at which `size` bytes fit between `obstacles`
/// (given as `(offset, size)` ranges).
pub(crate) fn lowest_fit(obstacles: &[(u64, u64)], size: u64, floor: u64) -> u64 {
    let mut candidates: Vec<u64> = std::iter::once(floor)
        .chain(obstacles.iter().map(|&(o, s)| o + s).filter(|&top| top > floor))
        .collect();
    candidates.sort_unstable();
    candidates
        .into_iter()
        .find(|&c| obstacles.iter().all(|&(o, s)| c + size <= o || o + s <= c))
        .expect("the highest top always fits")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::diamond;

    fn item(tensor: usize, size: u64, start: usize, end: usize) -> LayoutItem {
        LayoutItem { tensor, size, start, end, activation: false }
    }

    #[test]
    fn fragmentation_examples() {
        assert_eq!(fragmentation_pct(100, 80).unwrap(), 20.0);
        assert_eq!(fragmentation_pct(64, 64).unwrap(), 0.0);
        assert_eq!(fragmentation_pct(0, 0).unwrap(), 0.0);
        assert!(matches!(fragmentation_pct(10, 11), Err(Error::Invariant(_))));
    }

    #[test]
    fn overlapping_pair_at_same_offset_is_one_violation() {
        let items = [item(0, 4, 0, 2), item(1, 4, 1, 3)];
        let m = MemoryLayout::from_offsets(&items, &[0, 0], 0);
        assert_eq!(validate_items(&items, &m), vec![LayoutViolation::Overlap { a: 0, b: 1 }]);
    }

    #[test]
    fn extent_beyond_capacity_is_reported() {
        let items = [item(0, 4, 0, 2)];
        let mut m = MemoryLayout::from_offsets(&items, &[2], 0);
        m.capacity = 5;
        assert_eq!(validate_items(&items, &m), vec![LayoutViolation::Extent { tensor: 0 }]);
    }

    #[test]
    fn missing_offset_is_reported() {
        let g = diamond();
        let s = Schedule::sequential(vec![0, 2, 1, 3], 4);
        let mut m = MemoryLayout::default();
        m.offsets.insert(0, 0);
        m.capacity = u64::MAX / 2;
        let v = validate_layout(&g, &s, &m);
        assert_eq!(v.iter().filter(|v| matches!(v, LayoutViolation::Missing { .. })).count(), 3);
    }

    #[test]
    fn lowest_fit_uses_gaps() {
        assert_eq!(lowest_fit(&[(0, 4), (10, 2)], 5, 0), 4);
        assert_eq!(lowest_fit(&[(0, 4), (10, 2)], 7, 0), 12);
        assert_eq!(lowest_fit(&[(0, 4)], 2, 6), 6);
    }

    #[test]
    fn clique_bound_counts_simultaneous_items() {
        let p = LayoutProblem::new(vec![item(0, 3, 0, 1), item(1, 5, 1, 2), item(2, 7, 2, 3)], false);
        assert_eq!(p.clique_bound(), 12);
    }
}

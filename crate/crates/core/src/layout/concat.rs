use std::collections::BTreeSet;

use crate::error::{Error, Result};

use super::{lowest_fit, LayoutItem, LayoutProblem, MemoryLayout};

/// Stacks per-subgraph layouts: layout `i` is shifted up by the summed
/// activation blocks of layouts `0..i`. Each part must keep its activations
/// contiguous at the bottom.
pub fn concat_layouts(parts: &[(&LayoutProblem, &MemoryLayout)]) -> Result<MemoryLayout> {
    let mut merged = MemoryLayout::default();
    let mut base = 0u64;
    for (k, (p, m)) in parts.iter().enumerate() {
        let acts = p.activation_bytes();
        let contiguous = p.items.iter().filter(|i| i.activation).all(|i| {
            m.offsets.get(&i.tensor).is_some_and(|&o| o + i.size <= m.activation_block_size)
        });
        if m.activation_block_size != acts || !contiguous {
            return Err(Error::Contract(format!(
                "layout {k} does not keep its {acts} activation bytes in a block at offset 0"
            )));
        }
        for (&t, &o) in &m.offsets {
            if merged.offsets.insert(t, base + o).is_some() {
                return Err(Error::Contract(format!("tensor {t} appears in more than one layout")));
            }
        }
        merged.capacity = merged.capacity.max(base + m.capacity);
        base += acts;
    }
    merged.activation_block_size = base;
    Ok(merged)
}

/// Moves tensors out of address conflicts.
///
/// Of each conflicting pair, an activation stays put against a
/// non-activation; otherwise the smaller tensor moves, then the shorter
/// lived, then the higher id. Moved tensors are re-placed largest first in
/// the smallest free gap below the current capacity, or at the lowest
/// feasible offset when no gap fits.
pub fn repair_conflicts(m: &MemoryLayout, items: &[LayoutItem]) -> MemoryLayout {
    let offset = |i: &LayoutItem| m.offsets[&i.tensor];
    let mut victims: BTreeSet<usize> = BTreeSet::new();
    for (a, ia) in items.iter().enumerate() {
        for (b, ib) in items.iter().enumerate().skip(a + 1) {
            let (oa, ob) = (offset(ia), offset(ib));
            if !(ia.overlaps_in_time(ib) && oa < ob + ib.size && ob < oa + ia.size) {
                continue;
            }
            if victims.contains(&a) || victims.contains(&b) {
                continue;
            }
            let keep_a = (ia.activation, ia.size, ia.lifetime(), std::cmp::Reverse(ia.tensor))
                > (ib.activation, ib.size, ib.lifetime(), std::cmp::Reverse(ib.tensor));
            victims.insert(if keep_a { b } else { a });
        }
    }
    if victims.is_empty() {
        return m.clone();
    }
    let mut out = m.clone();
    let mut placed: Vec<bool> = (0..items.len()).map(|i| !victims.contains(&i)).collect();
    let mut order: Vec<usize> = victims.into_iter().collect();
    order.sort_by_key(|&i| (std::cmp::Reverse(items[i].size), std::cmp::Reverse(items[i].lifetime()), items[i].tensor));
    for v in order {
        let it = &items[v];
        let mut obstacles: Vec<(u64, u64)> = items
            .iter()
            .enumerate()
            .filter(|&(j, other)| placed[j] && j != v && other.overlaps_in_time(it))
            .map(|(_, other)| (out.offsets[&other.tensor], other.size))
            .collect();
        obstacles.sort_unstable();
        let at = best_gap(&obstacles, it.size, out.capacity).unwrap_or_else(|| lowest_fit(&obstacles, it.size, 0));
        out.offsets.insert(it.tensor, at);
        out.capacity = out.capacity.max(at + it.size);
        placed[v] = true;
    }
    out
}

/// Re-places every non-activation tensor around the fixed activations,
/// first-fit in a few item orders (the current offset order among them),
/// and keeps the smallest layout found, `m` included.
pub fn compact_layout(m: &MemoryLayout, items: &[LayoutItem]) -> MemoryLayout {
    let free: Vec<usize> = (0..items.len()).filter(|&i| !items[i].activation).collect();
    let keyed = |key: &dyn Fn(&LayoutItem) -> (u64, u64, usize)| {
        let mut order = free.clone();
        order.sort_by_key(|&i| key(&items[i]));
        order
    };
    let orders = [
        keyed(&|i| (m.offsets[&i.tensor], i.start as u64, i.tensor)),
        keyed(&|i| (i.start as u64, u64::MAX - i.size, i.tensor)),
        keyed(&|i| (u64::MAX - i.size, u64::MAX - i.lifetime() as u64, i.tensor)),
        keyed(&|i| (u64::MAX - i.lifetime() as u64, u64::MAX - i.size, i.tensor)),
    ];
    let mut best = m.clone();
    for order in orders {
        let mut offsets: Vec<Option<u64>> =
            items.iter().map(|i| i.activation.then(|| m.offsets[&i.tensor])).collect();
        for &i in &order {
            let obstacles: Vec<(u64, u64)> = items
                .iter()
                .zip(&offsets)
                .filter(|(other, o)| o.is_some() && other.overlaps_in_time(&items[i]))
                .map(|(other, o)| (o.unwrap(), other.size))
                .collect();
            offsets[i] = Some(lowest_fit(&obstacles, items[i].size, 0));
        }
        let offsets: Vec<u64> = offsets.into_iter().map(|o| o.expect("placed")).collect();
        let candidate = MemoryLayout::from_offsets(items, &offsets, m.activation_block_size);
        if candidate.capacity < best.capacity {
            best = candidate;
        }
    }
    best
}

/// Start of the smallest free gap of at least `size` bytes below `capacity`
/// (lowest such gap on ties). `obstacles` are sorted by offset.
fn best_gap(obstacles: &[(u64, u64)], size: u64, capacity: u64) -> Option<u64> {
    let mut best: Option<(u64, u64)> = None;
    let mut cursor = 0u64;
    let consider = |from: u64, to: u64, best: &mut Option<(u64, u64)>| {
        if to >= from && to - from >= size && best.is_none_or(|(len, _)| to - from < len) {
            *best = Some((to - from, from));
        }
    };
    for &(o, s) in obstacles {
        if o > cursor {
            consider(cursor, o.min(capacity), &mut best);
        }
        cursor = cursor.max(o + s);
    }
    if cursor < capacity {
        consider(cursor, capacity, &mut best);
    }
    best.map(|(_, at)| at)
}

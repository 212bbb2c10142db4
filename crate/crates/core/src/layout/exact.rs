use std::time::{Duration, Instant};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ordering::SolverStats;

use super::{lowest_fit, max_load, LayoutItem, LayoutProblem, MemoryLayout};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayoutSolution {
    pub layout: MemoryLayout,
    pub optimal: bool,
    pub stats: SolverStats,
}

/// Fixed activation block plus the per-item lower offset limits it implies.
struct Prepared<'a> {
    items: &'a [LayoutItem],
    offsets: Vec<Option<u64>>,
    floors: Vec<u64>,
    free: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
    block: u64,
}

impl<'a> Prepared<'a> {
    fn new(p: &'a LayoutProblem) -> Self {
        let items = &p.items[..];
        let n = items.len();
        let neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && items[i].overlaps_in_time(&items[j])).collect())
            .collect();
        let mut offsets = vec![None; n];
        let mut floors = vec![0; n];
        let mut block = 0;
        if p.activations_at_bottom {
            let mut acts: Vec<usize> = (0..n).filter(|&i| items[i].activation).collect();
            acts.sort_by_key(|&i| (items[i].start, items[i].tensor));
            for &i in &acts {
                offsets[i] = Some(block);
                block += items[i].size;
            }
            for i in (0..n).filter(|&i| !items[i].activation) {
                if acts.iter().any(|&a| items[a].overlaps_in_time(&items[i])) {
                    floors[i] = block;
                }
            }
        }
        let free = (0..n).filter(|&i| offsets[i].is_none()).collect();
        Prepared { items, offsets, floors, free, neighbors, block }
    }

    fn first_fit(&self, offsets: &[Option<u64>], i: usize) -> u64 {
        let obstacles: Vec<(u64, u64)> =
            self.neighbors[i].iter().filter_map(|&j| offsets[j].map(|o| (o, self.items[j].size))).collect();
        lowest_fit(&obstacles, self.items[i].size, self.floors[i])
    }

    /// Places the free items in `order`, each at its lowest feasible offset.
    fn place_in_order(&self, order: &[usize]) -> Vec<u64> {
        let mut offsets = self.offsets.clone();
        for &i in order {
            offsets[i] = Some(self.first_fit(&offsets, i));
        }
        offsets.into_iter().map(|o| o.expect("every item placed")).collect()
    }

    fn capacity(&self, offsets: &[u64]) -> u64 {
        self.items.iter().zip(offsets).map(|(i, &o)| o + i.size).max().unwrap_or(0)
    }

    fn lower_bound(&self) -> u64 {
        let floors = (0..self.items.len()).map(|i| self.floors[i] + self.items[i].size).max().unwrap_or(0);
        max_load(self.items).max(floors).max(self.block)
    }

    fn layout(&self, offsets: &[u64]) -> MemoryLayout {
        MemoryLayout::from_offsets(self.items, offsets, self.block)
    }

    /// Best first-fit placement over a few fixed item orders.
    fn heuristic(&self) -> Vec<u64> {
        let it = self.items;
        let keyed = |key: &dyn Fn(usize) -> (i128, i128, usize)| {
            let mut order = self.free.clone();
            order.sort_by_key(|&i| key(i));
            order
        };
        let orders = [
            keyed(&|i| (-(it[i].size as i128), -(it[i].lifetime() as i128), it[i].tensor)),
            keyed(&|i| (-(it[i].lifetime() as i128), -(it[i].size as i128), it[i].tensor)),
            keyed(&|i| (it[i].start as i128, -(it[i].size as i128), it[i].tensor)),
            keyed(&|i| (-((it[i].size as i128) * it[i].lifetime() as i128), 0, it[i].tensor)),
        ];
        orders
            .iter()
            .map(|o| self.place_in_order(o))
            .min_by_key(|offsets| self.capacity(offsets))
            .unwrap_or_default()
    }
}

/// Best of several first-fit placements; `optimal` only when it meets the
/// clique bound.
pub fn heuristic_layout(p: &LayoutProblem) -> LayoutSolution {
    let start = Instant::now();
    let prep = Prepared::new(p);
    let offsets = prep.heuristic();
    let layout = prep.layout(&offsets);
    let optimal = layout.capacity <= prep.lower_bound();
    LayoutSolution { layout, optimal, stats: SolverStats { nodes_explored: 0, elapsed: start.elapsed() } }
}

/// Minimum-capacity layout of `p`.
///
/// Some optimal layout is reproduced by placing its items, in order of
/// offset, each at the lowest feasible offset. The search enumerates such
/// placement sequences in non-decreasing offset order, bounding each node by
/// the current top, every remaining item's lowest feasible top, and the
/// remaining items' simultaneous load stacked on the current offset. Anytime:
/// on timeout the incumbent is returned with `optimal = false`.
pub fn exact_layout(p: &LayoutProblem, budget: Duration) -> Result<LayoutSolution> {
    if budget.is_zero() {
        return Err(Error::Config("layout time budget must be positive".into()));
    }
    if p.items.iter().any(|i| i.size == 0 || i.end < i.start) {
        return Err(Error::Contract("layout items need a positive size and a non-empty lifetime".into()));
    }
    let start = Instant::now();
    let prep = Prepared::new(p);
    let incumbent = prep.heuristic();
    let mut search = Search {
        global_lb: prep.lower_bound(),
        best: prep.capacity(&incumbent),
        best_offsets: incumbent,
        offsets: prep.offsets.clone(),
        prep: &prep,
        nodes: 0,
        deadline: start + budget,
        timed_out: false,
    };
    if search.best > search.global_lb {
        let top = prep.offsets.iter().zip(prep.items).filter_map(|(o, i)| o.map(|o| o + i.size)).max().unwrap_or(0);
        let remaining = prep.free.clone();
        search.dfs(&remaining, 0, None, top);
    }
    Ok(LayoutSolution {
        layout: prep.layout(&search.best_offsets),
        optimal: !search.timed_out,
        stats: SolverStats { nodes_explored: search.nodes, elapsed: start.elapsed() },
    })
}

struct Search<'a> {
    prep: &'a Prepared<'a>,
    offsets: Vec<Option<u64>>,
    global_lb: u64,
    best: u64,
    best_offsets: Vec<u64>,
    nodes: u64,
    deadline: Instant,
    timed_out: bool,
}

impl Search<'_> {
    /// Remaining items all sit at or above `floor`, so at every timestep
    /// they stack on `floor` together with whatever placed items reach
    /// above it.
    fn stacked_bound(&self, remaining: &[usize], floor: u64) -> u64 {
        let items = self.prep.items;
        let mut events: Vec<(usize, i128)> = Vec::with_capacity(2 * items.len());
        let mut push = |it: &LayoutItem, bytes: u64| {
            if bytes > 0 {
                events.push((it.start, bytes as i128));
                events.push((it.end + 1, -(bytes as i128)));
            }
        };
        for &i in remaining {
            push(&items[i], items[i].size);
        }
        for (it, o) in items.iter().zip(&self.offsets) {
            if let Some(o) = *o {
                push(it, (o + it.size).saturating_sub(o.max(floor)));
            }
        }
        events.sort_unstable_by_key(|&(t, d)| (t, d > 0));
        let (mut acc, mut best) = (0i128, 0i128);
        for (_, d) in events {
            acc += d;
            best = best.max(acc);
        }
        floor + best as u64
    }

    fn dfs(&mut self, remaining: &[usize], last_offset: u64, last_item: Option<usize>, top: u64) {
        self.nodes += 1;
        if self.nodes.is_multiple_of(1024) && Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        if self.timed_out {
            return;
        }
        if remaining.is_empty() {
            if top < self.best {
                self.best = top;
                self.best_offsets = self.offsets.iter().map(|o| o.expect("complete")).collect();
            }
            return;
        }
        let items = self.prep.items;
        let fits: Vec<u64> = remaining.iter().map(|&i| self.prep.first_fit(&self.offsets, i)).collect();
        let reach = remaining.iter().zip(&fits).map(|(&i, &f)| f + items[i].size).max().unwrap_or(0);
        let stacked = self.stacked_bound(remaining, last_offset);
        if top.max(reach).max(stacked) >= self.best {
            return;
        }
        let mut children: Vec<(u64, std::cmp::Reverse<u64>, usize, usize)> = remaining
            .iter()
            .zip(&fits)
            .enumerate()
            .filter(|(_, (&i, &f))| f > last_offset || (f == last_offset && last_item.is_none_or(|l| i > l)))
            .map(|(k, (&i, &f))| (f, std::cmp::Reverse(items[i].size), i, k))
            .collect();
        children.sort_unstable();
        let mut rest: Vec<usize> = Vec::with_capacity(remaining.len() - 1);
        for (f, _, i, k) in children {
            let new_top = top.max(f + items[i].size);
            if new_top >= self.best {
                continue;
            }
            rest.clear();
            rest.extend(remaining[..k].iter().chain(&remaining[k + 1..]).copied());
            self.offsets[i] = Some(f);
            let rest_now = rest.clone();
            self.dfs(&rest_now, f, Some(i), new_top);
            self.offsets[i] = None;
            if self.timed_out || self.best <= self.global_lb {
                return;
            }
        }
    }
}

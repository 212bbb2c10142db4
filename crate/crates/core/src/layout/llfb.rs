use super::{LayoutItem, LayoutProblem, MemoryLayout};

/// Long-lived-first layout: items are ranked by lifetime (longest first,
/// then larger, then lower id). At the lowest candidate offset where some
/// unplaced item fits, the highest-ranked such item is placed; repeat.
/// Ignores the activation-block constraint.
pub fn llfb_layout(p: &LayoutProblem) -> MemoryLayout {
    let items = &p.items;
    let mut rank: Vec<usize> = (0..items.len()).collect();
    rank.sort_by_key(|&i| (std::cmp::Reverse(items[i].lifetime()), std::cmp::Reverse(items[i].size), items[i].tensor));
    let mut offsets: Vec<Option<u64>> = vec![None; items.len()];
    let mut tops: Vec<u64> = vec![0];
    let fits = |offsets: &[Option<u64>], i: usize, at: u64| {
        let it: &LayoutItem = &items[i];
        items.iter().zip(offsets).all(|(other, o)| match o {
            Some(o) => !it.overlaps_in_time(other) || at + it.size <= *o || o + other.size <= at,
            None => true,
        })
    };
    for _ in 0..items.len() {
        let (at, i) = tops
            .iter()
            .find_map(|&at| rank.iter().find(|&&i| offsets[i].is_none() && fits(&offsets, i, at)).map(|&i| (at, i)))
            .expect("the highest top fits any item");
        offsets[i] = Some(at);
        let top = at + items[i].size;
        if let Err(pos) = tops.binary_search(&top) {
            tops.insert(pos, top);
        }
    }
    let offsets: Vec<u64> = offsets.into_iter().map(|o| o.expect("placed")).collect();
    MemoryLayout::from_offsets(items, &offsets, 0)
}

/// Stored instance with similar lifetimes on which placing the
/// longest-lived items first costs one unit: LLFB needs 7, the optimum is 6.
pub fn llfb_gap_fixture() -> LayoutProblem {
    let item = |tensor, size, start, end| LayoutItem { tensor, size, start, end, activation: false };
    LayoutProblem::new(vec![item(0, 1, 1, 2), item(1, 2, 3, 6), item(2, 5, 0, 1), item(3, 4, 2, 3)], false)
}

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{peak_memory, Graph};
use crate::schedule::Schedule;
use crate::segmentation::{Segmentation, SubgraphTree};

use super::OrderingSolution;

/// Solutions for every unit of one leaf.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafOrdering {
    pub leaf: usize,
    /// `(unit, solution)`, ascending by unit.
    pub units: Vec<(usize, OrderingSolution)>,
}

impl LeafOrdering {
    /// Peak over the leaf's slots (boundary ops excluded).
    pub fn peak(&self) -> u64 {
        self.units.iter().filter(|(u, _)| !Segmentation::is_boundary(*u)).map(|(_, s)| s.peak).max().unwrap_or(0)
    }

    pub fn optimal(&self) -> bool {
        self.units.iter().all(|(_, s)| s.optimal)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AssembledSchedule {
    #[serde(skip)]
    pub schedule: Schedule,
    /// Maximum over leaf peaks and boundary-op footprints.
    pub peak: u64,
    pub leaf_peaks: Vec<u64>,
    pub boundary_peaks: Vec<u64>,
}

/// Concatenates unit orders in execution order and checks that the peak of
/// the whole schedule equals the maximum of the per-unit peaks.
pub fn assemble_order(g: &Graph, tree: &SubgraphTree, leaves: &[LeafOrdering], ops_per_step: usize) -> Result<AssembledSchedule> {
    let seg = &tree.segmentation;
    let mut by_unit: Vec<Option<&OrderingSolution>> = vec![None; seg.num_units()];
    for leaf in leaves {
        for (u, sol) in &leaf.units {
            if tree.leaf_of_unit.get(*u) != Some(&leaf.leaf) {
                return Err(Error::Assembly(format!("unit {u} solved by leaf {} it does not belong to", leaf.leaf)));
            }
            by_unit[*u] = Some(sol);
        }
    }
    let mut steps = Vec::new();
    let mut boundary_peaks = Vec::new();
    for (u, sol) in by_unit.iter().enumerate() {
        let sol = match sol {
            Some(sol) => sol,
            None if seg.units[u].is_empty() => continue,
            None => return Err(Error::Assembly(format!("unit {u} has no solution"))),
        };
        if Segmentation::is_boundary(u) {
            boundary_peaks.push(sol.peak);
        }
        steps.extend(sol.steps.iter().cloned());
    }
    let schedule = Schedule::from_steps(&steps, g.num_ops(), ops_per_step);
    let (actual, _) = peak_memory(g, &schedule).map_err(|e| Error::Assembly(e.to_string()))?;
    let leaf_peaks: Vec<u64> = leaves.iter().map(LeafOrdering::peak).collect();
    let peak = leaf_peaks.iter().chain(&boundary_peaks).copied().max().unwrap_or(0);
    if actual != peak {
        return Err(Error::Assembly(format!("assembled peak {actual} differs from per-unit maximum {peak}")));
    }
    Ok(AssembledSchedule { schedule, peak, leaf_peaks, boundary_peaks })
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;
    use crate::graph::{Graph, OpId};
    use crate::graphgen::{chain, gen_segmented_dag, SizeDist};
    use crate::ordering::{exact_order, OrderingProblem};
    use crate::segmentation::build_segment_tree;

    fn solve(g: &Graph, tree: &SubgraphTree) -> Vec<LeafOrdering> {
        let seg = &tree.segmentation;
        let mut leaves: Vec<LeafOrdering> =
            (0..tree.leaves().len()).map(|leaf| LeafOrdering { leaf, units: Vec::new() }).collect();
        for u in 0..seg.num_units() {
            if seg.units[u].is_empty() {
                continue;
            }
            let p = seg.unit_problem(g, u, 1);
            let sol = exact_order(&p, Duration::from_secs(30)).unwrap();
            leaves[tree.leaf_of_unit[u]].units.push((u, sol));
        }
        leaves
    }

    #[test]
    fn chain_assembles_to_its_only_order() {
        let g = chain(5, 7);
        let tree = build_segment_tree(&g, 20).unwrap();
        let out = assemble_order(&g, &tree, &solve(&g, &tree), 1).unwrap();
        assert_eq!(out.schedule.order(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn two_slots_around_a_boundary() {
        let g = gen_segmented_dag(&[5, 6], 0.4, SizeDist::megabytes(1, 30), 3);
        let tree = build_segment_tree(&g, 20).unwrap();
        let leaves = solve(&g, &tree);
        let out = assemble_order(&g, &tree, &leaves, 1).unwrap();
        let join: OpId = g.ops().iter().find(|o| o.name == "join0").unwrap().id;
        let pos = out.schedule.order().iter().position(|&v| v == join).unwrap();
        let seg = &tree.segmentation;
        let unit = seg.unit_of[join].unwrap();
        let before: usize = (0..unit).map(|u| seg.units[u].len()).sum();
        assert_eq!(pos, before);
    }

    #[test]
    fn divided_solve_matches_whole_graph_optimum() {
        for seed in 0..20 {
            let g = gen_segmented_dag(&[6, 5], 0.35, SizeDist::megabytes(1, 30), 100 + seed);
            let tree = build_segment_tree(&g, 20).unwrap();
            let out = assemble_order(&g, &tree, &solve(&g, &tree), 1).unwrap();
            let whole = exact_order(&OrderingProblem::whole_graph(&g, 1), Duration::from_secs(60)).unwrap();
            assert!(whole.optimal);
            assert_eq!(out.peak, whole.peak, "seed {seed}");
        }
    }

    #[test]
    fn missing_unit_solution_is_an_assembly_error() {
        let g = chain(3, 1);
        let tree = build_segment_tree(&g, 20).unwrap();
        let mut leaves = solve(&g, &tree);
        leaves.iter_mut().for_each(|l| l.units.retain(|(u, _)| *u != 3));
        assert!(matches!(assemble_order(&g, &tree, &leaves, 1), Err(Error::Assembly(_))));
    }
}

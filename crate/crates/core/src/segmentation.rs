//! Graph decomposition.
//!
//! Memory-insensitive ops (comparable with every other op) have a forced
//! position, so they cut the op sequence into *units*: alternating slots of
//! freely orderable ops and single boundary ops. Slot `i` is unit `2i`,
//! boundary `i` is unit `2i + 1`.
//!
//! For training graphs the units are grouped into a subgraph tree: the root
//! holds independent subgraphs, each a forward range paired with the
//! backward range that consumes its activations, and oversized independent
//! subgraphs are cut into dependent ones. Weight-update ops are not part of
//! the decomposition; they are attached to slots afterwards.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{classify_tensors, Graph, OpId, OpKind, Reachability, TensorCategory, TensorId};
use crate::ordering::{OrderingProblem, Phase};

/// Ops comparable with every other op of the graph, in execution order.
pub fn find_memory_insensitive(g: &Graph) -> Result<Vec<OpId>> {
    let reach = Reachability::compute(g)?;
    let all: Vec<OpId> = (0..g.num_ops()).collect();
    Ok(insensitive_among(&reach, &all))
}

/// Ops of `members` comparable with every other member, ordered by
/// position. `members` must be closed under the paths between them.
fn insensitive_among(reach: &Reachability, members: &[OpId]) -> Vec<OpId> {
    let n = members.len();
    let mut mask = fixedbitset::FixedBitSet::with_capacity(reach.preds.len());
    for &v in members {
        mask.insert(v);
    }
    let mut mi: Vec<(usize, OpId)> = members
        .iter()
        .filter_map(|&v| {
            let p = reach.preds[v].intersection(&mask).count();
            let s = reach.succs[v].intersection(&mask).count();
            (p + s + 1 == n).then_some((p, v))
        })
        .collect();
    mi.sort_unstable();
    mi.into_iter().map(|(_, v)| v).collect()
}

/// Units of the op sequence induced by the memory-insensitive ops of the
/// non-weight-update part of a graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segmentation {
    pub boundaries: Vec<OpId>,
    /// Ops of every unit, ascending by id. Weight-update ops appear only
    /// after [`SubgraphTree::attach_updates`].
    pub units: Vec<Vec<OpId>>,
    pub unit_of: Vec<Option<usize>>,
}

impl Segmentation {
    pub fn compute(g: &Graph, reach: &Reachability) -> Self {
        let core: Vec<OpId> =
            g.ops().iter().filter(|o| o.kind != OpKind::WeightUpdate).map(|o| o.id).collect();
        let boundaries = insensitive_among(reach, &core);
        let mut units = vec![Vec::new(); 2 * boundaries.len() + 1];
        let mut unit_of = vec![None; g.num_ops()];
        for (i, &b) in boundaries.iter().enumerate() {
            units[2 * i + 1].push(b);
            unit_of[b] = Some(2 * i + 1);
        }
        for &v in &core {
            if unit_of[v].is_some() {
                continue;
            }
            let before = boundaries.iter().filter(|&&b| reach.precedes(b, v)).count();
            units[2 * before].push(v);
            unit_of[v] = Some(2 * before);
        }
        for u in &mut units {
            u.sort_unstable();
        }
        Segmentation { boundaries, units, unit_of }
    }

    pub fn num_units(&self) -> usize {
        self.units.len()
    }

    pub fn is_boundary(unit: usize) -> bool {
        unit % 2 == 1
    }

    /// Slot in which a tensor produced by `op` first becomes usable.
    pub fn ready_slot(&self, op: OpId) -> Option<usize> {
        self.unit_of[op].map(|u| if Self::is_boundary(u) { u + 1 } else { u })
    }

    /// The ordering problem for one unit, with earlier units already run.
    pub fn unit_problem(&self, g: &Graph, unit: usize, ops_per_step: usize) -> OrderingProblem {
        let phase: Vec<Phase> = (0..g.num_ops())
            .map(|v| match self.unit_of[v] {
                Some(u) if u < unit => Phase::Before,
                Some(u) if u == unit => Phase::Member,
                _ => Phase::After,
            })
            .collect();
        OrderingProblem::from_phases(g, &phase, ops_per_step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SubgraphKind {
    Root,
    Independent,
    Dependent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubgraphNode {
    pub kind: SubgraphKind,
    pub outer_fwd: Option<OpId>,
    pub inner_fwd: Option<OpId>,
    pub inner_bwd: Option<OpId>,
    pub outer_bwd: Option<OpId>,
    /// Units covered, ascending.
    pub units: Vec<usize>,
    pub ops: Vec<OpId>,
    pub children: Vec<SubgraphNode>,
    pub owned_tensors: Vec<TensorId>,
    /// Leaf larger than the node limit with no interior cut left.
    pub unsplittable: bool,
}

impl SubgraphNode {
    fn new(kind: SubgraphKind, units: Vec<usize>, seg: &Segmentation) -> Self {
        let mut ops: Vec<OpId> = units.iter().flat_map(|&u| seg.units[u].iter().copied()).collect();
        ops.sort_unstable();
        SubgraphNode {
            kind,
            outer_fwd: None,
            inner_fwd: None,
            inner_bwd: None,
            outer_bwd: None,
            units,
            ops,
            children: Vec::new(),
            owned_tensors: Vec::new(),
            unsplittable: false,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a SubgraphNode>) {
        if self.is_leaf() {
            out.push(self);
        } else {
            for c in &self.children {
                c.collect_leaves(out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphTree {
    pub root: SubgraphNode,
    pub segmentation: Segmentation,
    /// Leaf index (in [`SubgraphTree::leaves`] order) of every unit.
    pub leaf_of_unit: Vec<usize>,
    pub training: bool,
}

impl SubgraphTree {
    /// Leaves in tree order.
    pub fn leaves(&self) -> Vec<&SubgraphNode> {
        let mut out = Vec::new();
        if self.root.is_leaf() && self.root.units.is_empty() {
            return out;
        }
        self.root.collect_leaves(&mut out);
        out
    }

    pub fn leaf_of_op(&self, op: OpId) -> Option<usize> {
        self.segmentation.unit_of[op].map(|u| self.leaf_of_unit[u])
    }

    /// Leaf indices ordered for layout stacking: outermost independent
    /// subgraph first (its activations live longest), and within an
    /// independent subgraph its dependent parts outermost first.
    pub fn stacking_order(&self) -> Vec<usize> {
        let leaves = self.leaves();
        let index_of = |node: &SubgraphNode| leaves.iter().position(|l| std::ptr::eq(*l, node)).unwrap();
        let mut order = Vec::new();
        if self.root.is_leaf() {
            if !leaves.is_empty() {
                order.push(0);
            }
            return order;
        }
        let children: Box<dyn Iterator<Item = &SubgraphNode>> = if self.training {
            Box::new(self.root.children.iter().rev())
        } else {
            Box::new(self.root.children.iter())
        };
        for child in children {
            let mut sub = Vec::new();
            child.collect_leaves(&mut sub);
            order.extend(sub.into_iter().map(index_of));
        }
        order
    }

    fn rebuild_leaf_index(&mut self) {
        let mut leaf_of_unit = vec![usize::MAX; self.segmentation.num_units()];
        for (i, leaf) in self.leaves().iter().enumerate() {
            for &u in &leaf.units {
                leaf_of_unit[u] = i;
            }
        }
        self.leaf_of_unit = leaf_of_unit;
    }

    /// Places weight-update ops into the slots chosen for them.
    pub fn attach_updates(&mut self, placements: &[(Vec<OpId>, usize)]) {
        for (ops, unit) in placements {
            for &op in ops {
                self.segmentation.unit_of[op] = Some(*unit);
                self.segmentation.units[*unit].push(op);
            }
            self.segmentation.units[*unit].sort_unstable();
        }
        let seg = self.segmentation.clone();
        fn refresh(node: &mut SubgraphNode, seg: &Segmentation) {
            let mut ops: Vec<OpId> = node.units.iter().flat_map(|&u| seg.units[u].iter().copied()).collect();
            ops.sort_unstable();
            node.ops = ops;
            for c in &mut node.children {
                refresh(c, seg);
            }
        }
        refresh(&mut self.root, &seg);
    }

    fn leaves_mut(&mut self) -> Vec<&mut SubgraphNode> {
        fn rec<'a>(node: &'a mut SubgraphNode, out: &mut Vec<&'a mut SubgraphNode>) {
            if node.children.is_empty() {
                out.push(node);
            } else {
                for c in &mut node.children {
                    rec(c, out);
                }
            }
        }
        let mut out = Vec::new();
        if self.root.is_leaf() && self.root.units.is_empty() {
            return out;
        }
        rec(&mut self.root, &mut out);
        out
    }
}

/// Plain decomposition for graphs without a backward pass: one independent
/// child per slot together with the boundary that closes it.
pub fn build_segment_tree(g: &Graph, node_limit: usize) -> Result<SubgraphTree> {
    let reach = Reachability::compute(g)?;
    let seg = Segmentation::compute(g, &reach);
    let mut root = SubgraphNode::new(SubgraphKind::Root, (0..seg.num_units()).collect(), &seg);
    let mut u = 0;
    while u < seg.num_units() {
        let units: Vec<usize> = if u + 1 < seg.num_units() { vec![u, u + 1] } else { vec![u] };
        u += units.len();
        let mut child = SubgraphNode::new(SubgraphKind::Independent, units, &seg);
        if child.ops.is_empty() {
            // Keep empty units attached to a neighbour so every unit has a leaf.
            if let Some(last) = root.children.last_mut() {
                last.units.extend(child.units);
                continue;
            }
        }
        child.outer_fwd = child.units.first().and_then(|&u| (u > 0).then(|| seg.boundaries[(u - 1) / 2]));
        child.inner_fwd = child.units.iter().find(|&&u| Segmentation::is_boundary(u)).map(|&u| seg.boundaries[u / 2]);
        child.unsplittable = child.ops.len() > node_limit;
        root.children.push(child);
    }
    if root.children.len() == 1 {
        root.children[0].units = (0..seg.num_units()).collect();
    } else if let (Some(first), true) = (root.children.first(), !root.children.is_empty()) {
        // Leading empty units belong to the first child.
        let missing: Vec<usize> = (0..first.units[0]).collect();
        let first = &mut root.children[0];
        let mut units = missing;
        units.extend(first.units.iter().copied());
        first.units = units;
    }
    let mut tree = SubgraphTree { root, segmentation: seg, leaf_of_unit: Vec::new(), training: false };
    tree.rebuild_leaf_index();
    Ok(tree)
}

/// Builds the three-level subgraph tree of a training graph.
///
/// Starting from the last forward and first backward boundary, candidate
/// pairs of ranges are grown outward until the forward range's activations
/// are all consumed inside the backward range (and vice versa). Each such
/// pair becomes an independent child; the ranges it covers become the inner
/// limits of the next search. Whatever remains outside the last pair forms
/// the outermost child. Children bigger than `node_limit` ops are cut into
/// dependent children along their boundaries.
pub fn build_subgraph_tree(g: &Graph, node_limit: usize) -> Result<SubgraphTree> {
    if node_limit < 2 {
        return Err(Error::Config("node_limit must be at least 2".into()));
    }
    if !g.has_backward() {
        return Err(Error::Structural("graph has no backward pass".into()));
    }
    let reach = Reachability::compute(g)?;
    let seg = Segmentation::compute(g, &reach);
    let cats = classify_tensors(g);
    let last_unit = seg.num_units() - 1;

    let fwd: Vec<usize> = (0..seg.boundaries.len()).filter(|&j| g.op(seg.boundaries[j]).kind == OpKind::Forward).collect();
    let bwd: Vec<usize> = (0..seg.boundaries.len()).filter(|&j| g.op(seg.boundaries[j]).kind == OpKind::Backward).collect();

    // Units of a candidate, split into its forward and backward ranges.
    let candidate = |outer_f: Option<usize>, inner_f: Option<usize>, inner_b: Option<usize>, outer_b: Option<usize>| {
        let lo = outer_f.map_or(0, |j| 2 * j + 2);
        let hi = outer_b.map_or(last_unit as isize, |j| 2 * j as isize);
        let mut fwd_units = Vec::new();
        let mut bwd_units = Vec::new();
        for u in lo as isize..=hi {
            let u = u as usize;
            match (inner_f, inner_b) {
                (Some(f), Some(b)) => {
                    if u <= 2 * f + 1 {
                        fwd_units.push(u);
                    } else if u > 2 * b {
                        bwd_units.push(u);
                    }
                }
                _ => fwd_units.push(u),
            }
        }
        (fwd_units, bwd_units)
    };

    let forms_independent = |units: &BTreeSet<usize>| {
        g.tensors().iter().zip(&cats).filter(|(_, c)| **c == TensorCategory::Activation).all(|(t, _)| {
            let inside = |op: OpId| seg.unit_of[op].is_some_and(|u| units.contains(&u));
            let produced_in = inside(t.producer);
            let bwd_consumers: Vec<OpId> =
                t.consumers.iter().copied().filter(|&c| g.op(c).kind == OpKind::Backward).collect();
            let any_in = bwd_consumers.iter().any(|&c| inside(c));
            let all_in = bwd_consumers.iter().all(|&c| inside(c));
            (!produced_in || all_in) && (!any_in || produced_in)
        })
    };

    let mut root = SubgraphNode::new(SubgraphKind::Root, (0..seg.num_units()).collect(), &seg);
    let mut independents: Vec<(SubgraphNode, Vec<usize>, Vec<usize>)> = Vec::new();
    let (mut inner_f, mut inner_b): (Option<usize>, Option<usize>) = (None, None);
    let mut bwd_from = 0usize;
    for fi in (0..fwd.len()).rev() {
        if bwd_from >= bwd.len() {
            break;
        }
        let outer_f = fwd[fi];
        for bi in bwd_from..bwd.len() {
            let outer_b = bwd[bi];
            if outer_b <= outer_f {
                continue;
            }
            let (fu, bu) = candidate(Some(outer_f), inner_f, inner_b, Some(outer_b));
            let all: BTreeSet<usize> = fu.iter().chain(&bu).copied().collect();
            if all.iter().all(|&u| seg.units[u].is_empty()) || !forms_independent(&all) {
                continue;
            }
            let mut node = SubgraphNode::new(SubgraphKind::Independent, all.into_iter().collect(), &seg);
            node.outer_fwd = Some(seg.boundaries[outer_f]);
            node.inner_fwd = inner_f.map(|j| seg.boundaries[j]);
            node.inner_bwd = inner_b.map(|j| seg.boundaries[j]);
            node.outer_bwd = Some(seg.boundaries[outer_b]);
            independents.push((node, fu, bu));
            inner_f = Some(outer_f);
            inner_b = Some(outer_b);
            bwd_from = bi + 1;
            break;
        }
    }
    let (fu, bu) = candidate(None, inner_f, inner_b, None);
    if !fu.is_empty() || !bu.is_empty() {
        let units: Vec<usize> = fu.iter().chain(&bu).copied().collect();
        let mut node = SubgraphNode::new(SubgraphKind::Independent, units, &seg);
        node.inner_fwd = inner_f.map(|j| seg.boundaries[j]);
        node.inner_bwd = inner_b.map(|j| seg.boundaries[j]);
        independents.push((node, fu, bu));
    }

    for (mut node, fu, bu) in independents {
        if node.ops.len() > node_limit {
            node.children = split_dependent(&seg, &node, &fu, &bu, node_limit);
            if node.children.len() == 1 {
                node.unsplittable = true;
                node.children.clear();
            }
        }
        root.children.push(node);
    }

    let mut tree = SubgraphTree { root, segmentation: seg, leaf_of_unit: Vec::new(), training: true };
    tree.rebuild_leaf_index();
    Ok(tree)
}

/// Cuts an independent subgraph into dependent ones, pairing forward and
/// backward units from the inside out. Returned outermost first.
fn split_dependent(
    seg: &Segmentation,
    parent: &SubgraphNode,
    fwd_units: &[usize],
    bwd_units: &[usize],
    node_limit: usize,
) -> Vec<SubgraphNode> {
    let count = |units: &[usize]| units.iter().map(|&u| seg.units[u].len()).sum::<usize>();
    let steps = fwd_units.len().max(bwd_units.len());
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for k in 0..steps {
        let mut pair = Vec::new();
        if k < fwd_units.len() {
            pair.push(fwd_units[fwd_units.len() - 1 - k]);
        }
        if k < bwd_units.len() {
            pair.push(bwd_units[k]);
        }
        if !current.is_empty() && count(&current) > 0 && count(&current) + count(&pair) > node_limit {
            groups.push(std::mem::take(&mut current));
        }
        current.extend(pair);
    }
    if !current.is_empty() {
        groups.push(current);
    }
    groups
        .into_iter()
        .rev()
        .map(|mut units| {
            units.sort_unstable();
            let mut node = SubgraphNode::new(SubgraphKind::Dependent, units, seg);
            node.unsplittable = node.ops.len() > node_limit;
            node.outer_fwd = parent.outer_fwd;
            node.outer_bwd = parent.outer_bwd;
            node
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SharedTensorType {
    /// Created in the subgraph, freed outside.
    Cifo,
    /// Created outside, freed inside.
    Cofi,
    /// Created and freed outside while live across the subgraph.
    Cofo,
}

/// Unit of the consumer that frees `t` (latest unit among its consumers);
/// tensors without consumers are attributed to their producer's unit.
fn freeing_unit(seg: &Segmentation, g: &Graph, t: TensorId) -> Option<usize> {
    let info = g.tensor(t);
    info.consumers
        .iter()
        .filter_map(|&c| seg.unit_of[c])
        .max()
        .or(seg.unit_of[info.producer])
}

/// How `t` relates to `node`; `None` when it is created and freed inside.
pub fn classify_shared_tensor(g: &Graph, tree: &SubgraphTree, node: &SubgraphNode, t: TensorId) -> Option<SharedTensorType> {
    let seg = &tree.segmentation;
    let inside = |u: Option<usize>| u.is_some_and(|u| node.units.binary_search(&u).is_ok());
    let created_in = inside(seg.unit_of[g.tensor(t).producer]);
    let freed_in = inside(freeing_unit(seg, g, t));
    match (created_in, freed_in) {
        (true, true) => None,
        (true, false) => Some(SharedTensorType::Cifo),
        (false, true) => Some(SharedTensorType::Cofi),
        (false, false) => Some(SharedTensorType::Cofo),
    }
}

/// Assigns every tensor to exactly one leaf and records it in the leaf's
/// `owned_tensors`. Returns the owning leaf per tensor.
///
/// Internal tensors stay where they are. A shared activation goes to the
/// leaf that frees it; a shared tensor created in the backward half goes to
/// the leaf that creates it; any other shared tensor goes to the leaf that
/// frees it.
pub fn assign_shared_tensors(tree: &mut SubgraphTree, g: &Graph) -> Result<Vec<usize>> {
    let cats = classify_tensors(g);
    let seg = &tree.segmentation;
    let mut owner = Vec::with_capacity(g.num_tensors());
    for t in g.tensors() {
        let created = seg.unit_of[t.producer]
            .map(|u| tree.leaf_of_unit[u])
            .ok_or_else(|| Error::Structural(format!("op {} of tensor {} is in no leaf", t.producer, t.id)))?;
        let freed = freeing_unit(seg, g, t.id)
            .map(|u| tree.leaf_of_unit[u])
            .ok_or_else(|| Error::Structural(format!("tensor {} overlaps no leaf", t.id)))?;
        let leaf = if created == freed {
            created
        } else if cats[t.id] == TensorCategory::Activation {
            freed
        } else if g.op(t.producer).kind.is_backward_pass() {
            created
        } else {
            freed
        };
        owner.push(leaf);
    }
    for (i, leaf) in tree.leaves_mut().into_iter().enumerate() {
        leaf.owned_tensors = owner.iter().enumerate().filter(|(_, &o)| o == i).map(|(t, _)| t).collect();
    }
    Ok(owner)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;
    use crate::graphgen::{chain, diamond, gen_training_graph, Arch, Optimizer, TrainingSizes};

    #[test]
    fn chain_ops_are_all_insensitive() {
        assert_eq!(find_memory_insensitive(&chain(5, 1)).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn diamond_insensitive_ops_are_its_ends() {
        assert_eq!(find_memory_insensitive(&diamond()).unwrap(), vec![0, 3]);
    }

    #[test]
    fn parallel_chains_meet_only_at_the_sink() {
        let mut b = GraphBuilder::new();
        let a0 = b.op_new("a0", OpKind::Forward, &[], &[1])[0];
        let a1 = b.op_new("a1", OpKind::Forward, &[a0], &[1])[0];
        let b0 = b.op_new("b0", OpKind::Forward, &[], &[1])[0];
        let b1 = b.op_new("b1", OpKind::Forward, &[b0], &[1])[0];
        let sink = b.op("sink", OpKind::Forward, &[a1, b1], &[]);
        let g = b.build().unwrap();
        // Closure count oracle.
        let reach = Reachability::compute(&g).unwrap();
        let expected: Vec<OpId> = (0..g.num_ops())
            .filter(|&v| reach.preds[v].count_ones(..) + reach.succs[v].count_ones(..) == g.num_ops() - 1)
            .collect();
        assert_eq!(expected, vec![sink]);
        assert_eq!(find_memory_insensitive(&g).unwrap(), vec![sink]);
    }

    fn mlp2(opt: Optimizer) -> Graph {
        gen_training_graph(Arch::Mlp, 2, TrainingSizes::default(), opt, 1).unwrap()
    }

    fn op(g: &Graph, name: &str) -> OpId {
        g.ops().iter().find(|o| o.name == name).unwrap().id
    }

    #[test]
    fn mlp_tree_pairs_blocks_with_their_backward() {
        let g = mlp2(Optimizer::Adam);
        let tree = build_subgraph_tree(&g, 64).unwrap();
        let names = |n: &SubgraphNode| -> Vec<String> {
            n.ops.iter().map(|&v| g.op(v).name.clone()).collect()
        };
        let kids = &tree.root.children;
        assert!(kids.iter().all(|k| k.kind == SubgraphKind::Independent && k.is_leaf()));
        // Innermost first: the loss, block 1, block 0, then input/sink.
        assert_eq!(names(&kids[0]), vec!["loss"]);
        assert_eq!(names(&kids[1]), vec!["fc1", "dropout_mask1", "act1", "act1_bwd"]);
        assert_eq!(names(&kids[2]), vec!["fc0", "dropout_mask0", "act0", "fc1_bwd", "act0_bwd"]);
        assert_eq!(names(&kids[3]), vec!["input", "fc0_bwd", "input_grad_sink"]);
        assert_eq!(kids[1].outer_fwd, Some(op(&g, "act0")));
        assert_eq!(kids[1].outer_bwd, Some(op(&g, "fc1_bwd")));
        // Every core op in exactly one leaf.
        let mut seen = vec![0; g.num_ops()];
        for leaf in tree.leaves() {
            for &v in &leaf.ops {
                seen[v] += 1;
            }
        }
        for o in g.ops() {
            let expected = usize::from(o.kind != OpKind::WeightUpdate);
            assert_eq!(seen[o.id], expected, "{}", o.name);
        }
    }

    #[test]
    fn tight_node_limit_creates_dependent_level() {
        for arch in Arch::ALL {
            let g = gen_training_graph(arch, 2, TrainingSizes::default(), Optimizer::Sgd, 2).unwrap();
            let tree = build_subgraph_tree(&g, 4).unwrap();
            let mut split = 0;
            for ig in &tree.root.children {
                if ig.ops.len() > 4 {
                    assert!(ig.unsplittable || ig.children.len() >= 2, "{arch:?}");
                    split += usize::from(!ig.children.is_empty());
                }
            }
            assert!(split > 0, "{arch:?}");
            for leaf in tree.leaves() {
                assert!(leaf.ops.len() <= 4 || leaf.unsplittable, "{arch:?}");
            }
        }
    }

    #[test]
    fn tree_is_deterministic() {
        let g = gen_training_graph(Arch::TransformerBlock, 2, TrainingSizes::default(), Optimizer::Adam, 5).unwrap();
        assert_eq!(build_subgraph_tree(&g, 6).unwrap(), build_subgraph_tree(&g, 6).unwrap());
    }

    #[test]
    fn inference_graph_is_rejected_for_training_tree() {
        assert!(matches!(build_subgraph_tree(&diamond(), 8), Err(Error::Structural(_))));
    }

    #[test]
    fn segment_tree_without_interior_cut_is_one_child() {
        let g = diamond();
        let tree = build_segment_tree(&g, 2).unwrap();
        // Units: [], A, [B, C], D, []
        let leaves = tree.leaves();
        assert_eq!(leaves.len(), 2);
        assert_eq!(leaves[0].ops, vec![0]);
        assert_eq!(leaves[1].ops, vec![1, 2, 3]);
        assert!(leaves[1].unsplittable);

        let mut b = GraphBuilder::new();
        let x = b.op_new("x", OpKind::Forward, &[], &[1])[0];
        let y = b.op_new("y", OpKind::Forward, &[], &[1])[0];
        b.op("z", OpKind::Forward, &[x], &[]);
        b.op("w", OpKind::Forward, &[y], &[]);
        let g = b.build().unwrap();
        let tree = build_segment_tree(&g, 2).unwrap();
        assert_eq!(tree.leaves().len(), 1);
        assert_eq!(tree.leaves()[0].ops, vec![0, 1, 2, 3]);
        assert!(tree.leaves()[0].unsplittable);
    }

    #[test]
    fn shared_tensor_rules() {
        let g = mlp2(Optimizer::Sgd);
        let mut tree = build_subgraph_tree(&g, 64).unwrap();
        let wu: Vec<OpId> = g.ops().iter().filter(|o| o.kind == OpKind::WeightUpdate).map(|o| o.id).collect();
        let last = tree.segmentation.num_units() - 1;
        tree.attach_updates(&[(wu, last)]);
        let owner = assign_shared_tensors(&mut tree, &g).unwrap();
        let leaves = tree.leaves();
        let tensor_out = |name: &str, k: usize| g.op(op(&g, name)).outputs[k];

        // Activation produced and freed inside block 1's subgraph.
        let h1 = tensor_out("fc1", 0);
        assert_eq!(classify_shared_tensor(&g, &tree, leaves[1], h1), None);
        assert_eq!(owner[h1], 1);

        // x1 (output of act0) crosses into block 1 but is freed in block 0's leaf.
        let x1 = tensor_out("act0", 0);
        assert_eq!(classify_shared_tensor(&g, &tree, leaves[2], x1), None);
        assert_eq!(classify_shared_tensor(&g, &tree, leaves[1], x1), Some(SharedTensorType::Cofo));

        // Backward temporary dx2 (from the loss) crosses from the loss leaf into block 1.
        let dx2 = tensor_out("loss", 0);
        assert_eq!(classify_shared_tensor(&g, &tree, leaves[0], dx2), Some(SharedTensorType::Cifo));
        assert_eq!(classify_shared_tensor(&g, &tree, leaves[1], dx2), Some(SharedTensorType::Cofi));
        // Created by the loss (forward half): owned where it is freed.
        assert_eq!(owner[dx2], 1);

        // Gradient of fc1 created in block 0's leaf, consumed by an update at the end.
        let dw1 = tensor_out("fc1_bwd", 1);
        assert_eq!(classify_shared_tensor(&g, &tree, leaves[2], dw1), Some(SharedTensorType::Cifo));
        assert_eq!(owner[dw1], 2);

        // Every tensor owned by exactly one leaf.
        let total: usize = tree.leaves().iter().map(|l| l.owned_tensors.len()).sum();
        assert_eq!(total, g.num_tensors());
    }
}

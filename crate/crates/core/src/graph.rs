//! Computation-graph IR for training graphs.
//!
//! Ops are vertices, tensors are edges with a single producer and any number
//! of consumers. Ids are dense (`0..n`) once a graph is loaded; the ids used
//! by the interchange document are kept alongside so that documents
//! round-trip.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::Schedule;

pub type OpId = usize;
pub type TensorId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Forward,
    Backward,
    WeightUpdate,
    Loss,
}

impl OpKind {
    /// Whether the op runs in the backward half of a training step
    /// (backward propagation or weight update).
    pub fn is_backward_pass(self) -> bool {
        matches!(self, OpKind::Backward | OpKind::WeightUpdate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TensorCategory {
    Activation,
    TemporaryBuffer,
    Gradient,
    Weight,
    OptimizerState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpNode {
    pub id: OpId,
    pub ext_id: i64,
    pub name: String,
    pub kind: OpKind,
    pub inputs: Vec<TensorId>,
    pub outputs: Vec<TensorId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub id: TensorId,
    pub ext_id: i64,
    pub size: u64,
    pub producer: OpId,
    pub consumers: Vec<OpId>,
    /// Category as tagged in the source document, if any.
    pub tag: Option<TensorCategory>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Graph {
    ops: Vec<OpNode>,
    tensors: Vec<TensorInfo>,
}

// ---------------------------------------------------------------------------
// Interchange document

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
#[derive(Default)]
pub struct GraphDoc {
    pub ops: Vec<OpDoc>,
    pub tensors: Vec<TensorDoc>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct OpDoc {
    pub id: i64,
    pub name: String,
    pub kind: OpKind,
    pub inputs: Vec<i64>,
    pub outputs: Vec<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct TensorDoc {
    pub id: i64,
    pub size_bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<TensorCategory>,
}

/// Parses a graph interchange document and resolves its cross-references.
///
/// Structural problems that a well-formed document can still express
/// (cycles, several producers, zero sizes) are left to [`validate_graph`].
pub fn load_graph(json: &str) -> Result<Graph> {
    let doc: GraphDoc = serde_json::from_str(json)?;
    Graph::from_doc(&doc)
}

/// [`load_graph`] followed by [`validate_graph`]; any violation is an error.
pub fn load_validated(json: &str) -> Result<Graph> {
    let g = load_graph(json)?;
    let report = validate_graph(&g);
    if report.is_empty() {
        Ok(g)
    } else {
        Err(Error::InvalidGraph(report))
    }
}

impl Graph {
    pub fn from_doc(doc: &GraphDoc) -> Result<Self> {
        let mut tensor_index = HashMap::with_capacity(doc.tensors.len());
        for (i, t) in doc.tensors.iter().enumerate() {
            if tensor_index.insert(t.id, i).is_some() {
                return Err(Error::DuplicateId(format!("tensor {}", t.id)));
            }
        }
        let mut op_ids = HashMap::with_capacity(doc.ops.len());
        for (i, op) in doc.ops.iter().enumerate() {
            if op_ids.insert(op.id, i).is_some() {
                return Err(Error::DuplicateId(format!("op {}", op.id)));
            }
        }

        let resolve = |op: &OpDoc, t: i64| {
            tensor_index.get(&t).copied().ok_or_else(|| {
                Error::DanglingReference(format!("op {} references missing tensor {}", op.id, t))
            })
        };

        let mut producer: Vec<Option<OpId>> = vec![None; doc.tensors.len()];
        let mut consumers: Vec<Vec<OpId>> = vec![Vec::new(); doc.tensors.len()];
        let mut ops = Vec::with_capacity(doc.ops.len());
        for (i, op) in doc.ops.iter().enumerate() {
            let inputs = op.inputs.iter().map(|&t| resolve(op, t)).collect::<Result<Vec<_>>>()?;
            let outputs = op.outputs.iter().map(|&t| resolve(op, t)).collect::<Result<Vec<_>>>()?;
            for &t in &inputs {
                if !consumers[t].contains(&i) {
                    consumers[t].push(i);
                }
            }
            for &t in &outputs {
                producer[t].get_or_insert(i);
            }
            ops.push(OpNode {
                id: i,
                ext_id: op.id,
                name: op.name.clone(),
                kind: op.kind,
                inputs,
                outputs,
            });
        }

        let mut tensors = Vec::with_capacity(doc.tensors.len());
        for (i, t) in doc.tensors.iter().enumerate() {
            let producer = producer[i].ok_or_else(|| {
                Error::DanglingReference(format!("tensor {} has no producer", t.id))
            })?;
            tensors.push(TensorInfo {
                id: i,
                ext_id: t.id,
                size: t.size_bytes,
                producer,
                consumers: std::mem::take(&mut consumers[i]),
                tag: t.category,
            });
        }
        Ok(Graph { ops, tensors })
    }

    pub fn to_doc(&self) -> GraphDoc {
        GraphDoc {
            ops: self
                .ops
                .iter()
                .map(|op| OpDoc {
                    id: op.ext_id,
                    name: op.name.clone(),
                    kind: op.kind,
                    inputs: op.inputs.iter().map(|&t| self.tensors[t].ext_id).collect(),
                    outputs: op.outputs.iter().map(|&t| self.tensors[t].ext_id).collect(),
                })
                .collect(),
            tensors: self
                .tensors
                .iter()
                .map(|t| TensorDoc { id: t.ext_id, size_bytes: t.size, category: t.tag })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_doc()).expect("graph document serializes")
    }

    pub fn ops(&self) -> &[OpNode] {
        &self.ops
    }

    pub fn tensors(&self) -> &[TensorInfo] {
        &self.tensors
    }

    pub fn op(&self, id: OpId) -> &OpNode {
        &self.ops[id]
    }

    pub fn tensor(&self, id: TensorId) -> &TensorInfo {
        &self.tensors[id]
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    pub fn num_tensors(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn has_backward(&self) -> bool {
        self.ops.iter().any(|op| op.kind == OpKind::Backward)
    }

    pub fn op_by_ext(&self, ext: i64) -> Option<OpId> {
        self.ops.iter().position(|op| op.ext_id == ext)
    }

    pub fn tensor_by_ext(&self, ext: i64) -> Option<TensorId> {
        self.tensors.iter().position(|t| t.ext_id == ext)
    }

    /// Direct successors of `op` (consumers of its outputs), sorted, deduplicated.
    pub fn successors(&self, op: OpId) -> Vec<OpId> {
        let mut out: Vec<OpId> = self.ops[op]
            .outputs
            .iter()
            .flat_map(|&t| self.tensors[t].consumers.iter().copied())
            .filter(|&c| c != op)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Direct predecessors of `op` (producers of its inputs), sorted, deduplicated.
    pub fn predecessors(&self, op: OpId) -> Vec<OpId> {
        let mut out: Vec<OpId> = self.ops[op]
            .inputs
            .iter()
            .map(|&t| self.tensors[t].producer)
            .filter(|&p| p != op)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// A topological order of all ops (Kahn's algorithm, smallest id first).
    pub fn topo_order(&self) -> Result<Vec<OpId>> {
        let n = self.ops.len();
        let succ: Vec<Vec<OpId>> = (0..n).map(|v| self.successors(v)).collect();
        let mut indeg = vec![0usize; n];
        for s in &succ {
            for &w in s {
                indeg[w] += 1;
            }
        }
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<OpId>> =
            (0..n).filter(|&v| indeg[v] == 0).map(std::cmp::Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(v)) = ready.pop() {
            order.push(v);
            for &w in &succ[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.push(std::cmp::Reverse(w));
                }
            }
        }
        if order.len() == n {
            Ok(order)
        } else {
            Err(Error::Cycle)
        }
    }

    /// Sum of the sizes of an op's inputs and outputs.
    pub fn op_footprint(&self, op: OpId) -> u64 {
        let node = &self.ops[op];
        node.inputs.iter().chain(&node.outputs).map(|&t| self.tensors[t].size).sum()
    }

    pub fn total_tensor_bytes(&self) -> u64 {
        self.tensors.iter().map(|t| t.size).sum()
    }

    pub fn mean_tensor_size(&self) -> f64 {
        if self.tensors.is_empty() {
            0.0
        } else {
            self.total_tensor_bytes() as f64 / self.tensors.len() as f64
        }
    }
}

// ---------------------------------------------------------------------------
// Builder

/// Incremental graph construction used by generators and tests.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    doc: GraphDoc,
}


impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn tensor(&mut self, size: u64) -> TensorId {
        self.tagged_tensor(size, None)
    }

    pub fn tagged_tensor(&mut self, size: u64, tag: Option<TensorCategory>) -> TensorId {
        let id = self.doc.tensors.len();
        self.doc.tensors.push(TensorDoc { id: id as i64, size_bytes: size, category: tag });
        id
    }

    pub fn op(&mut self, name: &str, kind: OpKind, inputs: &[TensorId], outputs: &[TensorId]) -> OpId {
        let id = self.doc.ops.len();
        self.doc.ops.push(OpDoc {
            id: id as i64,
            name: name.to_string(),
            kind,
            inputs: inputs.iter().map(|&t| t as i64).collect(),
            outputs: outputs.iter().map(|&t| t as i64).collect(),
        });
        id
    }

    /// Adds an op that produces fresh tensors of the given sizes.
    pub fn op_new(&mut self, name: &str, kind: OpKind, inputs: &[TensorId], sizes: &[u64]) -> Vec<TensorId> {
        let outs: Vec<TensorId> = sizes.iter().map(|&s| self.tensor(s)).collect();
        self.op(name, kind, inputs, &outs);
        outs
    }

    pub fn doc(&self) -> &GraphDoc {
        &self.doc
    }

    pub fn build(self) -> Result<Graph> {
        Graph::from_doc(&self.doc)
    }
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    Cycle { ops: Vec<OpId> },
    MultipleProducers { tensor: TensorId, producers: Vec<OpId> },
    ZeroSize { tensor: TensorId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Cycle { ops } => write!(f, "cycle through ops {ops:?}"),
            Violation::MultipleProducers { tensor, producers } => {
                write!(f, "tensor {tensor} produced by ops {producers:?}")
            }
            Violation::ZeroSize { tensor } => write!(f, "tensor {tensor} has size 0"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

pub fn validate_graph(g: &Graph) -> ValidationReport {
    let mut violations = Vec::new();

    let mut producers: Vec<Vec<OpId>> = vec![Vec::new(); g.num_tensors()];
    for op in g.ops() {
        for &t in &op.outputs {
            producers[t].push(op.id);
        }
    }
    for (t, p) in producers.into_iter().enumerate() {
        if p.len() > 1 {
            violations.push(Violation::MultipleProducers { tensor: t, producers: p });
        }
    }
    for t in g.tensors() {
        if t.size == 0 {
            violations.push(Violation::ZeroSize { tensor: t.id });
        }
    }
    if let Some(cycle) = find_cycle(g) {
        violations.push(Violation::Cycle { ops: cycle });
    }
    ValidationReport { violations }
}

/// Ops left over after Kahn's algorithm, i.e. those on or behind a cycle.
/// Self-loops (an op consuming its own output) count as cycles.
fn find_cycle(g: &Graph) -> Option<Vec<OpId>> {
    let n = g.num_ops();
    let self_loop: Vec<OpId> = g
        .ops()
        .iter()
        .filter(|op| op.inputs.iter().any(|t| op.outputs.contains(t)))
        .map(|op| op.id)
        .collect();
    if !self_loop.is_empty() {
        return Some(self_loop);
    }
    let succ: Vec<Vec<OpId>> = (0..n).map(|v| g.successors(v)).collect();
    let mut indeg = vec![0usize; n];
    for s in &succ {
        for &w in s {
            indeg[w] += 1;
        }
    }
    let mut queue: VecDeque<OpId> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut seen = 0;
    while let Some(v) = queue.pop_front() {
        seen += 1;
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    (seen < n).then(|| (0..n).filter(|&v| indeg[v] > 0).collect())
}

// ---------------------------------------------------------------------------
// Reachability and scheduling bounds

/// Transitive predecessor/successor sets of every op.
#[derive(Debug, Clone)]
pub struct Reachability {
    pub preds: Vec<FixedBitSet>,
    pub succs: Vec<FixedBitSet>,
}

impl Reachability {
    pub fn compute(g: &Graph) -> Result<Self> {
        let n = g.num_ops();
        let order = g.topo_order()?;
        let direct_preds: Vec<Vec<OpId>> = (0..n).map(|v| g.predecessors(v)).collect();
        let direct_succs: Vec<Vec<OpId>> = (0..n).map(|v| g.successors(v)).collect();

        let mut preds = vec![FixedBitSet::with_capacity(n); n];
        for &v in &order {
            let mut set = FixedBitSet::with_capacity(n);
            for &p in &direct_preds[v] {
                set.insert(p);
                set.union_with(&preds[p]);
            }
            preds[v] = set;
        }
        let mut succs = vec![FixedBitSet::with_capacity(n); n];
        for &v in order.iter().rev() {
            let mut set = FixedBitSet::with_capacity(n);
            for &s in &direct_succs[v] {
                set.insert(s);
                set.union_with(&succs[s]);
            }
            succs[v] = set;
        }
        Ok(Reachability { preds, succs })
    }

    pub fn precedes(&self, a: OpId, b: OpId) -> bool {
        self.succs[a].contains(b)
    }

    pub fn comparable(&self, a: OpId, b: OpId) -> bool {
        a == b || self.precedes(a, b) || self.precedes(b, a)
    }
}

/// Earliest and latest single-streaming timesteps of every op.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleBounds {
    pub asap: Vec<usize>,
    pub alap: Vec<usize>,
}

pub fn asap_alap(g: &Graph) -> Result<ScheduleBounds> {
    let reach = Reachability::compute(g)?;
    Ok(bounds_from_reachability(&reach))
}

pub fn bounds_from_reachability(reach: &Reachability) -> ScheduleBounds {
    let n = reach.preds.len();
    ScheduleBounds {
        asap: reach.preds.iter().map(|p| p.count_ones(..)).collect(),
        alap: reach.succs.iter().map(|s| n - 1 - s.count_ones(..)).collect(),
    }
}

// ---------------------------------------------------------------------------
// Theoretical peak memory

/// Inclusive `[start, end]` timesteps during which each tensor occupies
/// memory under `s`. Tensors without consumers stay live until the last step.
pub fn live_intervals(g: &Graph, s: &Schedule) -> Vec<(usize, usize)> {
    let last = s.num_steps().saturating_sub(1);
    g.tensors()
        .iter()
        .map(|t| {
            let start = s.timestep_of(t.producer);
            let end = t.consumers.iter().map(|&c| s.timestep_of(c)).max().unwrap_or(last);
            (start, end.max(start))
        })
        .collect()
}

/// Summed size of live tensors at every timestep.
pub fn memory_profile(g: &Graph, s: &Schedule) -> Vec<u64> {
    let steps = s.num_steps();
    let mut delta = vec![0i128; steps + 1];
    for (t, (start, end)) in live_intervals(g, s).into_iter().enumerate() {
        delta[start] += g.tensor(t).size as i128;
        delta[end + 1] -= g.tensor(t).size as i128;
    }
    let mut acc = 0i128;
    delta[..steps]
        .iter()
        .map(|d| {
            acc += d;
            acc as u64
        })
        .collect()
}

/// Theoretical peak memory of `g` under `s`, with the first timestep at
/// which it is reached. An empty graph peaks at 0 bytes at step 0.
pub fn peak_memory(g: &Graph, s: &Schedule) -> Result<(u64, usize)> {
    s.validate(g)?;
    let profile = memory_profile(g, s);
    let mut best = (0u64, 0usize);
    for (t, &m) in profile.iter().enumerate() {
        if m > best.0 {
            best = (m, t);
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Tensor taxonomy

/// Categorizes every tensor by the passes of its producer and consumers.
/// Weight and optimizer-state tags from the document are kept as-is.
pub fn classify_tensors(g: &Graph) -> Vec<TensorCategory> {
    g.tensors()
        .iter()
        .map(|t| {
            if let Some(tag @ (TensorCategory::Weight | TensorCategory::OptimizerState)) = t.tag {
                return tag;
            }
            let producer = g.op(t.producer).kind;
            let consumed_by = |k: OpKind| t.consumers.iter().any(|&c| g.op(c).kind == k);
            match producer {
                OpKind::Forward if consumed_by(OpKind::Backward) => TensorCategory::Activation,
                OpKind::Backward if consumed_by(OpKind::WeightUpdate) => TensorCategory::Gradient,
                _ => TensorCategory::TemporaryBuffer,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphgen::diamond;

    #[test]
    fn chain_document_loads() {
        let json = r#"{"ops":[
            {"id":10,"name":"A","kind":"forward","inputs":[],"outputs":[5]},
            {"id":11,"name":"B","kind":"forward","inputs":[5],"outputs":[]}],
            "tensors":[{"id":5,"size_bytes":8}]}"#;
        let g = load_graph(json).unwrap();
        assert_eq!(g.num_ops(), 2);
        assert_eq!(g.num_tensors(), 1);
        assert_eq!(g.tensor(0).producer, 0);
        assert_eq!(g.tensor(0).consumers, vec![1]);
        assert_eq!(g.op(1).ext_id, 11);
    }

    #[test]
    fn dangling_reference_is_rejected() {
        let json = r#"{"ops":[
            {"id":0,"name":"A","kind":"forward","inputs":[],"outputs":[0]},
            {"id":1,"name":"B","kind":"forward","inputs":[0, 7],"outputs":[]}],
            "tensors":[{"id":0,"size_bytes":8}]}"#;
        assert!(matches!(load_graph(json), Err(Error::DanglingReference(_))));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let json = r#"{"ops":[
            {"id":0,"name":"A","kind":"forward","inputs":[],"outputs":[0]},
            {"id":0,"name":"B","kind":"forward","inputs":[0],"outputs":[]}],
            "tensors":[{"id":0,"size_bytes":8}]}"#;
        assert!(matches!(load_graph(json), Err(Error::DuplicateId(_))));
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(load_graph("{\"ops\": ["), Err(Error::Parse(_))));
    }

    #[test]
    fn diamond_validates_clean() {
        let g = diamond();
        assert_eq!(g.num_ops(), 4);
        assert_eq!(g.num_tensors(), 4);
        assert!(validate_graph(&g).is_empty());
    }

    #[test]
    fn back_edge_reports_cycle() {
        let mut doc = diamond().to_doc();
        // D -> A
        doc.tensors.push(TensorDoc { id: 99, size_bytes: 1, category: None });
        doc.ops[3].outputs.push(99);
        doc.ops[0].inputs.push(99);
        let g = Graph::from_doc(&doc).unwrap();
        let report = validate_graph(&g);
        assert!(report.violations.iter().any(|v| matches!(v, Violation::Cycle { .. })));
        assert!(matches!(asap_alap(&g), Err(Error::Cycle)));
    }

    #[test]
    fn zero_size_and_double_producer_reported() {
        let mut b = GraphBuilder::new();
        let t = b.tensor(0);
        b.op("A", OpKind::Forward, &[], &[t]);
        b.op("B", OpKind::Forward, &[], &[t]);
        let g = b.build().unwrap();
        let report = validate_graph(&g);
        assert!(report.violations.contains(&Violation::ZeroSize { tensor: 0 }));
        assert!(report
            .violations
            .contains(&Violation::MultipleProducers { tensor: 0, producers: vec![0, 1] }));
    }

    #[test]
    fn chain_bounds_are_tight() {
        let mut b = GraphBuilder::new();
        let t0 = b.op_new("a", OpKind::Forward, &[], &[1])[0];
        let t1 = b.op_new("b", OpKind::Forward, &[t0], &[1])[0];
        b.op("c", OpKind::Forward, &[t1], &[]);
        let bounds = asap_alap(&b.build().unwrap()).unwrap();
        assert_eq!(bounds.asap, vec![0, 1, 2]);
        assert_eq!(bounds.alap, vec![0, 1, 2]);
    }

    #[test]
    fn diamond_bounds() {
        let bounds = asap_alap(&diamond()).unwrap();
        assert_eq!(bounds.asap, vec![0, 1, 1, 3]);
        assert_eq!(bounds.alap, vec![0, 2, 2, 3]);
    }

    #[test]
    fn isolated_op_bounds() {
        let mut b = GraphBuilder::new();
        b.op("solo", OpKind::Forward, &[], &[]);
        let bounds = asap_alap(&b.build().unwrap()).unwrap();
        assert_eq!(bounds.asap, vec![0]);
        assert_eq!(bounds.alap, vec![0]);
    }

    #[test]
    fn diamond_peaks_match_both_orders() {
        let g = diamond();
        let mb = 1u64 << 20;
        let abcd = Schedule::sequential(vec![0, 1, 2, 3], g.num_ops());
        assert_eq!(peak_memory(&g, &abcd).unwrap(), (120 * mb, 1));
        let acbd = Schedule::sequential(vec![0, 2, 1, 3], g.num_ops());
        assert_eq!(peak_memory(&g, &acbd).unwrap(), (90 * mb, 1));
    }

    #[test]
    fn single_op_single_tensor_peak() {
        let mut b = GraphBuilder::new();
        b.op_new("only", OpKind::Forward, &[], &[8]);
        let g = b.build().unwrap();
        let s = Schedule::sequential(vec![0], 1);
        assert_eq!(peak_memory(&g, &s).unwrap(), (8, 0));
    }

    #[test]
    fn classify_by_pass() {
        let mut b = GraphBuilder::new();
        let act = b.op_new("f", OpKind::Forward, &[], &[4])[0];
        let tmp = b.op_new("f2", OpKind::Forward, &[act], &[4])[0];
        let grad = b.op_new("bwd", OpKind::Backward, &[act, tmp], &[4])[0];
        b.op("wu", OpKind::WeightUpdate, &[grad], &[]);
        let g = b.build().unwrap();
        assert_eq!(
            classify_tensors(&g),
            vec![TensorCategory::Activation, TensorCategory::Activation, TensorCategory::Gradient]
        );

        let mut b = GraphBuilder::new();
        let t = b.op_new("f", OpKind::Forward, &[], &[4])[0];
        b.op("f2", OpKind::Forward, &[t], &[]);
        let w = b.tagged_tensor(4, Some(TensorCategory::Weight));
        b.op("load", OpKind::Forward, &[], &[w]);
        b.op("bwd", OpKind::Backward, &[w], &[]);
        let cats = classify_tensors(&b.build().unwrap());
        assert_eq!(cats, vec![TensorCategory::TemporaryBuffer, TensorCategory::Weight]);
    }

    #[test]
    fn document_round_trips() {
        let g = diamond();
        let again = load_graph(&g.to_json()).unwrap();
        assert_eq!(g, again);
    }
}

//! Deterministic synthetic graphs: the small fixtures used throughout the
//! tests, random DAG corpora, and training graphs with forward, backward and
//! weight-update passes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, GraphBuilder, OpKind, TensorId};
use crate::ordering::{exact_order, greedy_order, OrderingProblem};

pub const MB: u64 = 1 << 20;

/// Four-op diamond: `A` feeds a 60MB tensor to `C` and a 20MB tensor to `B`;
/// `B` and `C` feed `D` with 40MB and 10MB. Running `B` before `C` peaks at
/// 120MB, `C` before `B` at 90MB.
pub fn diamond() -> Graph {
    let mut b = GraphBuilder::new();
    let big = b.tensor(60 * MB);
    let small = b.tensor(20 * MB);
    let tb = b.tensor(40 * MB);
    let tc = b.tensor(10 * MB);
    b.op("A", OpKind::Forward, &[], &[big, small]);
    b.op("B", OpKind::Forward, &[small], &[tb]);
    b.op("C", OpKind::Forward, &[big], &[tc]);
    b.op("D", OpKind::Forward, &[tb, tc], &[]);
    b.build().expect("diamond is well formed")
}

/// A straight chain of `n` forward ops, each handing `size` bytes to the next.
pub fn chain(n: usize, size: u64) -> Graph {
    let mut b = GraphBuilder::new();
    let mut prev: Option<TensorId> = None;
    for i in 0..n {
        let inputs: Vec<TensorId> = prev.into_iter().collect();
        if i + 1 == n {
            b.op(&format!("op{i}"), OpKind::Forward, &inputs, &[]);
        } else {
            prev = Some(b.op_new(&format!("op{i}"), OpKind::Forward, &inputs, &[size])[0]);
        }
    }
    b.build().expect("chain is well formed")
}

/// Uniform tensor sizes in `[min, max] * unit` bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeDist {
    pub min: u64,
    pub max: u64,
    pub unit: u64,
}

impl SizeDist {
    pub fn megabytes(min: u64, max: u64) -> Self {
        SizeDist { min, max, unit: MB }
    }

    fn sample(&self, rng: &mut impl Rng) -> u64 {
        rng.gen_range(self.min.max(1)..=self.max.max(self.min).max(1)) * self.unit
    }
}

impl Default for SizeDist {
    fn default() -> Self {
        SizeDist::megabytes(1, 64)
    }
}

/// Random acyclic graph over `n` forward ops. Op `i` produces one tensor
/// (occasionally two); each later op consumes it with probability `density`.
pub fn gen_random_dag(n: usize, density: f64, sizes: SizeDist, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new();
    random_block(&mut b, &mut rng, n, density, sizes, &[], "op");
    b.build().expect("random dag is well formed")
}

/// Emits `n` random ops. Ops that get no input from within the block
/// consume every tensor in `feed`. Returns tensors with no consumer inside
/// the block.
fn random_block(
    b: &mut GraphBuilder,
    rng: &mut ChaCha8Rng,
    n: usize,
    density: f64,
    sizes: SizeDist,
    feed: &[TensorId],
    prefix: &str,
) -> Vec<TensorId> {
    let mut outputs: Vec<Vec<TensorId>> = Vec::with_capacity(n);
    let mut consumers: Vec<Vec<usize>> = Vec::new();
    let mut tensor_ids: Vec<TensorId> = Vec::new();
    for i in 0..n {
        let count = if rng.gen_bool(0.2) { 2 } else { 1 };
        let mut outs = Vec::new();
        for _ in 0..count {
            let t = b.tensor(sizes.sample(rng));
            let cons: Vec<usize> = (i + 1..n).filter(|_| rng.gen_bool(density)).collect();
            outs.push(tensor_ids.len());
            tensor_ids.push(t);
            consumers.push(cons);
        }
        outputs.push(outs);
    }
    let mut inputs: Vec<Vec<TensorId>> = vec![Vec::new(); n];
    for (local, cons) in consumers.iter().enumerate() {
        for &c in cons {
            inputs[c].push(tensor_ids[local]);
        }
    }
    for i in 0..n {
        let mut ins = inputs[i].clone();
        if ins.is_empty() {
            ins.extend_from_slice(feed);
        }
        let outs: Vec<TensorId> = outputs[i].iter().map(|&l| tensor_ids[l]).collect();
        b.op(&format!("{prefix}{i}"), OpKind::Forward, &ins, &outs);
    }
    consumers
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_empty())
        .map(|(l, _)| tensor_ids[l])
        .collect()
}

/// Random blocks joined by single ops that consume every dangling tensor of
/// the previous block and feed every source op of the next one, so each
/// join op is comparable with all other ops.
pub fn gen_segmented_dag(block_sizes: &[usize], density: f64, sizes: SizeDist, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new();
    let mut feed: Vec<TensorId> = Vec::new();
    for (k, &n) in block_sizes.iter().enumerate() {
        let dangling = random_block(&mut b, &mut rng, n, density, sizes, &feed, &format!("b{k}_op"));
        if k + 1 < block_sizes.len() {
            let joined = b.tensor(sizes.sample(&mut rng));
            b.op(&format!("join{k}"), OpKind::Forward, &dangling, &[joined]);
            feed = vec![joined];
        }
    }
    b.build().expect("segmented dag is well formed")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    Mlp,
    Residual,
    TransformerBlock,
}

impl Arch {
    pub const ALL: [Arch; 3] = [Arch::Mlp, Arch::Residual, Arch::TransformerBlock];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

impl Optimizer {
    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Sgd => "sgd",
            Optimizer::Adam => "adam",
        }
    }
}

/// Base sizes for generated training graphs. Every activation and parameter
/// is a multiple (1 or 2, drawn from the seed) of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSizes {
    pub activation: u64,
    pub param: u64,
}

impl Default for TrainingSizes {
    fn default() -> Self {
        TrainingSizes { activation: 8 * MB, param: 4 * MB }
    }
}

struct TrainingGen {
    b: GraphBuilder,
    rng: ChaCha8Rng,
    sizes: TrainingSizes,
    grads: Vec<(String, TensorId, u64)>,
}

impl TrainingGen {
    fn act(&mut self) -> u64 {
        self.sizes.activation * self.rng.gen_range(1..=2)
    }

    fn param(&mut self) -> u64 {
        self.sizes.param * self.rng.gen_range(1..=2)
    }

    fn fwd(&mut self, name: &str, inputs: &[TensorId], sizes: &[u64]) -> Vec<TensorId> {
        self.b.op_new(name, OpKind::Forward, inputs, sizes)
    }

    fn bwd(&mut self, name: &str, inputs: &[TensorId], sizes: &[u64]) -> Vec<TensorId> {
        self.b.op_new(name, OpKind::Backward, inputs, sizes)
    }

    /// Backward op that also emits the gradient of a parameter.
    fn bwd_with_grad(&mut self, name: &str, inputs: &[TensorId], sizes: &[u64], param: u64) -> Vec<TensorId> {
        let mut all = sizes.to_vec();
        all.push(param);
        let mut outs = self.bwd(name, inputs, &all);
        let grad = outs.pop().expect("gradient output");
        self.grads.push((name.to_string(), grad, param));
        outs
    }

    fn size_of(&self, t: TensorId) -> u64 {
        self.b.doc().tensors[t].size_bytes
    }
}

struct MlpBlock {
    x: TensorId,
    h: TensorId,
    mask: TensorId,
    param: u64,
}

struct ResidualBlock {
    x: TensorId,
    h1: TensorId,
    a1: TensorId,
    params: [u64; 3],
}

struct TransformerFwd {
    x: TensorId,
    a: TensorId,
    q: TensorId,
    k: TensorId,
    v: TensorId,
    p: TensorId,
    o: TensorId,
    x2: TensorId,
    bb: TensorId,
    u: TensorId,
    g: TensorId,
    params: [u64; 6],
}

/// Builds a training graph: an input op, `blocks` forward blocks of the
/// given architecture, a loss op, the mirrored backward pass ending in a sink
/// that consumes the input gradient, and one weight-update branch per
/// parameter gradient (listed last, as a training loop would issue them).
pub fn gen_training_graph(
    arch: Arch,
    blocks: usize,
    sizes: TrainingSizes,
    optimizer: Optimizer,
    seed: u64,
) -> Result<Graph> {
    if blocks == 0 {
        return Err(Error::Config("training graph needs at least one block".into()));
    }
    if sizes.activation == 0 || sizes.param == 0 {
        return Err(Error::Config("training graph sizes must be positive".into()));
    }
    let mut gen = TrainingGen {
        b: GraphBuilder::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        sizes,
        grads: Vec::new(),
    };
    let a0 = gen.act();
    let mut x = gen.fwd("input", &[], &[a0])[0];

    match arch {
        Arch::Mlp => {
            let mut saved = Vec::new();
            for i in 0..blocks {
                let (a, m, p) = (gen.act(), gen.act(), gen.param());
                let h = gen.fwd(&format!("fc{i}"), &[x], &[a])[0];
                let mask = gen.fwd(&format!("dropout_mask{i}"), &[x], &[m])[0];
                let y = gen.fwd(&format!("act{i}"), &[h, mask], &[a])[0];
                saved.push(MlpBlock { x, h, mask, param: p });
                x = y;
            }
            let mut dy = gen.b.op_new("loss", OpKind::Loss, &[x], &[gen.size_of(x)])[0];
            for (i, blk) in saved.iter().enumerate().rev() {
                let dh = gen.bwd(&format!("act{i}_bwd"), &[dy, blk.h, blk.mask], &[gen.size_of(blk.h)])[0];
                dy = gen.bwd_with_grad(&format!("fc{i}_bwd"), &[dh, blk.x], &[gen.size_of(blk.x)], blk.param)[0];
            }
            gen.bwd("input_grad_sink", &[dy], &[]);
        }
        Arch::Residual => {
            let mut saved = Vec::new();
            for i in 0..blocks {
                let a = gen.size_of(x);
                let params = [gen.param(), gen.param(), gen.param()];
                let s = gen.fwd(&format!("skip{i}"), &[x], &[a])[0];
                let hidden = gen.act();
                let h1 = gen.fwd(&format!("conv1_{i}"), &[x], &[hidden])[0];
                let a1 = gen.fwd(&format!("relu{i}"), &[h1], &[hidden])[0];
                let h2 = gen.fwd(&format!("conv2_{i}"), &[a1], &[a])[0];
                let y = gen.fwd(&format!("add{i}"), &[h2, s], &[a])[0];
                saved.push(ResidualBlock { x, h1, a1, params });
                x = y;
            }
            let mut dy = gen.b.op_new("loss", OpKind::Loss, &[x], &[gen.size_of(x)])[0];
            for (i, blk) in saved.iter().enumerate().rev() {
                let a = gen.size_of(blk.x);
                let hidden = gen.size_of(blk.h1);
                let d = gen.bwd(&format!("add{i}_bwd"), &[dy], &[a, a]);
                let (dh2, ds) = (d[0], d[1]);
                let da1 = gen.bwd_with_grad(&format!("conv2_{i}_bwd"), &[dh2, blk.a1], &[hidden], blk.params[1])[0];
                let dh1 = gen.bwd(&format!("relu{i}_bwd"), &[da1, blk.h1], &[hidden])[0];
                let dx1 = gen.bwd_with_grad(&format!("conv1_{i}_bwd"), &[dh1, blk.x], &[a], blk.params[0])[0];
                let dx2 = gen.bwd_with_grad(&format!("skip{i}_bwd"), &[ds, blk.x], &[a], blk.params[2])[0];
                dy = gen.bwd(&format!("join{i}_bwd"), &[dx1, dx2], &[a])[0];
            }
            gen.bwd("input_grad_sink", &[dy], &[]);
        }
        Arch::TransformerBlock => {
            let mut saved = Vec::new();
            for i in 0..blocks {
                let a_sz = gen.size_of(x);
                let scores = 2 * gen.act();
                let hidden = 2 * gen.act();
                let params = [gen.param(), gen.param(), gen.param(), gen.param(), gen.param(), gen.param()];
                let a = gen.fwd(&format!("ln1_{i}"), &[x], &[a_sz])[0];
                let q = gen.fwd(&format!("q{i}"), &[a], &[a_sz])[0];
                let k = gen.fwd(&format!("k{i}"), &[a], &[a_sz])[0];
                let v = gen.fwd(&format!("v{i}"), &[a], &[a_sz])[0];
                let s = gen.fwd(&format!("scores{i}"), &[q, k], &[scores])[0];
                let p = gen.fwd(&format!("softmax{i}"), &[s], &[scores])[0];
                let o = gen.fwd(&format!("attn_v{i}"), &[p, v], &[a_sz])[0];
                let y = gen.fwd(&format!("proj{i}"), &[o], &[a_sz])[0];
                let x2 = gen.fwd(&format!("add1_{i}"), &[x, y], &[a_sz])[0];
                let bb = gen.fwd(&format!("ln2_{i}"), &[x2], &[a_sz])[0];
                let u = gen.fwd(&format!("fc1_{i}"), &[bb], &[hidden])[0];
                let g = gen.fwd(&format!("gelu{i}"), &[u], &[hidden])[0];
                let z = gen.fwd(&format!("fc2_{i}"), &[g], &[a_sz])[0];
                let out = gen.fwd(&format!("add2_{i}"), &[x2, z], &[a_sz])[0];
                saved.push(TransformerFwd { x, a, q, k, v, p, o, x2, bb, u, g, params });
                x = out;
            }
            let mut dy = gen.b.op_new("loss", OpKind::Loss, &[x], &[gen.size_of(x)])[0];
            for (i, t) in saved.iter().enumerate().rev() {
                let a_sz = gen.size_of(t.x);
                let sc = gen.size_of(t.p);
                let hid = gen.size_of(t.u);
                let d = gen.bwd(&format!("add2_{i}_bwd"), &[dy], &[a_sz, a_sz]);
                let (dz, dx2a) = (d[0], d[1]);
                let dg = gen.bwd_with_grad(&format!("fc2_{i}_bwd"), &[dz, t.g], &[hid], t.params[5])[0];
                let du = gen.bwd(&format!("gelu{i}_bwd"), &[dg, t.u], &[hid])[0];
                let dbb = gen.bwd_with_grad(&format!("fc1_{i}_bwd"), &[du, t.bb], &[a_sz], t.params[4])[0];
                let dx2b = gen.bwd(&format!("ln2_{i}_bwd"), &[dbb, t.x2], &[a_sz])[0];
                let dx2 = gen.bwd(&format!("join2_{i}_bwd"), &[dx2a, dx2b], &[a_sz])[0];
                let d = gen.bwd(&format!("add1_{i}_bwd"), &[dx2], &[a_sz, a_sz]);
                let (dyy, dxa) = (d[0], d[1]);
                let d_o = gen.bwd_with_grad(&format!("proj{i}_bwd"), &[dyy, t.o], &[a_sz], t.params[3])[0];
                let d = gen.bwd(&format!("attn_v{i}_bwd"), &[d_o, t.p, t.v], &[sc, a_sz]);
                let (dp, dv) = (d[0], d[1]);
                let ds = gen.bwd(&format!("softmax{i}_bwd"), &[dp, t.p], &[sc])[0];
                let d = gen.bwd(&format!("scores{i}_bwd"), &[ds, t.q, t.k], &[a_sz, a_sz]);
                let (dq, dk) = (d[0], d[1]);
                let daq = gen.bwd_with_grad(&format!("q{i}_bwd"), &[dq, t.a], &[a_sz], t.params[0])[0];
                let dak = gen.bwd_with_grad(&format!("k{i}_bwd"), &[dk, t.a], &[a_sz], t.params[1])[0];
                let dav = gen.bwd_with_grad(&format!("v{i}_bwd"), &[dv, t.a], &[a_sz], t.params[2])[0];
                let da = gen.bwd(&format!("join_qkv{i}_bwd"), &[daq, dak, dav], &[a_sz])[0];
                let dxb = gen.bwd(&format!("ln1_{i}_bwd"), &[da, t.x], &[a_sz])[0];
                dy = gen.bwd(&format!("join1_{i}_bwd"), &[dxa, dxb], &[a_sz])[0];
            }
            gen.bwd("input_grad_sink", &[dy], &[]);
        }
    }

    let grads = std::mem::take(&mut gen.grads);
    for (name, grad, size) in grads {
        weight_update_branch(&mut gen.b, &name, grad, size, optimizer);
    }
    gen.b.build()
}

/// Appends the weight-update ops for one gradient.
///
/// SGD is a single in-place step. Adam is four ops: first- and
/// second-moment updates, the bias-corrected step, and the write-back. The
/// moments and step tensors are all live while the step runs, so the branch
/// needs three gradient-sized slots.
pub fn weight_update_branch(b: &mut GraphBuilder, name: &str, grad: TensorId, size: u64, optimizer: Optimizer) {
    match optimizer {
        Optimizer::Sgd => {
            b.op(&format!("{name}_sgd_step"), OpKind::WeightUpdate, &[grad], &[]);
        }
        Optimizer::Adam => {
            let m = b.op_new(&format!("{name}_adam_m"), OpKind::WeightUpdate, &[grad], &[size])[0];
            let v = b.op_new(&format!("{name}_adam_v"), OpKind::WeightUpdate, &[grad], &[size])[0];
            let upd = b.op_new(&format!("{name}_adam_step"), OpKind::WeightUpdate, &[m, v], &[size])[0];
            b.op(&format!("{name}_adam_write"), OpKind::WeightUpdate, &[upd], &[]);
        }
    }
}

/// A lone weight-update branch fed by one backward op.
pub fn gen_update_branch(param: u64, optimizer: Optimizer) -> Graph {
    let mut b = GraphBuilder::new();
    let grad = b.op_new("grad", OpKind::Backward, &[], &[param])[0];
    weight_update_branch(&mut b, "w", grad, param, optimizer);
    b.build().expect("update branch is well formed")
}

/// Forward chain of activations 20, 50 and 10 MB with a 100 MB Adam
/// gradient produced by the first backward op. Updating right away keeps
/// the 70 MB of remaining activations alive under the optimizer state;
/// deferring the update to after backward lowers the peak.
pub fn gen_delay_scenario() -> Graph {
    let mut b = GraphBuilder::new();
    let x = b.op_new("a", OpKind::Forward, &[], &[20 * MB])[0];
    let y = b.op_new("b", OpKind::Forward, &[x], &[50 * MB])[0];
    let z = b.op_new("c", OpKind::Forward, &[y], &[10 * MB])[0];
    let l = b.op_new("loss", OpKind::Loss, &[z], &[MB])[0];
    let dz = b.op_new("c_bwd", OpKind::Backward, &[l, z], &[MB, 100 * MB]);
    let dy = b.op_new("b_bwd", OpKind::Backward, &[dz[0], y], &[MB])[0];
    b.op("a_bwd", OpKind::Backward, &[dy, x], &[]);
    weight_update_branch(&mut b, "c", dz[1], 100 * MB, Optimizer::Adam);
    b.build().expect("delay scenario is well formed")
}

/// Searches seeded small DAGs for one where least-increase greedy ordering
/// peaks strictly higher than the exact optimum.
pub fn gen_greedy_trap(seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100_000 {
        let n = rng.gen_range(4..=8);
        let density = rng.gen_range(0.2..0.6);
        let g = gen_random_dag(n, density, SizeDist::megabytes(1, 32), rng.gen());
        let problem = OrderingProblem::whole_graph(&g, 1);
        let greedy = greedy_order(&problem);
        let exact = exact_order(&problem, std::time::Duration::from_secs(5))?;
        if exact.peak < greedy.peak {
            return Ok(g);
        }
    }
    Err(Error::Structural("no greedy trap found; raise the search bound".into()))
}

use std::time::Instant;

use super::{OrderingProblem, OrderingSolution, SolverStats};

/// Least-memory-increase list scheduling: among ready ops, run the one whose
/// outputs minus the inputs it frees is smallest (ties to the smaller op id).
/// One op per timestep.
pub fn greedy_order(p: &OrderingProblem) -> OrderingSolution {
    let start = Instant::now();
    let n = p.len();
    let mut done = vec![false; n];
    let mut remaining: Vec<usize> = p.tensors.iter().map(|t| t.consumers.len()).collect();
    let mut missing_preds: Vec<usize> = p.preds.iter().map(Vec::len).collect();
    let mut succs = vec![Vec::new(); n];
    for (v, preds) in p.preds.iter().enumerate() {
        for &u in preds {
            succs[u].push(v);
        }
    }
    let mut steps = Vec::with_capacity(n);
    let mut nodes = 0u64;
    for _ in 0..n {
        let mut best: Option<(i128, usize)> = None;
        for v in (0..n).filter(|&v| !done[v] && missing_preds[v] == 0) {
            nodes += 1;
            let alloc: i128 = p.outputs[v].iter().map(|&t| p.tensors[t].size as i128).sum();
            let freed: i128 = p.inputs[v]
                .iter()
                .filter(|&&t| remaining[t] == 1 && !p.tensors[t].escapes)
                .map(|&t| p.tensors[t].size as i128)
                .sum();
            let delta = alloc - freed;
            // Local indices follow global id order, so `<` breaks ties by id.
            if best.is_none_or(|(d, _)| delta < d) {
                best = Some((delta, v));
            }
        }
        let (_, v) = best.expect("a valid problem always has a ready op");
        done[v] = true;
        for &t in &p.inputs[v] {
            remaining[t] -= 1;
        }
        for &w in &succs[v] {
            missing_preds[w] -= 1;
        }
        steps.push(vec![v]);
    }
    let peak = p.evaluate_steps(&steps).expect("greedy order is valid");
    OrderingSolution {
        steps: p.to_global(&steps),
        peak,
        optimal: false,
        stats: SolverStats { nodes_explored: nodes, elapsed: start.elapsed() },
    }
}

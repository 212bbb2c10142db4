//! Prints the memory-insensitive ops and the subgraph tree of a training graph.

use memplan::graphgen::{gen_training_graph, Arch, Optimizer, TrainingSizes};
use memplan::segmentation::{build_subgraph_tree, find_memory_insensitive};

fn main() -> memplan::Result<()> {
    let g = gen_training_graph(Arch::Mlp, 2, TrainingSizes::default(), Optimizer::Sgd, 0)?;
    let mi: Vec<&str> = find_memory_insensitive(&g)?.iter().map(|&v| g.op(v).name.as_str()).collect();
    println!("memory-insensitive: {}", mi.join(", "));
    let tree = build_subgraph_tree(&g, 20)?;
    for (i, leaf) in tree.leaves().iter().enumerate() {
        let ops: Vec<&str> = leaf.ops.iter().map(|&v| g.op(v).name.as_str()).collect();
        println!("leaf {i} {:?}: {}", leaf.kind, ops.join(" "));
    }
    Ok(())
}

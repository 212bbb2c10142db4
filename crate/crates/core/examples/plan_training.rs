//! Plans a generated training graph end to end and prints per-leaf results.
//!
//! Usage: plan_training [mlp|residual|transformer_block] [blocks] [sgd|adam]

use memplan::graphgen::{gen_training_graph, Arch, Optimizer, TrainingSizes, MB};
use memplan::planner::{plan, PlannerConfig};

fn main() -> memplan::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arch = match args.first().map(String::as_str) {
        Some("residual") => Arch::Residual,
        Some("transformer_block") => Arch::TransformerBlock,
        _ => Arch::Mlp,
    };
    let blocks = args.get(1).and_then(|b| b.parse().ok()).unwrap_or(2);
    let opt = if args.get(2).map(String::as_str) == Some("sgd") { Optimizer::Sgd } else { Optimizer::Adam };
    let g = gen_training_graph(arch, blocks, TrainingSizes::default(), opt, 0)?;
    let p = plan(&g, &PlannerConfig::default())?;
    println!("{arch:?} x{blocks} {}: {} ops, {} tensors", opt.name(), g.num_ops(), g.num_tensors());
    for (i, l) in p.stats.leaves.iter().enumerate() {
        println!(
            "leaf {i:>2} {:?}: {:>3} ops, slot peak {:>4} MB, {:>3} items in {:>4} MB, optimal {}",
            l.kind,
            l.ops,
            l.order_peak / MB,
            l.layout_items,
            l.layout_capacity / MB,
            l.order_optimal && l.layout_optimal
        );
    }
    println!(
        "peak {} MB, capacity {} MB, fragmentation {:.2}%, delayed updates {}",
        p.stats.theoretical_peak / MB,
        p.layout.capacity / MB,
        p.stats.fragmentation_pct,
        p.stats.delayed_updates
    );
    Ok(())
}

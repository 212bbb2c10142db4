//! Compares the planner with every baseline on the greedy-trap graph.

use memplan::graphgen::{gen_greedy_trap, MB};
use memplan::planner::{compare_baselines, Baseline, PlannerConfig};

fn main() -> memplan::Result<()> {
    let g = gen_greedy_trap(0)?;
    let c = compare_baselines(&g, &PlannerConfig::default(), &Baseline::ALL)?;
    println!("{:<18} {:<18} {:>8} {:>9} {:>10}", "order", "layout", "peak MB", "capacity", "cap save%");
    for r in std::iter::once(&c.plan).chain(&c.baselines) {
        println!(
            "{:<18} {:<18} {:>8} {:>9} {:>10.1}",
            r.order,
            r.layout,
            r.theoretical_peak / MB,
            r.capacity / MB,
            r.capacity_saving_pct
        );
    }
    Ok(())
}

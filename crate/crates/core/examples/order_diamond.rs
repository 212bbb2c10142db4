//! Orders the diamond graph three ways and prints each theoretical peak.

use std::time::Duration;

use memplan::graph::peak_memory;
use memplan::graphgen::{diamond, MB};
use memplan::ordering::{exact_order, greedy_order, OrderingProblem};
use memplan::Schedule;

fn main() -> memplan::Result<()> {
    let g = diamond();
    let definition = Schedule::sequential(g.topo_order()?, g.num_ops());
    let problem = OrderingProblem::whole_graph(&g, 1);
    let exact = exact_order(&problem, Duration::from_secs(10))?;
    let greedy = greedy_order(&problem);
    println!("definition order: {} MB", peak_memory(&g, &definition)?.0 / MB);
    println!("greedy order:     {} MB", greedy.peak / MB);
    println!("exact order:      {} MB (optimal: {})", exact.peak / MB, exact.optimal);
    let names: Vec<&str> = exact.order().iter().map(|&v| g.op(v).name.as_str()).collect();
    println!("exact sequence:   {}", names.join(" -> "));
    Ok(())
}

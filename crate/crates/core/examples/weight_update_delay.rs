//! Shows a large Adam update being deferred past the rest of backward.

use memplan::graphgen::{gen_delay_scenario, MB};
use memplan::planner::{plan, PlannerConfig};

fn main() -> memplan::Result<()> {
    let g = gen_delay_scenario();
    let adaptive = plan(&g, &PlannerConfig::default())?;
    let immediate = plan(&g, &PlannerConfig { delay_radius: f64::INFINITY, ..Default::default() })?;
    for (name, p) in [("immediate", &immediate), ("adaptive", &adaptive)] {
        let order: Vec<&str> = p.schedule.order().iter().map(|&v| g.op(v).name.as_str()).collect();
        println!("{name:<9} {:>4} MB  {}", p.stats.theoretical_peak / MB, order.join(" "));
    }
    if let Some(u) = &adaptive.weight_updates {
        for b in &u.placements {
            println!("branch of tensor {}: {} delayed={} target unit {}", b.branch.gradient, b.optimizer, b.delayed, b.target);
        }
    }
    Ok(())
}

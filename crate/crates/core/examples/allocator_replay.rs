//! Replays a planned schedule through a best-fit caching allocator, writes
//! the allocation trace as JSON lines and compares it with the static layout.

use memplan::graphgen::{gen_training_graph, Arch, Optimizer, TrainingSizes, MB};
use memplan::planner::{plan, PlannerConfig};
use memplan::simulator::{replay_dynamic, replay_static, write_trace, AllocPolicy};

fn main() -> memplan::Result<()> {
    let g = gen_training_graph(Arch::Residual, 2, TrainingSizes::default(), Optimizer::Adam, 0)?;
    let p = plan(&g, &PlannerConfig::default())?;
    for policy in [AllocPolicy::BestFit, AllocPolicy::FirstFit] {
        let r = replay_dynamic(&g, &p.schedule, policy)?;
        println!(
            "{policy:?}: high water {} MB over a {} MB peak, fragmentation {:.2}%",
            r.actual_peak / MB,
            r.theoretical_peak / MB,
            r.fragmentation_pct
        );
    }
    let fixed = replay_static(&g, &p.schedule, &p.layout)?;
    println!("static layout: {} MB, {} violations", fixed.actual_peak / MB, fixed.violations.len());
    let r = replay_dynamic(&g, &p.schedule, AllocPolicy::BestFit)?;
    let path = std::env::temp_dir().join("memplan_trace.jsonl");
    write_trace(&r.trace, std::fs::File::create(&path)?)?;
    println!("{} events written to {}", r.trace.len(), path.display());
    Ok(())
}

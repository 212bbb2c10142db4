//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use memplan::format::PlanDoc;
use memplan::graph::peak_memory;
use memplan::graphgen::{
    diamond, gen_delay_scenario, gen_greedy_trap, gen_random_dag, gen_segmented_dag, gen_training_graph, Arch,
    Optimizer, SizeDist, TrainingSizes, MB,
};
use memplan::layout::{exact_layout, llfb_gap_fixture, llfb_layout, validate_layout, LayoutItem, LayoutProblem};
use memplan::ordering::{exact_order, greedy_order, OrderingProblem};
use memplan::planner::{plan, PlannerConfig};
use memplan::segmentation::find_memory_insensitive;
use memplan::simulator::replay_static;
use memplan::{Graph, OpId, Schedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Peak of a one-op-per-step order, recomputed from producers and
/// consumers: a tensor occupies memory from its producer's step through its
/// last consumer's step, or to the end if nothing consumes it.
fn oracle_peak(g: &Graph, order: &[OpId]) -> u64 {
    let mut step = vec![usize::MAX; g.num_ops()];
    for (i, &v) in order.iter().enumerate() {
        step[v] = i;
    }
    let mut load = vec![0u64; order.len()];
    for t in g.tensors() {
        let start = step[t.producer];
        let end = t.consumers.iter().map(|&c| step[c]).max().unwrap_or(order.len() - 1);
        for l in &mut load[start..=end] {
            *l += t.size;
        }
    }
    load.into_iter().max().unwrap_or(0)
}

fn is_topological(g: &Graph, order: &[OpId]) -> bool {
    let mut pos = vec![usize::MAX; g.num_ops()];
    for (i, &v) in order.iter().enumerate() {
        pos[v] = i;
    }
    order.len() == g.num_ops()
        && pos.iter().all(|&p| p != usize::MAX)
        && g.tensors().iter().all(|t| t.consumers.iter().all(|&c| pos[t.producer] < pos[c]))
}

/// Minimum peak over every topological order, by enumeration.
fn brute_force_order(g: &Graph) -> u64 {
    struct State<'a> {
        g: &'a Graph,
        indeg: Vec<usize>,
        remaining: Vec<usize>,
        resident: u64,
        peak: u64,
        best: u64,
        placed: usize,
    }
    fn go(s: &mut State) {
        if s.placed == s.g.num_ops() {
            s.best = s.best.min(s.peak);
            return;
        }
        for v in 0..s.g.num_ops() {
            if s.indeg[v] != 0 {
                continue;
            }
            let op = s.g.op(v);
            let out: u64 = op.outputs.iter().map(|&t| s.g.tensor(t).size).sum();
            let (old_resident, old_peak) = (s.resident, s.peak);
            s.peak = s.peak.max(s.resident + out);
            s.resident += out;
            for &t in &op.inputs {
                s.remaining[t] -= 1;
                if s.remaining[t] == 0 {
                    s.resident -= s.g.tensor(t).size;
                }
            }
            s.indeg[v] = usize::MAX;
            for &t in &op.outputs {
                for &c in &s.g.tensor(t).consumers {
                    s.indeg[c] -= 1;
                }
            }
            s.placed += 1;
            go(s);
            s.placed -= 1;
            for &t in &op.outputs {
                for &c in &s.g.tensor(t).consumers {
                    s.indeg[c] += 1;
                }
            }
            s.indeg[v] = 0;
            for &t in &op.inputs {
                s.remaining[t] += 1;
            }
            s.resident = old_resident;
            s.peak = old_peak;
        }
    }
    let mut indeg = vec![0; g.num_ops()];
    for op in g.ops() {
        indeg[op.id] = op.inputs.len();
    }
    let mut s = State {
        g,
        indeg,
        remaining: g.tensors().iter().map(|t| t.consumers.len()).collect(),
        resident: 0,
        peak: 0,
        best: u64::MAX,
        placed: 0,
    };
    go(&mut s);
    s.best
}

/// Minimum capacity over all placement orders, each item dropped to the
/// lowest offset clear of every time-overlapping item placed before it.
/// Some order reproduces an optimal layout, so this is the optimum.
fn brute_force_layout(items: &[LayoutItem]) -> u64 {
    fn permute(items: &[LayoutItem], idx: &mut Vec<usize>, k: usize, best: &mut u64) {
        if k == idx.len() {
            let mut placed: Vec<(u64, &LayoutItem)> = Vec::new();
            let mut top = 0;
            for &i in idx.iter() {
                let it = &items[i];
                let mut o = 0;
                loop {
                    let clash = placed
                        .iter()
                        .filter(|(po, p)| p.overlaps_in_time(it) && *po < o + it.size && o < po + p.size)
                        .map(|(po, p)| po + p.size)
                        .max();
                    match clash {
                        Some(next) => o = next,
                        None => break,
                    }
                }
                top = top.max(o + it.size);
                placed.push((o, it));
            }
            *best = (*best).min(top);
            return;
        }
        for j in k..idx.len() {
            idx.swap(k, j);
            permute(items, idx, k + 1, best);
            idx.swap(k, j);
        }
    }
    let mut best = u64::MAX;
    permute(items, &mut (0..items.len()).collect(), 0, &mut best);
    if items.is_empty() {
        0
    } else {
        best
    }
}

fn training_graphs() -> Vec<(String, Graph)> {
    let mut out = Vec::new();
    for arch in Arch::ALL {
        for blocks in [1, 2, 4] {
            for opt in [Optimizer::Sgd, Optimizer::Adam] {
                let g = gen_training_graph(arch, blocks, TrainingSizes::default(), opt, blocks as u64).unwrap();
                out.push((format!("{arch:?}/{blocks}/{}", opt.name()), g));
            }
        }
    }
    out
}

fn c1_diamond() -> Outcome {
    let started = Instant::now();
    let g = diamond();
    let definition = g.topo_order().map_err(|e| e.to_string())?;
    let def_tp = oracle_peak(&g, &definition);
    let p = plan(&g, &PlannerConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let planned = oracle_peak(&g, p.schedule.order());
    check(def_tp == 120 * MB, || format!("definition order Tp {} MB", def_tp / MB))?;
    check(planned == 90 * MB && p.stats.theoretical_peak == 90 * MB, || format!("planner Tp {} MB", planned / MB))?;
    check(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("definition 120 MB, planner 90 MB, {elapsed:.2?}"))
}

fn c2_ordering_oracle() -> Outcome {
    let started = Instant::now();
    for seed in 0..100u64 {
        let n = 4 + (seed % 7) as usize;
        let g = gen_random_dag(n, 0.3, SizeDist::megabytes(1, 32), seed);
        let sol = exact_order(&OrderingProblem::whole_graph(&g, 1), Duration::from_secs(60)).map_err(|e| e.to_string())?;
        let oracle = brute_force_order(&g);
        let own = oracle_peak(&g, &sol.order());
        check(sol.optimal && sol.peak == oracle && own == oracle, || {
            format!("seed {seed}: exact {} (recomputed {own}), brute force {oracle}", sol.peak)
        })?;
    }
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("100/100 match, {elapsed:.2?}"))
}

fn c3_layout_oracle() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for k in 0..100 {
        let n = rng.gen_range(1..=8);
        let items: Vec<LayoutItem> = (0..n)
            .map(|t| {
                let start = rng.gen_range(0..10);
                LayoutItem { tensor: t, size: rng.gen_range(1..=16), start, end: start + rng.gen_range(0..5), activation: false }
            })
            .collect();
        let p = LayoutProblem::new(items, false);
        let sol = exact_layout(&p, Duration::from_secs(60)).map_err(|e| e.to_string())?;
        let oracle = brute_force_layout(&p.items);
        check(sol.optimal && sol.layout.capacity == oracle, || {
            format!("instance {k}: exact {}, brute force {oracle}", sol.layout.capacity)
        })?;
        check(memplan::layout::validate_items(&p.items, &sol.layout).is_empty(), || format!("instance {k}: invalid"))?;
    }
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("100/100 match, {elapsed:.2?}"))
}

fn c4_fragmentation() -> Outcome {
    let started = Instant::now();
    let mut worst = (0.0f64, String::new());
    for (name, g) in training_graphs() {
        let p = plan(&g, &PlannerConfig::default()).map_err(|e| e.to_string())?;
        let tp = oracle_peak(&g, p.schedule.order());
        let frag = 100.0 * (p.layout.capacity - tp) as f64 / p.layout.capacity as f64;
        check(frag < 1.0, || format!("{name}: {frag:.3}%"))?;
        if frag >= worst.0 {
            worst = (frag, name);
        }
    }
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(600), || format!("took {elapsed:?}"))?;
    Ok(format!("18 graphs, worst {:.3}% ({}), {elapsed:.2?}", worst.0, worst.1))
}

fn c5_divide_and_conquer() -> Outcome {
    for seed in 0..50u64 {
        let blocks = [4 + (seed % 3) as usize, 4 + (seed / 3 % 2) as usize];
        let g = gen_segmented_dag(&blocks, 0.35, SizeDist::megabytes(1, 32), 500 + seed);
        check(g.num_ops() <= 12, || format!("seed {seed}: {} ops", g.num_ops()))?;
        let mi = find_memory_insensitive(&g).map_err(|e| e.to_string())?;
        let interior = mi.iter().any(|&v| !g.predecessors(v).is_empty() && !g.successors(v).is_empty());
        check(interior, || format!("seed {seed}: no interior memory-insensitive op"))?;
        let p = plan(&g, &PlannerConfig::default()).map_err(|e| e.to_string())?;
        let whole = exact_order(&OrderingProblem::whole_graph(&g, 1), Duration::from_secs(60)).map_err(|e| e.to_string())?;
        let assembled = oracle_peak(&g, p.schedule.order());
        check(whole.optimal && assembled == whole.peak && p.stats.theoretical_peak == whole.peak, || {
            format!("seed {seed}: assembled {assembled}, whole graph {}", whole.peak)
        })?;
    }
    Ok("50/50 match".into())
}

fn c6_weight_update_delay() -> Outcome {
    let immediate_cfg = PlannerConfig { delay_radius: f64::INFINITY, ..Default::default() };
    let g = gen_delay_scenario();
    let p = plan(&g, &PlannerConfig::default()).map_err(|e| e.to_string())?;
    let i = plan(&g, &immediate_cfg).map_err(|e| e.to_string())?;
    let (pt, it) = (oracle_peak(&g, p.schedule.order()), oracle_peak(&g, i.schedule.order()));
    check(p.stats.delayed_updates == 1 && pt < it, || format!("crafted: planner {pt}, immediate {it}"))?;
    for (name, g) in training_graphs() {
        let p = plan(&g, &PlannerConfig::default()).map_err(|e| e.to_string())?;
        let i = plan(&g, &immediate_cfg).map_err(|e| e.to_string())?;
        check(p.stats.theoretical_peak <= i.stats.theoretical_peak, || {
            format!("{name}: planner {} > immediate {}", p.stats.theoretical_peak, i.stats.theoretical_peak)
        })?;
    }
    Ok(format!("crafted {} MB < {} MB immediate; 18 generated graphs no worse", pt / MB, it / MB))
}

fn c7_baseline_gaps() -> Outcome {
    let g = gen_greedy_trap(0).map_err(|e| e.to_string())?;
    let problem = OrderingProblem::whole_graph(&g, 1);
    let exact = exact_order(&problem, Duration::from_secs(60)).map_err(|e| e.to_string())?;
    let greedy = greedy_order(&problem);
    let (e, gr) = (oracle_peak(&g, &exact.order()), oracle_peak(&g, &greedy.order()));
    check(e < gr, || format!("greedy trap: exact {e}, greedy {gr}"))?;
    let p = llfb_gap_fixture();
    let ex = exact_layout(&p, Duration::from_secs(60)).map_err(|e| e.to_string())?.layout.capacity;
    let ll = llfb_layout(&p).capacity;
    check(ex < ll, || format!("llfb gap: exact {ex}, llfb {ll}"))?;
    Ok(format!("ordering exact {} < greedy {} MB; layout exact {ex} < llfb {ll}", e / MB, gr / MB))
}

fn c8_validity() -> Outcome {
    let started = Instant::now();
    let cfg = PlannerConfig {
        order_budget: Duration::from_secs(5),
        layout_budget: Duration::from_secs(2),
        ..Default::default()
    };
    for seed in 0..1000u64 {
        let g = match seed % 4 {
            0 => gen_segmented_dag(&[3 + (seed % 5) as usize, 4, 3], 0.3, SizeDist::megabytes(1, 64), seed),
            _ => gen_random_dag(3 + (seed % 14) as usize, 0.25, SizeDist::megabytes(1, 64), seed),
        };
        let p = plan(&g, &cfg).map_err(|e| format!("seed {seed}: {e}"))?;
        let s: &Schedule = &p.schedule;
        check(is_topological(&g, s.order()), || format!("seed {seed}: order not topological"))?;
        check(validate_layout(&g, s, &p.layout).is_empty(), || format!("seed {seed}: layout violations"))?;
        let r = replay_static(&g, s, &p.layout).map_err(|e| e.to_string())?;
        check(r.violations.is_empty(), || format!("seed {seed}: replay violations {:?}", r.violations))?;
        check(r.actual_peak <= p.layout.capacity, || format!("seed {seed}: replay exceeds capacity"))?;
        let (tp, _) = peak_memory(&g, s).map_err(|e| e.to_string())?;
        check(tp == oracle_peak(&g, s.order()), || format!("seed {seed}: peak mismatch"))?;
    }
    let elapsed = started.elapsed();
    check(elapsed < Duration::from_secs(600), || format!("took {elapsed:?}"))?;
    Ok(format!("1000/1000 valid, {elapsed:.2?}"))
}

fn c9_determinism() -> Outcome {
    let graphs = [gen_training_graph(Arch::TransformerBlock, 2, TrainingSizes::default(), Optimizer::Adam, 9).unwrap(),
        gen_training_graph(Arch::Mlp, 4, TrainingSizes::default(), Optimizer::Sgd, 9).unwrap(),
        gen_segmented_dag(&[6, 6, 6], 0.3, SizeDist::default(), 9),
        gen_delay_scenario()];
    for (k, g) in graphs.iter().enumerate() {
        let doc = |workers| -> Result<String, String> {
            let cfg = PlannerConfig { workers, seed: 7, ..Default::default() };
            Ok(PlanDoc::from_plan(g, &plan(g, &cfg).map_err(|e| e.to_string())?).to_json())
        };
        check(doc(1)? == doc(8)?, || format!("graph {k}: documents differ"))?;
    }
    Ok("4 graphs byte-identical with 1 and 8 workers".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("1 diamond peak", c1_diamond),
        ("2 ordering oracle", c2_ordering_oracle),
        ("3 layout oracle", c3_layout_oracle),
        ("4 fragmentation", c4_fragmentation),
        ("5 divide-and-conquer fidelity", c5_divide_and_conquer),
        ("6 weight-update delay", c6_weight_update_delay),
        ("7 baseline gaps", c7_baseline_gaps),
        ("8 plan validity", c8_validity),
        ("9 determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

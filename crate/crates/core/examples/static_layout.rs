//! Lays out items with similar lifetimes exactly and with long-lived-first
//! best fit, then prints both offset maps.

use std::time::Duration;

use memplan::layout::{exact_layout, llfb_gap_fixture, llfb_layout, MemoryLayout};

fn show(name: &str, m: &MemoryLayout) {
    let offsets: Vec<String> = m.offsets.iter().map(|(t, o)| format!("t{t}@{o}")).collect();
    println!("{name:<6} capacity {:>2}: {}", m.capacity, offsets.join(" "));
}

fn main() -> memplan::Result<()> {
    let p = llfb_gap_fixture();
    for i in &p.items {
        println!("t{}: size {} live [{}, {}]", i.tensor, i.size, i.start, i.end);
    }
    let exact = exact_layout(&p, Duration::from_secs(10))?;
    show("llfb", &llfb_layout(&p));
    show("exact", &exact.layout);
    println!("clique bound {}", p.clique_bound());
    Ok(())
}

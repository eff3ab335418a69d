//! Loads the IEEE 123-bus feeder and lists its switch configurations.
//!
//! cargo run --example feeder_configurations

use gridsense::feeder::Feeder;

fn main() -> gridsense::error::Result<()> {
    let feeder = Feeder::load(concat!(env!("CARGO_MANIFEST_DIR"), "/data/ieee123.json"))?;
    println!("{}: {} buses, {} physical lines", feeder.name, feeder.n() + 1, feeder.lines.len());
    let e = feeder.enumerate_configurations()?;
    for c in &e.feasible {
        let deepest = (1..=c.topology.n()).map(|b| c.topology.depth(b)).max().unwrap_or(0);
        let switches: Vec<usize> = c
            .topology
            .lines()
            .iter()
            .filter(|l| l.switchable)
            .map(|l| l.id)
            .collect();
        println!("config {:>2}: closed switches {:?}, depth {}", c.name, switches, deepest);
    }
    for (name, err) in &e.rejected {
        println!("config {name} rejected: {err}");
    }
    Ok(())
}

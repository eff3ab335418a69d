//! Builds a small radial feeder and prints its incidence and path matrices,
//! the identity `M·(−P) = I` and each line's downstream buses.
//!
//! cargo run --example tree_algebra

use gridsense::topology::{Bus, FeederTopology, Line};

fn main() -> gridsense::error::Result<()> {
    //      0
    //      |
    //      1
    //     / \
    //    2   3
    //        |
    //        4
    let topo = FeederTopology::new(
        (0..5).map(Bus::new).collect(),
        &[Line::new(10, 0, 1), Line::new(11, 1, 2), Line::new(12, 1, 3), Line::new(13, 3, 4)],
    )?;
    let m = topo.incidence().map(f64::from);
    let p = topo.path_matrix_f64();
    println!("reduced incidence M (lines × buses 1..=N):{m}");
    println!("path matrix P:{p}");
    println!("M·(−P):{}", &m * -&p);
    for line in topo.lines() {
        println!("line {} feeds buses {:?}", line.id, topo.downstream_buses(line.id)?);
    }
    for bus in 1..=topo.n() {
        println!("bus {bus}: depth {}, parent {:?}", topo.depth(bus), topo.parent(bus));
    }
    Ok(())
}

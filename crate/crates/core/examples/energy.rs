//! Discrete h-energies of the intersection-time measure.

use diamond_polymer::flow::Flow;
use diamond_polymer::intersections::energy_scan;

fn main() -> diamond_polymer::Result<()> {
    let profile = Flow::new(2)?.profile(0.0, 300)?;
    for h in [0.5, 1.5] {
        for e in energy_scan(&profile, &[25, 50, 100], h, 1000, 4)? {
            println!("h = {h}, n = {:>3}: Q = {:.4} +- {:.4}", e.n, e.mean, e.se);
        }
    }
    Ok(())
}

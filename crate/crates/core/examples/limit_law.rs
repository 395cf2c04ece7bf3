//! Pool approximation of the continuum partition function law.

use diamond_polymer::flow::Flow;
use diamond_polymer::polymer::sample_limit_mass_pool;

fn main() -> diamond_polymer::Result<()> {
    let flow = Flow::new(2)?;
    for r in [-4.0, -2.0, 0.0] {
        let p = flow.profile(r, 300)?;
        let s = sample_limit_mass_pool(2, r, 100, 200_000, 11)?;
        println!(
            "r = {r:>4}: var {:.4} (R {:.4}), m3 {:.4e} (R3 {:.4e})",
            s.variance(),
            p.at(0).r,
            s.central3(),
            p.at(0).r3
        );
    }
    Ok(())
}

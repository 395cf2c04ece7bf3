//! Fraction of limit masses below a threshold as the disorder strength grows.

use diamond_polymer::polymer::{strong_disorder_scan, DEFAULT_EPS};

fn main() -> diamond_polymer::Result<()> {
    let rs = [-8.0, -4.0, 0.0, 2.0, 4.0, 8.0];
    for (r, frac) in strong_disorder_scan(2, &rs, 100, 100_000, 3, DEFAULT_EPS)? {
        println!("r = {r:>4}: P[W < {DEFAULT_EPS}] = {frac:.4}");
    }
    Ok(())
}

//! Exact two-path correlation measure on a small diamond lattice.

use diamond_polymer::correlation::{build_table, lebesgue_split, XiHistogram};
use diamond_polymer::flow::Flow;

fn main() -> diamond_polymer::Result<()> {
    let (b, n, r) = (2u32, 2usize, 0.0);
    let profile = Flow::new(b)?.profile(r, 300)?;
    let table = build_table(b, n, &profile)?;
    println!("|Gamma_{n}| = {}", table.size());
    println!("total mass {:.12} vs 1 + R(r) = {:.12}", table.total(), 1.0 + profile.at(0).r);

    let (uniform, rho) = lebesgue_split(&table)?;
    let top = rho.iter().cloned().fold(0.0, f64::max);
    println!("absolutely continuous part {uniform:.6}, largest singular-part cell {top:.3e}");

    let hist = XiHistogram::new(b, 6)?;
    for (x, p) in hist.probabilities().iter().enumerate().take(8) {
        println!("P[xi_6 = {x}] = {p:.6e}");
    }
    println!("E[(1 + R(r-6))^xi] = {:.9}", hist.mass(profile.at(6).r));
    Ok(())
}

//! Monte Carlo of the finite-lattice partition function at the critical
//! inverse temperature, for the three disorder laws.

use diamond_polymer::flow::Flow;
use diamond_polymer::polymer::{simulate_partition, DisorderModel};

fn main() -> diamond_polymer::Result<()> {
    let target = Flow::new(2)?.eval_r(0.0, 300)?;
    println!("R(0) = {target:.4}");
    for model in [DisorderModel::Gaussian, DisorderModel::Rademacher, DisorderModel::ShiftedExponential] {
        for n in [4usize, 6] {
            let s = simulate_partition(2, n, 0.0, model, 5000, 7)?;
            println!(
                "{:<20} n = {n}  beta = {:.4}  mean = {:.4} +- {:.4}  var = {:.3} (exact {:.3})",
                model.name(),
                s.beta,
                s.stats.mean,
                s.stats.se_mean(),
                s.stats.variance(),
                s.exact_variance
            );
        }
    }
    Ok(())
}

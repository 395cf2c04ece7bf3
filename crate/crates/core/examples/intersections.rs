//! Surviving intersection chains under the singular correlation measure and
//! their martingale normalization.

use diamond_polymer::flow::Flow;
use diamond_polymer::intersections::{
    exp_moment_check, martingale_estimate, run_rho_chain, simulate_counts, tau_measure, OffspringTable,
};
use diamond_polymer::rng::stream;
use diamond_polymer::stats::RunStats;

fn main() -> diamond_polymer::Result<()> {
    let flow = Flow::new(2)?;
    let profile = flow.profile(0.0, 1002)?;
    let table = OffspringTable::new(&profile, 1000)?;
    let target = profile.at(0).rprime / profile.at(0).r;

    let ns = [10usize, 100, 1000];
    let sims = simulate_counts(&table, &ns, 5000, true, 1);
    for (i, &n) in ns.iter().enumerate() {
        let m = RunStats::from_slice(&sims.iter().map(|c| table.surviving_weight(n) * c[i].surviving as f64).collect::<Vec<_>>());
        let xi = sims.iter().map(|c| c[i].total() as f64).sum::<f64>() / sims.len() as f64;
        println!("n = {n:>4}: E[m~] = {:.4} +- {:.4} (target {target:.4}), mean xi = {xi:.1}", m.mean, m.se_mean());
    }

    let state = run_rho_chain(&table, 12, &mut stream(1, 0, 7))?;
    let tau = tau_measure(&state, &profile)?;
    println!("tau total mass {:.4} = m~ {:.4}", tau.total_mass(), martingale_estimate(&state, &profile)?);
    println!("tau([0, 1/2]) = {:.4}", tau.interval_mass(&[0]));

    for a in [-0.5, 0.5] {
        let (m, se) = exp_moment_check(a, 200, 20_000, &profile, 2)?;
        let exact = flow.eval_r(a, 300)? / profile.at(0).r;
        println!("a = {a:+}: E[exp(a m~)] = {m:.4} +- {se:.4}, R(a)/R(0) = {exact:.4}");
    }
    Ok(())
}

//! Variance flow `R`, its derivative and the higher centered moments, plus
//! the two-point correlation growth `C_{r,n} ~ c n^8`.

use diamond_polymer::flow::{energy_series_partials, eval_beta, log_vartheta_correlations, Flow, FlowConstants};

fn main() -> diamond_polymer::Result<()> {
    for b in [2u32, 3] {
        let flow = Flow::new(b)?;
        println!("b = {b}");
        println!("{:>6} {:>14} {:>14} {:>14} {:>14}", "r", "R", "R'", "R3", "R4");
        for r in [-5.0, -2.0, 0.0, 1.0, 2.0] {
            let p = flow.profile(r, 300)?;
            let x = p.at(0);
            println!("{r:>6.1} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}", x.r, x.rprime, x.r3, x.r4);
        }
    }

    let c = FlowConstants::new(2, 0.0)?;
    for n in [10usize, 100, 1000] {
        println!("beta(n = {n}, r = 0) = {:.6}", eval_beta(n, 0.0, &c)?);
    }

    let p = Flow::new(2)?.profile(0.0, 4100)?;
    let logc = log_vartheta_correlations(4000, &p)?;
    for n in [500usize, 1000, 2000, 4000] {
        println!("C_n / n^8 at n = {n}: {:.6e}", (logc[n] - 8.0 * (n as f64).ln()).exp());
    }
    for lambda in [8.5, 9.0, 10.0] {
        let s = energy_series_partials(lambda, 4000, &p)?;
        println!("lambda = {lambda}: S(2000) = {:.6e}, S(4000) = {:.6e}", s[2000], s[4000]);
    }
    Ok(())
}

use diamond_polymer::flow::Flow;
use diamond_polymer::intersections::{simulate_counts, simulate_counts_upsilon, OffspringTable};
use diamond_polymer::stats::{weighted_slope, RunStats};

#[test]
fn total_overlap_martingale_is_constant_under_normalized_upsilon() {
    let p = Flow::new(2).unwrap().profile(0.0, 300).unwrap();
    let r0 = p.at(0).r;
    let target = p.at(0).rprime / (1.0 + r0);
    let table = OffspringTable::new(&p, 60).unwrap();
    let ns = [5usize, 20, 60];
    let sims = simulate_counts_upsilon(&table, r0, &ns, 100_000, 21);
    let (mut x, mut y, mut se) = (Vec::new(), Vec::new(), Vec::new());
    for (i, &n) in ns.iter().enumerate() {
        let s = RunStats::from_slice(&sims.iter().map(|c| table.total_weight(n) * c[i].total() as f64).collect::<Vec<_>>());
        let z = (s.mean - target) / s.se_mean();
        assert!(z.abs() < 3.0, "n = {n}: {} vs {target}, z = {z}", s.mean);
        x.push(n as f64);
        y.push(s.mean);
        se.push(s.se_mean());
    }
    let (slope, slope_se) = weighted_slope(&x, &y, &se);
    assert!((slope / slope_se).abs() < 3.0);
}

#[test]
fn paired_estimators_merge_at_rate_inverse_sqrt_n() {
    let p = Flow::new(2).unwrap().profile(0.0, 10_002).unwrap();
    let table = OffspringTable::new(&p, 10_000).unwrap();
    let ns = [100usize, 1000, 10_000];
    let runs = 2000;
    let sims = simulate_counts(&table, &ns, runs, true, 22);
    let rms: Vec<f64> = ns
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let ss = sims
                .iter()
                .map(|c| (table.total_weight(n) * c[i].total() as f64 - table.surviving_weight(n) * c[i].surviving as f64).powi(2))
                .sum::<f64>();
            (ss / runs as f64).sqrt()
        })
        .collect();
    for (w, ns) in rms.windows(2).zip(ns.windows(2)) {
        let expected = (ns[1] as f64 / ns[0] as f64).sqrt();
        let ratio = w[0] / w[1];
        assert!(ratio > expected / 2.0 && ratio < expected * 2.0, "rms {rms:?}");
    }
}

#[test]
fn surviving_chain_never_dies() {
    let p = Flow::new(3).unwrap().profile(1.0, 500).unwrap();
    let table = OffspringTable::new(&p, 400).unwrap();
    let sims = simulate_counts(&table, &[1, 10, 100, 400], 2000, true, 23);
    assert!(sims.iter().flatten().all(|c| c.surviving >= 1 && c.total() >= c.surviving));
}

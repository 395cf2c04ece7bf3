//! Acceptance criteria 1 to 12. Each test prints one `PASS`/`FAIL` line and
//! then asserts. Tests hold a global lock so runtime budgets are measured on
//! an otherwise idle process.

use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;

use diamond_polymer::correlation::build_table;
use diamond_polymer::flow::{energy_series_partials, log_vartheta_correlations, moment_step, Flow};
use diamond_polymer::intersections::{
    exp_moment_check, extinction_prob, energy_scan, gw_extinct_by, hausdorff_scan, log_hausdorff_from_count, simulate_counts, OffspringTable,
};
use diamond_polymer::polymer::{sample_limit_mass_pool, simulate_partition, DisorderModel};
use diamond_polymer::rng::stream;
use diamond_polymer::stats::{median, weighted_slope, RunStats};

static LOCK: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(id: u32, title: &str, pass: bool, elapsed: Duration, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id:>2} {tag}: {title} [{:.1} s] {detail}", elapsed.as_secs_f64());
    assert!(pass, "criterion {id} failed: {detail}");
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn criterion_01_exact_correlation_identity() {
    let _g = serial();
    let t = Instant::now();
    let mut mass = 0.0f64;
    let mut marg = 0.0f64;
    for (b, max_n) in [(2u32, 3usize), (3, 2)] {
        let flow = Flow::new(b).unwrap();
        for r in [-3.0, 0.0, 2.0] {
            let profile = flow.profile(r, 300).unwrap();
            for n in 1..=max_n {
                let table = build_table(b, n, &profile).unwrap();
                let target = 1.0 + profile.at(0).r;
                mass = mass.max(rel(table.total(), target));
                let each = target / table.size() as f64;
                for i in 0..table.size() {
                    marg = marg.max(rel(table.row_marginal(i), each)).max(rel(table.column_marginal(i), each));
                }
            }
        }
    }
    let el = t.elapsed();
    let pass = mass <= 1e-9 && marg <= 1e-9 && el < Duration::from_secs(1);
    verdict(1, "exact correlation identity", pass, el, &format!("mass defect {mass:.2e}, marginal defect {marg:.2e}"));
}

#[test]
fn criterion_02_flow_self_consistency() {
    let _g = serial();
    let t = Instant::now();
    let mut doubling = 0.0f64;
    let mut chain = 0.0f64;
    for b in [2u32, 3] {
        let flow = Flow::new(b).unwrap();
        for i in 0..=20 {
            let r = -5.0 + 0.5 * i as f64;
            doubling = doubling.max(rel(flow.eval_r(r, 300).unwrap(), flow.eval_r(r, 600).unwrap()));
        }
        let p = flow.profile(5.0, 300).unwrap();
        let mut product = 1.0;
        for k in 0..p.depth() {
            product *= (1.0 + p.at(k + 1).r).powi(b as i32 - 1);
            chain = chain.max(rel(p.at(0).rprime, p.at(k + 1).rprime * product));
            let (hi, lo) = (p.at(k), p.at(k + 1));
            chain = chain.max(rel(hi.rprime, lo.rprime * (1.0 + lo.r).powi(b as i32 - 1)));
        }
    }
    let n = 10_000.0;
    let scaled = n * Flow::new(2).unwrap().eval_r(-n, 300).unwrap() / 2.0;
    let el = t.elapsed();
    let pass = doubling <= 1e-6 && chain <= 1e-12 && (scaled - 1.0).abs() <= 2e-3 && el < Duration::from_secs(1);
    verdict(
        2,
        "flow self-consistency",
        pass,
        el,
        &format!("doubling {doubling:.2e}, chain rule {chain:.2e}, n R(-n)/kappa^2 = {scaled:.6}"),
    );
}

#[test]
fn criterion_03_moment_recursion_vs_monte_carlo() {
    let _g = serial();
    let t = Instant::now();
    // W uniform on {0.5, 1.5}
    let (r2, r3, r4) = (0.25, 0.0, 0.0625);
    let samples = 10_000_000usize;
    let mut worst = 0.0f64;
    let mut details = Vec::new();
    for b in [2u32, 3] {
        let (e2, e3, e4) = moment_step(r2, r3, r4, b);
        let mut rng = stream(3, 0, u64::from(b));
        let bu = b as usize;
        let (mut s2, mut s3, mut s4) = (RunStats::new(), RunStats::new(), RunStats::new());
        for _ in 0..samples {
            let mut total = 0.0;
            for _ in 0..bu {
                let mut prod = 1.0;
                for _ in 0..bu {
                    prod *= if rng.random::<bool>() { 0.5 } else { 1.5 };
                }
                total += prod;
            }
            let y = total / b as f64 - 1.0;
            s2.push(y * y);
            s3.push(y * y * y);
            s4.push(y * y * y * y);
        }
        for (name, s, exact) in [("R", s2, e2), ("R3", s3, e3), ("R4", s4, e4)] {
            let z = (s.mean - exact) / s.se_mean();
            worst = worst.max(z.abs());
            details.push(format!("b={b} {name} z={z:.2}"));
        }
    }
    let el = t.elapsed();
    let pass = worst < 3.0 && el < Duration::from_secs(120);
    verdict(3, "moment recursion vs Monte Carlo", pass, el, &details.join(", "));
}

#[test]
fn criterion_04_critical_gw_extinction() {
    let _g = serial();
    let t = Instant::now();
    let runs = 100_000;
    let mut rng = stream(4, 0, 0);
    let dead = (0..runs).filter(|_| gw_extinct_by(2, 10, &mut rng)).count() as f64 / runs as f64;
    let p = extinction_prob(2, 10);
    let z = (dead - p) / (p * (1.0 - p) / runs as f64).sqrt();
    let exact3 = extinction_prob(2, 3) == 0.6953125;
    let el = t.elapsed();
    let pass = z.abs() < 3.0 && exact3 && el < Duration::from_secs(10);
    verdict(4, "critical GW extinction", pass, el, &format!("freq {dead:.5} vs {p:.5}, z = {z:.2}, psi^3 exact {exact3}"));
}

#[test]
fn criterion_05_martingale_constancy() {
    let _g = serial();
    let t = Instant::now();
    let profile = Flow::new(2).unwrap().profile(0.0, 300).unwrap();
    let target = profile.at(0).rprime / profile.at(0).r;
    let ns = [5usize, 10, 20, 40, 60];
    let table = OffspringTable::new(&profile, 60).unwrap();
    let sims = simulate_counts(&table, &ns, 100_000, false, 5);
    let (mut x, mut y, mut se) = (Vec::new(), Vec::new(), Vec::new());
    let mut zmax = 0.0f64;
    for (i, &n) in ns.iter().enumerate() {
        let s = RunStats::from_slice(
            &sims.iter().map(|c| table.surviving_weight(n) * c[i].surviving as f64).collect::<Vec<_>>(),
        );
        zmax = zmax.max(((s.mean - target) / s.se_mean()).abs());
        x.push(n as f64);
        y.push(s.mean);
        se.push(s.se_mean());
    }
    let (slope, slope_se) = weighted_slope(&x, &y, &se);
    let el = t.elapsed();
    let pass = zmax < 3.0 && (slope / slope_se).abs() < 3.0 && el < Duration::from_secs(60);
    verdict(
        5,
        "rho martingale constancy",
        pass,
        el,
        &format!("means {y:.4?} vs {target:.5}, max |z| {zmax:.2}, slope z {:.2}", slope / slope_se),
    );
}

#[test]
fn criterion_06_growth_laws() {
    let _g = serial();
    let t = Instant::now();
    let profile = Flow::new(2).unwrap().profile(0.0, 10_002).unwrap();
    let table = OffspringTable::new(&profile, 10_000).unwrap();
    let spread = |v: &[f64]| {
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        let lo = v.iter().cloned().fold(f64::MAX, f64::min);
        hi / lo - 1.0
    };
    let lin_ns = [1000usize, 2000, 5000, 10_000];
    let sims = simulate_counts(&table, &lin_ns, 10_000, false, 6);
    let lin: Vec<f64> = (0..lin_ns.len())
        .map(|i| median(&mut sims.iter().map(|c| c[i].surviving as f64 / lin_ns[i] as f64).collect::<Vec<_>>()))
        .collect();
    let quad_ns = [100usize, 200, 500, 1000];
    let sims = simulate_counts(&table, &quad_ns, 10_000, true, 7);
    let quad: Vec<f64> = (0..quad_ns.len())
        .map(|i| median(&mut sims.iter().map(|c| c[i].total() as f64 / (quad_ns[i] * quad_ns[i]) as f64).collect::<Vec<_>>()))
        .collect();
    let el = t.elapsed();
    let pass = spread(&lin) < 0.10 && spread(&quad) < 0.10;
    verdict(6, "growth laws", pass, el, &format!("median xi~/n {lin:.4?}, median xi/n^2 {quad:.4?}"));
}

#[test]
fn criterion_07_exponential_moment_identity() {
    let _g = serial();
    let t = Instant::now();
    let flow = Flow::new(2).unwrap();
    let profile = flow.profile(0.0, 300).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for a in [-0.5, 0.5] {
        let exact = flow.eval_r(a, 300).unwrap() / profile.at(0).r;
        let (m100, _) = exp_moment_check(a, 100, 100_000, &profile, 8).unwrap();
        let (m200, se) = exp_moment_check(a, 200, 100_000, &profile, 8).unwrap();
        let (b100, b200) = (m100 / exact - 1.0, m200 / exact - 1.0);
        pass &= b200.abs() < 0.05 && b200.abs() < b100.abs();
        details.push(format!("a={a}: n=100 bias {b100:+.4}, n=200 bias {b200:+.4} (se {:.4})", se / exact));
    }
    let el = t.elapsed();
    pass &= el < Duration::from_secs(120);
    verdict(7, "exponential moment identity", pass, el, &details.join("; "));
}

#[test]
fn criterion_08_weak_disorder_universality() {
    let _g = serial();
    let t = Instant::now();
    let r0 = Flow::new(2).unwrap().eval_r(0.0, 300).unwrap();
    let samples = 20_000;
    let mut mean_ok = true;
    let mut details = Vec::new();
    let mut gauss = Vec::new();
    for n in [6usize, 8, 10] {
        let s = simulate_partition(2, n, 0.0, DisorderModel::Gaussian, samples, 80).unwrap().stats;
        mean_ok &= ((s.mean - 1.0) / s.se_mean()).abs() < 3.0;
        details.push(format!("n={n} mean {:.4} var {:.3}+-{:.3}", s.mean, s.variance(), s.se_variance()));
        gauss.push(s);
    }
    let rad = simulate_partition(2, 10, 0.0, DisorderModel::Rademacher, samples, 81).unwrap().stats;
    details.push(format!("rademacher n=10 var {:.3}+-{:.3}", rad.variance(), rad.se_variance()));
    let (g6, g10) = (gauss[0], gauss[2]);
    let near = rel(g10.variance(), r0) <= 0.15;
    let closer = (g10.variance() - r0).abs() < (g6.variance() - r0).abs();
    let universal = (g10.variance() - rad.variance()).abs() < 3.0 * (g10.se_variance() + rad.se_variance());
    let el = t.elapsed();
    let pass = mean_ok && near && closer && universal && el < Duration::from_secs(600);
    verdict(
        8,
        "weak-disorder universality",
        pass,
        el,
        &format!("R(0) = {r0:.4}; {}; means {mean_ok}, within 15% {near}, closer {closer}, universal {universal}", details.join("; ")),
    );
}

#[test]
fn criterion_09_limit_law_sampler() {
    let _g = serial();
    let t = Instant::now();
    let p = Flow::new(2).unwrap().profile(0.0, 300).unwrap();
    let (r, r3) = (p.at(0).r, p.at(0).r3);
    let a = sample_limit_mass_pool(2, 0.0, 100, 1_000_000, 9).unwrap();
    let d = sample_limit_mass_pool(2, 0.0, 100, 2_000_000, 10).unwrap();
    let var_ok = rel(a.variance(), r) <= 0.02;
    let m3_ok = rel(a.central3(), r3) <= 0.10;
    let stable = rel(d.variance(), a.variance()) <= 0.02 && rel(d.central3(), a.central3()) <= 0.10;
    let el = t.elapsed();
    let pass = var_ok && m3_ok && stable && el < Duration::from_secs(300);
    verdict(
        9,
        "limit-law pool sampler",
        pass,
        el,
        &format!(
            "var {:.4} / {:.4} vs R {r:.4}; m3 {:.4e} / {:.4e} vs R3 {r3:.4e}",
            a.variance(),
            d.variance(),
            a.central3(),
            d.central3()
        ),
    );
}

#[test]
fn criterion_10_spatial_correlation_exponent() {
    let _g = serial();
    let t = Instant::now();
    let p = Flow::new(2).unwrap().profile(0.0, 4100).unwrap();
    let logc = log_vartheta_correlations(4000, &p).unwrap();
    let c_ratio = (logc[4000] - logc[2000] - 8.0 * 2f64.ln()).exp();
    let s10 = energy_series_partials(10.0, 4000, &p).unwrap();
    let tail10 = rel(s10[4000], s10[2000]);
    let s85 = energy_series_partials(8.5, 4000, &p).unwrap();
    let growth = s85[4000] / s85[2000];
    let el = t.elapsed();
    let pass = (c_ratio - 1.0).abs() < 0.02 && tail10 < 1e-6 && growth >= 2f64.powf(0.4) && el < Duration::from_secs(5);
    verdict(
        10,
        "spatial correlation exponent",
        pass,
        el,
        &format!("C/n^8 ratio {c_ratio:.5}, lambda=10 relative tail {tail10:.3e}, lambda=8.5 growth {growth:.4}"),
    );
}

#[test]
fn criterion_11_log_hausdorff_behavior() {
    let _g = serial();
    let t = Instant::now();
    let p = Flow::new(2).unwrap().profile(0.0, 10_002).unwrap();
    let table = OffspringTable::new(&p, 10_000).unwrap();
    let ns = [1000usize, 2000, 5000, 10_000];
    let runs = 10_000;
    let ln_b = 2f64.ln();

    let sims = simulate_counts(&table, &ns, runs, false, 11);
    let mut track = 0.0f64;
    for (i, &n) in ns.iter().enumerate() {
        let m = sims.iter().map(|c| table.surviving_weight(n) * c[i].surviving as f64).sum::<f64>() / runs as f64;
        let h1 = sims
            .iter()
            .map(|c| log_hausdorff_from_count(2, n, c[i].surviving, 1.0).unwrap())
            .sum::<f64>()
            / runs as f64;
        track = track.max(rel(h1, m / ln_b));
    }

    let trend = |x: &[f64], est: &[(f64, f64)]| {
        let y: Vec<f64> = est.iter().map(|e| e.0).collect();
        let se: Vec<f64> = est.iter().map(|e| e.1).collect();
        let (s, s_se) = weighted_slope(x, &y, &se);
        s / s_se
    };
    let log_ns: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let h15 = hausdorff_scan(&table, &ns, 1.5, runs, 12).unwrap();
    let h15_z = trend(&log_ns, &h15.iter().map(|e| (e.mean, e.se)).collect::<Vec<_>>());

    let ens = [50usize, 100, 200, 400];
    let log_ens: Vec<f64> = ens.iter().map(|&n| (n as f64).ln()).collect();
    let e05 = energy_scan(&p, &ens, 0.5, runs, 13).unwrap();
    let e15 = energy_scan(&p, &ens, 1.5, runs, 14).unwrap();
    let e05_z = trend(&log_ens, &e05.iter().map(|e| (e.mean, e.se)).collect::<Vec<_>>());
    let e15_z = trend(&log_ens, &e15.iter().map(|e| (e.mean, e.se)).collect::<Vec<_>>());

    let el = t.elapsed();
    let pass = track <= 0.02 && h15_z < -3.0 && e05_z.abs() < 3.0 && e15_z > 3.0;
    let fmt = |v: &[diamond_polymer::intersections::Estimate]| {
        v.iter().map(|e| format!("{:.4}+-{:.4}", e.mean, e.se)).collect::<Vec<_>>().join(" ")
    };
    verdict(
        11,
        "log-Hausdorff behavior",
        pass,
        el,
        &format!(
            "h=1 tracking {track:.4}; h=1.5 sums slope z {h15_z:.1}; energy h=0.5 [{}] slope z {e05_z:.2}; energy h=1.5 [{}] slope z {e15_z:.1}",
            fmt(&e05),
            fmt(&e15)
        ),
    );
}

fn dpl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_dpl")).args(args).output().expect("dpl runs")
}

#[test]
fn criterion_12_determinism_and_selftest() {
    let _g = serial();
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["polymer-sim", "--b", "2", "--n", "4", "--r", "0", "--samples", "3000", "--seed", "42"],
        &["limit-sim", "--levels", "30", "--pool-size", "20000", "--seed", "42"],
        &["intersections-sim", "--n-list", "10,50", "--runs", "500", "--seed", "42"],
        &["energy", "--n-list", "10,20", "--h", "0.5", "--runs", "200", "--seed", "42"],
    ];
    let mut identical = true;
    for (i, case) in cases.iter().enumerate() {
        let mut outputs = Vec::new();
        for threads in ["1", "3"] {
            let path = dir.path().join(format!("case{i}_t{threads}.csv"));
            let mut args: Vec<&str> = case.to_vec();
            let p = path.to_str().unwrap().to_string();
            args.extend(["--threads", threads, "--output", &p]);
            let out = dpl(&args);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            let meta: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(format!("{p}.meta.json")).unwrap()).unwrap();
            outputs.push((std::fs::read(&path).unwrap(), meta["metrics"].clone()));
        }
        identical &= outputs[0] == outputs[1];
    }
    let st = Instant::now();
    let out = dpl(&["selftest"]);
    let selftest_time = st.elapsed();
    let selftest_ok = out.status.success() && selftest_time < Duration::from_secs(60);
    let el = t.elapsed();
    verdict(
        12,
        "determinism and selftest",
        identical && selftest_ok,
        el,
        &format!("outputs identical across 1 and 3 threads {identical}; selftest ok {selftest_ok} in {:.2} s", selftest_time.as_secs_f64()),
    );
}

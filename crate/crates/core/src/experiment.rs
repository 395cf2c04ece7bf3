//! Reproducible experiment runner behind the `dpl` binary.
//!
//! An [`ExperimentConfig`] names one operation and its parameters. [`run`]
//! executes it, writes the declared CSV (or JSON) table and, next to it, a
//! `<output>.meta.json` sidecar holding the [`RunRecord`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::correlation::{build_table, lebesgue_split, XiHistogram};
use crate::csv_out::{num, CsvTable};
use crate::error::{Error, Result};
use crate::flow::{
    energy_series_partials, log_vartheta_correlations, map_m, moment_step, Flow, VarianceProfile, DEFAULT_DEPTH,
    VALIDITY_FLOOR,
};
use crate::intersections::{
    counts_csv, energy_csv, energy_scan, extinction_prob, gw_extinct_by, hausdorff_csv, hausdorff_scan,
    offspring_law, run_rho_chain, simulate_counts, tau_measure, martingale_estimate, OffspringTable,
};
use crate::lattice::{enumerate_paths, LatticeParams};
use crate::polymer::{
    base_array, simulate_partition, sample_limit_mass_pool, strong_disorder_scan, streamed_total, DisorderModel,
    WeightSampler, DEFAULT_EPS,
};
use crate::rng::stream;
use crate::stats::RunStats;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
const SELFTEST_SEED: u64 = 0x5EED_2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Flow,
    CorrelationCheck,
    PolymerSim,
    LimitSim,
    DisorderScan,
    IntersectionsSim,
    Hausdorff,
    Energy,
    Selftest,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Flow => "flow",
            Self::CorrelationCheck => "correlation-check",
            Self::PolymerSim => "polymer-sim",
            Self::LimitSim => "limit-sim",
            Self::DisorderScan => "disorder-scan",
            Self::IntersectionsSim => "intersections-sim",
            Self::Hausdorff => "hausdorff",
            Self::Energy => "energy",
            Self::Selftest => "selftest",
        }
    }

    fn allowed(&self) -> &'static [&'static str] {
        match self {
            Self::Flow => &["b", "r", "depth", "n", "lambda"],
            Self::CorrelationCheck => &["b", "r", "n", "depth"],
            Self::PolymerSim => &["b", "r", "n", "model", "samples", "seed"],
            Self::LimitSim => &["b", "r", "levels", "pool_size", "seed"],
            Self::DisorderScan => &["b", "r_list", "levels", "pool_size", "eps", "seed"],
            Self::IntersectionsSim => &["b", "r", "n", "n_list", "runs", "a", "seed"],
            Self::Hausdorff | Self::Energy => &["b", "r", "n_list", "h", "runs", "seed"],
            Self::Selftest => &["seed"],
        }
    }

    fn needs_seed(&self) -> bool {
        !matches!(self, Self::Flow | Self::CorrelationCheck | Self::Selftest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Inputs of one experiment. Absent fields take per-command defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<DisorderModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            b: None,
            r: None,
            n: None,
            n_list: None,
            r_list: None,
            levels: None,
            depth: None,
            samples: None,
            runs: None,
            pool_size: None,
            model: None,
            h: None,
            lambda: None,
            a: None,
            eps: None,
            seed: None,
            output: None,
            format: Format::Csv,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn present(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut mark = |name, set: bool| {
            if set {
                out.push(name);
            }
        };
        mark("b", self.b.is_some());
        mark("r", self.r.is_some());
        mark("n", self.n.is_some());
        mark("n_list", self.n_list.is_some());
        mark("r_list", self.r_list.is_some());
        mark("levels", self.levels.is_some());
        mark("depth", self.depth.is_some());
        mark("samples", self.samples.is_some());
        mark("runs", self.runs.is_some());
        mark("pool_size", self.pool_size.is_some());
        mark("model", self.model.is_some());
        mark("h", self.h.is_some());
        mark("lambda", self.lambda.is_some());
        mark("a", self.a.is_some());
        mark("eps", self.eps.is_some());
        mark("seed", self.seed.is_some());
        out
    }

    /// Range and applicability checks; run before any work.
    pub fn validate(&self) -> Result<()> {
        let cmd = self.command;
        let bad = |msg: String| Err(Error::Config(format!("{}: {msg}", cmd.name())));
        for field in self.present() {
            if !cmd.allowed().contains(&field) {
                return bad(format!("`{field}` does not apply"));
            }
        }
        if cmd.needs_seed() && self.seed.is_none() {
            return bad("a seed is required".into());
        }
        if let Some(b) = self.b {
            if !(2..=16).contains(&b) {
                return bad(format!("b = {b} outside 2..=16"));
            }
        }
        for (name, v) in [("r", self.r), ("h", self.h), ("lambda", self.lambda), ("a", self.a), ("eps", self.eps)] {
            if let Some(v) = v {
                if !v.is_finite() {
                    return bad(format!("{name} must be finite"));
                }
            }
        }
        if self.h.is_some_and(|h| h < 0.0) {
            return bad("h must be nonnegative".into());
        }
        if self.eps.is_some_and(|e| e <= 0.0) {
            return bad("eps must be positive".into());
        }
        for (name, v) in [("samples", self.samples), ("runs", self.runs), ("levels", self.levels)] {
            if v == Some(0) {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.r_list.as_ref().is_some_and(|l| l.is_empty() || l.iter().any(|r| !r.is_finite())) {
            return bad("r_list must be a nonempty list of finite values".into());
        }
        if self.n_list.as_ref().is_some_and(|l| l.is_empty() || l.iter().any(|&n| n == 0)) {
            return bad("n_list must be a nonempty list of positive generations".into());
        }
        if matches!(cmd, Command::PolymerSim | Command::IntersectionsSim) && self.n == Some(0) {
            return bad("n must be positive".into());
        }
        Ok(())
    }

    fn b(&self) -> u32 {
        self.b.unwrap_or(2)
    }

    fn r(&self) -> f64 {
        self.r.unwrap_or(0.0)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(SELFTEST_SEED)
    }
}

/// A value with an optional standard error; non-finite values are stored as
/// absent so records always round-trip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
}

impl Metric {
    pub fn exact(value: f64) -> Self {
        Self { value: value.is_finite().then_some(value), se: None }
    }

    pub fn estimate(value: f64, se: f64) -> Self {
        Self { value: value.is_finite().then_some(value), se: se.is_finite().then_some(se) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.to_string(), passed, detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub version: String,
    pub wall_clock_seconds: f64,
    pub metrics: BTreeMap<String, Metric>,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl RunRecord {
    pub fn failed_checks(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Table, metrics and checks produced by one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub table: CsvTable,
    pub metrics: BTreeMap<String, Metric>,
    pub checks: Vec<Check>,
}

impl Outcome {
    fn new(table: CsvTable) -> Self {
        Self { table, metrics: BTreeMap::new(), checks: Vec::new() }
    }

    fn metric(&mut self, name: impl Into<String>, m: Metric) {
        self.metrics.insert(name.into(), m);
    }

    fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Validates, executes, writes outputs (when `output` is set) and returns the record.
pub fn run(config: &ExperimentConfig) -> Result<(RunRecord, Outcome)> {
    run_with_hooks(config, &Hooks::default())
}

#[doc(hidden)]
pub fn run_with_hooks(config: &ExperimentConfig, hooks: &Hooks) -> Result<(RunRecord, Outcome)> {
    config.validate()?;
    let start = Instant::now();
    let outcome = execute(config, hooks)?;
    let record = RunRecord {
        config: config.clone(),
        version: VERSION.to_string(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        passed: outcome.passed(),
        metrics: outcome.metrics.clone(),
        checks: outcome.checks.clone(),
    };
    if let Some(path) = &config.output {
        write_outputs(path, config.format, &outcome.table, &record)?;
    }
    Ok((record, outcome))
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn render_table(table: &CsvTable, format: Format) -> Result<String> {
    match format {
        Format::Csv => Ok(table.render()),
        Format::Json => {
            let rows: Vec<serde_json::Map<String, serde_json::Value>> = table
                .rows()
                .iter()
                .map(|row| {
                    table
                        .header()
                        .iter()
                        .zip(row)
                        .map(|(k, v)| ((*k).to_string(), json_cell(v)))
                        .collect()
                })
                .collect();
            Ok(serde_json::to_string_pretty(&rows)? + "\n")
        }
    }
}

fn json_cell(v: &str) -> serde_json::Value {
    if let Ok(i) = v.parse::<i64>() {
        return i.into();
    }
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => x.into(),
        _ => v.into(),
    }
}

fn write_outputs(path: &Path, format: Format, table: &CsvTable, record: &RunRecord) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, render_table(table, format)?)?;
    fs::write(sidecar_path(path), record.to_json()? + "\n")?;
    Ok(())
}

/// Fault injection for the selftest's negative path.
#[doc(hidden)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Hooks {
    pub flow_seed_perturbation: f64,
}

#[doc(hidden)]
pub fn execute(config: &ExperimentConfig, hooks: &Hooks) -> Result<Outcome> {
    match config.command {
        Command::Flow => run_flow(config),
        Command::CorrelationCheck => run_correlation(config),
        Command::PolymerSim => run_polymer(config),
        Command::LimitSim => run_limit(config),
        Command::DisorderScan => run_scan(config),
        Command::IntersectionsSim => run_intersections(config),
        Command::Hausdorff => run_hausdorff(config),
        Command::Energy => run_energy(config),
        Command::Selftest => selftest(config.seed(), hooks),
    }
}

/// Depth that reaches generation `need` below `r` with an admissible anchor.
pub fn profile_depth(r: f64, need: usize) -> usize {
    let floor = (r - VALIDITY_FLOOR).ceil().max(0.0) as usize;
    DEFAULT_DEPTH.max(need).max(floor)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn run_flow(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (b, r) = (cfg.b(), cfg.r());
    let n = cfg.n;
    let depth = cfg.depth.unwrap_or_else(|| profile_depth(r, n.map_or(0, |n| n + 1)));
    let flow = Flow::new(b)?;
    let profile = flow.profile(r, depth)?;
    let mut out = Outcome::new(profile.to_csv());
    let p0 = *profile.at(0);
    out.metric("R", Metric::exact(p0.r));
    out.metric("Rprime", Metric::exact(p0.rprime));
    out.metric("R3", Metric::exact(p0.r3));
    out.metric("R4", Metric::exact(p0.r4));
    let doubled = flow.eval_r(r, 2 * depth)?;
    let d = rel(p0.r, doubled);
    out.check(Check::new("flow.depth_doubling", d <= 1e-6, format!("relative change {d:.3e} at depth {depth}")));
    out.check(chain_rule_check(&profile));
    if let Some(n) = n {
        let logc = log_vartheta_correlations(n, &profile)?;
        out.metric(format!("C_{{r,{n}}}"), Metric::exact(logc[n].exp()));
        out.metric(format!("C_{{r,{n}}}/n^8"), Metric::exact((logc[n] - 8.0 * (n as f64).ln()).exp()));
        if let Some(lambda) = cfg.lambda {
            let s = energy_series_partials(lambda, n, &profile)?;
            out.metric(format!("energy_partial_sum_lambda_{lambda}"), Metric::exact(s[n]));
        }
    }
    Ok(out)
}

fn chain_rule_check(profile: &VarianceProfile) -> Check {
    let b = profile.b();
    let mut worst = 0.0f64;
    for k in 0..profile.depth() {
        let (hi, lo) = (profile.at(k), profile.at(k + 1));
        worst = worst.max(rel(hi.rprime, lo.rprime * (1.0 + lo.r).powi(b as i32 - 1)));
        worst = worst.max(rel(hi.r, map_m(lo.r, b)));
    }
    Check::new("flow.chain_rule", worst <= 1e-12, format!("max relative defect {worst:.3e}"))
}

fn run_correlation(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (b, r) = (cfg.b(), cfg.r());
    let n = cfg.n.unwrap_or(2);
    let depth = cfg.depth.unwrap_or_else(|| profile_depth(r, n));
    let profile = Flow::new(b)?.profile(r, depth)?;
    let table = build_table(b, n, &profile)?;
    let mut out = Outcome::new(table.to_csv());
    let target = 1.0 + table.r_total();
    let total = table.total();
    out.metric("total_mass", Metric::exact(total));
    out.metric("one_plus_R", Metric::exact(target));
    out.check(Check::new(
        "correlation.mass_identity",
        rel(total, target) <= 1e-9,
        format!("relative defect {:.3e}", rel(total, target)),
    ));
    let m = table.size();
    let marginal = target / m as f64;
    let worst =
        (0..m).map(|i| rel(table.row_marginal(i), marginal).max(rel(table.column_marginal(i), marginal))).fold(0.0, f64::max);
    out.metric("max_marginal_defect", Metric::exact(worst));
    out.check(Check::new("correlation.marginals", worst <= 1e-9, format!("max relative defect {worst:.3e}")));
    if n > 0 {
        let (_, rho) = lebesgue_split(&table)?;
        let s: f64 = rho.iter().sum();
        out.check(Check::new("correlation.rho_normalized", (s - 1.0).abs() <= 1e-9, format!("rho total {s}")));
    }
    Ok(out)
}

fn run_polymer(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (b, r) = (cfg.b(), cfg.r());
    let n = cfg.n.unwrap_or(6);
    let model = cfg.model.unwrap_or(DisorderModel::Gaussian);
    let samples = cfg.samples.unwrap_or(10_000);
    let s = simulate_partition(b, n, r, model, samples, cfg.seed())?;
    let st = s.stats;
    let mut t = CsvTable::new(&["b", "n", "r", "beta", "model", "samples", "mean", "se_mean", "var", "se_var", "m3", "m4"]);
    t.push(vec![
        b.to_string(),
        n.to_string(),
        num(r),
        num(s.beta),
        model.name().to_string(),
        samples.to_string(),
        num(st.mean),
        num(st.se_mean()),
        num(st.variance()),
        num(st.se_variance()),
        num(st.central3()),
        num(st.central4()),
    ]);
    let mut out = Outcome::new(t);
    out.metric("beta", Metric::exact(s.beta));
    out.metric("mean", Metric::estimate(st.mean, st.se_mean()));
    out.metric("variance", Metric::estimate(st.variance(), st.se_variance()));
    out.metric("exact_variance", Metric::exact(s.exact_variance));
    let r_target = Flow::new(b)?.eval_r(r, profile_depth(r, 0))?;
    out.metric("R_target", Metric::exact(r_target));
    let finite = st.mean.is_finite() && st.variance().is_finite();
    out.check(Check::new("polymer.finite_output", finite, "mean and variance finite"));
    Ok(out)
}

fn limit_row(t: &mut CsvTable, b: u32, r: f64, levels: usize, pool: usize, st: &RunStats, p: &VarianceProfile) {
    let p0 = p.at(0);
    t.push(vec![
        b.to_string(),
        num(r),
        levels.to_string(),
        pool.to_string(),
        num(st.mean),
        num(st.variance()),
        num(st.central3()),
        num(st.central4()),
        num(p0.r),
        num(p0.r3),
        num(p0.r4),
    ]);
}

fn run_limit(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (b, r) = (cfg.b(), cfg.r());
    let levels = cfg.levels.unwrap_or(100);
    let pool = cfg.pool_size.unwrap_or(100_000);
    let st = sample_limit_mass_pool(b, r, levels, pool, cfg.seed())?;
    let profile = Flow::new(b)?.profile(r, profile_depth(r, 0))?;
    let mut t = CsvTable::new(&[
        "b", "r", "levels", "pool", "mean", "var", "m3", "m4", "R_target", "R3_target", "R4_target",
    ]);
    limit_row(&mut t, b, r, levels, pool, &st, &profile);
    let mut out = Outcome::new(t);
    out.metric("variance", Metric::exact(st.variance()));
    out.metric("m3", Metric::exact(st.central3()));
    out.metric("R_target", Metric::exact(profile.at(0).r));
    out.metric("R3_target", Metric::exact(profile.at(0).r3));
    out.check(Check::new("limit.finite_output", st.variance().is_finite(), "pool variance finite"));
    Ok(out)
}

fn run_scan(cfg: &ExperimentConfig) -> Result<Outcome> {
    let b = cfg.b();
    let r_list = cfg.r_list.clone().unwrap_or_else(|| vec![-8.0, -4.0, 0.0, 4.0, 8.0]);
    let levels = cfg.levels.unwrap_or(100);
    let pool = cfg.pool_size.unwrap_or(100_000);
    let eps = cfg.eps.unwrap_or(DEFAULT_EPS);
    let scan = strong_disorder_scan(b, &r_list, levels, pool, cfg.seed(), eps)?;
    let mut t = CsvTable::new(&["b", "r", "frac_below_eps", "eps"]);
    for &(r, f) in &scan {
        t.push(vec![b.to_string(), num(r), num(f), num(eps)]);
    }
    let mut out = Outcome::new(t);
    let mut sorted = scan.clone();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0));
    let monotone = sorted.windows(2).all(|w| w[1].1 >= w[0].1);
    out.check(Check::new("disorder.nondecreasing_in_r", monotone, "fraction below eps against r"));
    Ok(out)
}

fn run_intersections(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (b, r) = (cfg.b(), cfg.r());
    let ns = cfg.n_list.clone().unwrap_or_else(|| vec![cfg.n.unwrap_or(100)]);
    let mut ns_sorted = ns.clone();
    ns_sorted.sort_unstable();
    ns_sorted.dedup();
    let n_max = *ns_sorted.last().expect("nonempty");
    let runs = cfg.runs.unwrap_or(1000);
    let flow = Flow::new(b)?;
    let profile = flow.profile(r, profile_depth(r, n_max + 2))?;
    let table = OffspringTable::new(&profile, n_max)?;
    let sims = simulate_counts(&table, &ns_sorted, runs, true, cfg.seed());
    let mut out = Outcome::new(counts_csv(b, r, &table, &ns_sorted, &sims));
    let kappa2 = 2.0 / (f64::from(b) - 1.0);
    out.metric("kappa2_normalization_ratio", Metric::exact(kappa2));
    out.metric("target_Rprime_over_R", Metric::exact(profile.at(0).rprime / profile.at(0).r));
    for (i, &n) in ns_sorted.iter().enumerate() {
        let m = RunStats::from_slice(
            &sims.iter().map(|c| table.surviving_weight(n) * c[i].surviving as f64).collect::<Vec<_>>(),
        );
        let k = RunStats::from_slice(&sims.iter().map(|c| kappa2 * c[i].surviving as f64 / n as f64).collect::<Vec<_>>());
        out.metric(format!("T_martingale_norm_n{n}"), Metric::estimate(m.mean, m.se_mean()));
        out.metric(format!("T_kappa2_norm_n{n}"), Metric::estimate(k.mean, k.se_mean()));
    }
    let never_dies = sims.iter().all(|c| c.iter().all(|x| x.surviving >= 1));
    out.check(Check::new("intersections.survival", never_dies, "surviving count stays positive"));
    if let Some(a) = cfg.a {
        let (est, se) = crate::intersections::exp_moment_check(a, n_max, runs, &profile, cfg.seed())?;
        let exact = flow.eval_r(r + a, profile_depth(r + a, 0))? / profile.at(0).r;
        out.metric("exp_moment_estimate", Metric::estimate(est, se));
        out.metric("exp_moment_exact", Metric::exact(exact));
    }
    Ok(out)
}

fn run_hausdorff(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (b, r) = (cfg.b(), cfg.r());
    let ns = sorted(cfg.n_list.clone().unwrap_or_else(|| vec![1000, 2000, 5000, 10_000]));
    let h = cfg.h.unwrap_or(1.0);
    let runs = cfg.runs.unwrap_or(1000);
    let n_max = *ns.last().expect("nonempty");
    let profile = Flow::new(b)?.profile(r, profile_depth(r, n_max + 2))?;
    let table = OffspringTable::new(&profile, n_max)?;
    let rows = hausdorff_scan(&table, &ns, h, runs, cfg.seed())?;
    let mut out = Outcome::new(hausdorff_csv(b, r, h, &rows));
    for e in &rows {
        out.metric(format!("hausdorff_sum_n{}", e.n), Metric::estimate(e.mean, e.se));
    }
    out.check(Check::new("hausdorff.finite_output", rows.iter().all(|e| e.mean.is_finite()), "sums finite"));
    Ok(out)
}

fn run_energy(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (b, r) = (cfg.b(), cfg.r());
    let ns = sorted(cfg.n_list.clone().unwrap_or_else(|| vec![50, 100, 200, 400]));
    let h = cfg.h.unwrap_or(0.5);
    let runs = cfg.runs.unwrap_or(1000);
    let n_max = *ns.last().expect("nonempty");
    let profile = Flow::new(b)?.profile(r, profile_depth(r, n_max + 2))?;
    let rows = energy_scan(&profile, &ns, h, runs, cfg.seed())?;
    let mut out = Outcome::new(energy_csv(b, r, h, &rows));
    for e in &rows {
        out.metric(format!("Q_n{}", e.n), Metric::estimate(e.mean, e.se));
    }
    out.check(Check::new("energy.finite_output", rows.iter().all(|e| e.mean.is_finite()), "energies finite"));
    Ok(out)
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

/// Exact centered moments of `(1/b) Σ_i Π_j W_ij` by enumerating all atoms.
fn enumerated_moments(atoms: &[f64], b: usize) -> (f64, f64, f64) {
    let k = atoms.len();
    let total = k.pow((b * b) as u32);
    let mut m = [0.0f64; 3];
    let mut draws = vec![0.0; b * b];
    for mut code in 0..total {
        for d in draws.iter_mut() {
            *d = atoms[code % k];
            code /= k;
        }
        let y = draws.chunks(b).map(|c| c.iter().product::<f64>()).sum::<f64>() / b as f64 - 1.0;
        m[0] += y * y;
        m[1] += y * y * y;
        m[2] += y * y * y * y;
    }
    (m[0] / total as f64, m[1] / total as f64, m[2] / total as f64)
}

/// The fast subset of the acceptance checks: exact identities plus small,
/// seeded Monte Carlo runs.
fn selftest(seed: u64, hooks: &Hooks) -> Result<Outcome> {
    let mut out = Outcome::new(CsvTable::new(&["check", "passed", "detail"]));
    let flows: Vec<Flow> =
        [2u32, 3].iter().map(|&b| Flow::new(b).map(|f| f.with_seed_perturbation(hooks.flow_seed_perturbation))).collect::<Result<_>>()?;

    // flow
    let mut worst = 0.0f64;
    for f in &flows {
        for i in 0..=10 {
            let r = -5.0 + i as f64;
            worst = worst.max(rel(f.eval_r(r, 200)?, f.eval_r(r, 400)?));
        }
    }
    out.check(Check::new("flow.depth_doubling", worst <= 1e-6, format!("max relative change {worst:.3e}")));
    let p2 = flows[0].profile(0.0, 300)?;
    out.check(chain_rule_check(&p2));
    let n = 10_000.0;
    let v = n * flows[0].eval_r(-n, 300)? / 2.0;
    out.check(Check::new("flow.vanishing_asymptotics", (v - 1.0).abs() <= 2e-3, format!("n R(-n)/kappa^2 = {v}")));
    let mut worst = 0.0f64;
    for b in [2usize, 3] {
        let (e2, e3, e4) = enumerated_moments(&[0.5, 1.5], b);
        let (s2, s3, s4) = moment_step(0.25, 0.0, 0.0625, b as u32);
        worst = worst.max(rel(s2, e2)).max(rel(s3, e3)).max(rel(s4, e4));
    }
    out.check(Check::new("flow.moment_step_exact", worst <= 1e-12, format!("max relative defect {worst:.3e}")));
    let big = flows[0].profile(0.0, 4100)?;
    let logc = log_vartheta_correlations(4000, &big)?;
    let ratio = (logc[4000] - logc[2000] - 8.0 * 2f64.ln()).exp();
    out.check(Check::new("flow.correlation_growth", (ratio - 1.0).abs() <= 0.02, format!("C/n^8 ratio {ratio}")));

    // correlation
    let mut mass = 0.0f64;
    let mut marg = 0.0f64;
    for (b, max_n) in [(2u32, 3usize), (3, 2)] {
        let f = &flows[(b - 2) as usize];
        for r in [-3.0, 0.0, 2.0] {
            let p = f.profile(r, 300)?;
            for n in 1..=max_n {
                let t = build_table(b, n, &p)?;
                let target = 1.0 + p.at(0).r;
                mass = mass.max(rel(t.total(), target));
                for i in 0..t.size() {
                    marg = marg.max(rel(t.row_marginal(i), target / t.size() as f64));
                }
            }
        }
    }
    out.check(Check::new("correlation.mass_identity", mass <= 1e-9, format!("max relative defect {mass:.3e}")));
    out.check(Check::new("correlation.marginals", marg <= 1e-9, format!("max relative defect {marg:.3e}")));
    let mut hist = 0.0f64;
    for n in 0..=6 {
        let h = XiHistogram::new(2, n)?;
        hist = hist.max(rel(h.mass(p2.at(n).r), 1.0 + p2.at(0).r));
    }
    out.check(Check::new("correlation.histogram_mass", hist <= 1e-9, format!("max relative defect {hist:.3e}")));

    // polymer
    let mut rng = stream(seed, 0, 0);
    let a = base_array(2, 2, 0.7, DisorderModel::Gaussian, &mut rng)?;
    let paths = enumerate_paths(LatticeParams::new(2)?, 2)?;
    let sum = paths.iter().map(|p| p.edge_indices().iter().map(|&e| a.get(e)).product::<f64>()).sum::<f64>()
        / paths.len() as f64;
    out.check(Check::new(
        "polymer.coarsen_path_sum",
        rel(a.total(), sum) <= 1e-13,
        format!("relative defect {:.3e}", rel(a.total(), sum)),
    ));
    let sampler = WeightSampler::new(DisorderModel::Rademacher, 0.5)?;
    let full = base_array(2, 4, 0.5, DisorderModel::Rademacher, &mut stream(seed, 1, 0))?.total();
    let streamed = streamed_total(2, 4, &sampler, &mut stream(seed, 1, 0));
    out.check(Check::new("polymer.streaming_identity", full.to_bits() == streamed.to_bits(), "bitwise"));
    let one = in_pool(1, || simulate_partition(2, 3, 0.0, DisorderModel::Gaussian, 2000, seed))?;
    let many = in_pool(3, || simulate_partition(2, 3, 0.0, DisorderModel::Gaussian, 2000, seed))?;
    out.check(Check::new("polymer.thread_determinism", one == many, "1 vs 3 workers"));

    // intersections
    let e3 = extinction_prob(2, 3);
    out.check(Check::new("intersections.extinction_exact", e3 == 0.6953125, format!("psi^3(0) = {e3}")));
    let runs = 20_000;
    let mut rng = stream(seed, 2, 0);
    let dead = (0..runs).filter(|_| gw_extinct_by(2, 10, &mut rng)).count() as f64 / runs as f64;
    let p10 = extinction_prob(2, 10);
    let z = (dead - p10) / (p10 * (1.0 - p10) / runs as f64).sqrt();
    out.check(Check::new("intersections.extinction_mc", z.abs() < 3.0, format!("z = {z:.2}")));
    let deep = flows[0].profile(0.0, 10_002)?;
    let mut worst = 0.0f64;
    for k in (0..=10_000).step_by(97) {
        worst = worst.max((offspring_law(&deep, k)?.iter().sum::<f64>() - 1.0).abs());
    }
    out.check(Check::new("intersections.offspring_normalization", worst <= 1e-12, format!("max defect {worst:.3e}")));
    let table = OffspringTable::new(&p2, 60)?;
    let ns = [5usize, 20, 60];
    let sims = simulate_counts(&table, &ns, 20_000, false, seed);
    let target = p2.at(0).rprime / p2.at(0).r;
    let mut zmax = 0.0f64;
    for (i, &n) in ns.iter().enumerate() {
        let s = RunStats::from_slice(&sims.iter().map(|c| table.surviving_weight(n) * c[i].surviving as f64).collect::<Vec<_>>());
        zmax = zmax.max(((s.mean - target) / s.se_mean()).abs());
    }
    out.check(Check::new("intersections.martingale_mean", zmax < 3.0, format!("max |z| = {zmax:.2}")));
    let state = run_rho_chain(&table, 40, &mut stream(seed, 3, 0))?;
    let tau = tau_measure(&state, &p2)?;
    let m = martingale_estimate(&state, &p2)?;
    out.check(Check::new("intersections.tau_total_mass", tau.total_mass() == m, "total mass equals the martingale"));

    for c in out.checks.clone() {
        out.table.push(vec![c.name.clone(), c.passed.to_string(), c.detail.replace(',', ";")]);
    }
    out.metric("checks_passed", Metric::exact(out.checks.iter().filter(|c| c.passed).count() as f64));
    out.metric("checks_total", Metric::exact(out.checks.len() as f64));
    Ok(out)
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Runs the selftest with fault injection.
#[doc(hidden)]
pub fn selftest_with(hooks: &Hooks) -> Result<Outcome> {
    selftest(SELFTEST_SEED, hooks)
}

/// Process exit status for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Budget { .. } => 3,
        Error::Io(_) | Error::Json(_) | Error::Normalization { .. } | Error::ZeroWeight { .. } => 1,
        _ => 2,
    }
}

//! Intersection population chains.
//!
//! Shared edges of two independent uniform paths form a critical
//! Galton–Watson process with offspring `0` or `b`. Under the intersection
//! measure `ρ_r` the shared edges whose overlap survives forever form a chain
//! that never dies out: a surviving edge at generation `n` has `ℓ ∈ {1, …, b}`
//! surviving children with probability `C(b, ℓ) R(r−n−1)^ℓ / (b R(r−n))`,
//! while its other `b − ℓ` children are shared but doomed and continue as
//! unconditioned critical Galton–Watson bushes.
//!
//! Surviving members are tracked as `b`-adic time intervals (one segment
//! digit per generation) when their positions matter, and as plain counts
//! when only sizes are needed.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csv_out::{num, CsvTable};
use crate::error::{Error, Result};
use crate::flow::VarianceProfile;
use crate::rng::{chunks, stream, StreamRng};
use crate::stats::RunStats;

const RUN_CHUNK: usize = 256;
const NO_PARENT: u32 = u32::MAX;

/// `ψ(x) = (b − 1)/b + x^b/b`, iterated `n` times from 0.
pub fn extinction_prob(b: u32, n: usize) -> f64 {
    let bf = f64::from(b);
    (0..n).fold(0.0, |x, _| (bf - 1.0) / bf + x.powi(b as i32) / bf)
}

/// One generation of the critical `0`-or-`b` chain from `z` members.
pub fn gw_step<R: Rng + ?Sized>(b: u32, z: u64, rng: &mut R) -> u64 {
    if z == 0 {
        return 0;
    }
    let hits = Binomial::new(z, 1.0 / f64::from(b)).expect("valid binomial").sample(rng);
    u64::from(b) * hits
}

/// Whether a single-ancestor critical chain is extinct by generation `n`.
pub fn gw_extinct_by<R: Rng + ?Sized>(b: u32, n: usize, rng: &mut R) -> bool {
    let mut z = 1;
    for _ in 0..n {
        z = gw_step(b, z, rng);
        if z == 0 {
            return true;
        }
    }
    false
}

/// Offspring law of a surviving member at generation `n`; entry `ℓ − 1`
/// is the probability of `ℓ` surviving children.
pub fn offspring_law(profile: &VarianceProfile, n: usize) -> Result<Vec<f64>> {
    let b = profile.b();
    let x = profile.get(n + 1)?.r;
    let next = profile.at(n).r;
    let mut law = Vec::with_capacity(b as usize);
    let mut binom = 1.0;
    for l in 1..=b {
        binom *= f64::from(b - l + 1) / f64::from(l);
        law.push(binom * x.powi(l as i32) / (f64::from(b) * next));
    }
    let sum: f64 = law.iter().sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::Normalization { sum, n });
    }
    Ok(law)
}

/// Offspring laws for generations `0..n`, validated once.
#[derive(Debug, Clone)]
pub struct OffspringTable {
    b: u32,
    laws: Vec<Vec<f64>>,
    /// `R′(r − k)/R(r − k)` for `k = 0..=n`
    surviving_weight: Vec<f64>,
    /// `R′(r − k)/(1 + R(r − k))` for `k = 0..=n`
    total_weight: Vec<f64>,
}

impl OffspringTable {
    pub fn new(profile: &VarianceProfile, n: usize) -> Result<Self> {
        profile.require_depth(n + 1)?;
        let laws = (0..n).map(|k| offspring_law(profile, k)).collect::<Result<Vec<_>>>()?;
        let surviving_weight = (0..=n).map(|k| profile.at(k).rprime / profile.at(k).r).collect();
        let total_weight = (0..=n).map(|k| profile.at(k).rprime / (1.0 + profile.at(k).r)).collect();
        Ok(Self { b: profile.b(), laws, surviving_weight, total_weight })
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn generations(&self) -> usize {
        self.laws.len()
    }

    pub fn law(&self, n: usize) -> &[f64] {
        &self.laws[n]
    }

    /// `R′(r − n)/R(r − n)`
    pub fn surviving_weight(&self, n: usize) -> f64 {
        self.surviving_weight[n]
    }

    /// `R′(r − n)/(1 + R(r − n))`
    pub fn total_weight(&self, n: usize) -> f64 {
        self.total_weight[n]
    }

    fn draw_offspring<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> usize {
        let law = &self.laws[n];
        let mut u = rng.random::<f64>();
        for (i, p) in law.iter().enumerate() {
            if u < *p {
                return i + 1;
            }
            u -= p;
        }
        law.len()
    }

    /// Counts of members choosing `ℓ = 1..=b` among `members`.
    fn multinomial<R: Rng + ?Sized>(&self, n: usize, members: u64, rng: &mut R) -> Vec<u64> {
        let law = &self.laws[n];
        let mut out = vec![0; law.len()];
        let mut remaining = members;
        let mut mass = 1.0;
        for (i, &p) in law.iter().enumerate() {
            if remaining == 0 {
                break;
            }
            if i + 1 == law.len() {
                out[i] = remaining;
                break;
            }
            let q = (p / mass).clamp(0.0, 1.0);
            let k = Binomial::new(remaining, q).expect("valid binomial").sample(rng);
            out[i] = k;
            remaining -= k;
            mass -= p;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Node {
    parent: u32,
    digit: u8,
}

/// Occupied `b`-adic intervals of the surviving chain through generation `n`,
/// plus the count of doomed shared edges at generation `n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopulationState {
    b: u32,
    /// `levels[k]` holds the surviving members at generation `k`
    levels: Vec<Vec<Node>>,
    doomed: u64,
}

impl PopulationState {
    /// A single surviving member at generation 0.
    pub fn new(b: u32) -> Self {
        Self { b, levels: vec![vec![Node { parent: NO_PARENT, digit: 0 }]], doomed: 0 }
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn generation(&self) -> usize {
        self.levels.len() - 1
    }

    /// `ξ̃_n`
    pub fn surviving(&self) -> u64 {
        self.levels.last().expect("nonempty").len() as u64
    }

    pub fn doomed(&self) -> u64 {
        self.doomed
    }

    /// `ξ_n = ξ̃_n + doomed`
    pub fn total(&self) -> u64 {
        self.surviving() + self.doomed
    }

    /// Segment-digit address of every occupied generation-`n` interval.
    pub fn occupied(&self) -> Vec<Vec<u8>> {
        let n = self.generation();
        self.levels[n]
            .iter()
            .enumerate()
            .map(|(i, _)| self.address(n, i))
            .collect()
    }

    fn address(&self, level: usize, mut index: usize) -> Vec<u8> {
        let mut digits = vec![0; level];
        for k in (1..=level).rev() {
            let node = self.levels[k][index];
            digits[k - 1] = node.digit;
            index = node.parent as usize;
        }
        digits
    }

    /// Leaf counts below every node, level by level.
    fn leaf_counts(&self) -> Vec<Vec<u64>> {
        let n = self.generation();
        let mut counts: Vec<Vec<u64>> = self.levels.iter().map(|l| vec![0; l.len()]).collect();
        counts[n].iter_mut().for_each(|c| *c = 1);
        for k in (1..=n).rev() {
            for (i, node) in self.levels[k].iter().enumerate() {
                let c = counts[k][i];
                counts[k - 1][node.parent as usize] += c;
            }
        }
        counts
    }
}

/// One transition of the surviving chain under `ρ_r`.
///
/// `profile` is anchored at `r` and must reach generation `n + 1`.
pub fn rho_chain_step(
    state: &PopulationState,
    profile: &VarianceProfile,
    rng: &mut StreamRng,
) -> Result<PopulationState> {
    let n = state.generation();
    if profile.b() != state.b {
        return Err(Error::invalid("profile and state use different b"));
    }
    let law = offspring_law(profile, n)?;
    Ok(step_with_law(state, |rng| draw_from(&law, rng), rng))
}

fn draw_from<R: Rng + ?Sized>(law: &[f64], rng: &mut R) -> usize {
    let mut u = rng.random::<f64>();
    for (i, p) in law.iter().enumerate() {
        if u < *p {
            return i + 1;
        }
        u -= p;
    }
    law.len()
}

fn step_with_law<R: Rng + ?Sized>(
    state: &PopulationState,
    offspring: impl FnMut(&mut R) -> usize,
    rng: &mut R,
) -> PopulationState {
    let mut next = state.clone();
    advance(&mut next, offspring, rng);
    next
}

fn advance<R: Rng + ?Sized>(state: &mut PopulationState, mut offspring: impl FnMut(&mut R) -> usize, rng: &mut R) {
    let b = state.b;
    let mut next_doomed = gw_step(b, state.doomed, rng);
    let current = state.levels.last().expect("nonempty");
    let mut next = Vec::with_capacity(current.len() * 2);
    for parent in 0..current.len() {
        let l = offspring(rng);
        next_doomed += u64::from(b) - l as u64;
        let mut picks = sample_indices(rng, b as usize, l).into_vec();
        picks.sort_unstable();
        next.extend(picks.into_iter().map(|d| Node { parent: parent as u32, digit: d as u8 }));
    }
    state.levels.push(next);
    state.doomed = next_doomed;
}

/// Runs the address-tracking chain for `n` generations from one member.
pub fn run_rho_chain(table: &OffspringTable, n: usize, rng: &mut StreamRng) -> Result<PopulationState> {
    if n > table.generations() {
        return Err(Error::InsufficientDepth { need: n, have: table.generations() });
    }
    let mut state = PopulationState::new(table.b());
    for k in 0..n {
        advance(&mut state, |rng| table.draw_offspring(k, rng), rng);
    }
    Ok(state)
}

/// `m̃_n = (R′(r−n)/R(r−n)) ξ̃_n`.
pub fn martingale_estimate(state: &PopulationState, profile: &VarianceProfile) -> Result<f64> {
    let p = profile.get(state.generation())?;
    Ok(p.rprime / p.r * state.surviving() as f64)
}

/// `m_n = (R′(r−n)/(1 + R(r−n))) ξ_n`.
pub fn total_overlap_estimate(state: &PopulationState, profile: &VarianceProfile) -> Result<f64> {
    let p = profile.get(state.generation())?;
    Ok(p.rprime / (1.0 + p.r) * state.total() as f64)
}

/// Sizes `(ξ̃_k, ξ_k)` of one chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub surviving: u64,
    pub doomed: u64,
}

impl Counts {
    pub fn total(&self) -> u64 {
        self.surviving + self.doomed
    }
}

/// Count-only chain: returns the sizes at each requested checkpoint
/// (ascending, each at most `table.generations()`).
///
/// With `surviving = false` the chain starts from a single doomed edge, i.e.
/// it is the plain critical Galton–Watson process.
pub fn count_chain<R: Rng + ?Sized>(
    table: &OffspringTable,
    checkpoints: &[usize],
    surviving: bool,
    track_doomed: bool,
    rng: &mut R,
) -> Vec<Counts> {
    let b = u64::from(table.b());
    let mut c = if surviving { Counts { surviving: 1, doomed: 0 } } else { Counts { surviving: 0, doomed: 1 } };
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut next_checkpoint = checkpoints.iter().peekable();
    for k in 0..=checkpoints.last().copied().unwrap_or(0) {
        while next_checkpoint.peek() == Some(&&k) {
            out.push(c);
            next_checkpoint.next();
        }
        if next_checkpoint.peek().is_none() {
            break;
        }
        let doomed = if track_doomed { gw_step(table.b(), c.doomed, rng) } else { 0 };
        let split = if c.surviving > 0 { table.multinomial(k, c.surviving, rng) } else { Vec::new() };
        let mut surviving = 0;
        let mut spawned = 0;
        for (i, &cnt) in split.iter().enumerate() {
            let l = i as u64 + 1;
            surviving += l * cnt;
            spawned += (b - l) * cnt;
        }
        c = Counts { surviving, doomed: if track_doomed { doomed + spawned } else { 0 } };
    }
    out
}

/// Sizes at `checkpoints` for `runs` independent `ρ_r` chains; `out[run][i]`.
pub fn simulate_counts(
    table: &OffspringTable,
    checkpoints: &[usize],
    runs: usize,
    track_doomed: bool,
    seed: u64,
) -> Vec<Vec<Counts>> {
    chunks(runs, RUN_CHUNK)
        .into_par_iter()
        .flat_map_iter(|range| {
            range
                .map(|i| {
                    let mut rng = stream(seed, i as u64, 1);
                    count_chain(table, checkpoints, true, track_doomed, &mut rng)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Chains under the normalized correlation measure `υ_r/(1 + R(r))`: with
/// probability `R(r)/(1 + R(r))` a `ρ_r` chain, otherwise a bare critical
/// Galton–Watson chain.
pub fn simulate_counts_upsilon(
    table: &OffspringTable,
    r_value: f64,
    checkpoints: &[usize],
    runs: usize,
    seed: u64,
) -> Vec<Vec<Counts>> {
    let p_surv = r_value / (1.0 + r_value);
    chunks(runs, RUN_CHUNK)
        .into_par_iter()
        .flat_map_iter(|range| {
            range
                .map(|i| {
                    let mut rng = stream(seed, i as u64, 2);
                    let surviving = rng.random::<f64>() < p_surv;
                    count_chain(table, checkpoints, surviving, true, &mut rng)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Monte Carlo estimate of `E_ρ[e^{a m̃_n}]` with its standard error.
pub fn exp_moment_check(
    a: f64,
    n: usize,
    runs: usize,
    profile: &VarianceProfile,
    seed: u64,
) -> Result<(f64, f64)> {
    if a == 0.0 {
        return Ok((1.0, 0.0));
    }
    let table = OffspringTable::new(profile, n)?;
    let w = table.surviving_weight(n);
    let sims = simulate_counts(&table, &[n], runs, false, seed);
    let s = RunStats::from_slice(&sims.iter().map(|c| (a * w * c[0].surviving as f64).exp()).collect::<Vec<_>>());
    Ok((s.mean, s.se_mean()))
}

/// The generation-`n` approximant of the intersection-time measure: mass
/// `w = R′(r−n)/R(r−n)` on every occupied interval.
#[derive(Debug, Clone, PartialEq)]
pub struct TauMeasure {
    pub b: u32,
    pub generation: usize,
    pub weight: f64,
    pub occupied: Vec<Vec<u8>>,
}

impl TauMeasure {
    pub fn total_mass(&self) -> f64 {
        self.weight * self.occupied.len() as f64
    }

    /// Mass of the `b`-adic interval with the given digit prefix.
    pub fn interval_mass(&self, prefix: &[u8]) -> f64 {
        self.weight * self.occupied.iter().filter(|a| a.starts_with(prefix)).count() as f64
    }

    /// Mass of a union of disjoint `b`-adic intervals.
    pub fn union_mass(&self, prefixes: &[Vec<u8>]) -> f64 {
        self.weight
            * self
                .occupied
                .iter()
                .filter(|a| prefixes.iter().any(|p| a.starts_with(p)))
                .count() as f64
    }

    /// Lebesgue density on `[0, 1]` at `t`.
    pub fn density(&self, t: f64) -> f64 {
        let scale = f64::from(self.b).powi(self.generation as i32);
        let cell = ((t * scale).floor() as u64).min(scale as u64 - 1);
        let hit = self.occupied.iter().any(|a| {
            a.iter().fold(0u64, |acc, &d| acc * u64::from(self.b) + u64::from(d)) == cell
        });
        if hit {
            scale * self.weight
        } else {
            0.0
        }
    }
}

pub fn tau_measure(state: &PopulationState, profile: &VarianceProfile) -> Result<TauMeasure> {
    let n = state.generation();
    let p = profile.get(n)?;
    Ok(TauMeasure { b: state.b, generation: n, weight: p.rprime / p.r, occupied: state.occupied() })
}

/// `ξ̃_n / (n log b)^h`, the canonical-cover log-Hausdorff sum at scale `b^{−n}`.
pub fn log_hausdorff_sum(state: &PopulationState, h: f64) -> Result<f64> {
    log_hausdorff_from_count(state.b, state.generation(), state.surviving(), h)
}

pub fn log_hausdorff_from_count(b: u32, n: usize, surviving: u64, h: f64) -> Result<f64> {
    if h < 0.0 {
        return Err(Error::invalid(format!("h = {h} must be nonnegative")));
    }
    if h == 0.0 {
        return Ok(surviving as f64);
    }
    if n == 0 {
        return Err(Error::invalid("log-Hausdorff sums need n ≥ 1"));
    }
    Ok(surviving as f64 / (n as f64 * f64::from(b).ln()).powf(h))
}

/// `Q̃_h = (R′(r−n)/R(r−n))² Σ_{e₁,e₂} g(e₁, e₂)^h` over ordered pairs of
/// occupied intervals, with `g` the separation generation and `g(e, e) = n`.
///
/// Computed exactly from the genealogy: pairs whose deepest common ancestor
/// sits at generation `k` separate at generation `k + 1`.
pub fn energy_estimate(state: &PopulationState, h: f64, profile: &VarianceProfile) -> Result<f64> {
    let n = state.generation();
    let p = profile.get(n)?;
    let w = p.rprime / p.r;
    Ok(w * w * energy_pair_sum(state, h))
}

fn energy_pair_sum(state: &PopulationState, h: f64) -> f64 {
    let n = state.generation();
    let counts = state.leaf_counts();
    let mut sum = counts[n].len() as f64 * (n as f64).powf(h);
    for k in 0..n {
        let mut child_sq = vec![0.0f64; counts[k].len()];
        for (i, node) in state.levels[k + 1].iter().enumerate() {
            let c = counts[k + 1][i] as f64;
            child_sq[node.parent as usize] += c * c;
        }
        let g = ((k + 1) as f64).powf(h);
        for (i, &c) in counts[k].iter().enumerate() {
            let c = c as f64;
            sum += g * (c * c - child_sq[i]);
        }
    }
    sum
}

/// Mean and standard error over independent chains at each `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

/// Means of `log_hausdorff_sum` at each checkpoint over `runs` chains.
pub fn hausdorff_scan(
    table: &OffspringTable,
    checkpoints: &[usize],
    h: f64,
    runs: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    let sims = simulate_counts(table, checkpoints, runs, false, seed);
    checkpoints
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let vals = sims
                .iter()
                .map(|c| log_hausdorff_from_count(table.b(), n, c[i].surviving, h))
                .collect::<Result<Vec<_>>>()?;
            let s = RunStats::from_slice(&vals);
            Ok(Estimate { n, mean: s.mean, se: s.se_mean() })
        })
        .collect()
}

/// Mean energy at each `n` over `runs` independent address-tracking chains
/// (fresh chains per `n`).
pub fn energy_scan(
    profile: &VarianceProfile,
    ns: &[usize],
    h: f64,
    runs: usize,
    seed: u64,
) -> Result<Vec<Estimate>> {
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let table = OffspringTable::new(profile, n_max)?;
    ns.iter()
        .map(|&n| {
            let partials = chunks(runs, RUN_CHUNK)
                .into_par_iter()
                .map(|range| -> Result<RunStats> {
                    let mut s = RunStats::new();
                    for i in range {
                        let mut rng = stream(seed, i as u64, 1000 + n as u64);
                        let state = run_rho_chain(&table, n, &mut rng)?;
                        s.push(energy_estimate(&state, h, profile)?);
                    }
                    Ok(s)
                })
                .collect::<Result<Vec<_>>>()?;
            let s = partials.iter().fold(RunStats::new(), |acc, p| acc.merge(p));
            Ok(Estimate { n, mean: s.mean, se: s.se_mean() })
        })
        .collect()
}

/// Per-run rows `b,r,n,run,xi_tilde,xi_total,m_tilde,m_total`.
pub fn counts_csv(b: u32, r: f64, table: &OffspringTable, checkpoints: &[usize], sims: &[Vec<Counts>]) -> CsvTable {
    let mut t = CsvTable::new(&["b", "r", "n", "run", "xi_tilde", "xi_total", "m_tilde", "m_total"]);
    for (run, c) in sims.iter().enumerate() {
        for (i, &n) in checkpoints.iter().enumerate() {
            let ci = c[i];
            t.push(vec![
                b.to_string(),
                num(r),
                n.to_string(),
                run.to_string(),
                ci.surviving.to_string(),
                ci.total().to_string(),
                num(table.surviving_weight(n) * ci.surviving as f64),
                num(table.total_weight(n) * ci.total() as f64),
            ]);
        }
    }
    t
}

pub fn hausdorff_csv(b: u32, r: f64, h: f64, rows: &[Estimate]) -> CsvTable {
    let mut t = CsvTable::new(&["b", "r", "n", "h", "sum_mean", "sum_se"]);
    for e in rows {
        t.push(vec![b.to_string(), num(r), e.n.to_string(), num(h), num(e.mean), num(e.se)]);
    }
    t
}

pub fn energy_csv(b: u32, r: f64, h: f64, rows: &[Estimate]) -> CsvTable {
    let mut t = CsvTable::new(&["b", "r", "n", "h", "Q_mean", "Q_se"]);
    for e in rows {
        t.push(vec![b.to_string(), num(r), e.n.to_string(), num(h), num(e.mean), num(e.se)]);
    }
    t
}

//! Monte Carlo for the disordered polymer at critical scaling.
//!
//! Partition functions are handled as edge-indexed arrays `W_e` at a fixed
//! generation. One coarsening step replaces the `b²` children of every edge
//! by `(1/b) Σ_i Π_j W_{e×(i,j)}`; applying it `n` times to i.i.d. normalized
//! Boltzmann weights yields the normalized total partition function.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{eval_beta, map_m, Flow, FlowConstants};
use crate::lattice::{HierPath, LatticeParams};
use crate::rng::{chunks, stream, StreamRng};
use crate::stats::RunStats;

/// Largest base array `simulate_partition` accepts.
pub const PARTITION_ENTRY_LIMIT: u128 = 1 << 30;
/// Largest generation-`(K + depth)` array `sample_limit_tree` builds.
pub const TREE_ENTRY_LIMIT: u128 = 1 << 20;
pub const MIN_POOL: usize = 10_000;
pub const DEFAULT_EPS: f64 = 0.01;

const SAMPLE_CHUNK: usize = 64;
const POOL_CHUNK: usize = 4096;

/// Site disorder law: mean zero, variance one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DisorderModel {
    Gaussian,
    Rademacher,
    /// `Exp(1) − 1`
    ShiftedExponential,
}

impl DisorderModel {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian => "gaussian",
            Self::Rademacher => "rademacher",
            Self::ShiftedExponential => "shifted_exponential",
        }
    }

    /// `E[ω³]`
    pub fn tau(&self) -> f64 {
        match self {
            Self::Gaussian | Self::Rademacher => 0.0,
            Self::ShiftedExponential => 2.0,
        }
    }

    /// `λ(β) = log E[e^{βω}]`.
    pub fn log_mgf(&self, beta: f64) -> Result<f64> {
        match self {
            Self::Gaussian => Ok(beta * beta / 2.0),
            Self::Rademacher => {
                // log cosh β, stable for large |β|
                let a = beta.abs();
                Ok(a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2)
            }
            Self::ShiftedExponential => {
                if beta < 1.0 {
                    Ok(-beta - (-beta).ln_1p())
                } else {
                    Err(Error::OutsideMgfDomain { beta, model: self.name() })
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Gaussian => StandardNormal.sample(rng),
            Self::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            Self::ShiftedExponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
        }
    }

    pub fn constants(&self, b: u32) -> Result<FlowConstants> {
        FlowConstants::new(b, self.tau())
    }
}

/// Draws normalized Boltzmann weights `e^{βω − λ(β)}`.
#[derive(Debug, Clone, Copy)]
pub struct WeightSampler {
    model: DisorderModel,
    beta: f64,
    log_norm: f64,
    /// Rademacher weights for ω = +1, −1
    two_point: (f64, f64),
}

impl WeightSampler {
    pub fn new(model: DisorderModel, beta: f64) -> Result<Self> {
        let log_norm = model.log_mgf(beta)?;
        let two_point = ((beta - log_norm).exp(), (-beta - log_norm).exp());
        Ok(Self { model, beta, log_norm, two_point })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Exact variance of one weight, `e^{λ(2β) − 2λ(β)} − 1`.
    pub fn variance(&self) -> Result<f64> {
        Ok((self.model.log_mgf(2.0 * self.beta)? - 2.0 * self.log_norm).exp_m1())
    }

    /// Fills `out` with independent weights.
    ///
    /// Rademacher signs are taken 64 at a time from one `u64`, so the stream
    /// consumed depends on how draws are grouped; every caller fills in
    /// blocks of `b²` (or a single entry at generation 0).
    #[inline]
    pub fn fill<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        if self.beta == 0.0 {
            out.fill(1.0);
            return;
        }
        match self.model {
            DisorderModel::Rademacher => {
                let table = [self.two_point.1, self.two_point.0];
                for block in out.chunks_mut(64) {
                    let bits: u64 = rng.random();
                    for (i, slot) in block.iter_mut().enumerate() {
                        *slot = table[((bits >> i) & 1) as usize];
                    }
                }
            }
            _ => {
                for slot in out.iter_mut() {
                    *slot = (self.beta * self.model.sample(rng) - self.log_norm).exp();
                }
            }
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut w = [0.0];
        self.fill(&mut w, rng);
        w[0]
    }
}

/// The one-step combination `(1/b) Σ_i Π_j w[i·b + j]`, in fixed order.
#[inline]
pub fn combine(children: &[f64], b: usize) -> f64 {
    let mut sum = 0.0;
    for branch in children.chunks_exact(b) {
        let mut prod = 1.0;
        for &w in branch {
            prod *= w;
        }
        sum += prod;
    }
    sum / b as f64
}

/// Edge-indexed weights at one generation, canonical edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionArray {
    b: u32,
    generation: usize,
    values: Vec<f64>,
}

impl PartitionArray {
    pub fn new(b: u32, generation: usize, values: Vec<f64>) -> Result<Self> {
        LatticeParams::new(b)?;
        let expect = edge_count(b, generation)?;
        if values.len() as u128 != expect {
            return Err(Error::invalid(format!(
                "generation {generation} needs {expect} entries, got {}",
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!("entry {v} is not a finite nonnegative weight")));
        }
        Ok(Self { b, generation, values })
    }

    pub fn filled(b: u32, generation: usize, value: f64) -> Result<Self> {
        let len = edge_count(b, generation)?;
        Self::new(b, generation, vec![value; len as usize])
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, edge_index: u64) -> f64 {
        self.values[edge_index as usize]
    }

    /// One coarsening step: generation `k` to `k − 1`.
    pub fn coarsen(&self) -> Result<PartitionArray> {
        if self.generation == 0 {
            return Err(Error::invalid("cannot coarsen a generation-0 array"));
        }
        let b = self.b as usize;
        let values = self.values.chunks_exact(b * b).map(|c| combine(c, b)).collect();
        Ok(PartitionArray { b: self.b, generation: self.generation - 1, values })
    }

    /// Coarsens down to a single generation-0 value.
    pub fn total(&self) -> f64 {
        let mut a = self.clone();
        while a.generation > 0 {
            a = a.coarsen().expect("generation checked");
        }
        a.values[0]
    }
}

fn edge_count(b: u32, generation: usize) -> Result<u128> {
    u128::from(b)
        .checked_pow(2 * generation as u32)
        .filter(|&c| c <= 1 << 40)
        .ok_or(Error::Budget { guard: "edge-array", requested: u128::MAX, limit: 1 << 40 })
}

fn guard(name: &'static str, b: u32, generation: usize, limit: u128) -> Result<u128> {
    let requested = u128::from(b).checked_pow(2 * generation as u32).unwrap_or(u128::MAX);
    if requested > limit {
        return Err(Error::Budget { guard: name, requested, limit });
    }
    Ok(requested)
}

/// I.i.d. normalized weights at generation `n`, drawn in canonical order.
pub fn base_array<R: Rng + ?Sized>(
    b: u32,
    n: usize,
    beta: f64,
    model: DisorderModel,
    rng: &mut R,
) -> Result<PartitionArray> {
    LatticeParams::new(b)?;
    let len = guard("partition-array", b, n, PARTITION_ENTRY_LIMIT)? as usize;
    let sampler = WeightSampler::new(model, beta)?;
    let mut values = vec![0.0; len];
    let block = if n == 0 { 1 } else { (b * b) as usize };
    for chunk in values.chunks_mut(block) {
        sampler.fill(chunk, rng);
    }
    Ok(PartitionArray { b, generation: n, values })
}

/// `W^{(0,n)}` without materializing the base array.
///
/// Draws base weights in the same canonical order as [`base_array`] and
/// combines through [`combine`], so the result is bit-identical to
/// coarsening the full array.
pub fn streamed_total<R: Rng + ?Sized>(b: u32, n: usize, sampler: &WeightSampler, rng: &mut R) -> f64 {
    let b = b as usize;
    if n == 0 {
        return sampler.draw(rng);
    }
    let mut bufs = vec![vec![0.0; b * b]; n];
    streamed_node(b, &mut bufs, sampler, rng)
}

fn streamed_node<R: Rng + ?Sized>(b: usize, bufs: &mut [Vec<f64>], sampler: &WeightSampler, rng: &mut R) -> f64 {
    let (head, rest) = bufs.split_first_mut().expect("nonempty");
    if rest.is_empty() {
        sampler.fill(head, rng);
    } else {
        for c in 0..b * b {
            head[c] = streamed_node(b, rest, sampler, rng);
        }
    }
    combine(head, b)
}

/// Result of [`simulate_partition`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub beta: f64,
    pub stats: RunStats,
    /// Exact `Var W^{(0,n)}` implied by the base weight variance.
    pub exact_variance: f64,
}

/// Samples `W^{(0,n)}` at `β = β_{n,r}` for the given disorder law.
pub fn simulate_partition(
    b: u32,
    n: usize,
    r: f64,
    model: DisorderModel,
    samples: usize,
    seed: u64,
) -> Result<PartitionSummary> {
    let beta = eval_beta(n, r, &model.constants(b)?)?;
    simulate_partition_at(b, n, beta, model, samples, seed)
}

/// As [`simulate_partition`] with an explicit inverse temperature.
pub fn simulate_partition_at(
    b: u32,
    n: usize,
    beta: f64,
    model: DisorderModel,
    samples: usize,
    seed: u64,
) -> Result<PartitionSummary> {
    LatticeParams::new(b)?;
    guard("partition-array", b, n, PARTITION_ENTRY_LIMIT)?;
    let sampler = WeightSampler::new(model, beta)?;
    let mut exact_variance = sampler.variance()?;
    for _ in 0..n {
        exact_variance = crate::flow::map_m(exact_variance, b);
    }
    let partials: Vec<RunStats> = chunks(samples, SAMPLE_CHUNK)
        .into_par_iter()
        .map(|range| {
            let mut s = RunStats::new();
            for i in range {
                let mut rng = stream(seed, i as u64, n as u64);
                s.push(streamed_total(b, n, &sampler, &mut rng));
            }
            s
        })
        .collect();
    let stats = partials.iter().fold(RunStats::new(), |acc, s| acc.merge(s));
    Ok(PartitionSummary { beta, stats, exact_variance })
}

/// Mean-one lognormal with the given variance.
pub fn lognormal_mean_one<R: Rng + ?Sized>(variance: f64, rng: &mut R) -> f64 {
    if variance == 0.0 {
        return 1.0;
    }
    let s2 = variance.ln_1p();
    let z: f64 = StandardNormal.sample(rng);
    (s2.sqrt() * z - s2 / 2.0).exp()
}

/// Pool of approximate draws of `W^{(0)}` at parameter `r`.
///
/// Seeds `pool_size` mean-one lognormals with variance `R(r − levels)` and
/// applies `levels` resampled combination steps. After each step the pool is
/// mapped through `w ↦ w^γ / mean(w^γ)` with `γ` chosen so that the pool
/// variance equals the exact flow value: mean and variance are the expanding
/// directions of the step, higher centered moments contract.
pub fn limit_pool(b: u32, r: f64, levels: usize, pool_size: usize, seed: u64) -> Result<Vec<f64>> {
    let flow = Flow::new(b)?;
    let anchor_variance = flow.eval_r(r - levels as f64, crate::flow::DEFAULT_DEPTH)?;
    pool_from_variance(b, anchor_variance, levels, pool_size, seed)
}

pub(crate) fn pool_from_variance(
    b: u32,
    anchor_variance: f64,
    levels: usize,
    pool_size: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    LatticeParams::new(b)?;
    if pool_size < MIN_POOL {
        return Err(Error::invalid(format!("pool size {pool_size} below the minimum {MIN_POOL}")));
    }
    let bb = b as usize;
    let ranges = chunks(pool_size, POOL_CHUNK);
    let mut pool: Vec<f64> = ranges
        .par_iter()
        .enumerate()
        .flat_map_iter(|(c, range)| {
            let mut rng = stream(seed, c as u64, 0);
            range.clone().map(move |_| lognormal_mean_one(anchor_variance, &mut rng)).collect::<Vec<_>>()
        })
        .collect();
    let mut target = anchor_variance;
    project_moments(&mut pool, target, &ranges);
    for level in 1..=levels {
        target = map_m(target, b);
        let prev = &pool;
        pool = ranges
            .par_iter()
            .enumerate()
            .flat_map_iter(|(c, range)| {
                let mut rng = stream(seed, c as u64, level as u64);
                let mut kids = vec![0.0; bb * bb];
                range
                    .clone()
                    .map(|_| {
                        for k in kids.iter_mut() {
                            *k = prev[rng.random_range(0..pool_size)];
                        }
                        combine(&kids, bb)
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        project_moments(&mut pool, target, &ranges);
    }
    Ok(pool)
}

/// Sums `f` over fixed chunks, then adds the chunk totals in order.
fn chunked_sum<const K: usize>(ranges: &[Range<usize>], f: impl Fn(usize) -> [f64; K] + Sync) -> [f64; K] {
    let parts: Vec<[f64; K]> = ranges
        .par_iter()
        .map(|r| {
            let mut acc = [0.0; K];
            for i in r.clone() {
                let v = f(i);
                for k in 0..K {
                    acc[k] += v[k];
                }
            }
            acc
        })
        .collect();
    parts.iter().fold([0.0; K], |mut acc, p| {
        for k in 0..K {
            acc[k] += p[k];
        }
        acc
    })
}

/// Rescales the pool to mean one and, via a power map, to variance `target`.
fn project_moments(pool: &mut [f64], target: f64, ranges: &[Range<usize>]) {
    let n = pool.len() as f64;
    let logs: Vec<f64> = pool.iter().map(|&w| if w > 0.0 { w.ln() } else { f64::NEG_INFINITY }).collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return;
    }
    let goal = target.ln_1p();
    // g(γ) = ln(n Σe^{2γℓ} / (Σe^{γℓ})²), increasing in γ
    let eval = |g: f64| {
        let [s1, t1, s2, t2] = chunked_sum(ranges, |i| {
            let l = logs[i] - top;
            if l == f64::NEG_INFINITY {
                return [0.0; 4];
            }
            let (e1, e2) = ((g * l).exp(), (2.0 * g * l).exp());
            [e1, l * e1, e2, l * e2]
        });
        ((n * s2 / (s1 * s1)).ln() - goal, 2.0 * (t2 / s2 - t1 / s1))
    };
    let (mut lo, mut hi) = (1e-3, 1e3);
    let mut gamma = 1.0;
    for _ in 0..60 {
        let (f, df) = eval(gamma);
        if f.abs() < 1e-13 {
            break;
        }
        if f > 0.0 {
            hi = gamma;
        } else {
            lo = gamma;
        }
        let step = gamma - f / df;
        gamma = if df > 0.0 && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
    }
    let [sum] = chunked_sum(ranges, |i| [((logs[i] - top) * gamma).exp()]);
    let scale = n / sum;
    for (w, &l) in pool.iter_mut().zip(&logs) {
        *w = ((l - top) * gamma).exp() * scale;
    }
}

/// Moments of the final pool of [`limit_pool`].
pub fn sample_limit_mass_pool(b: u32, r: f64, levels: usize, pool_size: usize, seed: u64) -> Result<RunStats> {
    Ok(RunStats::from_slice(&limit_pool(b, r, levels, pool_size, seed)?))
}

/// Fraction of the limit pool below `eps`, for each `r`.
pub fn strong_disorder_scan(
    b: u32,
    r_list: &[f64],
    levels: usize,
    pool_size: usize,
    seed: u64,
    eps: f64,
) -> Result<Vec<(f64, f64)>> {
    r_list
        .iter()
        .map(|&r| {
            let pool = limit_pool(b, r, levels, pool_size, seed)?;
            Ok((r, fraction_below(&pool, eps)))
        })
        .collect()
}

pub fn fraction_below(pool: &[f64], eps: f64) -> f64 {
    pool.iter().filter(|&&w| w < eps).count() as f64 / pool.len() as f64
}

/// Jointly consistent arrays `W^{(0)}, …, W^{(K)}` for one disorder sample.
///
/// Seeds generation `K + depth` with i.i.d. mean-one lognormals of variance
/// `R(r − K − depth)` and coarsens; entry `k` of the result is generation `k`.
pub fn sample_limit_tree(
    b: u32,
    r: f64,
    k_max: usize,
    depth: usize,
    seed: u64,
    sample: u64,
) -> Result<Vec<PartitionArray>> {
    let top = k_max + depth;
    let len = guard("limit-tree", b, top, TREE_ENTRY_LIMIT)? as usize;
    let variance = Flow::new(b)?.eval_r(r - top as f64, crate::flow::DEFAULT_DEPTH)?;
    let mut rng = stream(seed, sample, top as u64);
    let values = (0..len).map(|_| lognormal_mean_one(variance, &mut rng)).collect();
    let mut current = PartitionArray { b, generation: top, values };
    let mut out = Vec::with_capacity(k_max + 1);
    for _ in 0..depth {
        current = current.coarsen()?;
    }
    out.push(current.clone());
    for _ in 0..k_max {
        current = current.coarsen()?;
        out.push(current.clone());
    }
    out.reverse();
    Ok(out)
}

/// `M_r(p) = (1/|Γ_N|) Π_{e◁p} W^{(N)}_e` for `p ∈ Γ_N`.
pub fn cylinder_mass(arrays: &[PartitionArray], p: &HierPath) -> Result<f64> {
    let n = p.generation();
    let arr = arrays.get(n).ok_or(Error::InsufficientDepth { need: n, have: arrays.len().saturating_sub(1) })?;
    if arr.b() != p.b() {
        return Err(Error::invalid("path and arrays use different b"));
    }
    let count = LatticeParams::new(p.b())?.path_count_f64(n);
    let prod: f64 = p.edge_indices().iter().map(|&e| arr.get(e)).product();
    Ok(prod / count)
}

/// Draws a generation-`n` path from the normalized polymer measure.
pub fn sample_polymer_path(arrays: &[PartitionArray], n: usize, rng: &mut StreamRng) -> Result<HierPath> {
    if arrays.len() <= n {
        return Err(Error::InsufficientDepth { need: n, have: arrays.len().saturating_sub(1) });
    }
    let b = arrays[0].b();
    let mut decisions = Vec::with_capacity(crate::lattice::decision_count(b, n));
    descend(arrays, 0, 0, n, rng, &mut decisions)?;
    HierPath::new(b, n, decisions)
}

fn descend(
    arrays: &[PartitionArray],
    k: usize,
    edge: u64,
    n: usize,
    rng: &mut StreamRng,
    decisions: &mut Vec<u8>,
) -> Result<()> {
    if k == n {
        return Ok(());
    }
    let b = arrays[0].b() as u64;
    let child = &arrays[k + 1];
    let weights: Vec<f64> = (0..b)
        .map(|i| (0..b).map(|j| child.get(edge * b * b + i * b + j)).product())
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeight { generation: k });
    }
    let mut u = rng.random::<f64>() * total;
    let mut branch = b - 1;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            branch = i as u64;
            break;
        }
        u -= w;
    }
    decisions.push(branch as u8);
    for j in 0..b {
        descend(arrays, k + 1, edge * b * b + branch * b + j, n, rng, decisions)?;
    }
    Ok(())
}

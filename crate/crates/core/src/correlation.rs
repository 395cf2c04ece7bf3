//! The correlation measure `υ_r` on pairs of paths, restricted to cylinder
//! sets of a small generation `N`, its splitting into the product part and
//! the intersection-carried part `ρ_r`, and the density factors relating
//! `υ_r` and `υ_t`.

use num_bigint::BigUint;

use crate::csv_out::{num, CsvTable};
use crate::error::{Error, Result};
use crate::flow::VarianceProfile;
use crate::lattice::{enumerate_paths, shared_edge_count, HierPath, LatticeParams};

/// Largest number of ordered pairs a table may hold.
pub const TABLE_PAIR_LIMIT: u128 = 1 << 20;

/// `υ_r(p × q)` for every ordered pair `(p, q) ∈ Γ_N × Γ_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable {
    b: u32,
    generation: usize,
    r: f64,
    /// `R(r − N)`
    r_at: f64,
    /// `R(r)`
    r_total: f64,
    paths: Vec<HierPath>,
    xi: Vec<u64>,
    masses: Vec<f64>,
}

impl CorrelationTable {
    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn r_at(&self) -> f64 {
        self.r_at
    }

    pub fn r_total(&self) -> f64 {
        self.r_total
    }

    /// Paths in canonical index order; row/column `i` of the table is `paths()[i]`.
    pub fn paths(&self) -> &[HierPath] {
        &self.paths
    }

    pub fn size(&self) -> usize {
        self.paths.len()
    }

    pub fn mass(&self, p: usize, q: usize) -> f64 {
        self.masses[p * self.size() + q]
    }

    pub fn xi(&self, p: usize, q: usize) -> u64 {
        self.xi[p * self.size() + q]
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn row_marginal(&self, p: usize) -> f64 {
        let m = self.size();
        self.masses[p * m..(p + 1) * m].iter().sum()
    }

    pub fn column_marginal(&self, q: usize) -> f64 {
        (0..self.size()).map(|p| self.mass(p, q)).sum()
    }

    /// CSV with columns `p_index,q_index,xi,mass`.
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["p_index", "q_index", "xi", "mass"]);
        let m = self.size();
        for p in 0..m {
            for q in 0..m {
                t.push(vec![p.to_string(), q.to_string(), self.xi(p, q).to_string(), num(self.mass(p, q))]);
            }
        }
        t
    }
}

/// Builds the generation-`n` table at the anchor of `profile`.
pub fn build_table(b: u32, n: usize, profile: &VarianceProfile) -> Result<CorrelationTable> {
    if profile.b() != b {
        return Err(Error::invalid(format!("profile is for b = {}, table requested for b = {b}", profile.b())));
    }
    let params = LatticeParams::new(b)?;
    let count = params.path_count(n);
    let pairs = &count * &count;
    if pairs > BigUint::from(TABLE_PAIR_LIMIT) {
        return Err(Error::Budget {
            guard: "correlation-table",
            requested: u128::try_from(&pairs).unwrap_or(u128::MAX),
            limit: TABLE_PAIR_LIMIT,
        });
    }
    let r_at = profile.get(n)?.r;
    let r_total = profile.at(0).r;
    let paths = enumerate_paths(params, n)?;
    let m = paths.len();
    let norm = 1.0 / (m as f64 * m as f64);
    let mut xi = Vec::with_capacity(m * m);
    let mut masses = Vec::with_capacity(m * m);
    for p in &paths {
        for q in &paths {
            let x = shared_edge_count(p, q)?;
            xi.push(x);
            masses.push((1.0 + r_at).powi(x as i32) * norm);
        }
    }
    Ok(CorrelationTable { b, generation: n, r: profile.anchor(), r_at, r_total, paths, xi, masses })
}

/// Splits `υ_r = μ×μ + R(r) ρ_r` on the table's cylinders.
///
/// Returns the (constant) product-part mass `1/|Γ_N|²` and the `ρ_r` table.
pub fn lebesgue_split(table: &CorrelationTable) -> Result<(f64, Vec<f64>)> {
    if !(table.r_total > 0.0) {
        return Err(Error::invalid(format!("R(r) = {} must be positive", table.r_total)));
    }
    let m = table.size() as f64;
    let uniform = 1.0 / (m * m);
    let rho = table
        .xi
        .iter()
        .map(|&x| {
            if x == 0 {
                0.0
            } else {
                // (1+x)^ξ − 1 without cancellation
                (x as f64 * table.r_at.ln_1p()).exp_m1() * uniform / table.r_total
            }
        })
        .collect();
    Ok((uniform, rho))
}

/// `φ_n^{(r,t)}(p, q) = ((1 + R(t − n))/(1 + R(r − n)))^{ξ_n(p, q)}`.
pub fn rn_factor(
    p: &HierPath,
    q: &HierPath,
    n: usize,
    profile_r: &VarianceProfile,
    profile_t: &VarianceProfile,
) -> Result<f64> {
    let x = shared_edge_count(p, q)?;
    if p.generation() != n {
        return Err(Error::GenerationMismatch { left: p.generation(), right: n });
    }
    let ratio = (1.0 + profile_t.get(n)?.r) / (1.0 + profile_r.get(n)?.r);
    Ok(ratio.powi(x as i32))
}

/// Number of ordered pairs in `Γ_n × Γ_n` with each shared-edge count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct XiHistogram {
    /// `counts[k]` pairs share exactly `k` edges
    pub counts: Vec<BigUint>,
    /// `|Γ_n|`
    pub path_count: BigUint,
}

impl XiHistogram {
    /// Exact counts from the pair recursion: same top-level branch gives a
    /// product of `b` independent sub-pairs, different branches share nothing.
    pub fn new(b: u32, n: usize) -> Result<Self> {
        let params = LatticeParams::new(b)?;
        if u64::from(b).checked_pow(n as u32).is_none_or(|d| d > 1 << 16) {
            return Err(Error::Budget {
                guard: "xi-histogram",
                requested: (b as u128).saturating_pow(n as u32),
                limit: 1 << 16,
            });
        }
        let bb = BigUint::from(b);
        // H_0(z) = z
        let mut h = vec![BigUint::ZERO, BigUint::from(1u32)];
        for k in 0..n {
            let gamma = params.path_count(k);
            let mut power = vec![BigUint::from(1u32)];
            for _ in 0..b {
                power = poly_mul(&power, &h);
            }
            for c in power.iter_mut() {
                *c *= &bb;
            }
            power[0] += &bb * (&bb - 1u32) * gamma.pow(2 * b);
            h = power;
        }
        Ok(Self { counts: h, path_count: params.path_count(n) })
    }

    pub fn total(&self) -> BigUint {
        self.counts.iter().sum()
    }

    /// `μ×μ(ξ_n = k)` for each `k`.
    pub fn probabilities(&self) -> Vec<f64> {
        let denom = 2.0 * big_ln(&self.path_count);
        self.counts
            .iter()
            .map(|c| if c == &BigUint::ZERO { 0.0 } else { (big_ln(c) - denom).exp() })
            .collect()
    }

    /// `Σ_k μ×μ(ξ_n = k) (1 + x)^k`, the total `υ_r` mass when `x = R(r − n)`.
    pub fn mass(&self, x: f64) -> f64 {
        self.probabilities().iter().enumerate().map(|(k, p)| p * (1.0 + x).powi(k as i32)).sum()
    }
}

fn poly_mul(a: &[BigUint], b: &[BigUint]) -> Vec<BigUint> {
    let mut out = vec![BigUint::ZERO; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        if x == &BigUint::ZERO {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Natural logarithm of a positive big integer, exact to f64 rounding.
fn big_ln(x: &BigUint) -> f64 {
    let shift = x.bits().saturating_sub(64);
    let top: u64 = (x >> shift).try_into().expect("at most 64 bits");
    (top as f64).ln() + shift as f64 * std::f64::consts::LN_2
}

//! The variance flow `R`, its derivative, the third and fourth centered
//! moment flows, the critical inverse temperature and the spatial
//! correlation constants built from them.
//!
//! `R` is the increasing solution of `R(r + 1) = M_b(R(r))` with
//! `M_b(x) = ((1 + x)^b − 1)/b` that vanishes like `κ²/(−r)` as `r → −∞`.
//! It is evaluated by shooting: seed `R` at a deep anchor `t = r − depth`
//! from its asymptotic expansion and apply the exact forward map `depth`
//! times.
//!
//! The seed inverts a truncated asymptotic series of the Abel (Fatou)
//! coordinate `φ` of `M_b`, i.e. the function with `φ(M_b(x)) = φ(x) + 1`:
//!
//! ```text
//! φ(x) = −κ²/x + η·log(x/κ²) + c₁x + c₂x² + …
//! ```
//!
//! normalized so that `R = φ⁻¹` has no `1/r²` term, which is what pins the
//! origin of `r`. The coefficients are solved order by order for the given
//! `b`. Because `R′ = 1/φ′(R)`, the same series seeds the derivative.

use crate::csv_out::{num, CsvTable};
use crate::error::{Error, Result};

/// Anchors above this value are rejected.
pub const VALIDITY_FLOOR: f64 = -50.0;
pub const DEFAULT_DEPTH: usize = 300;
const SERIES_ORDER: usize = 8;

/// `M_b(x) = ((1 + x)^b − 1)/b`.
pub fn map_m(x: f64, b: u32) -> f64 {
    // exp_m1/ln_1p keep full relative precision for tiny x
    (f64::from(b) * x.ln_1p()).exp_m1() / f64::from(b)
}

/// Lattice constants entering the critical scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConstants {
    pub b: u32,
    /// `κ² = 2/(b − 1)`
    pub kappa2: f64,
    /// `η = (b + 1)/(3(b − 1))`
    pub eta: f64,
    /// Skew `E[ω³]` of the disorder law.
    pub tau_skew: f64,
}

impl FlowConstants {
    pub fn new(b: u32, tau_skew: f64) -> Result<Self> {
        if b < 2 {
            return Err(Error::invalid(format!("b = {b} must be at least 2")));
        }
        let bf = f64::from(b);
        Ok(Self { b, kappa2: 2.0 / (bf - 1.0), eta: (bf + 1.0) / (3.0 * (bf - 1.0)), tau_skew })
    }

    pub fn kappa(&self) -> f64 {
        self.kappa2.sqrt()
    }
}

/// Truncated asymptotic series of the Abel coordinate of `M_b` at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct AbelSeries {
    b: u32,
    /// coefficient of `−1/x`
    pole: f64,
    /// coefficient of `log(x / pole)`
    log_coef: f64,
    /// `coefs[k]` multiplies `x^k`; `coefs[0]` is unused
    coefs: Vec<f64>,
}

impl AbelSeries {
    pub fn new(b: u32, order: usize) -> Self {
        let terms = order + 3;
        let bf = f64::from(b);
        // M(x) = x (1 + u(x)), u_j = C(b, j+1)/b
        let mut u = vec![0.0; terms + 1];
        let mut binom = 1.0f64;
        for (j, slot) in u.iter_mut().enumerate().skip(1) {
            // binom tracks C(b, j+1)
            let k = j + 1;
            binom = if k == 2 { bf * (bf - 1.0) / 2.0 } else { binom * (bf - k as f64 + 1.0) / k as f64 };
            *slot = if k as u32 <= b { binom / bf } else { 0.0 };
        }
        let mul = |p: &[f64], q: &[f64]| -> Vec<f64> {
            let mut r = vec![0.0; terms + 1];
            for (i, &a) in p.iter().enumerate().filter(|(_, a)| **a != 0.0) {
                for (j, &c) in q.iter().enumerate() {
                    if i + j <= terms {
                        r[i + j] += a * c;
                    }
                }
            }
            r
        };
        // 1/(1+u)
        let mut inv = vec![0.0; terms + 1];
        inv[0] = 1.0;
        for k in 1..=terms {
            inv[k] = -(1..=k).map(|j| u[j] * inv[k - j]).sum::<f64>();
        }
        // log(1+u)
        let mut log = vec![0.0; terms + 1];
        let mut power = vec![0.0; terms + 1];
        power[0] = 1.0;
        for k in 1..=terms {
            power = mul(&power, &u);
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            for i in 0..=terms {
                log[i] += sign * power[i] / k as f64;
            }
        }
        let pole = 1.0 / u[1];
        // residual E(x) of φ(M(x)) − φ(x) − 1, as a power series
        let mut e = vec![0.0; terms + 1];
        for i in 1..=terms {
            e[i - 1] -= pole * inv[i];
        }
        e[0] -= 1.0;
        let log_coef = -e[1] / log[1];
        for i in 0..=terms {
            e[i] += log_coef * log[i];
        }
        let mut one_plus_u = u.clone();
        one_plus_u[0] = 1.0;
        let mut coefs = vec![0.0; order + 1];
        let mut pk = vec![0.0; terms + 1];
        pk[0] = 1.0;
        for k in 1..=order {
            pk = mul(&pk, &one_plus_u);
            // c_k x^k ((1+u)^k − 1) first contributes at x^{k+1}
            let c = -e[k + 1] / pk[1];
            coefs[k] = c;
            for i in 1..=terms - k {
                e[k + i] += c * pk[i];
            }
        }
        Self { b, pole, log_coef, coefs }
    }

    pub fn pole(&self) -> f64 {
        self.pole
    }

    pub fn log_coef(&self) -> f64 {
        self.log_coef
    }

    pub fn phi(&self, x: f64) -> f64 {
        let poly = self.coefs.iter().enumerate().skip(1).rev().fold(0.0, |acc, (_, &c)| (acc + c) * x);
        -self.pole / x + self.log_coef * (x / self.pole).ln() + poly
    }

    pub fn dphi(&self, x: f64) -> f64 {
        let poly: f64 = self
            .coefs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| k as f64 * c * x.powi(k as i32 - 1))
            .sum();
        self.pole / (x * x) + self.log_coef / x + poly
    }

    /// Solves `φ(x) = t` for `t ≪ 0`, returning `(R(t), R′(t))`.
    pub fn invert(&self, t: f64) -> (f64, f64) {
        let s = -t;
        let mut x = self.pole / s + self.pole * self.log_coef * s.ln() / (s * s);
        for _ in 0..64 {
            let step = (self.phi(x) - t) / self.dphi(x);
            x -= step;
            if step.abs() <= 1e-17 * x {
                break;
            }
        }
        (x, 1.0 / self.dphi(x))
    }
}

/// Flow values at one point `r − k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowPoint {
    pub r: f64,
    pub rprime: f64,
    pub r3: f64,
    pub r4: f64,
}

/// `R, R′, R⁽³⁾, R⁽⁴⁾` tabulated at `anchor − k` for `k = 0..=depth`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceProfile {
    b: u32,
    anchor: f64,
    points: Vec<FlowPoint>,
}

impl VarianceProfile {
    pub fn b(&self) -> u32 {
        self.b
    }

    /// The `r` the profile is anchored at (`k = 0`).
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn depth(&self) -> usize {
        self.points.len() - 1
    }

    /// Values at `anchor − k`.
    pub fn at(&self, k: usize) -> &FlowPoint {
        &self.points[k]
    }

    pub fn get(&self, k: usize) -> Result<&FlowPoint> {
        self.points.get(k).ok_or(Error::InsufficientDepth { need: k, have: self.depth() })
    }

    pub fn points(&self) -> &[FlowPoint] {
        &self.points
    }

    #[cfg(test)]
    pub(crate) fn points_mut(&mut self) -> &mut [FlowPoint] {
        &mut self.points
    }

    pub fn require_depth(&self, need: usize) -> Result<()> {
        if self.depth() < need {
            return Err(Error::InsufficientDepth { need, have: self.depth() });
        }
        Ok(())
    }

    /// CSV with columns `k,R,Rprime,R3,R4`.
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["k", "R", "Rprime", "R3", "R4"]);
        for (k, p) in self.points.iter().enumerate() {
            t.push(vec![k.to_string(), num(p.r), num(p.rprime), num(p.r3), num(p.r4)]);
        }
        t
    }
}

/// One coarsening step of the first four centered moments.
///
/// If `W_ij` are i.i.d. with mean one and centered moments `(R, R3, R4)`,
/// returns the centered moments of `(1/b) Σ_i Π_j W_ij`.
pub fn moment_step(r2: f64, r3: f64, r4: f64, b: u32) -> (f64, f64, f64) {
    let bf = f64::from(b);
    let bi = b as i32;
    let m2 = 1.0 + r2;
    let m3 = 1.0 + 3.0 * r2 + r3;
    let m4 = 1.0 + 6.0 * r2 + 4.0 * r3 + r4;
    // centered moments of Y = Π_j W_j − 1
    let y2 = map_m(r2, b) * bf;
    let y3 = m3.powi(bi) - 3.0 * m2.powi(bi) + 2.0;
    let y4 = m4.powi(bi) - 4.0 * m3.powi(bi) + 6.0 * m2.powi(bi) - 3.0;
    (map_m(r2, b), y3 / (bf * bf), (y4 + 3.0 * (bf - 1.0) * y2 * y2) / (bf * bf * bf))
}

/// Evaluator for a fixed lattice parameter `b`.
#[derive(Debug, Clone)]
pub struct Flow {
    b: u32,
    series: AbelSeries,
    seed_perturbation: f64,
}

impl Flow {
    pub fn new(b: u32) -> Result<Self> {
        if b < 2 {
            return Err(Error::invalid(format!("b = {b} must be at least 2")));
        }
        Ok(Self { b, series: AbelSeries::new(b, SERIES_ORDER), seed_perturbation: 0.0 })
    }

    /// Multiplies the anchor seed by `1 + delta`; used to check that the
    /// built-in identity checks catch a broken flow.
    #[doc(hidden)]
    pub fn with_seed_perturbation(mut self, delta: f64) -> Self {
        self.seed_perturbation = delta;
        self
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn series(&self) -> &AbelSeries {
        &self.series
    }

    pub fn constants(&self, tau_skew: f64) -> FlowConstants {
        FlowConstants::new(self.b, tau_skew).expect("b validated")
    }

    fn seed(&self, r: f64, depth: usize) -> Result<(f64, f64)> {
        let anchor = r - depth as f64;
        if !(anchor <= VALIDITY_FLOOR) {
            return Err(Error::AnchorTooShallow { anchor, floor: VALIDITY_FLOOR });
        }
        let (x, d) = self.series.invert(anchor);
        Ok((x * (1.0 + self.seed_perturbation), d))
    }

    /// `R(r)` from an anchor `depth` steps below.
    pub fn eval_r(&self, r: f64, depth: usize) -> Result<f64> {
        let (mut x, _) = self.seed(r, depth)?;
        for _ in 0..depth {
            x = map_m(x, self.b);
        }
        Ok(x)
    }

    /// `R′(r)` via the chain-rule product from the anchor.
    pub fn eval_rprime(&self, r: f64, depth: usize) -> Result<f64> {
        let (mut x, mut d) = self.seed(r, depth)?;
        for _ in 0..depth {
            d *= (1.0 + x).powi(self.b as i32 - 1);
            x = map_m(x, self.b);
        }
        Ok(d)
    }

    /// Full profile; `R⁽³⁾` and `R⁽⁴⁾` are seeded at zero at the anchor.
    pub fn profile(&self, r: f64, depth: usize) -> Result<VarianceProfile> {
        self.profile_with_moment_seeds(r, depth, 0.0, 0.0)
    }

    pub(crate) fn profile_with_moment_seeds(
        &self,
        r: f64,
        depth: usize,
        r3_seed: f64,
        r4_seed: f64,
    ) -> Result<VarianceProfile> {
        let (x, d) = self.seed(r, depth)?;
        let mut p = FlowPoint { r: x, rprime: d, r3: r3_seed, r4: r4_seed };
        let mut points = Vec::with_capacity(depth + 1);
        points.push(p);
        for _ in 0..depth {
            let rprime = p.rprime * (1.0 + p.r).powi(self.b as i32 - 1);
            let (r2, r3, r4) = moment_step(p.r, p.r3, p.r4, self.b);
            p = FlowPoint { r: r2, rprime, r3, r4 };
            points.push(p);
        }
        points.reverse();
        Ok(VarianceProfile { b: self.b, anchor: r, points })
    }
}

pub fn eval_r(b: u32, r: f64, depth: usize) -> Result<f64> {
    Flow::new(b)?.eval_r(r, depth)
}

pub fn eval_rprime(b: u32, r: f64, depth: usize) -> Result<f64> {
    Flow::new(b)?.eval_rprime(r, depth)
}

pub fn eval_moment_profile(b: u32, r: f64, depth: usize) -> Result<VarianceProfile> {
    Flow::new(b)?.profile(r, depth)
}

/// Critical weak-disorder inverse temperature
/// `κ/√n − τκ²/(2n) + κη log n / n^{3/2} + κ r / n^{3/2}`.
pub fn eval_beta(n: usize, r: f64, c: &FlowConstants) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("critical scaling needs n ≥ 1"));
    }
    let nf = n as f64;
    let kappa = c.kappa();
    let beta = kappa / nf.sqrt() - c.tau_skew * c.kappa2 / (2.0 * nf)
        + kappa * c.eta * nf.ln() / nf.powf(1.5)
        + kappa * r / nf.powf(1.5);
    if beta > 0.0 {
        Ok(beta)
    } else {
        Err(Error::NonPositiveBeta { beta, n, r })
    }
}

/// `log C_{r,n}` for `n = 1..=max_n` (index 0 unused, set to NaN).
pub fn log_vartheta_correlations(max_n: usize, profile: &VarianceProfile) -> Result<Vec<f64>> {
    profile.require_depth(max_n)?;
    let exponent = f64::from(profile.b() - 1);
    let mut out = vec![f64::NAN; max_n + 1];
    let mut acc = 0.0;
    for n in 1..=max_n {
        if n >= 2 {
            let p = profile.at(n - 1);
            acc += exponent * (6.0 * p.r + 4.0 * p.r3 + p.r4).ln_1p();
        }
        out[n] = 2.0 * profile.at(n).rprime.ln() + acc;
    }
    Ok(out)
}

/// `C_{r,n} = R′(r−n)² Π_{k=1}^{n−1} (1 + 6R + 4R⁽³⁾ + R⁽⁴⁾)(r−k)^{b−1}`.
pub fn vartheta_correlation(n: usize, profile: &VarianceProfile) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("C_{r,n} needs n ≥ 1"));
    }
    Ok(log_vartheta_correlations(n, profile)?[n].exp())
}

/// Partial sums `S_N = Σ_{n=1}^{N} (b−1) n^{−λ} C_{r,n} (b+1)` for `N = 1..=max_n`
/// (index 0 holds 0).
pub fn energy_series_partials(lambda: f64, max_n: usize, profile: &VarianceProfile) -> Result<Vec<f64>> {
    let logc = log_vartheta_correlations(max_n, profile)?;
    let b = f64::from(profile.b());
    let mut out = Vec::with_capacity(max_n + 1);
    out.push(0.0);
    let mut s = 0.0;
    for (n, lc) in logc.iter().enumerate().skip(1) {
        s += (b - 1.0) * (b + 1.0) * (lc - lambda * (n as f64).ln()).exp();
        out.push(s);
    }
    Ok(out)
}

pub fn energy_series_partial(lambda: f64, n_max: usize, profile: &VarianceProfile) -> Result<f64> {
    Ok(*energy_series_partials(lambda, n_max, profile)?.last().expect("nonempty"))
}

//! One-pass moment accumulation and a few small statistical helpers.

use serde::{Deserialize, Serialize};

/// Running count, mean and centered moments up to order four.
///
/// Updates and merges use the pairwise formulas of Pébay (2008), so partial
/// accumulators from independent workers can be combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub count: u64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl RunStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_slice(values: &[f64]) -> Self {
        let mut s = Self::new();
        for &v in values {
            s.push(v);
        }
        s
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&self, other: &RunStats) -> RunStats {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let d3 = d2 * delta;
        let d4 = d2 * d2;
        let mean = self.mean + delta * nb / n;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + d3 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d4 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        RunStats { count: self.count + other.count, mean, m2, m3, m4 }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count as f64 - 1.0)
        }
    }

    /// Third centered sample moment (plug-in).
    pub fn central3(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m3 / self.count as f64
        }
    }

    /// Fourth centered sample moment (plug-in).
    pub fn central4(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m4 / self.count as f64
        }
    }

    pub fn se_mean(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    /// Large-sample standard error of the sample variance, sqrt((μ4 − σ⁴)/n).
    pub fn se_variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let s2 = self.m2 / self.count as f64;
        ((self.central4() - s2 * s2).max(0.0) / self.count as f64).sqrt()
    }
}

/// Median of a sample; the slice is reordered.
pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty sample");
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Weighted least-squares slope of `y` against `x` with standard errors `se`,
/// returned as `(slope, slope_standard_error)`.
pub fn weighted_slope(x: &[f64], y: &[f64], se: &[f64]) -> (f64, f64) {
    assert!(x.len() == y.len() && y.len() == se.len() && x.len() >= 2);
    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - xm) * (x - xm)).sum();
    let sxy: f64 = w.iter().zip(x.iter().zip(y)).map(|(w, (x, y))| w * (x - xm) * (y - ym)).sum();
    (sxy / sxx, (1.0 / sxx).sqrt())
}

/// Pearson χ² statistic of observed counts against expected probabilities.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> f64 {
    let total: u64 = observed.iter().sum();
    observed
        .iter()
        .zip(probs)
        .map(|(&o, &p)| {
            let e = p * total as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(values: &[f64]) -> (f64, f64, f64, f64) {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let c = |k: i32| values.iter().map(|v| (v - mean).powi(k)).sum::<f64>() / n;
        (mean, values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0), c(3), c(4))
    }

    #[test]
    fn matches_two_pass_moments() {
        let v = [0.5, 1.5, 2.25, -1.0, 3.5, 0.0, 7.0];
        let s = RunStats::from_slice(&v);
        let (m, var, c3, c4) = naive(&v);
        assert!((s.mean - m).abs() < 1e-14);
        assert!((s.variance() - var).abs() < 1e-12);
        assert!((s.central3() - c3).abs() < 1e-12);
        assert!((s.central4() - c4).abs() < 1e-10);
    }

    #[test]
    fn empty_and_single() {
        let s = RunStats::new();
        assert_eq!(s.variance(), 0.0);
        let s = RunStats::from_slice(&[3.0]);
        assert_eq!(s.mean, 3.0);
        assert_eq!(s.se_mean(), 0.0);
    }

    #[test]
    fn median_and_slope() {
        let mut v = vec![3.0, 1.0, 2.0, 10.0];
        assert_eq!(median(&mut v), 2.5);
        let (slope, _) = weighted_slope(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0], &[1.0, 1.0, 1.0]);
        assert!((slope - 2.0).abs() < 1e-14);
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    proptest! {
        #[test]
        fn merge_is_associative_and_order_free(
            a in prop::collection::vec(-50.0f64..50.0, 1..40),
            b in prop::collection::vec(-50.0f64..50.0, 1..40),
            c in prop::collection::vec(-50.0f64..50.0, 1..40),
        ) {
            let (sa, sb, sc) = (RunStats::from_slice(&a), RunStats::from_slice(&b), RunStats::from_slice(&c));
            let left = sa.merge(&sb).merge(&sc);
            let right = sa.merge(&sb.merge(&sc));
            let swapped = sc.merge(&sa).merge(&sb);
            for other in [right, swapped] {
                prop_assert_eq!(left.count, other.count);
                prop_assert!((left.mean - other.mean).abs() <= 1e-12 * (1.0 + left.mean.abs()));
                prop_assert!(rel(left.variance(), other.variance()) <= 1e-12 || left.variance() < 1e-9);
                prop_assert!((left.central3() - other.central3()).abs() <= 1e-10 * (1.0 + left.central4()));
                prop_assert!(rel(left.central4(), other.central4()) <= 1e-12 || left.central4() < 1e-9);
            }
        }
    }
}

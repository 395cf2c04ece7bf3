//! Diamond graphs, edge addresses and hierarchical directed paths.
//!
//! `D_0` is a single edge. `D_{n+1}` replaces every edge of `D_n` by `b`
//! parallel branches of `b` edges in series, so `D_n` has `b^{2n}` edges. An
//! edge is addressed by the `n` pairs `(branch, segment)` chosen on the way
//! down; a directed path is the tree of branch choices made at every embedded
//! copy of `D_1` it passes through.
//!
//! All digits are stored zero-based: branches and segments range over `0..b`.

use num_bigint::BigUint;
use rand::Rng;

use crate::error::{Error, Result};

/// Largest path space [`enumerate_paths`] will materialize.
pub const ENUMERATION_LIMIT: u128 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticeParams {
    b: u32,
}

impl LatticeParams {
    pub fn new(b: u32) -> Result<Self> {
        if !(2..=255).contains(&b) {
            return Err(Error::invalid(format!("branching number b = {b} must lie in 2..=255")));
        }
        Ok(Self { b })
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    /// `b^{2n}`.
    pub fn edge_count(&self, n: usize) -> BigUint {
        BigUint::from(self.b).pow(2 * n as u32)
    }

    /// `|Γ_n| = b^{(b^n - 1)/(b - 1)}`.
    pub fn path_count(&self, n: usize) -> BigUint {
        BigUint::from(self.b).pow(decision_count(self.b, n) as u32)
    }

    /// `|Γ_n|` as a float (infinite once it exceeds the `f64` range).
    pub fn path_count_f64(&self, n: usize) -> f64 {
        self.path_count(n).to_string().parse().expect("decimal digits parse as f64")
    }
}

/// Number of branch decisions in a generation-`n` path, `(b^n - 1)/(b - 1)`.
pub fn decision_count(b: u32, n: usize) -> usize {
    (0..n).map(|k| (b as usize).pow(k as u32)).sum()
}

/// `|Γ_n|` as an exact integer.
pub fn path_count(params: LatticeParams, n: usize) -> BigUint {
    params.path_count(n)
}

/// An edge of `D_n`: `n` zero-based `(branch, segment)` pairs, coarsest first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeAddress {
    b: u32,
    digits: Vec<(u8, u8)>,
}

impl EdgeAddress {
    pub fn new(b: u32, digits: Vec<(u8, u8)>) -> Result<Self> {
        if digits.iter().any(|&(i, j)| u32::from(i) >= b || u32::from(j) >= b) {
            return Err(Error::invalid("edge digit out of range"));
        }
        Ok(Self { b, digits })
    }

    /// The single edge of `D_0`.
    pub fn root(b: u32) -> Self {
        Self { b, digits: Vec::new() }
    }

    pub fn generation(&self) -> usize {
        self.digits.len()
    }

    pub fn digits(&self) -> &[(u8, u8)] {
        &self.digits
    }

    /// Base-`b²` positional value of the digits `branch·b + segment`, most
    /// significant first. Lies in `0..b^{2n}`.
    pub fn index(&self) -> u64 {
        let base = u64::from(self.b * self.b);
        self.digits
            .iter()
            .fold(0u64, |acc, &(i, j)| acc * base + u64::from(i) * u64::from(self.b) + u64::from(j))
    }

    pub fn from_index(b: u32, generation: usize, mut index: u64) -> Self {
        let base = u64::from(b * b);
        let mut digits = vec![(0u8, 0u8); generation];
        for slot in digits.iter_mut().rev() {
            let d = index % base;
            index /= base;
            *slot = ((d / u64::from(b)) as u8, (d % u64::from(b)) as u8);
        }
        Self { b, digits }
    }

    /// Sub-edge `self × (branch, segment)` one generation down.
    pub fn child(&self, branch: u8, segment: u8) -> Self {
        let mut digits = self.digits.clone();
        digits.push((branch, segment));
        Self { b: self.b, digits }
    }
}

/// Smallest `k ≥ 1` at which the length-`k` prefixes of `e` and `f` differ.
pub fn separation_generation(e: &EdgeAddress, f: &EdgeAddress) -> Result<usize> {
    if e.generation() != f.generation() {
        return Err(Error::GenerationMismatch { left: e.generation(), right: f.generation() });
    }
    e.digits
        .iter()
        .zip(&f.digits)
        .position(|(x, y)| x != y)
        .map(|k| k + 1)
        .ok_or(Error::IdenticalEdges)
}

/// A directed path through `D_n`, stored as its branch decisions in
/// depth-first order: the top-level choice, then the `b` sub-paths of the
/// chosen branch in segment order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HierPath {
    b: u32,
    generation: usize,
    decisions: Vec<u8>,
}

impl HierPath {
    pub fn new(b: u32, generation: usize, decisions: Vec<u8>) -> Result<Self> {
        if decisions.len() != decision_count(b, generation) {
            return Err(Error::invalid(format!(
                "a generation-{generation} path needs {} decisions, got {}",
                decision_count(b, generation),
                decisions.len()
            )));
        }
        if decisions.iter().any(|&d| u32::from(d) >= b) {
            return Err(Error::invalid("branch decision out of range"));
        }
        Ok(Self { b, generation, decisions })
    }

    /// The unique path of `Γ_0`.
    pub fn trivial(b: u32) -> Self {
        Self { b, generation: 0, decisions: Vec::new() }
    }

    pub fn b(&self) -> u32 {
        self.b
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn decisions(&self) -> &[u8] {
        &self.decisions
    }

    /// Canonical integer of the decision sequence read as a base-`b` numeral.
    /// `None` when it does not fit in 128 bits.
    pub fn index(&self) -> Option<u128> {
        self.decisions.iter().try_fold(0u128, |acc, &d| {
            acc.checked_mul(u128::from(self.b))?.checked_add(u128::from(d))
        })
    }

    pub fn from_index(b: u32, generation: usize, mut index: u128) -> Self {
        let mut decisions = vec![0u8; decision_count(b, generation)];
        for d in decisions.iter_mut().rev() {
            *d = (index % u128::from(b)) as u8;
            index /= u128::from(b);
        }
        Self { b, generation, decisions }
    }

    /// Decision slice of the sub-path on segment `segment` of the chosen branch.
    fn sub_decisions(decisions: &[u8], b: u32, generation: usize, segment: usize) -> &[u8] {
        let len = decision_count(b, generation - 1);
        &decisions[1 + segment * len..1 + (segment + 1) * len]
    }

    /// The `b^n` edges visited, in time order.
    pub fn edges(&self) -> Vec<EdgeAddress> {
        let mut out = Vec::with_capacity((self.b as usize).pow(self.generation as u32));
        let mut prefix = Vec::with_capacity(self.generation);
        push_edges(&self.decisions, self.b, self.generation, &mut prefix, &mut out);
        out
    }

    /// Canonical indices of [`HierPath::edges`], without allocating addresses.
    pub fn edge_indices(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity((self.b as usize).pow(self.generation as u32));
        push_indices(&self.decisions, self.b, self.generation, 0, &mut out);
        out
    }

    /// Coarse-graining `[p]_m` to an earlier generation `m ≤ n`.
    pub fn coarse_grain(&self, m: usize) -> Result<HierPath> {
        if m > self.generation {
            return Err(Error::invalid(format!(
                "cannot coarse-grain generation {} to {m}",
                self.generation
            )));
        }
        let mut decisions = Vec::with_capacity(decision_count(self.b, m));
        coarse(&self.decisions, self.b, self.generation, m, &mut decisions);
        Ok(HierPath { b: self.b, generation: m, decisions })
    }
}

fn push_edges(d: &[u8], b: u32, n: usize, prefix: &mut Vec<(u8, u8)>, out: &mut Vec<EdgeAddress>) {
    if n == 0 {
        out.push(EdgeAddress { b, digits: prefix.clone() });
        return;
    }
    for seg in 0..b as usize {
        prefix.push((d[0], seg as u8));
        push_edges(HierPath::sub_decisions(d, b, n, seg), b, n - 1, prefix, out);
        prefix.pop();
    }
}

fn push_indices(d: &[u8], b: u32, n: usize, acc: u64, out: &mut Vec<u64>) {
    if n == 0 {
        out.push(acc);
        return;
    }
    let b64 = u64::from(b);
    for seg in 0..b as usize {
        let next = acc * b64 * b64 + u64::from(d[0]) * b64 + seg as u64;
        push_indices(HierPath::sub_decisions(d, b, n, seg), b, n - 1, next, out);
    }
}

fn coarse(d: &[u8], b: u32, n: usize, m: usize, out: &mut Vec<u8>) {
    if m == 0 {
        return;
    }
    out.push(d[0]);
    for seg in 0..b as usize {
        coarse(HierPath::sub_decisions(d, b, n, seg), b, n - 1, m - 1, out);
    }
}

/// Edges of `p` in time order; generation 0 yields the single root edge.
pub fn edges_of_path(p: &HierPath) -> Vec<EdgeAddress> {
    p.edges()
}

/// `ξ_n(p, q)`, the number of edges shared by two generation-`n` paths.
/// Two generation-0 paths share the root edge.
pub fn shared_edge_count(p: &HierPath, q: &HierPath) -> Result<u64> {
    if p.generation != q.generation {
        return Err(Error::GenerationMismatch { left: p.generation, right: q.generation });
    }
    if p.b != q.b {
        return Err(Error::invalid("paths live on lattices with different b"));
    }
    Ok(shared(&p.decisions, &q.decisions, p.b, p.generation))
}

fn shared(p: &[u8], q: &[u8], b: u32, n: usize) -> u64 {
    if n == 0 {
        return 1;
    }
    if p[0] != q[0] {
        return 0;
    }
    (0..b as usize)
        .map(|s| {
            shared(
                HierPath::sub_decisions(p, b, n, s),
                HierPath::sub_decisions(q, b, n, s),
                b,
                n - 1,
            )
        })
        .sum()
}

/// Every path of `Γ_n` in canonical index order.
pub fn enumerate_paths(params: LatticeParams, n: usize) -> Result<Vec<HierPath>> {
    let count = params.path_count(n);
    let limit = BigUint::from(ENUMERATION_LIMIT);
    if count > limit {
        return Err(Error::Budget {
            guard: "path-enumeration",
            requested: u128::try_from(&count).unwrap_or(u128::MAX),
            limit: ENUMERATION_LIMIT,
        });
    }
    let count = u128::try_from(&count).expect("bounded above");
    Ok((0..count).map(|i| HierPath::from_index(params.b(), n, i)).collect())
}

/// A `μ`-uniform path of `Γ_n`: independent uniform branch decisions.
pub fn sample_uniform_path<R: Rng + ?Sized>(params: LatticeParams, n: usize, rng: &mut R) -> HierPath {
    let b = params.b();
    let decisions = (0..decision_count(b, n)).map(|_| rng.random_range(0..b) as u8).collect();
    HierPath { b, generation: n, decisions }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use std::collections::HashSet;

    fn p2() -> LatticeParams {
        LatticeParams::new(2).unwrap()
    }

    #[test]
    fn path_counts() {
        assert_eq!(path_count(p2(), 0), BigUint::from(1u32));
        assert_eq!(path_count(p2(), 3), BigUint::from(128u32));
        assert_eq!(path_count(LatticeParams::new(3).unwrap(), 2), BigUint::from(81u32));
        // |Γ_{n+1}| = b |Γ_n|^b
        for b in [2u32, 3] {
            let p = LatticeParams::new(b).unwrap();
            for n in 0..=5 {
                assert_eq!(p.path_count(n + 1), BigUint::from(b) * p.path_count(n).pow(b));
            }
        }
        assert_eq!(p2().path_count(6), BigUint::from(1u64 << 63));
        assert!(p2().path_count(7) > BigUint::from(u64::MAX));
    }

    #[test]
    fn rejects_bad_b() {
        assert!(LatticeParams::new(1).is_err());
    }

    #[test]
    fn generation_zero_path_has_root_edge() {
        let p = HierPath::trivial(2);
        let e = edges_of_path(&p);
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].generation(), 0);
        assert_eq!(shared_edge_count(&p, &p).unwrap(), 1);
    }

    #[test]
    fn generation_one_edges() {
        let p = HierPath::new(2, 1, vec![1]).unwrap();
        let e = edges_of_path(&p);
        assert_eq!(e.iter().map(|a| a.digits()[0]).collect::<Vec<_>>(), vec![(1, 0), (1, 1)]);
    }

    // Explicit graph oracle: builds D_n vertex by vertex and maps every edge
    // address to its (tail, head) vertex pair.
    fn build_graph(b: u32, n: usize) -> std::collections::HashMap<Vec<(u8, u8)>, (usize, usize)> {
        let mut edges = vec![(Vec::new(), (0usize, 1usize))];
        let mut next_vertex = 2;
        for _ in 0..n {
            let mut refined = Vec::new();
            for (addr, (u, v)) in edges {
                for i in 0..b as u8 {
                    let mut chain = vec![u];
                    for _ in 1..b {
                        chain.push(next_vertex);
                        next_vertex += 1;
                    }
                    chain.push(v);
                    for j in 0..b as u8 {
                        let mut a: Vec<(u8, u8)> = addr.clone();
                        a.push((i, j));
                        refined.push((a, (chain[j as usize], chain[j as usize + 1])));
                    }
                }
            }
            edges = refined;
        }
        edges.into_iter().collect()
    }

    #[test]
    fn generation_two_paths_are_connected_chains() {
        let params = p2();
        let graph = build_graph(2, 2);
        assert_eq!(graph.len(), 16);
        for p in enumerate_paths(params, 2).unwrap() {
            let edges = edges_of_path(&p);
            assert_eq!(edges.len(), 4);
            assert!(edges.iter().all(|e| e.digits()[0].0 == p.decisions()[0]));
            let ends: Vec<_> = edges.iter().map(|e| graph[e.digits()]).collect();
            assert_eq!(ends[0].0, 0, "starts at A");
            assert_eq!(ends[3].1, 1, "ends at B");
            for w in ends.windows(2) {
                assert_eq!(w[0].1, w[1].0, "consecutive edges meet");
            }
        }
    }

    #[test]
    fn edges_are_time_ordered_and_injective() {
        for n in 0..=3 {
            let paths = enumerate_paths(p2(), n).unwrap();
            let mut seen = HashSet::new();
            for p in &paths {
                let edges = p.edges();
                assert_eq!(edges.len(), 1 << n);
                for (l, e) in edges.iter().enumerate() {
                    let seg_value = e.digits().iter().fold(0usize, |acc, &(_, s)| acc * 2 + s as usize);
                    assert_eq!(seg_value, l);
                }
                let idx: Vec<u64> = edges.iter().map(EdgeAddress::index).collect();
                assert_eq!(idx, p.edge_indices());
                assert_eq!(idx.iter().collect::<HashSet<_>>().len(), idx.len());
                assert!(seen.insert(idx), "edges_of_path must be injective on Γ_n");
            }
        }
    }

    #[test]
    fn shared_edges_match_set_intersection() {
        for n in 0..=3 {
            let paths = enumerate_paths(p2(), n).unwrap();
            let total = BigUint::from(paths.len()).pow(2);
            let mut sum = 0u64;
            let sets: Vec<HashSet<u64>> = paths.iter().map(|p| p.edge_indices().into_iter().collect()).collect();
            for (a, p) in paths.iter().enumerate() {
                for (c, q) in paths.iter().enumerate() {
                    let xi = shared_edge_count(p, q).unwrap();
                    assert_eq!(xi, sets[a].intersection(&sets[c]).count() as u64);
                    assert_eq!(xi, shared_edge_count(q, p).unwrap());
                    if a == c {
                        assert_eq!(xi, 1 << n);
                    }
                    if n > 0 && p.decisions()[0] != q.decisions()[0] {
                        assert_eq!(xi, 0);
                    }
                    sum += xi;
                }
            }
            // E_{μ×μ}[ξ_n] = 1
            assert_eq!(BigUint::from(sum), total);
        }
    }

    #[test]
    fn shared_edge_generation_mismatch() {
        let p = HierPath::trivial(2);
        let q = HierPath::new(2, 1, vec![0]).unwrap();
        assert!(matches!(shared_edge_count(&p, &q), Err(Error::GenerationMismatch { .. })));
    }

    #[test]
    fn separation_generations() {
        let e = EdgeAddress::new(2, vec![(0, 0), (0, 0)]).unwrap();
        let f = EdgeAddress::new(2, vec![(0, 0), (1, 1)]).unwrap();
        assert_eq!(separation_generation(&e, &f).unwrap(), 2);
        let g = EdgeAddress::new(2, vec![(1, 0), (0, 0)]).unwrap();
        assert_eq!(separation_generation(&e, &g).unwrap(), 1);
        assert!(matches!(separation_generation(&e, &e), Err(Error::IdenticalEdges)));
        // exhaustive at n = 3: 1 ≤ g ≤ n
        let edges: Vec<_> = (0..64).map(|i| EdgeAddress::from_index(2, 3, i)).collect();
        for a in &edges {
            for c in &edges {
                if a != c {
                    let g = separation_generation(a, c).unwrap();
                    assert!((1..=3).contains(&g));
                }
            }
        }
    }

    #[test]
    fn edge_index_round_trip() {
        for i in 0..81u64 {
            let e = EdgeAddress::from_index(3, 2, i);
            assert_eq!(e.index(), i);
        }
        assert!(EdgeAddress::new(2, vec![(2, 0)]).is_err());
    }

    #[test]
    fn coarse_graining() {
        let p = HierPath::new(2, 2, vec![1, 0, 1]).unwrap();
        assert_eq!(p.coarse_grain(1).unwrap().decisions(), &[1]);
        assert_eq!(p.coarse_grain(0).unwrap(), HierPath::trivial(2));
        assert_eq!(p.coarse_grain(2).unwrap(), p);
        // every generation-2 edge of p lies inside a generation-1 edge of [p]_1
        let coarse: HashSet<_> = p.coarse_grain(1).unwrap().edges().into_iter().collect();
        for e in p.edges() {
            let parent = EdgeAddress::new(2, e.digits()[..1].to_vec()).unwrap();
            assert!(coarse.contains(&parent));
        }
    }

    #[test]
    fn uniform_sampler_passes_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let params = p2();
        let mut rng = stream(11, 0, 0);
        assert_eq!(sample_uniform_path(params, 0, &mut rng), HierPath::trivial(2));
        let mut counts = vec![0u64; 8];
        for _ in 0..100_000 {
            let p = sample_uniform_path(params, 2, &mut rng);
            counts[p.index().unwrap() as usize] += 1;
        }
        let chi2 = crate::stats::chi_square(&counts, &[1.0 / 8.0; 8]);
        let critical = ChiSquared::new(7.0).unwrap().inverse_cdf(0.99);
        assert!(chi2 < critical, "χ² = {chi2} ≥ {critical}");
    }

    #[test]
    fn overlap_survival_matches_extinction_iteration() {
        // ψ-iteration oracle, independent of the intersections module.
        let mut psi = 0.0f64;
        for _ in 0..10 {
            psi = 0.5 + psi * psi / 2.0;
        }
        let params = p2();
        let runs = 20_000;
        let mut rng = stream(5, 0, 0);
        let positive = (0..runs)
            .filter(|_| {
                let p = sample_uniform_path(params, 10, &mut rng);
                let q = sample_uniform_path(params, 10, &mut rng);
                shared_edge_count(&p, &q).unwrap() > 0
            })
            .count() as f64
            / runs as f64;
        let target = 1.0 - psi;
        let sigma = (target * (1.0 - target) / runs as f64).sqrt();
        assert!((positive - target).abs() < 3.0 * sigma, "{positive} vs {target} ± {sigma}");
    }
}

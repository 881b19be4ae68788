//! Supervision-starvation probabilities, homophily statistics and
//! noisy-graph perturbation/recovery metrics.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SparseGraph};

/// Odds reported for a bin in which every pair shares a label.
pub const ODDS_CAP: f64 = 1e9;

/// Default support threshold for learned adjacencies in recovery metrics.
pub const DEFAULT_RECOVERY_THRESHOLD: f64 = 1e-4;

fn pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Maps `p ∈ [0, C(n,2))` to the `p`-th pair `(u, v)`, `u < v`, in
/// row-major order of the strict upper triangle.
pub fn pair_from_index(n: usize, p: usize) -> (usize, usize) {
    // Pairs before row u: u·n − u(u+1)/2.
    let before = |u: usize| u * n - u * (u + 1) / 2;
    let nf = n as f64;
    let disc = (2.0 * nf - 1.0).powi(2) - 8.0 * p as f64;
    let mut u = (((2.0 * nf - 1.0) - disc.max(0.0).sqrt()) / 2.0).floor().max(0.0) as usize;
    u = u.min(n.saturating_sub(2));
    while u > 0 && before(u) > p {
        u -= 1;
    }
    while before(u + 1) <= p {
        u += 1;
    }
    (u, u + 1 + p - before(u))
}

/// Closed-form probability that a uniformly chosen edge of a `G(n, m)`
/// graph is starved for a two-layer GCN with `q` uniformly placed labels:
/// `(1 − q/n)(1 − q/(n−1)) ∏_{i=1}^{2q} (1 − (m−1)/(C(n,2)−i))`.
pub fn starved_prob_er(n: usize, m: usize, q: usize) -> Result<f64> {
    let total = pairs(n);
    if n < 2 {
        return Err(Error::invalid("need at least two nodes"));
    }
    if q > n {
        return Err(Error::invalid(format!("q = {q} exceeds n = {n}")));
    }
    if m == 0 || m > total {
        return Err(Error::invalid(format!("m = {m} outside [1, C(n,2) = {total}]")));
    }
    if total <= 2 * q && q > 0 {
        return Err(Error::invalid("C(n,2) − 2q must be positive"));
    }
    if q == n {
        return Ok(0.0);
    }
    let (nf, qf) = (n as f64, q as f64);
    let mut log_p = (1.0 - qf / nf).ln() + (1.0 - qf / (nf - 1.0)).ln();
    let m1 = (m - 1) as f64;
    for i in 1..=2 * q {
        let factor = 1.0 - m1 / (total - i) as f64;
        if factor <= 0.0 {
            return Ok(0.0);
        }
        log_p += factor.ln();
    }
    Ok(log_p.exp())
}

/// Scale-free counterpart with degree weights `k^γ` over `k ∈ [1, n−1]`:
/// `(1 − q/n)(1 − q/(n−1)) · T²` where
/// `T = Σ_k k^γ · C(n−q−2, k−1)/C(n−2, k−1) / Σ_k k^γ`.
pub fn starved_prob_sf(n: usize, q: usize, gamma: f64) -> Result<f64> {
    if n < 3 {
        return Err(Error::invalid("need at least three nodes"));
    }
    if q > n {
        return Err(Error::invalid(format!("q = {q} exceeds n = {n}")));
    }
    if gamma.is_nan() || gamma >= -1.0 {
        return Err(Error::invalid(format!("γ = {gamma} must be below −1")));
    }
    if q == 0 {
        return Ok(1.0);
    }
    if q >= n - 1 {
        return Ok(0.0);
    }
    let (nf, qf) = (n as f64, q as f64);
    let both_unlabeled = (1.0 - qf / nf) * (1.0 - qf / (nf - 1.0));
    let mut weighted = 0.0;
    let mut norm = 0.0;
    // ln C(n−q−2, k−1)/C(n−2, k−1), built one factor per step.
    let mut log_ratio = 0.0f64;
    let mut ratio_alive = true;
    for k in 1..n {
        if k >= 2 && ratio_alive {
            let i = (k - 2) as f64;
            let num = nf - qf - 2.0 - i;
            if num <= 0.0 {
                ratio_alive = false;
            } else {
                log_ratio += num.ln() - (nf - 2.0 - i).ln();
            }
        }
        let w = (k as f64).powf(gamma);
        norm += w;
        if ratio_alive {
            weighted += w * log_ratio.exp();
        }
    }
    let t = weighted / norm;
    Ok(both_unlabeled * t * t)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub trials: usize,
}

/// Empirical starvation rate: per trial, a fresh `G(n, m)` graph, a fresh
/// uniform label set of size `q`, and one uniformly chosen edge.
pub fn starved_prob_monte_carlo<R: Rng + ?Sized>(
    n: usize,
    m: usize,
    q: usize,
    trials: usize,
    rng: &mut R,
) -> Result<MonteCarloEstimate> {
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    if q > n || m == 0 || m > pairs(n) {
        return Err(Error::invalid(format!("invalid (n, m, q) = ({n}, {m}, {q})")));
    }
    let total = pairs(n);
    let mut labeled = vec![false; n];
    let mut starved = 0usize;
    for _ in 0..trials {
        let edges = sample(rng, total, m).into_vec();
        let labels = sample(rng, n, q).into_vec();
        for &l in &labels {
            labeled[l] = true;
        }
        let (u, v) = pair_from_index(n, edges[rng.random_range(0..m)]);
        let is_starved = !labeled[u]
            && !labeled[v]
            && edges.iter().all(|&p| {
                let (a, b) = pair_from_index(n, p);
                !((a == u || a == v || b == u || b == v) && (labeled[a] || labeled[b]))
            });
        starved += is_starved as usize;
        for &l in &labels {
            labeled[l] = false;
        }
    }
    let p = starved as f64 / trials as f64;
    Ok(MonteCarloEstimate {
        estimate: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
    })
}

/// Fraction of undirected edges whose endpoints are unlabeled and have no
/// labeled neighbor.
pub fn count_starved_edges(a: &SparseGraph, labeled: &[usize]) -> Result<f64> {
    let edges = a.undirected_edges();
    if edges.is_empty() {
        return Err(Error::EmptyIndex("count_starved_edges"));
    }
    let n = a.n();
    let mut is_labeled = vec![false; n];
    for &l in labeled {
        if l >= n {
            return Err(Error::invalid(format!("labeled node {l} out of range")));
        }
        is_labeled[l] = true;
    }
    let mut near_label = is_labeled.clone();
    for &(u, v) in &edges {
        if is_labeled[u] {
            near_label[v] = true;
        }
        if is_labeled[v] {
            near_label[u] = true;
        }
    }
    let starved = edges
        .iter()
        .filter(|&&(u, v)| !near_label[u] && !near_label[v])
        .count();
    Ok(starved as f64 / edges.len() as f64)
}

/// Weighted adjacency view used by the homophily and recovery metrics.
pub trait EdgeWeights {
    fn node_count(&self) -> usize;

    /// Undirected weight of `{i, j}`: the larger of the two directions.
    fn pair_weight(&self, i: usize, j: usize) -> f64;

    /// Pairs `u < v` with nonzero weight.
    fn edge_set(&self) -> BTreeSet<(usize, usize)>;
}

impl EdgeWeights for SparseGraph {
    fn node_count(&self) -> usize {
        self.n()
    }

    fn pair_weight(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).max(self.get(j, i))
    }

    fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        self.undirected_edges()
    }
}

impl EdgeWeights for Matrix {
    fn node_count(&self) -> usize {
        self.rows()
    }

    fn pair_weight(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).max(self.get(j, i))
    }

    fn edge_set(&self) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for i in 0..self.rows() {
            for j in i + 1..self.cols() {
                if self.get(i, j) != 0.0 || self.get(j, i) != 0.0 {
                    out.insert((i, j));
                }
            }
        }
        out
    }
}

/// Same-label edge count over total edge count; weights are ignored.
pub fn edge_homophily_ratio<A: EdgeWeights + ?Sized>(a: &A, y: &[usize]) -> Result<f64> {
    let edges = a.edge_set();
    if edges.is_empty() {
        return Err(Error::EmptyIndex("edge_homophily_ratio"));
    }
    if y.len() < a.node_count() {
        return Err(Error::invalid("labels missing for some nodes"));
    }
    let same = edges.iter().filter(|&&(u, v)| y[u] == y[v]).count();
    Ok(same as f64 / edges.len() as f64)
}

/// Same-label odds per edge-weight bin.
#[derive(Clone, Debug, PartialEq)]
pub struct HomophilyProfile {
    /// Bin boundaries; bin `b` is `[bins[b], bins[b+1])`, the last one closed.
    pub bins: Vec<f64>,
    /// `(same-label pairs, different-label pairs)` per bin.
    pub counts: Vec<(usize, usize)>,
    /// `same / different` per bin; `None` for an empty bin, [`ODDS_CAP`]
    /// when no pair in the bin differs.
    pub odds: Vec<Option<f64>>,
    pub edge_homophily: f64,
}

/// `[0, 0.001, 0.01, 0.1, max]`, collapsing boundaries above `max`.
pub fn default_odds_bins(max_weight: f64) -> Vec<f64> {
    let mut bins: Vec<f64> = [0.0, 0.001, 0.01, 0.1]
        .into_iter()
        .filter(|&b| b == 0.0 || b < max_weight)
        .collect();
    bins.push(max_weight.max(f64::MIN_POSITIVE));
    bins
}

/// Largest pair weight among `nodes`.
pub fn max_pair_weight<A: EdgeWeights + ?Sized>(a: &A, nodes: &[usize]) -> f64 {
    let mut max = 0.0f64;
    for (x, &i) in nodes.iter().enumerate() {
        for &j in &nodes[x + 1..] {
            max = max.max(a.pair_weight(i, j));
        }
    }
    max
}

/// Odds that two nodes of `test` share a label, as a function of the
/// weight connecting them.
pub fn homophily_odds<A: EdgeWeights + ?Sized>(
    a: &A,
    y: &[usize],
    test: &[usize],
    bins: &[f64],
) -> Result<HomophilyProfile> {
    if bins.len() < 2 || bins.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("bins need at least two strictly increasing boundaries"));
    }
    if let Some(&t) = test.iter().find(|&&t| t >= y.len() || t >= a.node_count()) {
        return Err(Error::invalid(format!("test node {t} out of range")));
    }
    let nb = bins.len() - 1;
    let mut counts = vec![(0usize, 0usize); nb];
    for (x, &i) in test.iter().enumerate() {
        for &j in &test[x + 1..] {
            let w = a.pair_weight(i, j);
            let slot = if w == bins[nb] {
                Some(nb - 1)
            } else {
                bins.windows(2).position(|b| w >= b[0] && w < b[1])
            };
            if let Some(b) = slot {
                if y[i] == y[j] {
                    counts[b].0 += 1;
                } else {
                    counts[b].1 += 1;
                }
            }
        }
    }
    let odds = counts
        .iter()
        .map(|&(same, diff)| match (same, diff) {
            (0, 0) => None,
            (_, 0) => Some(ODDS_CAP),
            (s, d) => Some(s as f64 / d as f64),
        })
        .collect();
    let edge_homophily = edge_homophily_ratio(a, y).unwrap_or(f64::NAN);
    Ok(HomophilyProfile {
        bins: bins.to_vec(),
        counts,
        odds,
        edge_homophily,
    })
}

/// Replaces `round(ρ%·m)` uniformly chosen edges with as many uniformly
/// chosen new non-self edges that were absent from the original graph.
/// Kept edges retain their weight; new edges get weight 1.
pub fn perturb_graph<R: Rng + ?Sized>(a: &SparseGraph, rho: f64, rng: &mut R) -> Result<SparseGraph> {
    if !(0.0..=100.0).contains(&rho) {
        return Err(Error::invalid(format!("ρ = {rho} outside [0, 100]")));
    }
    let n = a.n();
    let edges: Vec<(usize, usize)> = a.undirected_edges().into_iter().collect();
    let m = edges.len();
    let count = ((m as f64) * rho / 100.0 + 0.5).floor() as usize;
    let free = pairs(n) - m;
    if count > free {
        return Err(Error::invalid(format!(
            "cannot place {count} new edges: only {free} non-edges"
        )));
    }
    let original: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
    let mut removed = vec![false; m];
    for i in sample(rng, m, count) {
        removed[i] = true;
    }
    let mut out: Vec<(usize, usize, f64)> = edges
        .iter()
        .zip(&removed)
        .filter(|(_, &r)| !r)
        .map(|(&(u, v), _)| (u, v, a.pair_weight(u, v)))
        .collect();
    let mut added = BTreeSet::new();
    while added.len() < count {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        if u == v {
            continue;
        }
        let e = (u.min(v), u.max(v));
        if !original.contains(&e) {
            added.insert(e);
        }
    }
    out.extend(added.into_iter().map(|(u, v)| (u, v, 1.0)));
    SparseGraph::from_undirected_edges(n, &out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RecoveryMetrics {
    /// Fraction of injected edges absent from the learned support.
    pub noisy_removed: f64,
    /// Fraction of deleted original edges present in the learned support.
    pub removed_recovered: f64,
    pub injected: usize,
    pub deleted: usize,
}

/// Compares a learned adjacency, thresholded to a support, against the
/// edges injected into and deleted from the original graph. An empty
/// injected or deleted set scores 1.
pub fn recovery_metrics<L: EdgeWeights + ?Sized>(
    original: &SparseGraph,
    noisy: &SparseGraph,
    learned: &L,
    threshold: f64,
) -> Result<RecoveryMetrics> {
    if original.n() != noisy.n() || noisy.n() != learned.node_count() {
        return Err(Error::shape("graphs must share one node set"));
    }
    let orig = original.undirected_edges();
    let noisy_edges = noisy.undirected_edges();
    let injected: Vec<_> = noisy_edges.difference(&orig).copied().collect();
    let deleted: Vec<_> = orig.difference(&noisy_edges).copied().collect();
    let kept = |&(u, v): &(usize, usize)| learned.pair_weight(u, v) > threshold;
    let frac = |hits: usize, total: usize| if total == 0 { 1.0 } else { hits as f64 / total as f64 };
    Ok(RecoveryMetrics {
        noisy_removed: frac(injected.iter().filter(|e| !kept(e)).count(), injected.len()),
        removed_recovered: frac(deleted.iter().filter(|e| kept(e)).count(), deleted.len()),
        injected: injected.len(),
        deleted: deleted.len(),
    })
}

/// Threshold that keeps the `m` heaviest pairs of `a`: the weight of the
/// `(m + 1)`-th heaviest pair, or 0 when there are at most `m` pairs. Ties
/// at the boundary are all dropped.
pub fn budget_threshold<A: EdgeWeights + ?Sized>(a: &A, m: usize) -> f64 {
    let n = a.node_count();
    let mut w: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            w.push(a.pair_weight(i, j));
        }
    }
    if m >= w.len() {
        return 0.0;
    }
    let (_, nth, _) = w.select_nth_unstable_by(m, |x, y| y.total_cmp(x));
    *nth
}

//! Seeded random graphs and the planted-partition feature dataset.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use super::stratified_order;
use crate::analysis::pair_from_index;
use crate::error::{Error, Result};
use crate::numerics::rng::{stream_rng, sub_stream_rng, Stream};
use crate::numerics::{Matrix, SparseGraph};
use crate::trainer::{Dataset, FeatureKind};

/// Uniform `G(n, m)`: `m` distinct unordered pairs, unit weights, stored
/// in both directions.
pub fn generate_er(n: usize, m: usize, seed: u64) -> Result<SparseGraph> {
    let total = n * n.saturating_sub(1) / 2;
    if m > total {
        return Err(Error::invalid(format!("m = {m} exceeds C({n}, 2) = {total}")));
    }
    let mut rng = stream_rng(seed, Stream::Synthetic);
    let edges: Vec<(usize, usize, f64)> = sample(&mut rng, total, m)
        .into_iter()
        .map(|p| {
            let (u, v) = pair_from_index(n, p);
            (u, v, 1.0)
        })
        .collect();
    SparseGraph::from_undirected_edges(n, &edges)
}

/// Barabási–Albert preferential attachment: a clique on `m + 1` nodes,
/// then each new node links to `m` distinct nodes chosen with probability
/// proportional to degree.
pub fn generate_ba(n: usize, m: usize, seed: u64) -> Result<SparseGraph> {
    if m == 0 || m >= n {
        return Err(Error::invalid(format!("need 0 < m < n, got m = {m}, n = {n}")));
    }
    let mut rng = stream_rng(seed, Stream::Synthetic);
    let mut edges = Vec::new();
    // Each node appears once per incident edge.
    let mut ends: Vec<usize> = Vec::new();
    for u in 0..=m {
        for v in u + 1..=m {
            edges.push((u, v, 1.0));
            ends.push(u);
            ends.push(v);
        }
    }
    for u in m + 1..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            targets.insert(ends[rng.random_range(0..ends.len())]);
        }
        for v in targets {
            edges.push((v, u, 1.0));
            ends.push(u);
            ends.push(v);
        }
    }
    SparseGraph::from_undirected_edges(n, &edges)
}

/// Stochastic block model over labels `y`: each pair is linked
/// independently with `p_in` inside a class and `p_out` across classes.
pub fn generate_sbm(y: &[usize], p_in: f64, p_out: f64, seed: u64) -> Result<SparseGraph> {
    for p in [p_in, p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("edge probability {p} outside [0, 1]")));
        }
    }
    let mut rng = sub_stream_rng(seed, Stream::Synthetic, 1);
    let n = y.len();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if y[u] == y[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v, 1.0));
            }
        }
    }
    SparseGraph::from_undirected_edges(n, &edges)
}

/// Planted-partition binary features. Features are split into one block
/// per class; a node sets each bit of its own class block with probability
/// `intra_p` and every other bit with `inter_p`, then every bit flips with
/// probability `flip`. No graph is emitted.
#[derive(Clone, Debug, PartialEq)]
pub struct PlantedConfig {
    pub n: usize,
    pub classes: usize,
    pub f: usize,
    pub intra_p: f64,
    pub inter_p: f64,
    pub flip: f64,
    pub label_per_class: usize,
    pub val_per_class: usize,
    /// Test nodes; `None` uses every node outside train and validation.
    pub test_count: Option<usize>,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        PlantedConfig {
            n: 100,
            classes: 2,
            f: 20,
            intra_p: 0.5,
            inter_p: 0.1,
            flip: 0.0,
            label_per_class: 5,
            val_per_class: 5,
            test_count: None,
            seed: 0,
        }
    }
}

impl PlantedConfig {
    /// Parses `planted` or `planted:key=value,key=value`.
    pub fn parse_spec(spec: &str) -> Result<Self> {
        let rest = spec
            .strip_prefix("planted")
            .ok_or_else(|| Error::invalid(format!("`{spec}` is not a planted spec")))?;
        let mut cfg = PlantedConfig::default();
        let rest = rest.strip_prefix(':').unwrap_or(rest);
        for item in rest.split(',').filter(|s| !s.trim().is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("expected key=value in `{item}`")))?;
            let bad = || Error::invalid(format!("bad value `{v}` for `{k}`"));
            let v = v.trim();
            match k.trim() {
                "n" => cfg.n = v.parse().map_err(|_| bad())?,
                "classes" => cfg.classes = v.parse().map_err(|_| bad())?,
                "f" => cfg.f = v.parse().map_err(|_| bad())?,
                "intra_p" => cfg.intra_p = v.parse().map_err(|_| bad())?,
                "inter_p" => cfg.inter_p = v.parse().map_err(|_| bad())?,
                "flip" => cfg.flip = v.parse().map_err(|_| bad())?,
                "label_per_class" => cfg.label_per_class = v.parse().map_err(|_| bad())?,
                "val_per_class" => cfg.val_per_class = v.parse().map_err(|_| bad())?,
                "test_count" => cfg.test_count = Some(v.parse().map_err(|_| bad())?),
                "seed" => cfg.seed = v.parse().map_err(|_| bad())?,
                other => return Err(Error::invalid(format!("unknown planted key `{other}`"))),
            }
        }
        Ok(cfg)
    }
}

pub fn generate_planted(cfg: &PlantedConfig) -> Result<Dataset> {
    let PlantedConfig {
        n,
        classes,
        f,
        intra_p,
        inter_p,
        flip,
        ..
    } = *cfg;
    if classes < 2 || f < classes || n < classes {
        return Err(Error::invalid("need at least two classes, one feature per class and one node per class"));
    }
    for p in [intra_p, inter_p, flip] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
    }
    let labeled = classes * (cfg.label_per_class + cfg.val_per_class);
    if cfg.label_per_class == 0 || labeled >= n {
        return Err(Error::invalid("splits need labels and must leave test nodes"));
    }
    let mut rng = stream_rng(cfg.seed, Stream::Synthetic);
    let mut y: Vec<usize> = (0..n).map(|i| i % classes).collect();
    y.shuffle(&mut rng);
    let x = Matrix::from_fn(n, f, |i, j| {
        let block = j * classes / f;
        let p = if block == y[i] { intra_p } else { inter_p };
        let bit = rng.random::<f64>() < p;
        let flipped = rng.random::<f64>() < flip;
        (bit ^ flipped) as u8 as f64
    });
    let order = stratified_order(&y, cfg.seed);
    let t = classes * cfg.label_per_class;
    let v = classes * cfg.val_per_class;
    let test_end = match cfg.test_count {
        Some(c) => (t + v + c).min(n),
        None => n,
    };
    let mut train = order[..t].to_vec();
    let mut val = order[t..t + v].to_vec();
    let mut test = order[t + v..test_end].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    let ds = Dataset {
        name: "planted".into(),
        x,
        y,
        num_classes: classes,
        train,
        val,
        test,
        graph: None,
        feature_kind: FeatureKind::Binary,
    };
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn er_extremes() {
        assert_eq!(generate_er(6, 15, 1).unwrap().undirected_edges().len(), 15);
        assert_eq!(generate_er(6, 0, 1).unwrap().nnz(), 0);
        assert!(generate_er(6, 16, 1).is_err());
        let g = generate_er(40, 100, 3).unwrap();
        assert!(g.is_symmetric());
        assert_eq!(g.undirected_edges().len(), 100);
    }

    #[test]
    fn ba_degrees() {
        let g = generate_ba(200, 2, 0).unwrap();
        assert_eq!(g.undirected_edges().len(), 3 + 2 * 197);
        let max_deg = (0..200).map(|i| g.row_range(i).len()).max().unwrap();
        assert!(max_deg > 10);
    }

    #[test]
    fn planted_is_reproducible_and_split() {
        let cfg = PlantedConfig::default();
        let a = generate_planted(&cfg).unwrap();
        assert_eq!(a, generate_planted(&cfg).unwrap());
        assert_eq!(a.x.shape(), (100, 20));
        for c in 0..2 {
            assert_eq!(a.train.iter().filter(|&&i| a.y[i] == c).count(), 5);
        }
        assert_eq!(a.train.len() + a.val.len() + a.test.len(), 100);
    }

    #[test]
    fn noiseless_planted_is_separable() {
        let cfg = PlantedConfig {
            intra_p: 1.0,
            inter_p: 0.0,
            ..PlantedConfig::default()
        };
        let d = generate_planted(&cfg).unwrap();
        for i in 0..d.n() {
            let block = d.y[i];
            for j in 0..20 {
                assert_eq!(d.x.get(i, j) == 1.0, j * 2 / 20 == block);
            }
        }
    }

    #[test]
    fn spec_parsing() {
        let c = PlantedConfig::parse_spec("planted:n=60,flip=0.1,test_count=20").unwrap();
        assert_eq!((c.n, c.flip, c.test_count), (60, 0.1, Some(20)));
        assert_eq!(PlantedConfig::parse_spec("planted").unwrap(), PlantedConfig::default());
        assert!(PlantedConfig::parse_spec("planted:q=1").is_err());
    }
}

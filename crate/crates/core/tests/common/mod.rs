#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slaps::adjacency::PKind;
use slaps::numerics::{Matrix, Value};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

pub fn dense_of(v: &Value) -> Matrix {
    match v {
        Value::Dense(m) => m.clone(),
        Value::Sparse(s) => s.to_dense(),
    }
}

pub type Rows = Vec<Vec<f64>>;

pub fn rows(m: &Matrix) -> Rows {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn mm(a: &Rows, b: &Rows) -> Rows {
    let (n, k, w) = (a.len(), b.len(), b[0].len());
    let mut out = vec![vec![0.0; w]; n];
    for i in 0..n {
        for j in 0..w {
            let mut s = 0.0;
            for t in 0..k {
                s += a[i][t] * b[t][j];
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn max_diff(a: &Rows, b: &Matrix) -> f64 {
    let mut d: f64 = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            d = d.max((v - b.get(i, j)).abs());
        }
    }
    d
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp() - 1.0
    }
}

/// Top-`k` by similarity with ties to the lower index, by full sort.
pub fn brute_knn(sim: &Rows, k: usize) -> Vec<Vec<usize>> {
    let n = sim.len();
    (0..n)
        .map(|i| {
            let mut c: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            c.sort_by(|&a, &b| sim[i][b].partial_cmp(&sim[i][a]).unwrap().then(a.cmp(&b)));
            let mut top = c[..k].to_vec();
            top.sort_unstable();
            top
        })
        .collect()
}

pub fn cosine_rows(x: &Rows) -> Rows {
    let unit: Rows = x
        .iter()
        .map(|r| {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            r.iter().map(|v| if norm > 0.0 { v / norm } else { 0.0 }).collect()
        })
        .collect();
    let n = x.len();
    let mut s = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            s[i][j] = unit[i].iter().zip(&unit[j]).map(|(a, b)| a * b).sum();
        }
    }
    s
}

/// P, mean symmetrization and symmetric normalization in one pass.
pub fn process_oracle(raw: &Rows, present: &[Vec<bool>], p: PKind) -> Rows {
    let n = raw.len();
    let mut pa = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if present[i][j] {
                pa[i][j] = match p {
                    PKind::Relu => raw[i][j].max(0.0),
                    PKind::EluPlusOne => elu(raw[i][j]) + 1.0,
                };
            }
        }
    }
    let sym: Rows = (0..n).map(|i| (0..n).map(|j| 0.5 * (pa[i][j] + pa[j][i])).collect()).collect();
    let deg: Vec<f64> = sym
        .iter()
        .map(|r| {
            let d: f64 = r.iter().sum();
            if d > 0.0 {
                d
            } else {
                1e-10
            }
        })
        .collect();
    (0..n)
        .map(|i| (0..n).map(|j| sym[i][j] / (deg[i].sqrt() * deg[j].sqrt())).collect())
        .collect()
}

pub fn mlp_oracle(x: &Rows, w1: &Rows, w2: &Rows, k: usize, diag: bool) -> (Rows, Vec<Vec<bool>>) {
    let layer = |h: &Rows, w: &Rows| -> Rows {
        if diag {
            h.iter().map(|r| r.iter().zip(&w[0]).map(|(a, b)| a * b).collect()).collect()
        } else {
            mm(h, w)
        }
    };
    let h: Rows = layer(x, w1).into_iter().map(|r| r.into_iter().map(|v| v.max(0.0)).collect()).collect();
    let e = layer(&h, w2);
    let sim = cosine_rows(&e);
    let n = x.len();
    let mut raw = vec![vec![0.0; n]; n];
    let mut present = vec![vec![false; n]; n];
    for (i, top) in brute_knn(&sim, k).into_iter().enumerate() {
        for j in top {
            raw[i][j] = sim[i][j];
            present[i][j] = true;
        }
    }
    (raw, present)
}

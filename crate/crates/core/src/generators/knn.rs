//! Exact cosine k-nearest-neighbour graphs.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, SparseGraph, Tape};

/// Binary kNN support: `M[i][j] = 1` when `j` is among the `k` most similar
/// nodes to `i`. Each row holds exactly `k` ones and the diagonal is empty.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnMask(SparseGraph);

impl KnnMask {
    pub fn graph(&self) -> &SparseGraph {
        &self.0
    }

    pub fn into_graph(self) -> SparseGraph {
        self.0
    }

    pub fn k(&self) -> usize {
        if self.0.n() == 0 {
            0
        } else {
            self.0.nnz() / self.0.n()
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Top-`k` support over rows that are already unit-normalized (or zero).
///
/// Similarities come from the same row dot products the sparse values use,
/// so selection and stored weights never disagree. Ties go to the lower
/// node index; all-zero rows pick neighbours in index order.
pub fn knn_mask(normalized: &Matrix, k: usize) -> Result<KnnMask> {
    let n = normalized.rows();
    if k >= n {
        return Err(Error::invalid(format!("k = {k} must be below n = {n}")));
    }
    let mut sim = vec![0.0; n * n];
    for i in 0..n {
        let ri = normalized.row(i);
        for j in (i + 1)..n {
            let s = dot(ri, normalized.row(j));
            sim[i * n + j] = s;
            sim[j * n + i] = s;
        }
    }
    let zero_rows = (0..n)
        .filter(|&i| normalized.row(i).iter().all(|&v| v == 0.0))
        .count();
    if zero_rows > 0 {
        log::warn!("{zero_rows} all-zero feature rows; their similarities are 0");
    }
    let mut rows = Vec::with_capacity(n);
    let mut cand: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i));
        let row = &sim[i * n..(i + 1) * n];
        let order = |a: &usize, b: &usize| {
            row[*b]
                .partial_cmp(&row[*a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.cmp(b))
        };
        if k > 0 && k < cand.len() {
            cand.select_nth_unstable_by(k - 1, order);
        }
        let mut chosen: Vec<usize> = cand[..k].to_vec();
        chosen.sort_unstable();
        rows.push(chosen.into_iter().map(|j| (j, 1.0)).collect());
    }
    Ok(KnnMask(SparseGraph::from_sorted_rows(n, rows)))
}

/// `(M, S)` where `M` is the kNN support of `xp` under cosine similarity
/// and `S` carries the cosine values on that support only.
pub fn knn_sparsify(xp: &Matrix, k: usize) -> Result<(KnnMask, SparseGraph)> {
    let mut tape = Tape::new();
    let x = tape.constant(xp.clone());
    let y = tape.row_l2_normalize(x)?;
    let mask = knn_mask(tape.dense(y)?, k)?;
    let s = tape.masked_gram(y, mask.graph())?;
    let values = tape.sparse(s)?.clone();
    Ok((mask, values))
}

/// Cosine kNN graph: entry `(i, j)` is `cos(x_i, x_j)` for the `k` nearest
/// `j ≠ i`.
pub fn knn_graph(x: &Matrix, k: usize) -> Result<SparseGraph> {
    knn_sparsify(x, k).map(|(_, s)| s)
}

/// Dense cosine similarity matrix (zero rows give zero similarity).
pub fn cosine_similarity(x: &Matrix) -> Matrix {
    let norms: Vec<f64> = (0..x.rows())
        .map(|i| x.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    Matrix::from_fn(x.rows(), x.rows(), |i, j| {
        if norms[i] == 0.0 || norms[j] == 0.0 {
            0.0
        } else {
            dot(x.row(i), x.row(j)) / (norms[i] * norms[j])
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_link_to_lowest_index() {
        let x = Matrix::from_rows(&[[1.0, 2.0], [1.0, 2.0], [1.0, 2.0]]).unwrap();
        let g = knn_graph(&x, 1).unwrap();
        let edges: Vec<_> = g.iter().map(|(r, c, _)| (r, c)).collect();
        assert_eq!(edges, vec![(0, 1), (1, 0), (2, 0)]);
        for (_, _, v) in g.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_rows_have_zero_weight() {
        let x = Matrix::identity(4);
        let g = knn_graph(&x, 1).unwrap();
        assert_eq!(g.nnz(), 4);
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn complete_graph_when_k_is_n_minus_one() {
        let x = Matrix::from_fn(5, 3, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.5);
        let (mask, _) = knn_sparsify(&x, 4).unwrap();
        let g = mask.graph();
        assert_eq!(g.nnz(), 20);
        for i in 0..5 {
            assert_eq!(g.get(i, i), 0.0);
        }
        assert_eq!(mask.k(), 4);
    }

    #[test]
    fn k_must_be_below_n() {
        assert!(knn_graph(&Matrix::zeros(3, 2), 3).is_err());
    }

    #[test]
    fn zero_rows_pick_by_index() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        let g = knn_graph(&x, 1).unwrap();
        assert_eq!(g.get(0, 1), 0.0);
        assert!(g.find(0, 1).is_some());
    }
}

use std::collections::BTreeSet;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Weighted edge set over `n` nodes in coordinate form.
///
/// Entries are kept in row-major sorted order without duplicate `(row, col)`
/// pairs. The compressed-row offsets are derived on first use.
#[derive(Clone, Debug)]
pub struct SparseGraph {
    n: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    row_ptr: OnceLock<Vec<usize>>,
}

impl PartialEq for SparseGraph {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.rows == other.rows
            && self.cols == other.cols
            && self.vals == other.vals
    }
}

impl SparseGraph {
    pub fn empty(n: usize) -> Self {
        SparseGraph {
            n,
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
            row_ptr: OnceLock::new(),
        }
    }

    /// Builds a graph from arbitrary-order triplets; duplicates are rejected.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(r, c, _) in &entries {
            if r >= n || c >= n {
                return Err(Error::invalid(format!(
                    "edge ({r}, {c}) out of range for {n} nodes"
                )));
            }
        }
        entries.sort_by_key(|a| (a.0, a.1));
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::invalid(format!(
                    "duplicate edge ({}, {})",
                    w[0].0, w[0].1
                )));
            }
        }
        let mut g = SparseGraph::empty(n);
        g.rows.reserve(entries.len());
        g.cols.reserve(entries.len());
        g.vals.reserve(entries.len());
        for (r, c, v) in entries {
            g.rows.push(r);
            g.cols.push(c);
            g.vals.push(v);
        }
        Ok(g)
    }

    /// Builds from per-row sorted column lists (caller guarantees order).
    pub(crate) fn from_sorted_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let mut g = SparseGraph::empty(n);
        for (r, entries) in rows.into_iter().enumerate() {
            for (c, v) in entries {
                debug_assert!(c < n);
                g.rows.push(r);
                g.cols.push(c);
                g.vals.push(v);
            }
        }
        debug_assert!(g.is_canonical());
        g
    }

    /// Same sparsity pattern, new values.
    pub fn with_values(&self, vals: Vec<f64>) -> Result<Self> {
        if vals.len() != self.nnz() {
            return Err(Error::shape(format!(
                "{} values for a pattern with {} entries",
                vals.len(),
                self.nnz()
            )));
        }
        Ok(SparseGraph {
            n: self.n,
            rows: self.rows.clone(),
            cols: self.cols.clone(),
            vals,
            row_ptr: self.row_ptr.clone(),
        })
    }

    /// Undirected graph from unordered pairs: both directions are stored.
    pub fn from_undirected_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut entries = Vec::with_capacity(edges.len() * 2);
        for &(u, v, w) in edges {
            if u == v {
                entries.push((u, v, w));
            } else {
                entries.push((u, v, w));
                entries.push((v, u, w));
            }
        }
        Self::from_triplets(n, entries)
    }

    /// Nonzero entries of a dense square matrix.
    pub fn from_dense(m: &Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::shape("adjacency must be square"));
        }
        let n = m.rows();
        let mut g = SparseGraph::empty(n);
        for i in 0..n {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    g.rows.push(i);
                    g.cols.push(j);
                    g.vals.push(v);
                }
            }
        }
        Ok(g)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    #[inline]
    pub fn row_indices(&self) -> &[usize] {
        &self.rows
    }

    #[inline]
    pub fn col_indices(&self) -> &[usize] {
        &self.cols
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.vals
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.vals
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.vals)
            .map(|((&r, &c), &v)| (r, c, v))
    }

    /// Compressed-row offsets: entries of row `i` live in `ptr[i]..ptr[i+1]`.
    pub fn row_ptr(&self) -> &[usize] {
        self.row_ptr.get_or_init(|| {
            let mut ptr = vec![0usize; self.n + 1];
            for &r in &self.rows {
                ptr[r + 1] += 1;
            }
            for i in 0..self.n {
                ptr[i + 1] += ptr[i];
            }
            ptr
        })
    }

    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        let ptr = self.row_ptr();
        ptr[r]..ptr[r + 1]
    }

    /// Position of `(r, c)` in the entry arrays, if stored.
    pub fn find(&self, r: usize, c: usize) -> Option<usize> {
        let range = self.row_range(r);
        let start = range.start;
        self.cols[range].binary_search(&c).ok().map(|k| start + k)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.find(r, c).map_or(0.0, |k| self.vals[k])
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n, self.n);
        for (r, c, v) in self.iter() {
            m.set(r, c, v);
        }
        m
    }

    pub fn transpose(&self) -> SparseGraph {
        let entries = self.iter().map(|(r, c, v)| (c, r, v)).collect();
        SparseGraph::from_triplets(self.n, entries).expect("transpose of a canonical graph")
    }

    /// For every entry `(r, c)`, the position of `(c, r)` if stored.
    pub fn transpose_positions(&self) -> Vec<Option<usize>> {
        self.iter().map(|(r, c, _)| self.find(c, r)).collect()
    }

    /// Sparse × dense product, cost proportional to `nnz · cols(b)`.
    pub fn matmul(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows() != self.n {
            return Err(Error::shape(format!(
                "sparse matmul {}x{} · {}x{}",
                self.n,
                self.n,
                b.rows(),
                b.cols()
            )));
        }
        let w = b.cols();
        let mut out = Matrix::zeros(self.n, w);
        let ptr = self.row_ptr();
        for r in 0..self.n {
            let orow = out.row_mut(r);
            for k in ptr[r]..ptr[r + 1] {
                let v = self.vals[k];
                let brow = b.row(self.cols[k]);
                for (o, &x) in orow.iter_mut().zip(brow) {
                    *o += v * x;
                }
            }
        }
        Ok(out)
    }

    /// `selfᵀ · b` by scattering rows.
    pub fn t_matmul(&self, b: &Matrix) -> Result<Matrix> {
        if b.rows() != self.n {
            return Err(Error::shape("sparse transposed matmul dimension mismatch"));
        }
        let w = b.cols();
        let mut out = Matrix::zeros(self.n, w);
        for (r, c, v) in self.iter() {
            let brow = b.row(r);
            let orow = out.row_mut(c);
            for (o, &x) in orow.iter_mut().zip(brow) {
                *o += v * x;
            }
        }
        Ok(out)
    }

    /// Unordered pairs `{u, v}` with `u < v` having a nonzero weight in
    /// either direction. Self-loops are skipped.
    pub fn undirected_edges(&self) -> BTreeSet<(usize, usize)> {
        self.iter()
            .filter(|&(r, c, v)| r != c && v != 0.0)
            .map(|(r, c, _)| (r.min(c), r.max(c)))
            .collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.iter().all(|(r, c, v)| self.find(c, r).map(|k| self.vals[k]) == Some(v))
    }

    fn is_canonical(&self) -> bool {
        self.rows
            .iter()
            .zip(&self.cols)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1))
    }
}

//! Scalar losses evaluated on plain matrices. The tape ops in
//! [`super::tape`] reuse these for their forward values.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Numerically stable `ln(1 + e^z)`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_cells(target: &Matrix, pred: &Matrix, idx: &[(usize, usize)]) -> Result<()> {
    target.check_same_shape(pred, "masked loss")?;
    if let Some(&(r, c)) = idx
        .iter()
        .find(|&&(r, c)| r >= target.rows() || c >= target.cols())
    {
        return Err(Error::invalid(format!("cell ({r}, {c}) out of range")));
    }
    Ok(())
}

/// Mean binary cross-entropy with logits over the cells in `idx`.
pub fn masked_bce(target: &Matrix, logits: &Matrix, idx: &[(usize, usize)]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::EmptyIndex("masked_bce"));
    }
    check_cells(target, logits, idx)?;
    let total: f64 = idx
        .iter()
        .map(|&(r, c)| {
            let z = logits.get(r, c);
            softplus(z) - target.get(r, c) * z
        })
        .sum();
    Ok(total / idx.len() as f64)
}

/// Mean squared error over the cells in `idx`.
pub fn masked_mse(target: &Matrix, pred: &Matrix, idx: &[(usize, usize)]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::EmptyIndex("masked_mse"));
    }
    check_cells(target, pred, idx)?;
    let total: f64 = idx
        .iter()
        .map(|&(r, c)| {
            let d = target.get(r, c) - pred.get(r, c);
            d * d
        })
        .sum();
    Ok(total / idx.len() as f64)
}

/// Row-wise softmax with the row maximum subtracted first.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            z += *v;
        }
        for v in row.iter_mut() {
            *v /= z;
        }
    }
    out
}

/// `-log softmax(logits[r])[label]`, stabilized by the row maximum.
pub fn row_nll(logits: &Matrix, r: usize, label: usize) -> f64 {
    let row = logits.row(r);
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - row[label]
}

/// Mean softmax cross-entropy over `targets = [(row, label)]`.
pub fn softmax_cross_entropy(logits: &Matrix, targets: &[(usize, usize)]) -> Result<f64> {
    if targets.is_empty() {
        return Err(Error::EmptyIndex("softmax_cross_entropy"));
    }
    for &(r, l) in targets {
        if r >= logits.rows() || l >= logits.cols() {
            return Err(Error::invalid(format!(
                "target (row {r}, label {l}) out of range for {}x{} logits",
                logits.rows(),
                logits.cols()
            )));
        }
    }
    let total: f64 = targets.iter().map(|&(r, l)| row_nll(logits, r, l)).sum();
    Ok(total / targets.len() as f64)
}

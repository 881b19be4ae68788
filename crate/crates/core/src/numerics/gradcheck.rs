//! Central finite-difference gradient checking.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Which coordinates of each parameter tensor get perturbed.
#[derive(Clone, Copy, Debug)]
pub enum Coordinates {
    All,
    /// At most this many coordinates per tensor, sampled without replacement.
    Sample(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor, flat index)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

/// `|a - b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares analytic gradients against central differences with step `h`.
///
/// `eval` returns the loss and its gradient with respect to every tensor in
/// `params`; it must be deterministic (dropout off or masks frozen).
pub fn finite_diff_check<F, R>(
    mut eval: F,
    params: &[Matrix],
    h: f64,
    coords: Coordinates,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Matrix]) -> Result<(f64, Vec<Matrix>)>,
    R: Rng + ?Sized,
{
    if h <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let (_, grads) = eval(params)?;
    if grads.len() != params.len() {
        return Err(Error::shape(format!(
            "{} gradients for {} parameters",
            grads.len(),
            params.len()
        )));
    }
    let mut work: Vec<Matrix> = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    for t in 0..params.len() {
        if grads[t].shape() != params[t].shape() {
            return Err(Error::shape(format!("gradient {t} has the wrong shape")));
        }
        let len = params[t].len();
        let picks: Vec<usize> = match coords {
            Coordinates::All => (0..len).collect(),
            Coordinates::Sample(k) if k >= len => (0..len).collect(),
            Coordinates::Sample(k) => {
                let mut v = sample(rng, len, k).into_vec();
                v.sort_unstable();
                v
            }
        };
        for k in picks {
            let base = params[t].data()[k];
            work[t].data_mut()[k] = base + h;
            let (up, _) = eval(&work)?;
            work[t].data_mut()[k] = base - h;
            let (down, _) = eval(&work)?;
            work[t].data_mut()[k] = base;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads[t].data()[k];
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((t, k));
                report.analytic = analytic;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_loss_is_exact() {
        let coef = Matrix::from_rows(&[[1.5, -2.0, 0.25]]).unwrap();
        let eval = |p: &[Matrix]| -> Result<(f64, Vec<Matrix>)> {
            let loss = p[0].hadamard(&coef)?.sum();
            Ok((loss, vec![coef.clone()]))
        };
        let params = vec![Matrix::from_rows(&[[0.3, 0.1, -0.7]]).unwrap()];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = finite_diff_check(eval, &params, 1e-5, Coordinates::All, &mut rng).unwrap();
        assert!(r.max_rel_error < 1e-9, "{r:?}");
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let eval = |p: &[Matrix]| -> Result<(f64, Vec<Matrix>)> {
            let x = p[0].get(0, 0);
            Ok((x * x, vec![Matrix::scalar(x)]))
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = finite_diff_check(eval, &[Matrix::scalar(2.0)], 1e-5, Coordinates::All, &mut rng)
            .unwrap();
        assert!(r.max_rel_error > 0.4);
    }
}

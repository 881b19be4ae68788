//! Feature-noise sampling for the denoising task.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Masked cells and the corrupted feature matrix `X̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseMask {
    /// Cells entering the reconstruction loss, sorted row-major.
    pub idx: Vec<(usize, usize)>,
    pub noisy: Matrix,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ContinuousNoise {
    Zero,
    Gaussian { sigma: f64 },
}

/// `percent`% of `total`, rounded half-up, at least 1 when the percentage
/// is nonzero and `total > 0`, never more than `total`.
pub fn round_count(total: usize, percent: f64) -> usize {
    if percent <= 0.0 || total == 0 {
        return 0;
    }
    let c = (total as f64 * percent / 100.0 + 0.5).floor() as usize;
    c.clamp(1, total)
}

fn pick<R: Rng + ?Sized>(cells: &[(usize, usize)], count: usize, rng: &mut R) -> Vec<(usize, usize)> {
    sample(rng, cells.len(), count)
        .into_iter()
        .map(|i| cells[i])
        .collect()
}

/// Binary scheme: `r`% of the ones are zeroed and `r·η`% of the zeros are
/// added to the index set as negatives.
pub fn sample_noise_binary<R: Rng + ?Sized>(x: &Matrix, r: f64, eta: f64, rng: &mut R) -> Result<NoiseMask> {
    if r < 0.0 || eta < 0.0 {
        return Err(Error::invalid("noise rates must be non-negative"));
    }
    if r * eta > 100.0 || r > 100.0 {
        return Err(Error::invalid(format!("r = {r}, η = {eta}: r·η exceeds 100")));
    }
    let mut ones = Vec::new();
    let mut zeros = Vec::new();
    for i in 0..x.rows() {
        for (j, &v) in x.row(i).iter().enumerate() {
            if v == 1.0 {
                ones.push((i, j));
            } else if v == 0.0 {
                zeros.push((i, j));
            } else {
                return Err(Error::invalid(format!("feature ({i}, {j}) = {v} is not binary")));
            }
        }
    }
    if ones.is_empty() {
        return Err(Error::invalid("binary noise needs at least one nonzero feature"));
    }
    let picked_ones = pick(&ones, round_count(ones.len(), r), rng);
    let picked_zeros = pick(&zeros, round_count(zeros.len(), r * eta), rng);
    let mut noisy = x.clone();
    for &(i, j) in &picked_ones {
        noisy.set(i, j, 0.0);
    }
    let mut idx = picked_ones;
    idx.extend(picked_zeros);
    idx.sort_unstable();
    Ok(NoiseMask { idx, noisy })
}

/// Continuous scheme: `r`% of all cells are zeroed or receive additive
/// Gaussian noise.
pub fn sample_noise_continuous<R: Rng + ?Sized>(
    x: &Matrix,
    r: f64,
    scheme: ContinuousNoise,
    rng: &mut R,
) -> Result<NoiseMask> {
    if !(0.0..=100.0).contains(&r) {
        return Err(Error::invalid(format!("r = {r} outside [0, 100]")));
    }
    let cols = x.cols();
    let count = round_count(x.len(), r);
    let mut idx: Vec<(usize, usize)> = sample(rng, x.len(), count)
        .into_iter()
        .map(|c| (c / cols, c % cols))
        .collect();
    idx.sort_unstable();
    let mut noisy = x.clone();
    match scheme {
        ContinuousNoise::Zero => {
            for &(i, j) in &idx {
                noisy.set(i, j, 0.0);
            }
        }
        ContinuousNoise::Gaussian { sigma } => {
            let normal = Normal::new(0.0, sigma)
                .map_err(|e| Error::invalid(format!("gaussian σ = {sigma}: {e}")))?;
            for &(i, j) in &idx {
                noisy.set(i, j, x.get(i, j) + normal.sample(rng));
            }
        }
    }
    Ok(NoiseMask { idx, noisy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn binary(rows: usize, cols: usize, ones: usize) -> Matrix {
        Matrix::from_fn(rows, cols, |i, j| if i * cols + j < ones { 1.0 } else { 0.0 })
    }

    #[test]
    fn binary_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = binary(40, 30, 200);
        let m = sample_noise_binary(&x, 10.0, 1.0, &mut rng).unwrap();
        let masked_ones = m.idx.iter().filter(|&&(i, j)| x.get(i, j) == 1.0).count();
        assert_eq!(masked_ones, 20);
        let x = binary(30, 40, 200);
        let m = sample_noise_binary(&x, 10.0, 5.0, &mut rng).unwrap();
        let zeros = m.idx.iter().filter(|&&(i, j)| x.get(i, j) == 0.0).count();
        assert_eq!(zeros, 500);
    }

    #[test]
    fn binary_noise_only_removes_ones() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Matrix::from_fn(12, 9, |i, j| ((i * 7 + j * 3) % 4 == 0) as u8 as f64);
        let m = sample_noise_binary(&x, 30.0, 2.0, &mut rng).unwrap();
        for (a, b) in m.noisy.data().iter().zip(x.data()) {
            assert!(a <= b);
        }
        for &(i, j) in &m.idx {
            assert_eq!(m.noisy.get(i, j), 0.0);
        }
    }

    #[test]
    fn full_rate_clears_every_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = binary(5, 5, 7);
        let m = sample_noise_binary(&x, 100.0, 0.0, &mut rng).unwrap();
        assert!(m.noisy.data().iter().all(|&v| v == 0.0));
        assert_eq!(m.idx.len(), 7);
    }

    #[test]
    fn binary_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(sample_noise_binary(&Matrix::zeros(3, 3), 10.0, 1.0, &mut rng).is_err());
        assert!(sample_noise_binary(&binary(3, 3, 2), 50.0, 5.0, &mut rng).is_err());
        assert!(sample_noise_binary(&Matrix::filled(2, 2, 0.5), 10.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn continuous_schemes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Matrix::from_fn(10, 6, |i, j| 1.0 + (i * 6 + j) as f64);
        let none = sample_noise_continuous(&x, 0.0, ContinuousNoise::Zero, &mut rng).unwrap();
        assert!(none.idx.is_empty());
        assert_eq!(none.noisy, x);
        let z = sample_noise_continuous(&x, 20.0, ContinuousNoise::Zero, &mut rng).unwrap();
        assert_eq!(z.idx.len(), 12);
        let changed: Vec<_> = (0..10)
            .flat_map(|i| (0..6).map(move |j| (i, j)))
            .filter(|&(i, j)| z.noisy.get(i, j) != x.get(i, j))
            .collect();
        assert_eq!(changed, z.idx);
        let g = sample_noise_continuous(&x, 50.0, ContinuousNoise::Gaussian { sigma: 0.0 }, &mut rng).unwrap();
        assert_eq!(g.noisy, x);
    }

    #[test]
    fn rounding_rule() {
        assert_eq!(round_count(200, 10.0), 20);
        assert_eq!(round_count(15, 10.0), 2);
        assert_eq!(round_count(3, 1.0), 1);
        assert_eq!(round_count(0, 10.0), 0);
        assert_eq!(round_count(5, 0.0), 0);
    }
}

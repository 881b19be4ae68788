use super::{knn_mask, GeneratorKind, GeneratorOptions, GraphGenerator, KnnMask};
use crate::error::{Error, Result};
use crate::numerics::{Activation, Matrix, Tape, Var};

/// Two-layer MLP followed by a cosine kNN sparsification, `Ã = M ⊙ S`.
///
/// Width stays at the feature count `f` through both layers. The dense
/// variant holds `f x f` weights; the diagonal variant holds `1 x f` rows
/// that scale features independently, so off-diagonal weights do not exist.
#[derive(Clone, Debug)]
pub struct MlpGenerator {
    kind: GeneratorKind,
    layers: [Matrix; 2],
    k: usize,
    activation: Activation,
    refresh_every: usize,
    calls: usize,
    mask: Option<KnnMask>,
    frozen: bool,
}

impl MlpGenerator {
    /// Identity-initialized generator; at step 0 it reproduces the feature
    /// kNN graph whenever the activation leaves `x` unchanged.
    pub fn new(x: &Matrix, options: &GeneratorOptions, kind: GeneratorKind) -> Result<Self> {
        let f = x.cols();
        if options.k >= x.rows() {
            return Err(Error::invalid(format!(
                "k = {} must be below n = {}",
                options.k,
                x.rows()
            )));
        }
        let layer = || match kind {
            GeneratorKind::MlpDiag => Matrix::filled(1, f, 1.0),
            _ => Matrix::identity(f),
        };
        if kind == GeneratorKind::Fp {
            return Err(Error::invalid("MlpGenerator cannot be an fp generator"));
        }
        Ok(MlpGenerator {
            kind,
            layers: [layer(), layer()],
            k: options.k,
            activation: options.mlp_activation,
            refresh_every: options.mask_refresh_every.max(1),
            calls: 0,
            mask: None,
            frozen: false,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn current_mask(&self) -> Option<&KnnMask> {
        self.mask.as_ref()
    }

    fn layer(&self, tape: &mut Tape, input: Var, w: Var) -> Result<Var> {
        match self.kind {
            GeneratorKind::MlpDiag => tape.col_scale(input, w),
            _ => tape.matmul(input, w),
        }
    }

    /// Embedding `X' = φ(X·W1)·W2` (diagonal weights scale columns).
    pub fn embed(&self, tape: &mut Tape, params: &[Var], x: &Matrix) -> Result<Var> {
        if params.len() != 2 {
            return Err(Error::invalid("mlp generator expects two parameter leaves"));
        }
        let xv = tape.constant(x.clone());
        let h = self.layer(tape, xv, params[0])?;
        let h = tape.activation(h, self.activation);
        self.layer(tape, h, params[1])
    }
}

impl GraphGenerator for MlpGenerator {
    fn kind(&self) -> GeneratorKind {
        self.kind
    }

    fn params(&self) -> Vec<&Matrix> {
        self.layers.iter().collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().collect()
    }

    fn generate(&mut self, tape: &mut Tape, params: &[Var], x: &Matrix) -> Result<Var> {
        let xp = self.embed(tape, params, x)?;
        let y = tape.row_l2_normalize(xp)?;
        let refresh = match &self.mask {
            None => true,
            Some(_) if self.frozen => false,
            Some(_) => self.calls.is_multiple_of(self.refresh_every),
        };
        if refresh {
            self.mask = Some(knn_mask(tape.dense(y)?, self.k)?);
        }
        self.calls += 1;
        let mask = self.mask.as_ref().expect("mask computed above");
        tape.masked_gram(y, mask.graph())
    }

    fn freeze_mask(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    fn clone_box(&self) -> Box<dyn GraphGenerator> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{generate, knn_graph};

    fn x() -> Matrix {
        Matrix::from_fn(8, 3, |i, j| ((i * 3 + j * 5) % 7) as f64 + 0.25)
    }

    #[test]
    fn diagonal_weights_are_rows() {
        let g = MlpGenerator::new(&x(), &GeneratorOptions::with_k(2), GeneratorKind::MlpDiag)
            .unwrap();
        for p in g.params() {
            assert_eq!(p, &Matrix::filled(1, 3, 1.0));
        }
    }

    #[test]
    fn each_row_has_k_neighbours_and_no_self_edge() {
        let mut g =
            MlpGenerator::new(&x(), &GeneratorOptions::with_k(3), GeneratorKind::Mlp).unwrap();
        let out = generate(&mut g, &x()).unwrap();
        let s = out.as_sparse().unwrap();
        for i in 0..8 {
            assert_eq!(s.row_range(i).len(), 3);
            assert!(s.find(i, i).is_none());
        }
        assert_eq!(s, &knn_graph(&x(), 3).unwrap());
    }

    #[test]
    fn frozen_mask_survives_weight_changes() {
        let mut g =
            MlpGenerator::new(&x(), &GeneratorOptions::with_k(2), GeneratorKind::Mlp).unwrap();
        generate(&mut g, &x()).unwrap();
        let before = g.current_mask().cloned().unwrap();
        g.freeze_mask(true);
        g.params_mut()[0].set(0, 0, -5.0);
        g.params_mut()[0].set(1, 2, 3.0);
        generate(&mut g, &x()).unwrap();
        assert_eq!(g.current_mask().unwrap(), &before);
    }

    #[test]
    fn k_too_large() {
        assert!(MlpGenerator::new(&x(), &GeneratorOptions::with_k(8), GeneratorKind::Mlp).is_err());
    }
}

//! Graph generators: strategies that map node features to a raw adjacency.
//!
//! Each generator variant implements [`GraphGenerator`] and is constructed
//! by name through a [`GeneratorRegistry`]:
//!
//! * `fp`: the adjacency itself is the parameter matrix.
//! * `mlp`: a two-layer MLP embeds the features and a cosine kNN graph is
//!   built on the embeddings.
//! * `mlp-d`: as `mlp` with diagonal weights (per-feature scaling).

mod fp;
pub mod knn;
mod mlp;

use std::fmt;
use std::str::FromStr;

pub use fp::{FpGenerator, FpInit};
pub use knn::{cosine_similarity, knn_graph, knn_mask, knn_sparsify, KnnMask};
pub use mlp::MlpGenerator;

use crate::adjacency::PKind;
use crate::error::{Error, Result};
use crate::numerics::{Activation, Matrix, SparseGraph, Tape, Value, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    Fp,
    Mlp,
    MlpDiag,
}

impl GeneratorKind {
    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Fp => "fp",
            GeneratorKind::Mlp => "mlp",
            GeneratorKind::MlpDiag => "mlp-d",
        }
    }

    /// Non-negativity function used with this generator by default.
    pub fn default_p(self) -> PKind {
        match self {
            GeneratorKind::Fp => PKind::EluPlusOne,
            GeneratorKind::Mlp | GeneratorKind::MlpDiag => PKind::Relu,
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fp" => Ok(GeneratorKind::Fp),
            "mlp" => Ok(GeneratorKind::Mlp),
            "mlp-d" | "mlp_d" | "mlpd" => Ok(GeneratorKind::MlpDiag),
            other => Err(Error::invalid(format!("unknown generator `{other}`"))),
        }
    }
}

/// Construction-time options shared by all generators.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorOptions {
    pub k: usize,
    /// Recompute the kNN support every this many forward passes (MLP kinds).
    pub mask_refresh_every: usize,
    pub fp_init: FpInit,
    /// Nonlinearity between the two MLP layers.
    pub mlp_activation: Activation,
    /// Initial structure for FP; `None` starts from the feature kNN graph.
    pub initial_graph: Option<SparseGraph>,
}

impl GeneratorOptions {
    pub fn with_k(k: usize) -> Self {
        GeneratorOptions {
            k,
            mask_refresh_every: 1,
            fp_init: FpInit::Knn,
            mlp_activation: Activation::Relu,
            initial_graph: None,
        }
    }
}

/// A graph-generation strategy with learnable parameters θ_G.
pub trait GraphGenerator {
    fn kind(&self) -> GeneratorKind;

    fn params(&self) -> Vec<&Matrix>;

    fn params_mut(&mut self) -> Vec<&mut Matrix>;

    /// Records the raw adjacency Ã on `tape`. `params` are the tape leaves
    /// registered for [`Self::params`], in the same order.
    fn generate(&mut self, tape: &mut Tape, params: &[Var], x: &Matrix) -> Result<Var>;

    /// Keeps the current kNN support fixed across calls (no-op for FP).
    fn freeze_mask(&mut self, _frozen: bool) {}

    fn clone_box(&self) -> Box<dyn GraphGenerator>;
}

impl Clone for Box<dyn GraphGenerator> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

/// Registers the generator's tensors as differentiable tape leaves.
pub fn register_params(tape: &mut Tape, generator: &dyn GraphGenerator) -> Vec<Var> {
    generator
        .params()
        .into_iter()
        .map(|p| tape.param(p.clone()))
        .collect()
}

/// Evaluates the generator outside of training.
pub fn generate(generator: &mut dyn GraphGenerator, x: &Matrix) -> Result<Value> {
    let mut tape = Tape::new();
    let params: Vec<Var> = generator
        .params()
        .into_iter()
        .map(|p| tape.constant(p.clone()))
        .collect();
    let out = generator.generate(&mut tape, &params, x)?;
    Ok(tape.value(out).clone())
}

pub type GeneratorFactory = fn(&Matrix, &GeneratorOptions) -> Result<Box<dyn GraphGenerator>>;

/// Name → constructor table for generator strategies.
pub struct GeneratorRegistry {
    entries: Vec<(String, GeneratorFactory)>,
}

impl Default for GeneratorRegistry {
    fn default() -> Self {
        let mut r = GeneratorRegistry {
            entries: Vec::new(),
        };
        r.register("fp", |x, o| Ok(Box::new(FpGenerator::new(x, o)?)));
        r.register("mlp", |x, o| {
            Ok(Box::new(MlpGenerator::new(x, o, GeneratorKind::Mlp)?))
        });
        r.register("mlp-d", |x, o| {
            Ok(Box::new(MlpGenerator::new(x, o, GeneratorKind::MlpDiag)?))
        });
        r
    }
}

impl GeneratorRegistry {
    /// Adds or replaces a strategy.
    pub fn register(&mut self, name: &str, factory: GeneratorFactory) {
        let name = name.to_ascii_lowercase();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = factory,
            None => self.entries.push((name, factory)),
        }
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn create(
        &self,
        name: &str,
        x: &Matrix,
        options: &GeneratorOptions,
    ) -> Result<Box<dyn GraphGenerator>> {
        let key = name.to_ascii_lowercase();
        let key = match key.as_str() {
            "mlp_d" | "mlpd" => "mlp-d".to_string(),
            _ => key,
        };
        let (_, factory) = self
            .entries
            .iter()
            .find(|(n, _)| *n == key)
            .ok_or_else(|| {
                Error::invalid(format!(
                    "unknown generator `{name}` (known: {})",
                    self.names().join(", ")
                ))
            })?;
        factory(x, options)
    }
}

/// Initializes a generator of `kind` so that its first output is the
/// feature kNN graph.
pub fn init_generator(x: &Matrix, k: usize, kind: GeneratorKind) -> Result<Box<dyn GraphGenerator>> {
    GeneratorRegistry::default().create(kind.name(), x, &GeneratorOptions::with_k(k))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features() -> Matrix {
        Matrix::from_fn(9, 4, |i, j| ((i * 5 + j * 3) % 7) as f64 / 7.0 + 0.05 * (i % 2) as f64)
    }

    #[test]
    fn registry_names_and_lookup() {
        let r = GeneratorRegistry::default();
        assert_eq!(r.names(), vec!["fp", "mlp", "mlp-d"]);
        let x = features();
        let g = r.create("MLP_D", &x, &GeneratorOptions::with_k(3)).unwrap();
        assert_eq!(g.kind(), GeneratorKind::MlpDiag);
        assert!(r.create("gat", &x, &GeneratorOptions::with_k(3)).is_err());
    }

    #[test]
    fn every_kind_starts_at_knn_graph() {
        let x = features();
        let knn = knn_graph(&x, 3).unwrap();
        for kind in [GeneratorKind::Mlp, GeneratorKind::MlpDiag] {
            let mut g = init_generator(&x, 3, kind).unwrap();
            let out = generate(g.as_mut(), &x).unwrap();
            assert_eq!(out.as_sparse().unwrap(), &knn, "{kind}");
        }
        let mut fp = init_generator(&x, 3, GeneratorKind::Fp).unwrap();
        assert_eq!(fp.params()[0], &knn.to_dense());
        let out = generate(fp.as_mut(), &x).unwrap();
        assert_eq!(out.as_dense().unwrap(), &knn.to_dense());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("mlp-d".parse::<GeneratorKind>().unwrap(), GeneratorKind::MlpDiag);
        assert_eq!("FP".parse::<GeneratorKind>().unwrap(), GeneratorKind::Fp);
        assert!("dgcnn".parse::<GeneratorKind>().is_err());
        assert_eq!(GeneratorKind::Fp.default_p(), PKind::EluPlusOne);
    }
}

use std::fmt;
use std::str::FromStr;

use super::{knn_graph, GeneratorKind, GeneratorOptions, GraphGenerator};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, SparseGraph, Tape, Var};

/// How the FP parameter matrix is seeded from the initial structure.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FpInit {
    /// Parameters equal the dense initial adjacency (kNN cosine weights).
    Knn,
    /// Edges map to 0 and non-edges to `-offset`, so that after `elu(x) + 1`
    /// edges weigh 1 and non-edges `e^-offset`.
    PreElu { offset: f64 },
}

impl fmt::Display for FpInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FpInit::Knn => f.write_str("knn"),
            FpInit::PreElu { offset } => write!(f, "pre-elu:{offset}"),
        }
    }
}

impl FromStr for FpInit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "knn" {
            return Ok(FpInit::Knn);
        }
        if let Some(rest) = s.strip_prefix("pre-elu:") {
            let offset: f64 = rest
                .parse()
                .map_err(|_| Error::invalid(format!("bad pre-elu offset `{rest}`")))?;
            return Ok(FpInit::PreElu { offset });
        }
        Err(Error::invalid(format!(
            "unknown fp_init `{s}` (expected `knn` or `pre-elu:<offset>`)"
        )))
    }
}

/// Fully parameterized generator: Ã is the parameter matrix itself and the
/// features are ignored after initialization.
#[derive(Clone, Debug)]
pub struct FpGenerator {
    adjacency: Matrix,
}

impl FpGenerator {
    pub fn new(x: &Matrix, options: &GeneratorOptions) -> Result<Self> {
        let graph = match &options.initial_graph {
            Some(g) => {
                if g.n() != x.rows() {
                    return Err(Error::shape(format!(
                        "initial graph has {} nodes, features have {} rows",
                        g.n(),
                        x.rows()
                    )));
                }
                g.clone()
            }
            None => knn_graph(x, options.k)?,
        };
        Ok(Self::from_graph(&graph, options.fp_init))
    }

    pub fn from_graph(graph: &SparseGraph, init: FpInit) -> Self {
        let adjacency = match init {
            FpInit::Knn => graph.to_dense(),
            FpInit::PreElu { offset } => {
                let mut m = Matrix::filled(graph.n(), graph.n(), -offset);
                for (r, c, _) in graph.iter() {
                    m.set(r, c, 0.0);
                }
                m
            }
        };
        FpGenerator { adjacency }
    }

    pub fn adjacency(&self) -> &Matrix {
        &self.adjacency
    }
}

impl GraphGenerator for FpGenerator {
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Fp
    }

    fn params(&self) -> Vec<&Matrix> {
        vec![&self.adjacency]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.adjacency]
    }

    fn generate(&mut self, _tape: &mut Tape, params: &[Var], _x: &Matrix) -> Result<Var> {
        params
            .first()
            .copied()
            .ok_or_else(|| Error::invalid("fp generator expects one parameter leaf"))
    }

    fn clone_box(&self) -> Box<dyn GraphGenerator> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pre_elu_init() {
        let g = SparseGraph::from_undirected_edges(3, &[(0, 1, 0.7)]).unwrap();
        let fp = FpGenerator::from_graph(&g, FpInit::PreElu { offset: 6.0 });
        assert_eq!(fp.adjacency().get(0, 1), 0.0);
        assert_eq!(fp.adjacency().get(1, 0), 0.0);
        assert_eq!(fp.adjacency().get(0, 2), -6.0);
        assert_eq!(fp.adjacency().get(2, 2), -6.0);
    }

    #[test]
    fn init_parsing() {
        assert_eq!("knn".parse::<FpInit>().unwrap(), FpInit::Knn);
        assert_eq!(
            "pre-elu:6".parse::<FpInit>().unwrap(),
            FpInit::PreElu { offset: 6.0 }
        );
        assert!("zeros".parse::<FpInit>().is_err());
        assert_eq!(FpInit::PreElu { offset: 2.5 }.to_string(), "pre-elu:2.5");
    }

    #[test]
    fn output_is_the_parameter_leaf() {
        let x = Matrix::from_fn(4, 2, |i, j| (i + j) as f64 + 1.0);
        let mut fp = FpGenerator::new(&x, &GeneratorOptions::with_k(1)).unwrap();
        let mut tape = Tape::new();
        let p = tape.param(fp.adjacency().clone());
        let out = fp.generate(&mut tape, &[p], &x).unwrap();
        assert_eq!(tape.dense(out).unwrap(), fp.adjacency());
    }
}

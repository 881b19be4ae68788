//! Adjacency processor: raw generator output → non-negative, symmetric,
//! degree-normalized adjacency.
//!
//! The default pipeline is `P` (relu for MLP generators, `elu + 1` for FP),
//! mean symmetrization `(P + Pᵀ) / 2`, then `D^-1/2 · A · D^-1/2` with
//! row-sum degrees and no implicit self-loops. Every step is recorded on the
//! tape, degree terms included.
//!
//! On sparse inputs the pipeline acts on stored entries only; implicit zeros
//! stay zero even under `elu + 1`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::{Activation, Normalization, Symmetrization, Tape, Value, Var};

/// Non-negativity function `P`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PKind {
    Relu,
    EluPlusOne,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymMode {
    Mean,
    Max,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdjacencyConfig {
    pub p: PKind,
    pub sym: SymMode,
    pub norm: Normalization,
    pub add_self_loops: bool,
}

impl AdjacencyConfig {
    pub fn with_p(p: PKind) -> Self {
        AdjacencyConfig {
            p,
            sym: SymMode::Mean,
            norm: Normalization::Symmetric,
            add_self_loops: false,
        }
    }
}

impl Default for AdjacencyConfig {
    fn default() -> Self {
        Self::with_p(PKind::Relu)
    }
}

pub fn apply_p_var(tape: &mut Tape, a: Var, kind: PKind) -> Var {
    match kind {
        PKind::Relu => tape.activation(a, Activation::Relu),
        PKind::EluPlusOne => {
            let e = tape.activation(a, Activation::Elu);
            tape.add_scalar(e, 1.0)
        }
    }
}

pub fn symmetrize_var(tape: &mut Tape, a: Var, mode: SymMode) -> Result<Var> {
    match mode {
        SymMode::Mean => tape.symmetrize(a, Symmetrization::Mean),
        SymMode::Max => tape.symmetrize(a, Symmetrization::Max),
        SymMode::None => Ok(a),
    }
}

pub fn normalize_var(tape: &mut Tape, a: Var, mode: Normalization, add_self_loops: bool) -> Result<Var> {
    let a = if add_self_loops {
        tape.add_identity(a)?
    } else {
        a
    };
    tape.normalize(a, mode)
}

/// Full processor on the tape.
pub fn process_var(tape: &mut Tape, raw: Var, cfg: &AdjacencyConfig) -> Result<Var> {
    let p = apply_p_var(tape, raw, cfg.p);
    let s = symmetrize_var(tape, p, cfg.sym)?;
    normalize_var(tape, s, cfg.norm, cfg.add_self_loops)
}

fn eval(a: &Value, f: impl FnOnce(&mut Tape, Var) -> Result<Var>) -> Result<Value> {
    let mut tape = Tape::new();
    let v = tape.constant(a.clone());
    let out = f(&mut tape, v)?;
    Ok(tape.value(out).clone())
}

pub fn apply_p(a: &Value, kind: PKind) -> Value {
    eval(a, |t, v| Ok(apply_p_var(t, v, kind))).expect("elementwise op cannot fail")
}

pub fn symmetrize(a: &Value, mode: SymMode) -> Result<Value> {
    eval(a, |t, v| symmetrize_var(t, v, mode))
}

pub fn normalize(a: &Value, mode: Normalization, add_self_loops: bool) -> Result<Value> {
    if a.raw().iter().any(|&v| v < 0.0) {
        return Err(Error::invalid("normalize expects non-negative entries"));
    }
    eval(a, |t, v| normalize_var(t, v, mode, add_self_loops))
}

pub fn process(a: &Value, cfg: &AdjacencyConfig) -> Result<Value> {
    eval(a, |t, v| process_var(t, v, cfg))
}

impl fmt::Display for PKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PKind::Relu => "relu",
            PKind::EluPlusOne => "elu+1",
        })
    }
}

impl FromStr for PKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(PKind::Relu),
            "elu+1" | "elu_plus_one" | "elu" => Ok(PKind::EluPlusOne),
            _ => Err(Error::invalid(format!("unknown p_kind `{s}`"))),
        }
    }
}

impl fmt::Display for SymMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SymMode::Mean => "mean",
            SymMode::Max => "max",
            SymMode::None => "none",
        })
    }
}

impl FromStr for SymMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(SymMode::Mean),
            "max" => Ok(SymMode::Max),
            "none" => Ok(SymMode::None),
            _ => Err(Error::invalid(format!("unknown sym_mode `{s}`"))),
        }
    }
}

pub fn parse_normalization(s: &str) -> Result<Normalization> {
    match s {
        "symmetric" | "sym" => Ok(Normalization::Symmetric),
        "row" => Ok(Normalization::Row),
        _ => Err(Error::invalid(format!("unknown norm_mode `{s}`"))),
    }
}

pub fn normalization_name(n: Normalization) -> &'static str {
    match n {
        Normalization::Symmetric => "symmetric",
        Normalization::Row => "row",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Matrix, SparseGraph};

    fn dense(rows: &[&[f64]]) -> Value {
        Value::Dense(Matrix::from_rows(rows).unwrap())
    }

    fn as_dense(v: &Value) -> Matrix {
        match v {
            Value::Dense(m) => m.clone(),
            Value::Sparse(s) => s.to_dense(),
        }
    }

    #[test]
    fn p_functions() {
        let r = apply_p(&dense(&[&[-2.0, 3.0]]), PKind::Relu);
        assert_eq!(r.raw(), &[0.0, 3.0]);
        let e = apply_p(&dense(&[&[0.0, -30.0, -1.0]]), PKind::EluPlusOne);
        assert_eq!(e.raw()[0], 1.0);
        assert!(e.raw()[1] < 1e-12 && e.raw()[1] >= 0.0);
        assert!((e.raw()[2] - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn symmetrization_modes() {
        let a = dense(&[&[0.0, 2.0], &[0.0, 0.0]]);
        assert_eq!(symmetrize(&a, SymMode::Mean).unwrap().raw(), &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(symmetrize(&a, SymMode::Max).unwrap().raw(), &[0.0, 2.0, 2.0, 0.0]);
        assert_eq!(symmetrize(&a, SymMode::None).unwrap(), a);
        let sym = dense(&[&[1.0, 0.5], &[0.5, 3.0]]);
        for mode in [SymMode::Mean, SymMode::Max, SymMode::None] {
            assert_eq!(symmetrize(&sym, mode).unwrap(), sym);
        }
    }

    #[test]
    fn sparse_symmetrization_matches_dense() {
        let g = SparseGraph::from_triplets(3, vec![(0, 1, 2.0), (1, 2, 1.0), (2, 1, 3.0)]).unwrap();
        for mode in [SymMode::Mean, SymMode::Max] {
            let s = symmetrize(&Value::Sparse(g.clone()), mode).unwrap();
            let d = symmetrize(&Value::Dense(g.to_dense()), mode).unwrap();
            assert_eq!(as_dense(&s), as_dense(&d));
        }
    }

    #[test]
    fn normalization_examples() {
        let two = dense(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let n = normalize(&two, Normalization::Symmetric, false).unwrap();
        assert_eq!(n, two);
        // Star with centre 0.
        let star = dense(&[&[0.0, 1.0, 1.0], &[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0]]);
        let n = as_dense(&normalize(&star, Normalization::Symmetric, false).unwrap());
        assert!((n.get(0, 1) - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        let r = as_dense(&normalize(&star, Normalization::Row, false).unwrap());
        for i in 0..3 {
            assert!((r.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert!(normalize(&dense(&[&[-1.0]]), Normalization::Row, false).is_err());
    }

    #[test]
    fn isolated_rows_use_the_degree_floor() {
        let a = dense(&[&[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 1.0, 0.0]]);
        let n = normalize(&a, Normalization::Symmetric, false).unwrap();
        assert!(n.raw().iter().all(|v| v.is_finite()));
        assert_eq!(as_dense(&n).row(0), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn self_loops_add_identity_before_scaling() {
        let a = dense(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let n = as_dense(&normalize(&a, Normalization::Symmetric, true).unwrap());
        for v in n.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn directed_edge_processed_under_mean() {
        // 2-node graph with a single edge 0→1 of weight 2.
        let a = dense(&[&[0.0, 2.0], &[0.0, 0.0]]);
        let out = as_dense(&process(&a, &AdjacencyConfig::default()).unwrap());
        assert_eq!(out.get(0, 1), 1.0);
        assert_eq!(out.get(1, 0), 1.0);
    }

    #[test]
    fn parse_names() {
        assert_eq!("elu+1".parse::<PKind>().unwrap(), PKind::EluPlusOne);
        assert_eq!("max".parse::<SymMode>().unwrap(), SymMode::Max);
        assert_eq!(parse_normalization("row").unwrap(), Normalization::Row);
        assert!(parse_normalization("spectral").is_err());
    }
}

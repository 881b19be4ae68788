//! Dense and sparse linear algebra, the differentiation tape, losses and
//! the Adam optimizer.

pub mod adam;
pub mod gradcheck;
pub mod loss;
mod matrix;
pub mod rng;
mod sparse;
pub mod tape;

pub use adam::AdamState;
pub use gradcheck::{finite_diff_check, Coordinates, GradCheckReport};
pub use loss::{masked_bce, masked_mse, softmax_cross_entropy};
pub use matrix::Matrix;
pub use sparse::SparseGraph;
pub use tape::{Activation, Normalization, Symmetrization, Tape, Value, Var};

/// Elementwise activation on a plain matrix.
pub fn activation(m: &Matrix, kind: Activation) -> Matrix {
    m.map(|x| kind.apply(x))
}

/// `a · b` for a dense or sparse left operand.
pub fn matmul(a: &Value, b: &Matrix) -> crate::Result<Matrix> {
    match a {
        Value::Dense(m) => m.matmul(b),
        Value::Sparse(s) => s.matmul(b),
    }
}

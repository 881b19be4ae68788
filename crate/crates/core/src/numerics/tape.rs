//! Reverse-mode differentiation over a fixed vocabulary of matrix ops.
//!
//! Every op appends a node holding its forward value. `backward` walks the
//! nodes in reverse insertion order, which is a valid topological order
//! because parents are always created before their children.

use std::rc::Rc;

use crate::error::{Error, Result};
use crate::numerics::loss::{self, sigmoid};
use crate::numerics::{Matrix, SparseGraph};

/// Degree floor used by the normalization ops for isolated rows.
pub const DEGREE_EPS: f64 = 1e-10;

/// Norm floor below which a row is treated as all-zero.
const NORM_EPS: f64 = 1e-12;

/// Value carried by a tape node.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Dense(Matrix),
    Sparse(SparseGraph),
}

impl Value {
    pub fn as_dense(&self) -> Result<&Matrix> {
        match self {
            Value::Dense(m) => Ok(m),
            Value::Sparse(_) => Err(Error::shape("expected a dense value, got sparse")),
        }
    }

    pub fn as_sparse(&self) -> Result<&SparseGraph> {
        match self {
            Value::Sparse(s) => Ok(s),
            Value::Dense(_) => Err(Error::shape("expected a sparse value, got dense")),
        }
    }

    /// Flat view of the stored numbers (dense data or sparse entry values).
    pub fn raw(&self) -> &[f64] {
        match self {
            Value::Dense(m) => m.data(),
            Value::Sparse(s) => s.values(),
        }
    }

    fn raw_mut(&mut self) -> &mut [f64] {
        match self {
            Value::Dense(m) => m.data_mut(),
            Value::Sparse(s) => s.values_mut(),
        }
    }

    fn map_raw(&self, f: impl Fn(f64) -> f64) -> Value {
        match self {
            Value::Dense(m) => Value::Dense(m.map(f)),
            Value::Sparse(s) => Value::Sparse(
                s.with_values(s.values().iter().map(|&v| f(v)).collect())
                    .expect("same pattern"),
            ),
        }
    }

    fn with_raw(&self, raw: Vec<f64>) -> Value {
        match self {
            Value::Dense(m) => {
                Value::Dense(Matrix::new(m.rows(), m.cols(), raw).expect("same shape"))
            }
            Value::Sparse(s) => Value::Sparse(s.with_values(raw).expect("same pattern")),
        }
    }

    fn same_layout(&self, other: &Value) -> bool {
        match (self, other) {
            (Value::Dense(a), Value::Dense(b)) => a.shape() == b.shape(),
            (Value::Sparse(a), Value::Sparse(b)) => {
                a.n() == b.n()
                    && a.row_indices() == b.row_indices()
                    && a.col_indices() == b.col_indices()
            }
            _ => false,
        }
    }

    /// Number of rows of the (square, for sparse) value.
    pub fn rows(&self) -> usize {
        match self {
            Value::Dense(m) => m.rows(),
            Value::Sparse(s) => s.n(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Value::Dense(m) => m.cols(),
            Value::Sparse(s) => s.n(),
        }
    }
}

impl From<Matrix> for Value {
    fn from(m: Matrix) -> Self {
        Value::Dense(m)
    }
}

impl From<SparseGraph> for Value {
    fn from(s: SparseGraph) -> Self {
        Value::Sparse(s)
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Elu,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
        }
    }

    /// Derivative in terms of the input; relu'(0) is taken as 0.
    #[inline]
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
        }
    }
}

/// How an adjacency and its transpose are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Symmetrization {
    Mean,
    Max,
}

/// Degree normalization of an adjacency.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Normalization {
    /// `D^-1/2 · A · D^-1/2`
    Symmetric,
    /// `D^-1 · A`
    Row,
}

#[derive(Debug)]
struct SymMap {
    /// For each output entry: position of `(i, j)` and `(j, i)` in the input.
    direct: Vec<Option<usize>>,
    mirror: Vec<Option<usize>>,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    SpMatMul(Var, Var),
    AddScaled(Var, Var, f64),
    Scale(Var, f64),
    AddScalar(Var),
    Act(Var, Activation),
    Mask(Var, Rc<Vec<f64>>),
    ColScale(Var, Var),
    RowL2Normalize(Var, Rc<Vec<f64>>),
    MaskedGram(Var),
    SymmetrizeDense(Var, Symmetrization),
    SymmetrizeSparse(Var, Symmetrization, Rc<SymMap>),
    AddIdentityDense(Var),
    AddIdentitySparse(Var, Rc<Vec<usize>>),
    Normalize(Var, Normalization, Rc<Vec<f64>>, Rc<Vec<bool>>),
    Sum(Var),
    SoftmaxCe(Var, Rc<Vec<(usize, usize)>>, Rc<Matrix>),
    MaskedBce(Var, Rc<Matrix>, Rc<Vec<(usize, usize)>>),
    MaskedMse(Var, Rc<Matrix>, Rc<Vec<(usize, usize)>>),
}

struct Node {
    value: Value,
    op: Op,
    needs_grad: bool,
}

/// Computation tape. Not shared across threads or training runs.
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Value>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Value, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf (a parameter).
    pub fn param(&mut self, value: impl Into<Value>) -> Var {
        self.push(value.into(), Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: impl Into<Value>) -> Var {
        self.push(value.into(), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Value {
        &self.nodes[v.0].value
    }

    pub fn dense(&self, v: Var) -> Result<&Matrix> {
        self.value(v).as_dense()
    }

    pub fn sparse(&self, v: Var) -> Result<&SparseGraph> {
        self.value(v).as_sparse()
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        self.dense(v)?.as_scalar()
    }

    pub fn needs_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Gradient accumulated by the last `backward` call, if any reached `v`.
    pub fn grad(&self, v: Var) -> Option<&Value> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Dense gradient, zero-filled when nothing flowed into `v`.
    pub fn grad_dense(&self, v: Var) -> Result<Matrix> {
        match self.grad(v) {
            Some(g) => Ok(g.as_dense()?.clone()),
            None => {
                let m = self.dense(v)?;
                Ok(Matrix::zeros(m.rows(), m.cols()))
            }
        }
    }

    // ----------------------------------------------------------------
    // forward ops

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = match self.value(a) {
            Value::Dense(am) => am.matmul(self.dense(b)?)?,
            Value::Sparse(s) => {
                let out = s.matmul(self.dense(b)?)?;
                let ng = self.needs_grad(a) || self.needs_grad(b);
                return Ok(self.push(Value::Dense(out), Op::SpMatMul(a, b), ng));
            }
        };
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(Value::Dense(value), Op::MatMul(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.add_scaled(a, b, 1.0)
    }

    /// `a + s·b` on values of identical layout.
    pub fn add_scaled(&mut self, a: Var, b: Var, s: f64) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_layout(vb) {
            return Err(Error::shape("add: operands differ in shape or pattern"));
        }
        let raw = va
            .raw()
            .iter()
            .zip(vb.raw())
            .map(|(&x, &y)| x + s * y)
            .collect();
        let value = va.with_raw(raw);
        let ng = self.needs_grad(a) || self.needs_grad(b);
        Ok(self.push(value, Op::AddScaled(a, b, s), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map_raw(|x| x * s);
        let ng = self.needs_grad(a);
        self.push(value, Op::Scale(a, s), ng)
    }

    /// Adds `c` to every stored entry (implicit sparse zeros are untouched).
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).map_raw(|x| x + c);
        let ng = self.needs_grad(a);
        self.push(value, Op::AddScalar(a), ng)
    }

    /// Elementwise activation on stored entries.
    pub fn activation(&mut self, a: Var, kind: Activation) -> Var {
        let value = self.value(a).map_raw(|x| kind.apply(x));
        let ng = self.needs_grad(a);
        self.push(value, Op::Act(a, kind), ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.activation(a, Activation::Relu)
    }

    /// Multiplies stored entries by a fixed mask (used for dropout).
    pub fn mask(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let va = self.value(a);
        if mask.len() != va.raw().len() {
            return Err(Error::shape(format!(
                "mask of length {} for {} entries",
                mask.len(),
                va.raw().len()
            )));
        }
        let raw = va.raw().iter().zip(&mask).map(|(x, m)| x * m).collect();
        let value = va.with_raw(raw);
        let ng = self.needs_grad(a);
        Ok(self.push(value, Op::Mask(a, Rc::new(mask)), ng))
    }

    /// `y[i][j] = x[i][j] · w[0][j]` for a `1 x f` weight row.
    pub fn col_scale(&mut self, x: Var, w: Var) -> Result<Var> {
        let xm = self.dense(x)?;
        let wm = self.dense(w)?;
        if wm.rows() != 1 || wm.cols() != xm.cols() {
            return Err(Error::shape(format!(
                "col_scale weight {}x{} for {} columns",
                wm.rows(),
                wm.cols(),
                xm.cols()
            )));
        }
        let mut out = xm.clone();
        for r in 0..out.rows() {
            for (v, &s) in out.row_mut(r).iter_mut().zip(wm.data()) {
                *v *= s;
            }
        }
        let ng = self.needs_grad(x) || self.needs_grad(w);
        Ok(self.push(Value::Dense(out), Op::ColScale(x, w), ng))
    }

    /// Scales every row to unit Euclidean norm; all-zero rows stay zero.
    pub fn row_l2_normalize(&mut self, x: Var) -> Result<Var> {
        let xm = self.dense(x)?;
        let mut out = xm.clone();
        let mut norms = Vec::with_capacity(xm.rows());
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm < NORM_EPS {
                row.iter_mut().for_each(|v| *v = 0.0);
                norms.push(0.0);
            } else {
                row.iter_mut().for_each(|v| *v /= norm);
                norms.push(norm);
            }
        }
        let ng = self.needs_grad(x);
        Ok(self.push(Value::Dense(out), Op::RowL2Normalize(x, Rc::new(norms)), ng))
    }

    /// Sparse values `S[i][j] = y_i · y_j` on the support of `pattern`.
    ///
    /// Gradients reach `y` only through the stored entries.
    pub fn masked_gram(&mut self, y: Var, pattern: &SparseGraph) -> Result<Var> {
        let ym = self.dense(y)?;
        if pattern.n() != ym.rows() {
            return Err(Error::shape("masked_gram: pattern size differs from row count"));
        }
        let vals = pattern
            .iter()
            .map(|(r, c, _)| dot(ym.row(r), ym.row(c)))
            .collect();
        let value = Value::Sparse(pattern.with_values(vals)?);
        let ng = self.needs_grad(y);
        Ok(self.push(value, Op::MaskedGram(y), ng))
    }

    pub fn symmetrize(&mut self, a: Var, mode: Symmetrization) -> Result<Var> {
        let ng = self.needs_grad(a);
        match self.value(a) {
            Value::Dense(m) => {
                if m.rows() != m.cols() {
                    return Err(Error::shape("symmetrize: matrix must be square"));
                }
                let n = m.rows();
                let out = Matrix::from_fn(n, n, |i, j| {
                    combine(mode, m.get(i, j), m.get(j, i))
                });
                Ok(self.push(Value::Dense(out), Op::SymmetrizeDense(a, mode), ng))
            }
            Value::Sparse(s) => {
                let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(s.nnz() * 2);
                for (r, c, _) in s.iter() {
                    entries.push((r, c, 0.0));
                    if s.find(c, r).is_none() {
                        entries.push((c, r, 0.0));
                    }
                }
                let pattern = SparseGraph::from_triplets(s.n(), entries)?;
                let direct: Vec<Option<usize>> =
                    pattern.iter().map(|(r, c, _)| s.find(r, c)).collect();
                let mirror: Vec<Option<usize>> =
                    pattern.iter().map(|(r, c, _)| s.find(c, r)).collect();
                let sv = s.values();
                let vals = direct
                    .iter()
                    .zip(&mirror)
                    .map(|(d, m)| {
                        combine(
                            mode,
                            d.map_or(0.0, |k| sv[k]),
                            m.map_or(0.0, |k| sv[k]),
                        )
                    })
                    .collect();
                let value = Value::Sparse(pattern.with_values(vals)?);
                let map = Rc::new(SymMap { direct, mirror });
                Ok(self.push(value, Op::SymmetrizeSparse(a, mode, map), ng))
            }
        }
    }

    /// `A + I`.
    pub fn add_identity(&mut self, a: Var) -> Result<Var> {
        let ng = self.needs_grad(a);
        match self.value(a) {
            Value::Dense(m) => {
                if m.rows() != m.cols() {
                    return Err(Error::shape("add_identity: matrix must be square"));
                }
                let mut out = m.clone();
                for i in 0..out.rows() {
                    let v = out.get(i, i);
                    out.set(i, i, v + 1.0);
                }
                Ok(self.push(Value::Dense(out), Op::AddIdentityDense(a), ng))
            }
            Value::Sparse(s) => {
                let mut entries: Vec<(usize, usize, f64)> = s.iter().collect();
                for i in 0..s.n() {
                    match s.find(i, i) {
                        Some(k) => entries[k].2 += 1.0,
                        None => entries.push((i, i, 1.0)),
                    }
                }
                let out = SparseGraph::from_triplets(s.n(), entries)?;
                let positions = s
                    .iter()
                    .map(|(r, c, _)| out.find(r, c).expect("entry kept"))
                    .collect();
                Ok(self.push(
                    Value::Sparse(out),
                    Op::AddIdentitySparse(a, Rc::new(positions)),
                    ng,
                ))
            }
        }
    }

    /// Degree normalization with row-sum degrees. Rows whose degree falls
    /// below [`DEGREE_EPS`] use the floor and pass no gradient to the degree.
    pub fn normalize(&mut self, a: Var, mode: Normalization) -> Result<Var> {
        let ng = self.needs_grad(a);
        let value = self.value(a);
        if value.rows() != value.cols() {
            return Err(Error::shape("normalize: matrix must be square"));
        }
        let n = value.rows();
        let mut deg = vec![0.0; n];
        for_each_entry(value, |i, _, _, v| deg[i] += v);
        let mut guarded = vec![false; n];
        for (d, g) in deg.iter_mut().zip(guarded.iter_mut()) {
            if *d < DEGREE_EPS {
                *d = DEGREE_EPS;
                *g = true;
            }
        }
        let (scale, out) = match mode {
            Normalization::Symmetric => {
                let s: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
                let out = map_entries(value, |i, j, v| v * s[i] * s[j]);
                (s, out)
            }
            Normalization::Row => {
                let out = map_entries(value, |i, _, v| v / deg[i]);
                (deg, out)
            }
        };
        Ok(self.push(
            out,
            Op::Normalize(a, mode, Rc::new(scale), Rc::new(guarded)),
            ng,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).raw().iter().sum();
        let ng = self.needs_grad(a);
        self.push(Value::Dense(Matrix::scalar(s)), Op::Sum(a), ng)
    }

    /// Mean softmax cross-entropy over `targets = [(row, label)]`.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: Vec<(usize, usize)>,
    ) -> Result<Var> {
        let lm = self.dense(logits)?;
        let value = loss::softmax_cross_entropy(lm, &targets)?;
        let probs = loss::softmax_rows(lm);
        let ng = self.needs_grad(logits);
        Ok(self.push(
            Value::Dense(Matrix::scalar(value)),
            Op::SoftmaxCe(logits, Rc::new(targets), Rc::new(probs)),
            ng,
        ))
    }

    pub fn masked_bce(
        &mut self,
        logits: Var,
        target: Rc<Matrix>,
        idx: Rc<Vec<(usize, usize)>>,
    ) -> Result<Var> {
        let value = loss::masked_bce(&target, self.dense(logits)?, &idx)?;
        let ng = self.needs_grad(logits);
        Ok(self.push(
            Value::Dense(Matrix::scalar(value)),
            Op::MaskedBce(logits, target, idx),
            ng,
        ))
    }

    pub fn masked_mse(
        &mut self,
        pred: Var,
        target: Rc<Matrix>,
        idx: Rc<Vec<(usize, usize)>>,
    ) -> Result<Var> {
        let value = loss::masked_mse(&target, self.dense(pred)?, &idx)?;
        let ng = self.needs_grad(pred);
        Ok(self.push(
            Value::Dense(Matrix::scalar(value)),
            Op::MaskedMse(pred, target, idx),
            ng,
        ))
    }

    // ----------------------------------------------------------------
    // backward

    /// Accumulates `∂root/∂v` into every node that needs a gradient.
    pub fn backward(&mut self, root: Var) -> Result<()> {
        let rv = self.dense(root).map_err(|_| Error::shape("backward root must be dense"))?;
        if rv.shape() != (1, 1) {
            return Err(Error::shape(format!(
                "backward root must be scalar, got {}x{}",
                rv.rows(),
                rv.cols()
            )));
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[root.0] = Some(Value::Dense(Matrix::scalar(1.0)));
        for idx in (0..=root.0).rev() {
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].needs_grad {
                self.grads[idx] = Some(g);
                continue;
            }
            self.propagate(idx, &g)?;
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, g: Value) {
        if !self.nodes[v.0].needs_grad {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => {
                for (a, b) in existing.raw_mut().iter_mut().zip(g.raw()) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&mut self, idx: usize, g: &Value) -> Result<()> {
        // Borrow juggling: read what we need from the node, then accumulate.
        match &self.nodes[idx].op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let gm = g.as_dense()?;
                if self.needs_grad(a) {
                    let ga = gm.matmul_t(self.dense(b)?)?;
                    self.accumulate(a, Value::Dense(ga));
                }
                if self.needs_grad(b) {
                    let gb = self.dense(a)?.t_matmul(gm)?;
                    self.accumulate(b, Value::Dense(gb));
                }
            }
            &Op::SpMatMul(a, b) => {
                let gm = g.as_dense()?;
                if self.needs_grad(a) {
                    let s = self.sparse(a)?;
                    let bm = self.dense(b)?;
                    let vals = s.iter().map(|(r, c, _)| dot(gm.row(r), bm.row(c))).collect();
                    let ga = Value::Sparse(s.with_values(vals)?);
                    self.accumulate(a, ga);
                }
                if self.needs_grad(b) {
                    let gb = self.sparse(a)?.t_matmul(gm)?;
                    self.accumulate(b, Value::Dense(gb));
                }
            }
            &Op::AddScaled(a, b, s) => {
                self.accumulate(a, g.clone());
                self.accumulate(b, g.map_raw(|x| x * s));
            }
            &Op::Scale(a, s) => self.accumulate(a, g.map_raw(|x| x * s)),
            &Op::AddScalar(a) => self.accumulate(a, g.clone()),
            &Op::Act(a, kind) => {
                let input = self.value(a).raw();
                let raw = g
                    .raw()
                    .iter()
                    .zip(input)
                    .map(|(&gv, &x)| gv * kind.derivative(x))
                    .collect();
                let ga = g.with_raw(raw);
                self.accumulate(a, ga);
            }
            Op::Mask(a, mask) => {
                let a = *a;
                let raw = g.raw().iter().zip(mask.iter()).map(|(x, m)| x * m).collect();
                let ga = g.with_raw(raw);
                self.accumulate(a, ga);
            }
            &Op::ColScale(x, w) => {
                let gm = g.as_dense()?;
                if self.needs_grad(x) {
                    let wm = self.dense(w)?;
                    let mut gx = gm.clone();
                    for r in 0..gx.rows() {
                        for (v, &s) in gx.row_mut(r).iter_mut().zip(wm.data()) {
                            *v *= s;
                        }
                    }
                    self.accumulate(x, Value::Dense(gx));
                }
                if self.needs_grad(w) {
                    let xm = self.dense(x)?;
                    let mut gw = Matrix::zeros(1, xm.cols());
                    for r in 0..xm.rows() {
                        for ((acc, &gv), &xv) in
                            gw.data_mut().iter_mut().zip(gm.row(r)).zip(xm.row(r))
                        {
                            *acc += gv * xv;
                        }
                    }
                    self.accumulate(w, Value::Dense(gw));
                }
            }
            Op::RowL2Normalize(x, norms) => {
                let x = *x;
                let gm = g.as_dense()?;
                let y = self.nodes[idx].value.as_dense()?;
                let mut gx = Matrix::zeros(gm.rows(), gm.cols());
                for r in 0..gm.rows() {
                    let norm = norms[r];
                    if norm == 0.0 {
                        continue;
                    }
                    let yr = y.row(r);
                    let gr = gm.row(r);
                    let proj = dot(yr, gr);
                    for ((o, &gv), &yv) in gx.row_mut(r).iter_mut().zip(gr).zip(yr) {
                        *o = (gv - yv * proj) / norm;
                    }
                }
                self.accumulate(x, Value::Dense(gx));
            }
            &Op::MaskedGram(y) => {
                let gs = g.as_sparse()?;
                let ym = self.dense(y)?;
                let mut gy = Matrix::zeros(ym.rows(), ym.cols());
                for (r, c, gv) in gs.iter() {
                    if gv == 0.0 {
                        continue;
                    }
                    for k in 0..ym.cols() {
                        let (yr, yc) = (ym.get(r, k), ym.get(c, k));
                        gy.data_mut()[r * ym.cols() + k] += gv * yc;
                        gy.data_mut()[c * ym.cols() + k] += gv * yr;
                    }
                }
                self.accumulate(y, Value::Dense(gy));
            }
            &Op::SymmetrizeDense(a, mode) => {
                let gm = g.as_dense()?;
                let am = self.dense(a)?;
                let n = gm.rows();
                let mut ga = Matrix::zeros(n, n);
                for i in 0..n {
                    for j in 0..n {
                        let gv = gm.get(i, j);
                        match mode {
                            Symmetrization::Mean => {
                                ga.data_mut()[i * n + j] += 0.5 * gv;
                                ga.data_mut()[j * n + i] += 0.5 * gv;
                            }
                            Symmetrization::Max => {
                                if am.get(i, j) >= am.get(j, i) {
                                    ga.data_mut()[i * n + j] += gv;
                                } else {
                                    ga.data_mut()[j * n + i] += gv;
                                }
                            }
                        }
                    }
                }
                self.accumulate(a, Value::Dense(ga));
            }
            Op::SymmetrizeSparse(a, mode, map) => {
                let (a, mode, map) = (*a, *mode, Rc::clone(map));
                let input = self.sparse(a)?;
                let iv = input.values();
                let mut raw = vec![0.0; input.nnz()];
                for ((d, m), &gv) in map.direct.iter().zip(&map.mirror).zip(g.raw()) {
                    match mode {
                        Symmetrization::Mean => {
                            if let Some(k) = d {
                                raw[*k] += 0.5 * gv;
                            }
                            if let Some(k) = m {
                                raw[*k] += 0.5 * gv;
                            }
                        }
                        Symmetrization::Max => {
                            let dv = d.map_or(0.0, |k| iv[k]);
                            let mv = m.map_or(0.0, |k| iv[k]);
                            let target = if dv >= mv { d } else { m };
                            if let Some(k) = target {
                                raw[*k] += gv;
                            }
                        }
                    }
                }
                let ga = Value::Sparse(input.with_values(raw)?);
                self.accumulate(a, ga);
            }
            &Op::AddIdentityDense(a) => self.accumulate(a, g.clone()),
            Op::AddIdentitySparse(a, positions) => {
                let a = *a;
                let gr = g.raw();
                let raw = positions.iter().map(|&k| gr[k]).collect();
                let ga = self.value(a).with_raw(raw);
                self.accumulate(a, ga);
            }
            Op::Normalize(a, mode, scale, guarded) => {
                let (a, mode) = (*a, *mode);
                let (scale, guarded) = (Rc::clone(scale), Rc::clone(guarded));
                let input = self.value(a);
                let n = input.rows();
                let gr = g.raw();
                let mut raw = vec![0.0; input.raw().len()];
                match mode {
                    Normalization::Symmetric => {
                        let s = &scale;
                        // ∂L/∂s_i collected from row i and column i.
                        let mut ds = vec![0.0; n];
                        for_each_entry(input, |i, j, k, v| {
                            raw[k] = gr[k] * s[i] * s[j];
                            ds[i] += gr[k] * v * s[j];
                            ds[j] += gr[k] * v * s[i];
                        });
                        let dd: Vec<f64> = (0..n)
                            .map(|i| {
                                if guarded[i] {
                                    0.0
                                } else {
                                    -0.5 * ds[i] * s[i] * s[i] * s[i]
                                }
                            })
                            .collect();
                        for_each_entry(input, |i, _, k, _| raw[k] += dd[i]);
                    }
                    Normalization::Row => {
                        let deg = &scale;
                        let mut dot_rows = vec![0.0; n];
                        for_each_entry(input, |i, _, k, v| {
                            raw[k] = gr[k] / deg[i];
                            dot_rows[i] += gr[k] * v;
                        });
                        for_each_entry(input, |i, _, k, _| {
                            if !guarded[i] {
                                raw[k] -= dot_rows[i] / (deg[i] * deg[i]);
                            }
                        });
                    }
                }
                let ga = input.with_raw(raw);
                self.accumulate(a, ga);
            }
            &Op::Sum(a) => {
                let gv = g.as_dense()?.as_scalar()?;
                let ga = self.value(a).map_raw(|_| gv);
                self.accumulate(a, ga);
            }
            Op::SoftmaxCe(logits, targets, probs) => {
                let logits = *logits;
                let gv = g.as_dense()?.as_scalar()?;
                let scale = gv / targets.len() as f64;
                let mut gl = Matrix::zeros(probs.rows(), probs.cols());
                for &(r, label) in targets.iter() {
                    for (o, &p) in gl.row_mut(r).iter_mut().zip(probs.row(r)) {
                        *o += scale * p;
                    }
                    gl.data_mut()[r * probs.cols() + label] -= scale;
                }
                self.accumulate(logits, Value::Dense(gl));
            }
            Op::MaskedBce(logits, target, cells) => {
                let logits = *logits;
                let gv = g.as_dense()?.as_scalar()?;
                let lm = self.dense(logits)?;
                let scale = gv / cells.len() as f64;
                let mut gl = Matrix::zeros(lm.rows(), lm.cols());
                for &(r, c) in cells.iter() {
                    let d = sigmoid(lm.get(r, c)) - target.get(r, c);
                    gl.data_mut()[r * lm.cols() + c] += scale * d;
                }
                self.accumulate(logits, Value::Dense(gl));
            }
            Op::MaskedMse(pred, target, cells) => {
                let pred = *pred;
                let gv = g.as_dense()?.as_scalar()?;
                let pm = self.dense(pred)?;
                let scale = 2.0 * gv / cells.len() as f64;
                let mut gp = Matrix::zeros(pm.rows(), pm.cols());
                for &(r, c) in cells.iter() {
                    gp.data_mut()[r * pm.cols() + c] += scale * (pm.get(r, c) - target.get(r, c));
                }
                self.accumulate(pred, Value::Dense(gp));
            }
        }
        Ok(())
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn combine(mode: Symmetrization, a: f64, b: f64) -> f64 {
    match mode {
        Symmetrization::Mean => (a + b) * 0.5,
        Symmetrization::Max => a.max(b),
    }
}

/// Calls `f(row, col, flat_index, value)` for every stored entry.
fn for_each_entry(value: &Value, mut f: impl FnMut(usize, usize, usize, f64)) {
    match value {
        Value::Dense(m) => {
            let n = m.cols();
            for (k, &v) in m.data().iter().enumerate() {
                f(k / n, k % n, k, v);
            }
        }
        Value::Sparse(s) => {
            for (k, (r, c, v)) in s.iter().enumerate() {
                f(r, c, k, v);
            }
        }
    }
}

fn map_entries(value: &Value, mut f: impl FnMut(usize, usize, f64) -> f64) -> Value {
    let mut raw = Vec::with_capacity(value.raw().len());
    for_each_entry(value, |i, j, _, v| raw.push(f(i, j, v)));
    value.with_raw(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut t = Tape::new();
        let w = t.param(Matrix::from_fn(2, 3, |i, j| (i + j) as f64));
        let s = t.sum(w);
        t.backward(s).unwrap();
        assert_eq!(t.grad_dense(w).unwrap(), Matrix::filled(2, 3, 1.0));
    }

    #[test]
    fn linear_map_gradient() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [0.0, -1.0], [3.0, 0.5]]).unwrap();
        let mut t = Tape::new();
        let av = t.constant(a.clone());
        let x = t.param(Matrix::from_fn(2, 2, |i, j| (i * 2 + j) as f64));
        let y = t.matmul(av, x).unwrap();
        let s = t.sum(y);
        t.backward(s).unwrap();
        let expected = a.t_matmul(&Matrix::filled(3, 2, 1.0)).unwrap();
        assert_eq!(t.grad_dense(x).unwrap(), expected);
        assert!(t.grad(av).is_none());
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut t = Tape::new();
        let w = t.param(Matrix::zeros(2, 2));
        assert!(matches!(t.backward(w), Err(Error::Shape(_))));
    }

    #[test]
    fn activations() {
        let mut t = Tape::new();
        let x = t.param(Matrix::from_rows(&[[-1.0, 2.0]]).unwrap());
        let r = t.relu(x);
        assert_eq!(t.dense(r).unwrap().data(), &[0.0, 2.0]);
        let z = t.param(Matrix::scalar(0.0));
        let e = t.activation(z, Activation::Elu);
        assert_eq!(t.scalar(e).unwrap(), 0.0);
        let m1 = t.param(Matrix::scalar(-1.0));
        let e = t.activation(m1, Activation::Elu);
        assert!((t.scalar(e).unwrap() - (-1f64).exp_m1()).abs() < 1e-15);
        assert!((t.scalar(e).unwrap() + 0.6321).abs() < 1e-4);
    }

    #[test]
    fn masked_gram_passes_gradient_only_on_support() {
        let y = Matrix::from_rows(&[[1.0, 0.0], [0.6, 0.8], [0.0, 1.0]]).unwrap();
        let pattern = SparseGraph::from_triplets(3, vec![(0, 1, 1.0)]).unwrap();
        let mut t = Tape::new();
        let yv = t.param(y);
        let s = t.masked_gram(yv, &pattern).unwrap();
        let total = t.sum(s);
        t.backward(total).unwrap();
        let g = t.grad_dense(yv).unwrap();
        // Node 2 is outside the support.
        assert_eq!(g.row(2), &[0.0, 0.0]);
        assert_eq!(g.row(0), &[0.6, 0.8]);
        assert_eq!(g.row(1), &[1.0, 0.0]);
    }
}

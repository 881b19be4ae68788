//! The classifier GCN, the denoising-autoencoder GCN, feature-noise
//! sampling and the joint objective `L = L_C + λ·L_DAE`.

mod noise;

pub use noise::{
    round_count, sample_noise_binary, sample_noise_continuous, ContinuousNoise, NoiseMask,
};

use std::rc::Rc;

use rand::Rng;

use crate::adjacency::{process_var, AdjacencyConfig};
use crate::error::{Error, Result};
use crate::generators::{register_params, GraphGenerator};
use crate::numerics::{Matrix, Tape, Var};

/// Weights of a two-layer GCN `A · φ(A · X · W1) · W2` (no biases).
#[derive(Clone, Debug, PartialEq)]
pub struct GcnWeights {
    pub w1: Matrix,
    pub w2: Matrix,
}

/// `θ_GNN_C`: `f x h` and `h x |C|`.
pub type ClassifierParams = GcnWeights;

/// `θ_GNN_DAE`: `f x h_d` and `h_d x f`.
pub type DaeParams = GcnWeights;

#[derive(Clone, Copy, Debug)]
pub struct GcnVars {
    pub w1: Var,
    pub w2: Var,
}

impl GcnWeights {
    /// Glorot-uniform initialization.
    pub fn glorot<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        GcnWeights {
            w1: glorot(input, hidden, rng),
            w2: glorot(hidden, output, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize, output: usize) -> Self {
        GcnWeights {
            w1: Matrix::zeros(input, hidden),
            w2: Matrix::zeros(hidden, output),
        }
    }

    pub fn register(&self, tape: &mut Tape) -> GcnVars {
        GcnVars {
            w1: tape.param(self.w1.clone()),
            w2: tape.param(self.w2.clone()),
        }
    }

    pub fn params(&self) -> Vec<&Matrix> {
        vec![&self.w1, &self.w2]
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w1, &mut self.w2]
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }
}

fn glorot<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

/// Inverted dropout on the stored entries of `v`: kept entries are scaled
/// by `1 / (1 - p)`. `p = 0` returns `v` untouched.
pub fn dropout<R: Rng + ?Sized>(tape: &mut Tape, v: Var, p: f64, rng: &mut R) -> Result<Var> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid(format!("dropout probability {p} outside [0, 1)")));
    }
    if p == 0.0 {
        return Ok(v);
    }
    let keep = 1.0 / (1.0 - p);
    let len = tape.value(v).raw().len();
    let mask = (0..len)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    tape.mask(v, mask)
}

/// Propagation `A · input · W`, multiplying by `A` on the narrower side.
fn propagate(tape: &mut Tape, a: Var, input: Var, w: Var) -> Result<Var> {
    let in_width = tape.value(input).cols();
    let out_width = tape.value(w).cols();
    if in_width <= out_width {
        let ax = tape.matmul(a, input)?;
        tape.matmul(ax, w)
    } else {
        let xw = tape.matmul(input, w)?;
        tape.matmul(a, xw)
    }
}

/// Two-layer GCN forward pass with ReLU and optional hidden dropout.
pub fn gcn_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    a: Var,
    x: Var,
    vars: &GcnVars,
    hidden_dropout: Option<(f64, &mut R)>,
) -> Result<Var> {
    let (n, f) = (tape.value(x).rows(), tape.value(x).cols());
    let w1 = tape.dense(vars.w1)?;
    if w1.rows() != f {
        return Err(Error::shape(format!(
            "first-layer weights are {}x{} for {f} input features",
            w1.rows(),
            w1.cols()
        )));
    }
    if tape.value(a).rows() != n || tape.value(a).cols() != n {
        return Err(Error::shape(format!(
            "adjacency is {}x{} for {n} nodes",
            tape.value(a).rows(),
            tape.value(a).cols()
        )));
    }
    let h = propagate(tape, a, x, vars.w1)?;
    let mut h = tape.relu(h);
    if let Some((p, rng)) = hidden_dropout {
        h = dropout(tape, h, p, rng)?;
    }
    propagate(tape, a, h, vars.w2)
}

/// `GNN_C(A, X) = A · ReLU(A · X · W1) · W2` in evaluation mode.
pub fn classifier_forward(a: &crate::numerics::Value, x: &Matrix, params: &ClassifierParams) -> Result<Matrix> {
    let mut tape = Tape::new();
    let av = tape.constant(a.clone());
    let xv = tape.constant(x.clone());
    let vars = GcnVars {
        w1: tape.constant(params.w1.clone()),
        w2: tape.constant(params.w2.clone()),
    };
    let out = gcn_forward::<rand::rngs::ThreadRng>(&mut tape, av, xv, &vars, None)?;
    Ok(tape.dense(out)?.clone())
}

/// `GNN_DAE(X̃, A)`: same architecture, output width equals input width.
pub fn dae_forward(a: &crate::numerics::Value, noisy: &Matrix, params: &DaeParams) -> Result<Matrix> {
    if params.output_dim() != noisy.cols() {
        return Err(Error::shape("dae output width must equal the feature width"));
    }
    classifier_forward(a, noisy, params)
}

/// `L = L_C + λ·L_DAE`.
pub fn combined_loss(loss_c: f64, loss_dae: f64, lambda: f64) -> Result<f64> {
    if lambda < 0.0 {
        return Err(Error::invalid("λ must be non-negative"));
    }
    Ok(loss_c + lambda * loss_dae)
}

/// Reconstruction loss for the denoising task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReconstructionLoss {
    /// Binary features: cross-entropy on logits.
    Bce,
    /// Continuous features: squared error.
    Mse,
}

/// Dropout probabilities used during a training pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropouts {
    pub adjacency_c: f64,
    pub adjacency_dae: f64,
    pub hidden: f64,
}

impl Dropouts {
    pub const NONE: Dropouts = Dropouts {
        adjacency_c: 0.0,
        adjacency_dae: 0.0,
        hidden: 0.0,
    };
}

/// Generator, processor, classifier and denoiser trained together.
#[derive(Clone)]
pub struct SlapsModel {
    pub generator: Box<dyn GraphGenerator>,
    pub classifier: ClassifierParams,
    pub dae: DaeParams,
    pub adjacency: AdjacencyConfig,
}

/// What one pass computes.
pub struct PassInputs<'a> {
    /// Classification targets `(row, label)`; the classifier is skipped
    /// entirely when `classify` is false.
    pub targets: &'a [(usize, usize)],
    pub classify: bool,
    /// Noisy features and masked cells for the denoising loss.
    pub noise: Option<&'a NoiseMask>,
    pub reconstruction: ReconstructionLoss,
    pub lambda: f64,
    /// Also record dropout-free classifier logits for evaluation.
    pub eval_logits: bool,
}

/// Independent random streams for the two networks' dropout draws.
pub struct DropoutRngs<'a, R: Rng> {
    pub classifier: &'a mut R,
    pub dae: &'a mut R,
    pub rates: Dropouts,
}

/// Tape and handles from one forward pass.
pub struct SlapsPass {
    pub tape: Tape,
    pub generator_vars: Vec<Var>,
    pub classifier_vars: GcnVars,
    pub dae_vars: GcnVars,
    /// Processed adjacency before any dropout.
    pub adjacency: Var,
    pub logits: Option<Var>,
    pub eval_logits: Option<Var>,
    pub loss_c: Option<Var>,
    pub loss_dae: Option<Var>,
    pub total: Option<Var>,
}

impl SlapsPass {
    pub fn value(&self, v: Option<Var>) -> Result<Option<f64>> {
        v.map(|v| self.tape.scalar(v)).transpose()
    }

    /// Backpropagates the total loss.
    pub fn backward(&mut self) -> Result<()> {
        let total = self
            .total
            .ok_or_else(|| Error::invalid("pass has no loss to differentiate"))?;
        self.tape.backward(total)
    }

    pub fn grads(&self, vars: &[Var]) -> Result<Vec<Matrix>> {
        vars.iter().map(|&v| self.tape.grad_dense(v)).collect()
    }
}

impl SlapsModel {
    pub fn all_params(&self) -> Vec<&Matrix> {
        let mut v = self.generator.params();
        v.extend(self.classifier.params());
        v.extend(self.dae.params());
        v
    }

    pub fn all_params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = self.generator.params_mut();
        v.extend(self.classifier.params_mut());
        v.extend(self.dae.params_mut());
        v
    }

    /// Records generate → process → GNN_C / GNN_DAE → losses on a fresh
    /// tape. `rngs = None` runs without any dropout.
    pub fn forward<R: Rng>(
        &mut self,
        x: &Matrix,
        inputs: &PassInputs<'_>,
        rngs: Option<DropoutRngs<'_, R>>,
    ) -> Result<SlapsPass> {
        if inputs.lambda < 0.0 {
            return Err(Error::invalid("λ must be non-negative"));
        }
        let mut tape = Tape::new();
        let generator_vars = register_params(&mut tape, self.generator.as_ref());
        let classifier_vars = self.classifier.register(&mut tape);
        let dae_vars = self.dae.register(&mut tape);
        let raw = self.generator.generate(&mut tape, &generator_vars, x)?;
        let adjacency = process_var(&mut tape, raw, &self.adjacency)?;
        let xv = tape.constant(x.clone());

        let (mut rng_c, mut rng_d, rates) = match rngs {
            Some(r) => (Some(r.classifier), Some(r.dae), r.rates),
            None => (None, None, Dropouts::NONE),
        };

        let mut logits = None;
        let mut loss_c = None;
        if inputs.classify {
            let a_c = match rng_c.as_deref_mut() {
                Some(rng) => dropout(&mut tape, adjacency, rates.adjacency_c, rng)?,
                None => adjacency,
            };
            let hidden = rng_c.as_deref_mut().map(|rng| (rates.hidden, rng));
            let out = gcn_forward(&mut tape, a_c, xv, &classifier_vars, hidden)?;
            logits = Some(out);
            if !inputs.targets.is_empty() {
                loss_c = Some(tape.softmax_cross_entropy(out, inputs.targets.to_vec())?);
            }
        }
        let eval_logits = if inputs.eval_logits && rng_c.is_some() {
            Some(gcn_forward::<R>(&mut tape, adjacency, xv, &classifier_vars, None)?)
        } else if inputs.eval_logits {
            logits
        } else {
            None
        };

        let mut loss_dae = None;
        if let Some(noise) = inputs.noise {
            if noise.noisy.shape() != x.shape() {
                return Err(Error::shape("noisy features differ in shape from X"));
            }
            let xn = tape.constant(noise.noisy.clone());
            let a_d = match rng_d.as_deref_mut() {
                Some(rng) => dropout(&mut tape, adjacency, rates.adjacency_dae, rng)?,
                None => adjacency,
            };
            let hidden = rng_d.map(|rng| (rates.hidden, rng));
            let recon = gcn_forward(&mut tape, a_d, xn, &dae_vars, hidden)?;
            let target = Rc::new(x.clone());
            let idx = Rc::new(noise.idx.clone());
            loss_dae = Some(match inputs.reconstruction {
                ReconstructionLoss::Bce => tape.masked_bce(recon, target, idx)?,
                ReconstructionLoss::Mse => tape.masked_mse(recon, target, idx)?,
            });
        }

        let total = match (loss_c, loss_dae) {
            (Some(c), Some(d)) => Some(tape.add_scaled(c, d, inputs.lambda)?),
            (Some(c), None) => Some(c),
            (None, Some(d)) => Some(d),
            (None, None) => None,
        };
        Ok(SlapsPass {
            tape,
            generator_vars,
            classifier_vars,
            dae_vars,
            adjacency,
            logits,
            eval_logits,
            loss_c,
            loss_dae,
            total,
        })
    }
}

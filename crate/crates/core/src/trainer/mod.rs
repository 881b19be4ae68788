//! Training loops for joint SLAPS optimization and its baselines and
//! variants.

mod config;
mod dataset;
mod gradcheck;

pub use config::{ExperimentConfig, Grid, NoiseScheme, Selection, CONFIG_KEYS};
pub use dataset::{Dataset, FeatureKind};
pub use gradcheck::{gradcheck_slaps, GRADCHECK_STEP};

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use log::{debug, warn};
use rand_chacha::ChaCha8Rng;

use crate::adjacency::{process, AdjacencyConfig, PKind};
use crate::error::{Error, Result};
use crate::generators::{knn_graph, GeneratorRegistry};
use crate::models::{
    dropout, gcn_forward, sample_noise_binary, sample_noise_continuous, ClassifierParams,
    ContinuousNoise, DropoutRngs, Dropouts, GcnWeights, NoiseMask, PassInputs,
    ReconstructionLoss, SlapsModel,
};
use crate::numerics::loss::softmax_rows;
use crate::numerics::rng::{stream_rng, Stream};
use crate::numerics::{softmax_cross_entropy, AdamState, Matrix, SparseGraph, Tape, Value};

/// Fraction of `idx` whose row argmax (lowest index on ties) equals the label.
pub fn evaluate(logits: &Matrix, y: &[usize], idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::EmptyIndex("evaluate"));
    }
    let mut correct = 0usize;
    for &i in idx {
        if i >= logits.rows() || i >= y.len() {
            return Err(Error::invalid(format!("node {i} out of range")));
        }
        correct += (logits.argmax_row(i) == y[i]) as usize;
    }
    Ok(correct as f64 / idx.len() as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_c: Option<f64>,
    pub loss_dae: Option<f64>,
    pub val_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub best_val_loss: f64,
    /// Accuracy of the restored best-validation parameters.
    pub test_accuracy: f64,
    pub wall_time: Duration,
    pub seed: u64,
}

/// Wall time is excluded: two runs with one seed compare equal.
impl PartialEq for TrainReport {
    fn eq(&self, other: &Self) -> bool {
        self.epochs == other.epochs
            && self.best_epoch == other.best_epoch
            && self.best_val_accuracy.to_bits() == other.best_val_accuracy.to_bits()
            && self.best_val_loss.to_bits() == other.best_val_loss.to_bits()
            && self.test_accuracy.to_bits() == other.test_accuracy.to_bits()
            && self.seed == other.seed
    }
}

/// Best-checkpoint bookkeeping.
struct Best<T> {
    selection: Selection,
    epoch: usize,
    accuracy: f64,
    loss: f64,
    state: Option<T>,
    stale: usize,
}

impl<T> Best<T> {
    fn new(selection: Selection) -> Self {
        Best {
            selection,
            epoch: 0,
            accuracy: f64::NEG_INFINITY,
            loss: f64::INFINITY,
            state: None,
            stale: 0,
        }
    }

    fn improves(&self, accuracy: f64, loss: f64) -> bool {
        match self.selection {
            Selection::Accuracy => accuracy > self.accuracy,
            Selection::Loss => loss < self.loss,
        }
    }

    /// Records the candidate if it improves; returns whether it did.
    fn offer(&mut self, epoch: usize, accuracy: f64, loss: f64, state: impl FnOnce() -> T) -> bool {
        if self.state.is_none() || self.improves(accuracy, loss) {
            self.epoch = epoch;
            self.accuracy = accuracy;
            self.loss = loss;
            self.state = Some(state());
            self.stale = 0;
            true
        } else {
            self.stale += 1;
            false
        }
    }

    fn exhausted(&self, patience: Option<usize>) -> bool {
        patience.is_some_and(|p| self.stale >= p)
    }
}

fn is_due(epoch: usize, every: usize) -> bool {
    (epoch - 1).is_multiple_of(every)
}

fn val_metrics(logits: &Matrix, dataset: &Dataset) -> Result<(f64, f64)> {
    if dataset.val.is_empty() {
        return Err(Error::Dataset("empty validation split".into()));
    }
    let acc = evaluate(logits, &dataset.y, &dataset.val)?;
    let loss = softmax_cross_entropy(logits, &dataset.targets(&dataset.val))?;
    Ok((acc, loss))
}

fn reconstruction_for(kind: FeatureKind) -> ReconstructionLoss {
    match kind {
        FeatureKind::Binary => ReconstructionLoss::Bce,
        FeatureKind::Continuous => ReconstructionLoss::Mse,
    }
}

/// Draws a fresh corruption for one epoch; `None` when no cell is masked.
pub fn sample_noise(
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Option<NoiseMask>> {
    let scheme = match cfg.noise {
        NoiseScheme::Auto => match dataset.feature_kind {
            FeatureKind::Binary => NoiseScheme::Binary,
            FeatureKind::Continuous => NoiseScheme::Zero,
        },
        s => s,
    };
    let mask = match scheme {
        NoiseScheme::Binary => sample_noise_binary(&dataset.x, cfg.r, cfg.eta, rng)?,
        NoiseScheme::Zero => sample_noise_continuous(&dataset.x, cfg.r, ContinuousNoise::Zero, rng)?,
        NoiseScheme::Gaussian => sample_noise_continuous(
            &dataset.x,
            cfg.r,
            ContinuousNoise::Gaussian { sigma: cfg.sigma },
            rng,
        )?,
        NoiseScheme::Auto => unreachable!("resolved above"),
    };
    Ok((!mask.idx.is_empty()).then_some(mask))
}

/// Generator, classifier and denoiser initialized from the run seed. An FP
/// generator starts from `dataset.graph` when one is present.
pub fn build_model(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<SlapsModel> {
    let f = dataset.x.cols();
    let mut options = cfg.generator_options();
    options.initial_graph = dataset.graph.clone();
    let generator = GeneratorRegistry::default().create(cfg.generator.name(), &dataset.x, &options)?;
    let classifier = GcnWeights::glorot(
        f,
        cfg.hidden_c,
        dataset.num_classes,
        &mut stream_rng(cfg.seed, Stream::ClassifierInit),
    );
    let dae = GcnWeights::glorot(f, cfg.dae_hidden(f), f, &mut stream_rng(cfg.seed, Stream::DaeInit));
    Ok(SlapsModel {
        generator,
        classifier,
        dae,
        adjacency: cfg.adjacency(),
    })
}

/// A trained SLAPS model with its learned graph.
#[derive(Clone)]
pub struct TrainedSlaps {
    pub report: TrainReport,
    pub model: SlapsModel,
    /// Processed adjacency of the restored model (no dropout).
    pub adjacency: Value,
    /// Row-wise class probabilities of the restored model.
    pub probabilities: Matrix,
}

fn finite(epoch: usize, what: &str, v: Option<f64>) -> Result<()> {
    match v {
        Some(x) if !x.is_finite() => Err(Error::Divergence {
            epoch,
            detail: format!("{what} = {x}"),
        }),
        _ => Ok(()),
    }
}

/// Optimizers for the three parameter groups. The classifier uses `lr_c`;
/// generator and denoiser share `lr_dae`.
struct Optimizers {
    classifier: AdamState,
    generator: AdamState,
    dae: AdamState,
}

impl Optimizers {
    fn new(model: &SlapsModel, cfg: &ExperimentConfig) -> Self {
        Optimizers {
            classifier: AdamState::for_params(cfg.lr_c, &model.classifier.params()),
            generator: AdamState::for_params(cfg.lr_dae, &model.generator.params()),
            dae: AdamState::for_params(cfg.lr_dae, &model.dae.params()),
        }
    }
}

/// Evaluation pass without dropout or corruption.
fn eval_pass(model: &mut SlapsModel, x: &Matrix) -> Result<(Value, Matrix)> {
    let inputs = PassInputs {
        targets: &[],
        classify: true,
        noise: None,
        reconstruction: ReconstructionLoss::Mse,
        lambda: 0.0,
        eval_logits: true,
    };
    let pass = model.forward::<ChaCha8Rng>(x, &inputs, None)?;
    let logits = pass
        .eval_logits
        .ok_or_else(|| Error::invalid("evaluation pass produced no logits"))?;
    Ok((
        pass.tape.value(pass.adjacency).clone(),
        pass.tape.dense(logits)?.clone(),
    ))
}

/// Joint optimization of `L = L_C + λ·L_DAE`.
pub fn train_slaps(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<TrainReport> {
    Ok(train_slaps_full(dataset, cfg)?.report)
}

/// As [`train_slaps`], also returning the restored model and its graph.
pub fn train_slaps_full(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<TrainedSlaps> {
    cfg.validate()?;
    dataset.validate()?;
    let start = Instant::now();
    let mut model = build_model(dataset, cfg)?;
    let mut opt = Optimizers::new(&model, cfg);
    let targets = dataset.targets(&dataset.train);
    let recon = reconstruction_for(dataset.feature_kind);
    let mut noise_rng = stream_rng(cfg.seed, Stream::Noise);
    let mut drop_c = stream_rng(cfg.seed, Stream::ClassifierDropout);
    let mut drop_d = stream_rng(cfg.seed, Stream::DaeDropout);
    let rates = Dropouts {
        adjacency_c: cfg.dropout_c,
        adjacency_dae: cfg.dropout_dae,
        hidden: cfg.hidden_dropout,
    };
    let mut best: Best<SlapsModel> = Best::new(cfg.selection);
    let mut records = Vec::with_capacity(cfg.max_epochs);

    for epoch in 1..=cfg.max_epochs {
        let noise = sample_noise(dataset, cfg, &mut noise_rng)?;
        let evaluate_now = is_due(epoch, cfg.eval_every);
        let inputs = PassInputs {
            targets: &targets,
            classify: true,
            noise: noise.as_ref(),
            reconstruction: recon,
            lambda: cfg.lambda,
            eval_logits: evaluate_now,
        };
        let rngs = DropoutRngs {
            classifier: &mut drop_c,
            dae: &mut drop_d,
            rates,
        };
        let mut pass = model.forward(&dataset.x, &inputs, Some(rngs))?;
        let loss_c = pass.value(pass.loss_c)?;
        let loss_dae = pass.value(pass.loss_dae)?;
        finite(epoch, "L_C", loss_c)?;
        finite(epoch, "L_DAE", loss_dae)?;
        let mut record = EpochRecord {
            epoch,
            loss_c,
            loss_dae,
            val_accuracy: None,
            val_loss: None,
        };
        if let Some(logits) = pass.eval_logits {
            let (acc, loss) = val_metrics(pass.tape.dense(logits)?, dataset)?;
            record.val_accuracy = Some(acc);
            record.val_loss = Some(loss);
            best.offer(epoch, acc, loss, || model.clone());
        }
        records.push(record);
        if best.exhausted(cfg.patience) {
            debug!("early stop at epoch {epoch}");
            break;
        }

        pass.backward()?;
        let g_c = pass.grads(&[pass.classifier_vars.w1, pass.classifier_vars.w2])?;
        let g_g = pass.grads(&pass.generator_vars)?;
        let g_d = pass.grads(&[pass.dae_vars.w1, pass.dae_vars.w2])?;
        drop(pass);
        opt.classifier.step(&mut model.classifier.params_mut(), &g_c)?;
        if !cfg.freeze_generator {
            opt.generator.step(&mut model.generator.params_mut(), &g_g)?;
        }
        opt.dae.step(&mut model.dae.params_mut(), &g_d)?;
    }

    let mut model = best
        .state
        .take()
        .ok_or_else(|| Error::invalid("no epoch was evaluated"))?;
    let (adjacency, logits) = eval_pass(&mut model, &dataset.x)?;
    let test_accuracy = evaluate(&logits, &dataset.y, &dataset.test)?;
    Ok(TrainedSlaps {
        report: TrainReport {
            epochs: records,
            best_epoch: best.epoch,
            best_val_accuracy: best.accuracy,
            best_val_loss: best.loss,
            test_accuracy,
            wall_time: start.elapsed(),
            seed: cfg.seed,
        },
        model,
        adjacency,
        probabilities: softmax_rows(&logits),
    })
}

/// A classifier trained on a fixed adjacency.
#[derive(Clone, Debug)]
pub struct TrainedGcn {
    pub report: TrainReport,
    pub params: ClassifierParams,
    pub probabilities: Matrix,
}

struct Fit {
    records: Vec<EpochRecord>,
    best_epoch: usize,
    best_accuracy: f64,
    best_loss: f64,
    params: ClassifierParams,
    logits: Matrix,
}

fn gcn_logits(adjacency: &Value, x: &Matrix, params: &ClassifierParams) -> Result<Matrix> {
    crate::models::classifier_forward(adjacency, x, params)
}

/// Trains `GNN_C` on a processed adjacency without reading test labels.
fn fit_classifier(dataset: &Dataset, adjacency: &Value, cfg: &ExperimentConfig) -> Result<Fit> {
    let f = dataset.x.cols();
    let mut params = GcnWeights::glorot(
        f,
        cfg.hidden_c,
        dataset.num_classes,
        &mut stream_rng(cfg.seed, Stream::ClassifierInit),
    );
    let mut adam = AdamState::for_params(cfg.lr_c, &params.params());
    let mut drop_c = stream_rng(cfg.seed, Stream::ClassifierDropout);
    let targets = dataset.targets(&dataset.train);
    let mut best: Best<ClassifierParams> = Best::new(cfg.selection);
    let mut records = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let mut tape = Tape::new();
        let vars = params.register(&mut tape);
        let a = tape.constant(adjacency.clone());
        let x = tape.constant(dataset.x.clone());
        let a_c = dropout(&mut tape, a, cfg.dropout_c, &mut drop_c)?;
        let out = gcn_forward(&mut tape, a_c, x, &vars, Some((cfg.hidden_dropout, &mut drop_c)))?;
        let loss = tape.softmax_cross_entropy(out, targets.clone())?;
        let loss_c = tape.scalar(loss)?;
        finite(epoch, "L_C", Some(loss_c))?;
        let mut record = EpochRecord {
            epoch,
            loss_c: Some(loss_c),
            loss_dae: None,
            val_accuracy: None,
            val_loss: None,
        };
        if is_due(epoch, cfg.eval_every) {
            let eval = gcn_forward::<ChaCha8Rng>(&mut tape, a, x, &vars, None)?;
            let (acc, vl) = val_metrics(tape.dense(eval)?, dataset)?;
            record.val_accuracy = Some(acc);
            record.val_loss = Some(vl);
            best.offer(epoch, acc, vl, || params.clone());
        }
        records.push(record);
        if best.exhausted(cfg.patience) {
            break;
        }
        tape.backward(loss)?;
        let grads = vec![tape.grad_dense(vars.w1)?, tape.grad_dense(vars.w2)?];
        adam.step(&mut params.params_mut(), &grads)?;
    }
    let params = best
        .state
        .take()
        .ok_or_else(|| Error::invalid("no epoch was evaluated"))?;
    let logits = gcn_logits(adjacency, &dataset.x, &params)?;
    Ok(Fit {
        records,
        best_epoch: best.epoch,
        best_accuracy: best.accuracy,
        best_loss: best.loss,
        params,
        logits,
    })
}

fn finish_fit(fit: Fit, dataset: &Dataset, cfg: &ExperimentConfig, start: Instant) -> Result<TrainedGcn> {
    let test_accuracy = evaluate(&fit.logits, &dataset.y, &dataset.test)?;
    Ok(TrainedGcn {
        report: TrainReport {
            epochs: fit.records,
            best_epoch: fit.best_epoch,
            best_val_accuracy: fit.best_accuracy,
            best_val_loss: fit.best_loss,
            test_accuracy,
            wall_time: start.elapsed(),
            seed: cfg.seed,
        },
        probabilities: softmax_rows(&fit.logits),
        params: fit.params,
    })
}

/// Two-layer GCN on a fixed, already processed adjacency.
pub fn train_fixed_graph(dataset: &Dataset, adjacency: &Value, cfg: &ExperimentConfig) -> Result<TrainedGcn> {
    cfg.validate()?;
    dataset.validate()?;
    let n = dataset.n();
    if adjacency.rows() != n || adjacency.cols() != n {
        return Err(Error::shape(format!(
            "adjacency is {}x{} for {n} nodes",
            adjacency.rows(),
            adjacency.cols()
        )));
    }
    let start = Instant::now();
    let fit = fit_classifier(dataset, adjacency, cfg)?;
    finish_fit(fit, dataset, cfg, start)
}

/// Processing used for fixed input graphs: ReLU with the configured
/// symmetrization and normalization.
pub fn fixed_graph_adjacency(cfg: &ExperimentConfig) -> AdjacencyConfig {
    AdjacencyConfig {
        p: PKind::Relu,
        ..cfg.adjacency()
    }
}

/// Baseline GCN on the cosine kNN graph of the features.
pub fn knn_gcn(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<TrainedGcn> {
    let graph = knn_graph(&dataset.x, cfg.k)?;
    let a = process(&Value::Sparse(graph), &fixed_graph_adjacency(cfg))?;
    train_fixed_graph(dataset, &a, cfg)
}

/// Baseline without structure: the GCN with `A = I` is a two-layer MLP.
pub fn mlp_baseline(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<TrainedGcn> {
    let n = dataset.n();
    let eye = SparseGraph::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())?;
    train_fixed_graph(dataset, &Value::Sparse(eye), cfg)
}

/// Outcome of the two-stage variant.
#[derive(Clone)]
pub struct TwoStageOutcome {
    pub report: TrainReport,
    /// Epochs at which the adjacency was frozen and a classifier trained.
    pub snapshots: Vec<usize>,
    pub adjacency: Value,
    pub probabilities: Matrix,
}

/// Stage one learns the graph from `L_DAE` alone. Every `t` epochs the
/// current adjacency is frozen and a fresh classifier is trained on it; the
/// snapshot with the best validation metric is reported. When no multiple
/// of `t` fits in `max_epochs`, the final adjacency is the only snapshot.
pub fn train_two_stage(dataset: &Dataset, cfg: &ExperimentConfig, t: usize) -> Result<TwoStageOutcome> {
    if t == 0 {
        return Err(Error::invalid("snapshot interval t must be at least 1"));
    }
    cfg.validate()?;
    dataset.validate()?;
    let start = Instant::now();
    let mut model = build_model(dataset, cfg)?;
    let mut opt = Optimizers::new(&model, cfg);
    let recon = reconstruction_for(dataset.feature_kind);
    let mut noise_rng = stream_rng(cfg.seed, Stream::Noise);
    let mut drop_c = stream_rng(cfg.seed, Stream::ClassifierDropout);
    let mut drop_d = stream_rng(cfg.seed, Stream::DaeDropout);
    let rates = Dropouts {
        adjacency_c: cfg.dropout_c,
        adjacency_dae: cfg.dropout_dae,
        hidden: cfg.hidden_dropout,
    };
    let mut stage_two = cfg.clone();
    stage_two.max_epochs = cfg.stage_two_epochs;
    let mut best: Best<(Fit, Value)> = Best::new(cfg.selection);
    let mut records = Vec::with_capacity(cfg.max_epochs);
    let mut snapshots = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let noise = sample_noise(dataset, cfg, &mut noise_rng)?
            .ok_or_else(|| Error::invalid("two-stage training needs r > 0"))?;
        let inputs = PassInputs {
            targets: &[],
            classify: false,
            noise: Some(&noise),
            reconstruction: recon,
            lambda: 1.0,
            eval_logits: false,
        };
        let rngs = DropoutRngs {
            classifier: &mut drop_c,
            dae: &mut drop_d,
            rates,
        };
        let mut pass = model.forward(&dataset.x, &inputs, Some(rngs))?;
        let loss_dae = pass.value(pass.loss_dae)?;
        finite(epoch, "L_DAE", loss_dae)?;
        pass.backward()?;
        let g_g = pass.grads(&pass.generator_vars)?;
        let g_d = pass.grads(&[pass.dae_vars.w1, pass.dae_vars.w2])?;
        drop(pass);
        if !cfg.freeze_generator {
            opt.generator.step(&mut model.generator.params_mut(), &g_g)?;
        }
        opt.dae.step(&mut model.dae.params_mut(), &g_d)?;

        let mut record = EpochRecord {
            epoch,
            loss_c: None,
            loss_dae,
            val_accuracy: None,
            val_loss: None,
        };
        let snapshot_due = epoch % t == 0 || (epoch == cfg.max_epochs && cfg.max_epochs < t);
        if snapshot_due {
            let (adjacency, _) = eval_pass(&mut model, &dataset.x)?;
            let fit = fit_classifier(dataset, &adjacency, &stage_two)?;
            record.val_accuracy = Some(fit.best_accuracy);
            record.val_loss = Some(fit.best_loss);
            snapshots.push(epoch);
            let (acc, loss) = (fit.best_accuracy, fit.best_loss);
            best.offer(epoch, acc, loss, || (fit, adjacency));
        }
        records.push(record);
    }

    let (fit, adjacency) = best
        .state
        .take()
        .ok_or_else(|| Error::invalid("no adjacency snapshot was taken"))?;
    let trained = finish_fit(fit, dataset, &stage_two, start)?;
    let mut report = trained.report;
    report.epochs = records;
    report.best_epoch = best.epoch;
    report.wall_time = start.elapsed();
    Ok(TwoStageOutcome {
        report,
        snapshots,
        adjacency,
        probabilities: trained.probabilities,
    })
}

/// Result of pseudo-label augmentation.
#[derive(Clone)]
pub struct SelfTrainingOutcome {
    pub first: TrainReport,
    /// `(node, predicted class)` added to the training labels.
    pub pseudo_labels: Vec<(usize, usize)>,
    pub report: TrainReport,
}

/// The `zeta` most confident unlabeled nodes by maximum class probability
/// (ties to the lower node index), with their predicted classes.
pub fn most_confident(probabilities: &Matrix, candidates: &[usize], zeta: usize) -> Vec<(usize, usize)> {
    let mut ranked: Vec<(usize, f64)> = candidates
        .iter()
        .map(|&i| {
            let row = probabilities.row(i);
            (i, row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked
        .into_iter()
        .take(zeta)
        .map(|(i, _)| (i, probabilities.argmax_row(i)))
        .collect()
}

/// Trains once, adds the top-ζ pseudo-labels among unlabeled nodes, and
/// retrains from scratch with the same seed.
pub fn self_training(dataset: &Dataset, cfg: &ExperimentConfig, zeta: usize) -> Result<SelfTrainingOutcome> {
    let first = train_slaps_full(dataset, cfg)?;
    if zeta == 0 {
        return Ok(SelfTrainingOutcome {
            first: first.report.clone(),
            pseudo_labels: Vec::new(),
            report: first.report,
        });
    }
    let pool = dataset.unlabeled();
    if pool.len() < zeta {
        warn!(
            "only {} unlabeled nodes available for {zeta} pseudo-labels",
            pool.len()
        );
    }
    let pseudo = most_confident(&first.probabilities, &pool, zeta);
    let mut augmented = dataset.clone();
    for &(i, c) in &pseudo {
        augmented.y[i] = c;
        augmented.train.push(i);
    }
    let second = train_slaps(&augmented, cfg)?;
    Ok(SelfTrainingOutcome {
        first: first.report,
        pseudo_labels: pseudo,
        report: second,
    })
}

/// One AdaEdge editing step.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeEdit {
    pub graph: SparseGraph,
    pub added: usize,
    pub removed: usize,
}

/// Among nodes whose top class probability exceeds `threshold`, links
/// every same-prediction pair and drops every different-prediction edge.
/// The input is read on its support (weight > 0); kept edges keep their
/// weight and new edges get weight 1.
pub fn ada_edge_edit(graph: &SparseGraph, probabilities: &Matrix, threshold: f64) -> Result<EdgeEdit> {
    let n = graph.n();
    if probabilities.rows() != n {
        return Err(Error::shape("one probability row per node is required"));
    }
    let confident: Vec<(usize, usize)> = (0..n)
        .filter_map(|i| {
            let row = probabilities.row(i);
            let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (top > threshold).then(|| (i, probabilities.argmax_row(i)))
        })
        .collect();
    let mut pred = vec![None; n];
    for &(i, c) in &confident {
        pred[i] = Some(c);
    }
    let support: BTreeSet<(usize, usize)> = graph
        .iter()
        .filter(|&(r, c, w)| r != c && w > 0.0)
        .map(|(r, c, _)| (r.min(c), r.max(c)))
        .collect();
    let weight = |u: usize, v: usize| graph.get(u, v).max(graph.get(v, u));
    let mut edges = Vec::new();
    let mut removed = 0;
    for &(u, v) in &support {
        match (pred[u], pred[v]) {
            (Some(a), Some(b)) if a != b => removed += 1,
            _ => edges.push((u, v, weight(u, v))),
        }
    }
    let mut added = 0;
    for (x, &(u, cu)) in confident.iter().enumerate() {
        for &(v, cv) in &confident[x + 1..] {
            if cu == cv && !support.contains(&(u, v)) {
                edges.push((u, v, 1.0));
                added += 1;
            }
        }
    }
    Ok(EdgeEdit {
        graph: SparseGraph::from_undirected_edges(n, &edges)?,
        added,
        removed,
    })
}

#[derive(Clone, Debug)]
pub struct AdaEdgeOutcome {
    pub report: TrainReport,
    /// Editing rounds whose result was kept.
    pub rounds: usize,
    pub graph: SparseGraph,
}

/// Alternates GCN training on a fixed graph with [`ada_edge_edit`] until
/// validation stops improving or `cfg.ada_rounds` edits were made.
pub fn ada_edge(
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    initial: &SparseGraph,
    threshold: f64,
) -> Result<AdaEdgeOutcome> {
    cfg.validate()?;
    dataset.validate()?;
    let start = Instant::now();
    let processing = fixed_graph_adjacency(cfg);
    let mut graph = initial.clone();
    let mut fit = fit_classifier(dataset, &process(&Value::Sparse(graph.clone()), &processing)?, cfg)?;
    let mut rounds = 0;
    for round in 1..=cfg.ada_rounds {
        let probs = softmax_rows(&fit.logits);
        let edit = ada_edge_edit(&graph, &probs, threshold)?;
        if edit.added == 0 && edit.removed == 0 {
            break;
        }
        let candidate = fit_classifier(
            dataset,
            &process(&Value::Sparse(edit.graph.clone()), &processing)?,
            cfg,
        )?;
        let better = match cfg.selection {
            Selection::Accuracy => candidate.best_accuracy > fit.best_accuracy,
            Selection::Loss => candidate.best_loss < fit.best_loss,
        };
        debug!(
            "ada-edge round {round}: +{} -{} edges, improved = {better}",
            edit.added, edit.removed
        );
        if !better {
            break;
        }
        fit = candidate;
        graph = edit.graph;
        rounds = round;
    }
    let trained = finish_fit(fit, dataset, cfg, start)?;
    Ok(AdaEdgeOutcome {
        report: trained.report,
        rounds,
        graph,
    })
}

/// Test accuracies over repeated seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub reports: Vec<TrainReport>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs `train` for seeds `cfg.seed .. cfg.seed + cfg.runs`, sequentially.
pub fn repeat_runs(
    cfg: &ExperimentConfig,
    mut train: impl FnMut(&ExperimentConfig) -> Result<TrainReport>,
) -> Result<RunSummary> {
    let mut reports = Vec::with_capacity(cfg.runs);
    for i in 0..cfg.runs {
        let mut c = cfg.clone();
        c.seed = cfg.seed + i as u64;
        reports.push(train(&c)?);
    }
    let acc: Vec<f64> = reports.iter().map(|r| r.test_accuracy).collect();
    let (mean, std) = mean_std(&acc);
    Ok(RunSummary { reports, mean, std })
}

#[derive(Clone, Debug)]
pub struct GridEntry {
    pub config: ExperimentConfig,
    /// Mean best-validation metric over runs (accuracy or loss).
    pub val_score: f64,
    pub summary: RunSummary,
}

/// Exhaustive search over `grid`; returns all entries and the index of the
/// best one by the validation metric of `base.selection`.
pub fn grid_search(
    dataset: &Dataset,
    base: &ExperimentConfig,
    grid: &Grid,
) -> Result<(usize, Vec<GridEntry>)> {
    grid.validate()?;
    let mut entries = Vec::with_capacity(grid.size());
    for config in grid.configs(base) {
        let summary = repeat_runs(&config, |c| train_slaps(dataset, c))?;
        let scores: Vec<f64> = summary
            .reports
            .iter()
            .map(|r| match base.selection {
                Selection::Accuracy => r.best_val_accuracy,
                Selection::Loss => r.best_val_loss,
            })
            .collect();
        let val_score = mean_std(&scores).0;
        entries.push(GridEntry {
            config,
            val_score,
            summary,
        });
    }
    let best = (0..entries.len())
        .reduce(|a, b| {
            let (sa, sb) = (entries[a].val_score, entries[b].val_score);
            let b_better = match base.selection {
                Selection::Accuracy => sb > sa,
                Selection::Loss => sb < sa,
            };
            if b_better {
                b
            } else {
                a
            }
        })
        .ok_or_else(|| Error::invalid("empty grid"))?;
    Ok((best, entries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluate_examples() {
        let logits = Matrix::from_rows(&[[2.0, 1.0], [0.0, 3.0], [1.0, 1.0]]).unwrap();
        assert_eq!(evaluate(&logits, &[0, 1, 0], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(evaluate(&logits, &[0, 1, 1], &[2]).unwrap(), 0.0);
        assert!(evaluate(&logits, &[0, 1, 0], &[]).is_err());
    }

    #[test]
    fn confidence_ranking() {
        let p = Matrix::from_rows(&[[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.1, 0.9]]).unwrap();
        assert_eq!(most_confident(&p, &[1, 2, 3], 2), vec![(3, 1), (1, 1)]);
        assert_eq!(most_confident(&p, &[2], 5), vec![(2, 0)]);
    }

    #[test]
    fn ada_edit_rules() {
        let g = SparseGraph::from_undirected_edges(4, &[(0, 1, 0.5), (1, 2, 0.5)]).unwrap();
        let p = Matrix::from_rows(&[[0.95, 0.05], [0.05, 0.95], [0.05, 0.95], [0.6, 0.4]]).unwrap();
        let e = ada_edge_edit(&g, &p, 0.9).unwrap();
        assert_eq!((e.added, e.removed), (0, 1));
        assert_eq!(
            e.graph.undirected_edges().into_iter().collect::<Vec<_>>(),
            vec![(1, 2)]
        );
        let none = ada_edge_edit(&g, &p, 1.0).unwrap();
        assert_eq!(none.graph, g);
        let p2 = Matrix::from_rows(&[[0.95, 0.05], [0.95, 0.05], [0.05, 0.95], [0.99, 0.01]]).unwrap();
        let e2 = ada_edge_edit(&g, &p2, 0.9).unwrap();
        assert_eq!(e2.added, 2);
        assert!(e2.graph.iter().all(|(r, c, _)| r != c));
    }

    #[test]
    fn summary_statistics() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }
}

//! `slaps` command-line interface.

use std::ffi::OsString;
use std::fs::OpenOptions;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::{
    generate_planted, load_dataset, read_config, read_edges, write_edges, DatasetManifest,
    PlantedConfig, ReportWriter,
};
use crate::analysis::{
    count_starved_edges, default_odds_bins, homophily_odds, max_pair_weight,
    perturb_graph, starved_prob_er, starved_prob_monte_carlo, starved_prob_sf, EdgeWeights,
};
use crate::error::{Error, Result};
use crate::generators::{knn_graph, GeneratorKind};
use crate::numerics::rng::{stream_rng, Stream};
use crate::numerics::Value;
use crate::trainer::{
    ada_edge, gradcheck_slaps, grid_search, knn_gcn, mlp_baseline, repeat_runs, self_training,
    train_slaps, train_slaps_full, train_two_stage, Dataset, ExperimentConfig, FeatureKind, Grid,
    TrainReport,
};

/// Gradient checks pass below this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-5;

#[derive(Parser, Debug)]
#[command(name = "slaps", version, about = "Latent graph learning with self-supervision")]
struct Cli {
    /// Append JSON-lines report records to this file.
    #[arg(long, global = true, value_name = "PATH")]
    report: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Dataset manifest, or `planted[:key=value,...]` for the synthetic set.
    #[arg(long)]
    dataset: String,

    /// Configuration file of `key=value` lines.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long)]
    runs: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelChoice {
    Slaps,
    KnnGcn,
    Mlp,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train SLAPS (or a baseline) over several seeds.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "slaps")]
        model: ModelChoice,
    },
    /// Learn the graph from the denoising loss alone, then classify.
    TwoStage {
        #[command(flatten)]
        run: RunArgs,
        /// Snapshot interval in epochs.
        #[arg(long)]
        t: Option<usize>,
    },
    /// Retrain with the most confident predictions as extra labels.
    SelfTrain {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        zeta: Option<usize>,
    },
    /// Iteratively edit a graph from confident predictions.
    AdaEdge {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        threshold: Option<f64>,
        /// Starting graph; defaults to the dataset graph or the kNN graph.
        #[arg(long)]
        graph: Option<PathBuf>,
    },
    /// Starved-edge and homophily analyses.
    #[command(subcommand)]
    Analyze(Analyze),
    /// Replace a percentage of a graph's edges with random ones.
    Perturb {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of the joint objective.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        nodes: usize,
        /// Generator to check; `all` checks every registered kind.
        #[arg(long, default_value = "all")]
        generator: String,
    },
    /// Exhaustive hyperparameter search with validation selection.
    Grid {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        lr_c: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        lr_dae: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        dropout_c: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        dropout_dae: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        k: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        r: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        eta: Vec<f64>,
    },
}

#[derive(Subcommand, Debug)]
enum Analyze {
    /// Probability or fraction of starved edges.
    Starved {
        /// Closed form for Erdős–Rényi graphs.
        #[arg(long)]
        er: bool,
        /// Closed form for scale-free graphs.
        #[arg(long)]
        sf: bool,
        /// Monte-Carlo estimate on sampled Erdős–Rényi graphs.
        #[arg(long)]
        mc: bool,
        #[arg(short = 'n')]
        n: Option<usize>,
        #[arg(short = 'm')]
        m: Option<usize>,
        #[arg(short = 'q')]
        q: Option<usize>,
        #[arg(long, allow_negative_numbers = true)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 20000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Count starved edges of this graph (with --labeled or --dataset).
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        labeled: Vec<usize>,
        /// Use the dataset graph and its training nodes.
        #[arg(long)]
        dataset: Option<String>,
    },
    /// Edge homophily and same-label odds per weight bin.
    Homophily {
        #[command(flatten)]
        run: RunArgs,
        /// Analyze this graph instead of a learned one.
        #[arg(long)]
        edges: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        bins: Vec<f64>,
    },
}

struct Sink {
    writer: Option<ReportWriter<Box<dyn Write>>>,
}

impl Sink {
    fn open(path: Option<&Path>) -> Result<Self> {
        let writer = match path {
            Some(p) => {
                let f = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(p)
                    .map_err(|e| Error::io(p, e))?;
                Some(ReportWriter::new(Box::new(f) as Box<dyn Write>))
            }
            None => None,
        };
        Ok(Sink { writer })
    }

    fn record(
        &mut self,
        experiment: &str,
        seed: u64,
        metric: &str,
        value: f64,
        cfg: Option<&ExperimentConfig>,
    ) -> Result<()> {
        if let Some(w) = &mut self.writer {
            w.write(experiment, seed, metric, value, cfg)?;
        }
        Ok(())
    }

    fn report(&mut self, experiment: &str, r: &TrainReport, cfg: &ExperimentConfig) -> Result<()> {
        self.record(experiment, r.seed, "test_accuracy", r.test_accuracy, Some(cfg))?;
        self.record(experiment, r.seed, "best_epoch", r.best_epoch as f64, Some(cfg))?;
        self.record(experiment, r.seed, "best_val_accuracy", r.best_val_accuracy, Some(cfg))?;
        if r.best_val_loss.is_finite() {
            self.record(experiment, r.seed, "best_val_loss", r.best_val_loss, Some(cfg))?;
        }
        Ok(())
    }
}

fn load_dataset_arg(spec: &str) -> Result<Dataset> {
    if spec.starts_with("planted") {
        generate_planted(&PlantedConfig::parse_spec(spec)?)
    } else {
        load_dataset(&DatasetManifest::read(Path::new(spec))?)
    }
}

fn build_config(run: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &run.config {
        Some(p) => read_config(&super::resolve_data_path(p))?,
        None => ExperimentConfig::default(),
    };
    for item in &run.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("--set expects KEY=VALUE, got `{item}`")))?;
        cfg.set(k, v)?;
    }
    if let Some(r) = run.runs {
        cfg.runs = r;
    }
    if let Some(s) = run.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn summarize(
    sink: &mut Sink,
    out: &mut impl Write,
    experiment: &str,
    cfg: &ExperimentConfig,
    reports: &[TrainReport],
) -> Result<()> {
    for r in reports {
        writeln!(out, "seed {}: test accuracy {:.4} (best epoch {})", r.seed, r.test_accuracy, r.best_epoch)
            .map_err(|e| Error::io("<stdout>", e))?;
        let mut c = cfg.clone();
        c.seed = r.seed;
        sink.report(experiment, r, &c)?;
    }
    let acc: Vec<f64> = reports.iter().map(|r| r.test_accuracy).collect();
    let (mean, std) = crate::trainer::mean_std(&acc);
    writeln!(out, "{experiment}: {:.2} ± {:.2} over {} runs", 100.0 * mean, 100.0 * std, reports.len())
        .map_err(|e| Error::io("<stdout>", e))?;
    sink.record(experiment, cfg.seed, "test_accuracy_mean", mean, Some(cfg))?;
    sink.record(experiment, cfg.seed, "test_accuracy_std", std, Some(cfg))?;
    Ok(())
}

fn seeds(cfg: &ExperimentConfig) -> impl Iterator<Item = ExperimentConfig> + '_ {
    (0..cfg.runs).map(move |i| ExperimentConfig {
        seed: cfg.seed + i as u64,
        ..cfg.clone()
    })
}

fn homophily_report<A: EdgeWeights + ?Sized>(
    sink: &mut Sink,
    out: &mut impl Write,
    a: &A,
    dataset: &Dataset,
    bins: &[f64],
    seed: u64,
    cfg: Option<&ExperimentConfig>,
) -> Result<()> {
    let bins = if bins.is_empty() {
        default_odds_bins(max_pair_weight(a, &dataset.test))
    } else {
        bins.to_vec()
    };
    let profile = homophily_odds(a, &dataset.y, &dataset.test, &bins)?;
    let io = |e| Error::io("<stdout>", e);
    writeln!(out, "edge homophily ratio {:.4}", profile.edge_homophily).map_err(io)?;
    if profile.edge_homophily.is_finite() {
        sink.record("homophily", seed, "edge_homophily_ratio", profile.edge_homophily, cfg)?;
    }
    for (b, odds) in profile.odds.iter().enumerate() {
        let label = format!("[{}, {}{}", bins[b], bins[b + 1], if b + 2 == bins.len() { "]" } else { ")" });
        match odds {
            Some(o) => {
                writeln!(out, "bin {label}: odds {o:.4} ({:?} pairs)", profile.counts[b]).map_err(io)?;
                sink.record("homophily", seed, &format!("odds_bin_{b}"), *o, cfg)?;
            }
            None => writeln!(out, "bin {label}: empty").map_err(io)?,
        }
    }
    Ok(())
}

fn execute(cli: Cli, out: &mut impl Write) -> Result<i32> {
    let mut sink = Sink::open(cli.report.as_deref())?;
    let io = |e| Error::io("<stdout>", e);
    match cli.command {
        Command::Train { run, model } => {
            let cfg = build_config(&run)?;
            let dataset = load_dataset_arg(&run.dataset)?;
            let (name, summary) = match model {
                ModelChoice::Slaps => ("train", repeat_runs(&cfg, |c| train_slaps(&dataset, c))?),
                ModelChoice::KnnGcn => ("knn-gcn", repeat_runs(&cfg, |c| Ok(knn_gcn(&dataset, c)?.report))?),
                ModelChoice::Mlp => ("mlp", repeat_runs(&cfg, |c| Ok(mlp_baseline(&dataset, c)?.report))?),
            };
            summarize(&mut sink, out, name, &cfg, &summary.reports)?;
        }
        Command::TwoStage { run, t } => {
            let mut cfg = build_config(&run)?;
            if let Some(t) = t {
                cfg.two_stage_t = t;
            }
            let dataset = load_dataset_arg(&run.dataset)?;
            let t = cfg.two_stage_t;
            let summary = repeat_runs(&cfg, |c| Ok(train_two_stage(&dataset, c, t)?.report))?;
            summarize(&mut sink, out, "two-stage", &cfg, &summary.reports)?;
        }
        Command::SelfTrain { run, zeta } => {
            let mut cfg = build_config(&run)?;
            if let Some(z) = zeta {
                cfg.zeta = z;
            }
            let dataset = load_dataset_arg(&run.dataset)?;
            let zeta = cfg.zeta;
            let summary = repeat_runs(&cfg, |c| Ok(self_training(&dataset, c, zeta)?.report))?;
            summarize(&mut sink, out, "self-train", &cfg, &summary.reports)?;
        }
        Command::AdaEdge { run, threshold, graph } => {
            let mut cfg = build_config(&run)?;
            if let Some(t) = threshold {
                cfg.ada_threshold = t;
            }
            let dataset = load_dataset_arg(&run.dataset)?;
            let initial = match (&graph, &dataset.graph) {
                (Some(p), _) => read_edges(p, Some(dataset.n()))?,
                (None, Some(g)) => g.clone(),
                (None, None) => knn_graph(&dataset.x, cfg.k)?,
            };
            let mut reports = Vec::new();
            for c in seeds(&cfg) {
                let outcome = ada_edge(&dataset, &c, &initial, c.ada_threshold)?;
                writeln!(out, "seed {}: {} edit rounds kept", c.seed, outcome.rounds).map_err(io)?;
                sink.record("ada-edge", c.seed, "rounds", outcome.rounds as f64, Some(&c))?;
                reports.push(outcome.report);
            }
            summarize(&mut sink, out, "ada-edge", &cfg, &reports)?;
        }
        Command::Analyze(Analyze::Starved {
            er,
            sf,
            mc,
            n,
            m,
            q,
            gamma,
            trials,
            seed,
            edges,
            labeled,
            dataset,
        }) => {
            let need = |v: Option<usize>, flag: &str| {
                v.ok_or_else(|| Error::invalid(format!("missing -{flag}")))
            };
            let mut any = false;
            if er {
                let p = starved_prob_er(need(n, "n")?, need(m, "m")?, need(q, "q")?)?;
                writeln!(out, "{p:.3}").map_err(io)?;
                sink.record("starved-er", seed, "probability", p, None)?;
                any = true;
            }
            if sf {
                let g = gamma.ok_or_else(|| Error::invalid("missing --gamma"))?;
                let p = starved_prob_sf(need(n, "n")?, need(q, "q")?, g)?;
                writeln!(out, "{p:.3}").map_err(io)?;
                sink.record("starved-sf", seed, "probability", p, None)?;
                any = true;
            }
            if mc {
                let mut rng = stream_rng(seed, Stream::Analysis);
                let e = starved_prob_monte_carlo(need(n, "n")?, need(m, "m")?, need(q, "q")?, trials, &mut rng)?;
                writeln!(out, "{:.4} ± {:.4}", e.estimate, e.std_error).map_err(io)?;
                sink.record("starved-mc", seed, "estimate", e.estimate, None)?;
                sink.record("starved-mc", seed, "std_error", e.std_error, None)?;
                any = true;
            }
            if edges.is_some() || dataset.is_some() {
                let (graph, labels) = match (&edges, &dataset) {
                    (Some(p), _) => (read_edges(p, n)?, labeled.clone()),
                    (None, Some(spec)) => {
                        let d = load_dataset_arg(spec)?;
                        let g = d
                            .graph
                            .clone()
                            .ok_or_else(|| Error::Dataset("dataset has no graph".into()))?;
                        (g, if labeled.is_empty() { d.train.clone() } else { labeled.clone() })
                    }
                    (None, None) => unreachable!(),
                };
                let frac = count_starved_edges(&graph, &labels)?;
                writeln!(out, "{frac:.3}").map_err(io)?;
                sink.record("starved-count", seed, "fraction", frac, None)?;
                any = true;
            }
            if !any {
                return Err(Error::invalid("choose --er, --sf, --mc, --edges or --dataset"));
            }
        }
        Command::Analyze(Analyze::Homophily { run, edges, bins }) => {
            let cfg = build_config(&run)?;
            let dataset = load_dataset_arg(&run.dataset)?;
            match edges {
                Some(p) => {
                    let g = read_edges(&p, Some(dataset.n()))?;
                    homophily_report(&mut sink, out, &g, &dataset, &bins, cfg.seed, Some(&cfg))?;
                }
                None => {
                    let trained = train_slaps_full(&dataset, &cfg)?;
                    writeln!(out, "test accuracy {:.4}", trained.report.test_accuracy).map_err(io)?;
                    match &trained.adjacency {
                        Value::Dense(a) => homophily_report(&mut sink, out, a, &dataset, &bins, cfg.seed, Some(&cfg))?,
                        Value::Sparse(a) => homophily_report(&mut sink, out, a, &dataset, &bins, cfg.seed, Some(&cfg))?,
                    }
                }
            }
        }
        Command::Perturb {
            edges,
            nodes,
            rho,
            seed,
            out: path,
        } => {
            let g = read_edges(&edges, nodes)?;
            let mut rng = stream_rng(seed, Stream::Perturbation);
            let noisy = perturb_graph(&g, rho, &mut rng)?;
            write_edges(&path, &noisy)?;
            let kept = g.undirected_edges().intersection(&noisy.undirected_edges()).count();
            writeln!(out, "{} edges, {} replaced", noisy.undirected_edges().len(), g.undirected_edges().len() - kept)
                .map_err(io)?;
            sink.record("perturb", seed, "replaced", (g.undirected_edges().len() - kept) as f64, None)?;
        }
        Command::Gradcheck { seed, nodes, generator } => {
            let kinds = if generator == "all" {
                vec![GeneratorKind::Fp, GeneratorKind::Mlp, GeneratorKind::MlpDiag]
            } else {
                vec![generator.parse()?]
            };
            let mut worst = 0.0f64;
            for kind in kinds {
                for fk in [FeatureKind::Continuous, FeatureKind::Binary] {
                    let r = gradcheck_slaps(seed, kind, nodes, fk)?;
                    writeln!(out, "{kind} ({}): max relative error {:.3e} over {} coordinates", fk.name(), r.max_rel_error, r.checked)
                        .map_err(io)?;
                    worst = worst.max(r.max_rel_error);
                }
            }
            writeln!(out, "{worst:.3e}").map_err(io)?;
            sink.record("gradcheck", seed, "max_rel_error", worst, None)?;
            return Ok(if worst < GRADCHECK_TOLERANCE { 0 } else { 1 });
        }
        Command::Grid {
            run,
            lambda,
            lr_c,
            lr_dae,
            dropout_c,
            dropout_dae,
            k,
            r,
            eta,
        } => {
            let cfg = build_config(&run)?;
            let dataset = load_dataset_arg(&run.dataset)?;
            let standard = Grid::standard();
            let pick = |v: Vec<f64>, d: Vec<f64>| if v.is_empty() { d } else { v };
            let grid = Grid {
                lambda: pick(lambda, standard.lambda),
                lr_c: pick(lr_c, standard.lr_c),
                lr_dae: pick(lr_dae, standard.lr_dae),
                dropout_c: pick(dropout_c, standard.dropout_c),
                dropout_dae: pick(dropout_dae, standard.dropout_dae),
                k: if k.is_empty() { standard.k } else { k },
                r: pick(r, standard.r),
                eta: pick(eta, standard.eta),
            };
            let (best, entries) = grid_search(&dataset, &cfg, &grid)?;
            for (i, e) in entries.iter().enumerate() {
                writeln!(
                    out,
                    "{}lambda={} lr_c={} lr_dae={} dropout_c={} dropout_dae={} k={} r={} eta={}: val {:.4}, test {:.4}",
                    if i == best { "* " } else { "  " },
                    e.config.lambda,
                    e.config.lr_c,
                    e.config.lr_dae,
                    e.config.dropout_c,
                    e.config.dropout_dae,
                    e.config.k,
                    e.config.r,
                    e.config.eta,
                    e.val_score,
                    e.summary.mean
                )
                .map_err(io)?;
                sink.record("grid", e.config.seed, "val_score", e.val_score, Some(&e.config))?;
                sink.record("grid", e.config.seed, "test_accuracy_mean", e.summary.mean, Some(&e.config))?;
            }
        }
    }
    Ok(0)
}

/// Parses `argv` (program name first) and runs the subcommand. Returns the
/// process exit code: 0 on success, 1 on failure, 2 on usage errors.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match execute(cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

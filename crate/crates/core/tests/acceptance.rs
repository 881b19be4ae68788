//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{dense_of, max_diff, mlp_oracle, process_oracle, random_matrix, rng, rows};
use rand::Rng;
use slaps::adjacency::{process, AdjacencyConfig, PKind};
use slaps::analysis::{
    budget_threshold, default_odds_bins, homophily_odds, max_pair_weight, perturb_graph, recovery_metrics,
    starved_prob_er, starved_prob_monte_carlo, starved_prob_sf, EdgeWeights, HomophilyProfile, RecoveryMetrics,
};
use slaps::data_io::{generate_planted, generate_sbm, load_dataset, read_config, DatasetManifest, PlantedConfig};
use slaps::generators::{generate, knn_graph, FpGenerator, FpInit, GeneratorKind, GeneratorOptions, GraphGenerator, MlpGenerator};
use slaps::numerics::rng::{stream_rng, Stream};
use slaps::numerics::{Activation, Value};
use slaps::trainer::{
    fixed_graph_adjacency, gradcheck_slaps, knn_gcn, mean_std, repeat_runs, train_fixed_graph, train_slaps,
    train_slaps_full, Dataset, ExperimentConfig, FeatureKind,
};

const ER_TOLERANCE: f64 = 1e-3;
const SF_TOLERANCE: f64 = 1e-2;
const MC_TRIPLES: usize = 20;
const MC_TRIALS: usize = 20_000;
const MC_SIGMAS: f64 = 3.0;
const GRADCHECK_NODES: usize = 12;
const GRADCHECK_TOLERANCE: f64 = 1e-5;
const ORACLE_INSTANCES: usize = 50;
const ORACLE_TOLERANCE: f64 = 1e-12;
const FROZEN_EPOCHS: usize = 50;
const FROZEN_TOLERANCE: f64 = 1e-10;
const WINE_MLP_MIN: f64 = 94.0;
const CANCER_MLP_D_MIN: f64 = 94.5;
const DIGITS_FP_MIN: f64 = 91.5;
const WINE_KNN_GCN: (f64, f64) = (93.5, 2.5);
const PLANTED_SEEDS: u64 = 5;
const PLANTED_LAMBDAS: [f64; 3] = [0.0, 1.0, 10.0];
const PLANTED_MARGIN: f64 = 0.02;
const PLANTED_RHO: f64 = 50.0;
const ODDS_RATIO_MIN: f64 = 1.5;

type Outcome = Result<(bool, String), String>;

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

struct Runner {
    failures: usize,
}

impl Runner {
    fn check(&mut self, id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        self.check_after(Duration::ZERO, id, name, budget, f)
    }

    /// Like `check`, charging `prior` time spent on shared work.
    fn check_after(&mut self, prior: Duration, id: usize, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let outcome = f();
        let elapsed = prior + start.elapsed();
        let (pass, detail) = match outcome {
            Ok((ok, detail)) => (ok && elapsed <= budget, detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            self.failures += 1;
        }
        println!(
            "{} [{id:>2}] {name}: {detail} ({:.1}s, budget {}s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
}

fn er_starvation() -> Outcome {
    let cases = [(2708, 5429, 140, 0.594), (3327, 4732, 120, 0.757), (19717, 44338, 60, 0.967)];
    let mut ok = true;
    let mut got = Vec::new();
    for (n, m, q, expect) in cases {
        let p = starved_prob_er(n, m, q).map_err(err)?;
        ok &= (p - expect).abs() <= ER_TOLERANCE;
        got.push(format!("{p:.4}"));
    }
    Ok((ok, format!("{} vs 0.594/0.757/0.967 ±{ER_TOLERANCE}", got.join("/"))))
}

fn sf_starvation() -> Outcome {
    let mut ok = true;
    let mut got = Vec::new();
    for (gamma, expect) in [(-3.0, 0.87), (-2.0, 0.76)] {
        let p = starved_prob_sf(2708, 140, gamma).map_err(err)?;
        ok &= (p - expect).abs() <= SF_TOLERANCE;
        got.push(format!("{p:.4}"));
    }
    Ok((ok, format!("{} vs 0.87/0.76 ±{SF_TOLERANCE}", got.join("/"))))
}

fn monte_carlo() -> Outcome {
    let mut r = rng(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..MC_TRIPLES {
        let n = r.random_range(10..=200usize);
        let m = r.random_range(1..=(n * (n - 1) / 2).min(4 * n));
        let q = r.random_range(0..=n / 4);
        let exact = starved_prob_er(n, m, q).map_err(err)?;
        let est = starved_prob_monte_carlo(n, m, q, MC_TRIALS, &mut r).map_err(err)?;
        let se = (exact * (1.0 - exact) / MC_TRIALS as f64).sqrt();
        let z = if se > 0.0 { (est.estimate - exact).abs() / se } else if est.estimate == exact { 0.0 } else { f64::INFINITY };
        worst = worst.max(z);
    }
    Ok((worst <= MC_SIGMAS, format!("worst deviation {worst:.2} SE over {MC_TRIPLES} triples, limit {MC_SIGMAS}")))
}

fn gradcheck() -> Outcome {
    let mut worst: f64 = 0.0;
    for kind in [GeneratorKind::Fp, GeneratorKind::Mlp, GeneratorKind::MlpDiag] {
        for fk in [FeatureKind::Continuous, FeatureKind::Binary] {
            worst = worst.max(gradcheck_slaps(0, kind, GRADCHECK_NODES, fk).map_err(err)?.max_rel_error);
        }
    }
    Ok((worst < GRADCHECK_TOLERANCE, format!("max relative error {worst:.2e}, limit {GRADCHECK_TOLERANCE:e}")))
}

fn dense_oracle() -> Outcome {
    let mut r = rng(77);
    let mut worst: f64 = 0.0;
    for i in 0..ORACLE_INSTANCES {
        let (expect, got) = match i % 3 {
            0 | 1 => {
                let kind = if i % 3 == 0 { GeneratorKind::Mlp } else { GeneratorKind::MlpDiag };
                let x = random_matrix(&mut r, 10, 4, -1.0, 1.0);
                let mut options = GeneratorOptions::with_k(3);
                options.mlp_activation = Activation::Relu;
                let mut g = MlpGenerator::new(&x, &options, kind).map_err(err)?;
                for p in g.params_mut() {
                    for v in p.data_mut() {
                        *v += r.random_range(-0.3..0.3);
                    }
                }
                let w: Vec<_> = g.params().into_iter().map(rows).collect();
                let (raw, present) = mlp_oracle(&rows(&x), &w[0], &w[1], 3, kind == GeneratorKind::MlpDiag);
                let got = process(&generate(&mut g, &x).map_err(err)?, &AdjacencyConfig::with_p(PKind::Relu)).map_err(err)?;
                (process_oracle(&raw, &present, PKind::Relu), got)
            }
            _ => {
                let x = random_matrix(&mut r, 10, 3, 0.0, 1.0);
                let mut g = FpGenerator::from_graph(&knn_graph(&x, 3).map_err(err)?, FpInit::PreElu { offset: 2.0 });
                for p in g.params_mut() {
                    for v in p.data_mut() {
                        *v += r.random_range(-1.0..1.0);
                    }
                }
                let raw = rows(g.params()[0]);
                let got = process(&generate(&mut g, &x).map_err(err)?, &AdjacencyConfig::with_p(PKind::EluPlusOne))
                    .map_err(err)?;
                (process_oracle(&raw, &vec![vec![true; 10]; 10], PKind::EluPlusOne), got)
            }
        };
        worst = worst.max(max_diff(&expect, &dense_of(&got)));
    }
    Ok((worst < ORACLE_TOLERANCE, format!("max |Δ| {worst:.2e} over {ORACLE_INSTANCES} instances, limit {ORACLE_TOLERANCE:e}")))
}

fn frozen_generator() -> Outcome {
    let d = generate_planted(&PlantedConfig { n: 60, classes: 3, f: 12, ..PlantedConfig::default() }).map_err(err)?;
    let mut cfg = ExperimentConfig {
        generator: GeneratorKind::Fp,
        p_kind: Some(PKind::Relu),
        freeze_generator: true,
        lambda: 0.0,
        dropout_c: 0.0,
        k: 5,
        max_epochs: FROZEN_EPOCHS,
        ..ExperimentConfig::default()
    };
    cfg.fp_init = FpInit::Knn;
    let joint = train_slaps(&d, &cfg).map_err(err)?;
    let a = process(&Value::Sparse(knn_graph(&d.x, cfg.k).map_err(err)?), &fixed_graph_adjacency(&cfg)).map_err(err)?;
    let alone = train_fixed_graph(&d, &a, &cfg).map_err(err)?;
    if joint.epochs.len() != FROZEN_EPOCHS || alone.report.epochs.len() != FROZEN_EPOCHS {
        return Err(format!("expected {FROZEN_EPOCHS} epochs, got {} and {}", joint.epochs.len(), alone.report.epochs.len()));
    }
    let mut worst: f64 = 0.0;
    for (x, y) in joint.epochs.iter().zip(&alone.report.epochs) {
        let (a, b) = (x.loss_c.ok_or("missing loss")?, y.loss_c.ok_or("missing loss")?);
        worst = worst.max((a - b).abs());
    }
    Ok((worst < FROZEN_TOLERANCE, format!("max per-epoch |Δ loss| {worst:.2e} over {FROZEN_EPOCHS} epochs, limit {FROZEN_TOLERANCE:e}")))
}

fn real_dataset(name: &str) -> Result<Dataset, String> {
    let manifest = DatasetManifest::read(&root().join(format!("data/{name}.manifest"))).map_err(err)?;
    load_dataset(&manifest).map_err(err)
}

fn config(name: &str) -> Result<ExperimentConfig, String> {
    read_config(&root().join(format!("configs/{name}.cfg"))).map_err(err)
}

fn benchmarks() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (set, cfg_name, min) in [
        ("wine", "wine-mlp", WINE_MLP_MIN),
        ("cancer", "cancer-mlp-d", CANCER_MLP_D_MIN),
        ("digits", "digits-fp", DIGITS_FP_MIN),
    ] {
        let d = real_dataset(set)?;
        let cfg = config(cfg_name)?;
        let s = repeat_runs(&cfg, |c| train_slaps(&d, c)).map_err(err)?;
        let mean = 100.0 * s.mean;
        ok &= mean >= min;
        parts.push(format!("{cfg_name} {mean:.2} (≥ {min})"));
    }
    let d = real_dataset("wine")?;
    let cfg = config("wine-knn-gcn")?;
    let s = repeat_runs(&cfg, |c| knn_gcn(&d, c).map(|t| t.report)).map_err(err)?;
    let mean = 100.0 * s.mean;
    let (centre, width) = WINE_KNN_GCN;
    ok &= (mean - centre).abs() <= width;
    parts.push(format!("wine-knn-gcn {mean:.2} ({centre} ± {width})"));
    Ok((ok, parts.join(", ")))
}

struct PlantedRun {
    lambda: f64,
    accuracy: f64,
    recovery: RecoveryMetrics,
}

/// Planted features with a block-model graph of which half the edges are
/// replaced by random ones; the FP generator starts from the noisy graph.
fn planted_noisy_runs() -> Result<(Vec<PlantedRun>, Duration), String> {
    let start = Instant::now();
    let mut runs = Vec::new();
    for &lambda in &PLANTED_LAMBDAS {
        let mut acc = Vec::new();
        let (mut removed, mut recovered) = (0.0, 0.0);
        for seed in 0..PLANTED_SEEDS {
            let spec = format!("planted:n=200,classes=3,f=30,intra_p=0.4,inter_p=0.1,label_per_class=2,val_per_class=5,seed={seed}");
            let mut d = generate_planted(&PlantedConfig::parse_spec(&spec).map_err(err)?).map_err(err)?;
            let original = generate_sbm(&d.y, 0.08, 0.005, seed).map_err(err)?;
            let noisy = perturb_graph(&original, PLANTED_RHO, &mut stream_rng(seed, Stream::Perturbation)).map_err(err)?;
            d.graph = Some(noisy.clone());
            let cfg = ExperimentConfig {
                generator: GeneratorKind::Fp,
                fp_init: FpInit::PreElu { offset: 10.0 },
                lr_dae: 0.05,
                max_epochs: 500,
                lambda,
                seed,
                ..ExperimentConfig::default()
            };
            cfg.validate().map_err(err)?;
            let t = train_slaps_full(&d, &cfg).map_err(err)?;
            let budget = noisy.undirected_edges().len();
            let m = match &t.adjacency {
                Value::Dense(a) => recovery_metrics(&original, &noisy, a, budget_threshold(a, budget)),
                Value::Sparse(a) => recovery_metrics(&original, &noisy, a, budget_threshold(a, budget)),
            }
            .map_err(err)?;
            acc.push(t.report.test_accuracy);
            removed += m.noisy_removed / PLANTED_SEEDS as f64;
            recovered += m.removed_recovered / PLANTED_SEEDS as f64;
        }
        runs.push(PlantedRun {
            lambda,
            accuracy: mean_std(&acc).0,
            recovery: RecoveryMetrics { noisy_removed: removed, removed_recovered: recovered, injected: 0, deleted: 0 },
        });
    }
    Ok((runs, start.elapsed()))
}

fn best_self_supervised(runs: &[PlantedRun]) -> &PlantedRun {
    runs.iter().filter(|r| r.lambda > 0.0).max_by(|a, b| a.accuracy.total_cmp(&b.accuracy)).expect("a positive λ")
}

fn self_supervision_helps(runs: &[PlantedRun]) -> Outcome {
    let base = &runs[0];
    let best = best_self_supervised(runs);
    let gain = best.accuracy - base.accuracy;
    Ok((
        gain >= PLANTED_MARGIN,
        format!(
            "λ=0 {:.2}, best λ={} {:.2}, gain {:.2} pp (≥ {:.1})",
            100.0 * base.accuracy,
            best.lambda,
            100.0 * best.accuracy,
            100.0 * gain,
            100.0 * PLANTED_MARGIN
        ),
    ))
}

fn noisy_edge_recovery(runs: &[PlantedRun]) -> Outcome {
    let (base, best) = (&runs[0].recovery, &best_self_supervised(runs).recovery);
    Ok((
        best.noisy_removed > base.noisy_removed && best.removed_recovered > base.removed_recovered,
        format!(
            "noisy removed {:.3} vs {:.3}, removed recovered {:.3} vs {:.3} (λ={} vs λ=0)",
            best.noisy_removed,
            base.noisy_removed,
            best.removed_recovered,
            base.removed_recovered,
            best_self_supervised(runs).lambda
        ),
    ))
}

fn odds_profile<A: EdgeWeights + ?Sized>(a: &A, d: &Dataset) -> Result<HomophilyProfile, String> {
    let bins = default_odds_bins(max_pair_weight(a, &d.test));
    homophily_odds(a, &d.y, &d.test, &bins).map_err(err)
}

/// Pools same- and different-label counts of the zero and heaviest
/// non-empty bins over seeds before taking odds.
fn weight_homophily() -> Outcome {
    let (mut top, mut zero) = ((0usize, 0usize), (0usize, 0usize));
    for seed in 0..PLANTED_SEEDS {
        let d = generate_planted(&PlantedConfig { seed, ..PlantedConfig::default() }).map_err(err)?;
        let cfg = ExperimentConfig { lambda: 10.0, max_epochs: 300, seed, ..ExperimentConfig::default() };
        let t = train_slaps_full(&d, &cfg).map_err(err)?;
        let p = match &t.adjacency {
            Value::Dense(a) => odds_profile(a, &d)?,
            Value::Sparse(a) => odds_profile(a, &d)?,
        };
        let heaviest = p.counts.iter().rev().find(|c| c.0 + c.1 > 0).ok_or("no non-empty bin")?;
        top = (top.0 + heaviest.0, top.1 + heaviest.1);
        zero = (zero.0 + p.counts[0].0, zero.1 + p.counts[0].1);
    }
    if top.1 == 0 || zero.1 == 0 {
        return Err(format!("no different-label pairs: top {top:?}, zero {zero:?}"));
    }
    let (top_odds, zero_odds) = (top.0 as f64 / top.1 as f64, zero.0 as f64 / zero.1 as f64);
    Ok((
        top_odds >= ODDS_RATIO_MIN * zero_odds,
        format!("top-bin odds {top_odds:.3}, zero-bin odds {zero_odds:.3}, ratio {:.2} (≥ {ODDS_RATIO_MIN})", top_odds / zero_odds),
    ))
}

fn reproducible_reports() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut reports = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("report{i}.jsonl"));
        let status = Command::new(env!("CARGO_BIN_EXE_slaps"))
            .arg("--report")
            .arg(&path)
            .args(["train", "--dataset", "planted", "--runs", "2", "--seed", "7", "--set", "max_epochs=100"])
            .output()
            .map_err(err)?;
        if !status.status.success() {
            return Err(String::from_utf8_lossy(&status.stderr).into_owned());
        }
        reports.push(std::fs::read(&path).map_err(err)?);
    }
    let same = !reports[0].is_empty() && reports[0] == reports[1];
    Ok((same, format!("{} and {} bytes, identical: {same}", reports[0].len(), reports[1].len())))
}

fn main() {
    let mut r = Runner { failures: 0 };
    r.check(1, "ER starvation probabilities", secs(1), er_starvation);
    r.check(2, "scale-free starvation probabilities", secs(1), sf_starvation);
    r.check(3, "Monte Carlo agrees with closed form", secs(120), monte_carlo);
    r.check(4, "joint finite-difference gradient check", secs(30), gradcheck);
    r.check(5, "processed graphs match dense oracle", secs(1), dense_oracle);
    r.check(6, "frozen generator reproduces standalone GCN", secs(30), frozen_generator);
    r.check(7, "benchmark accuracies", secs(1200), benchmarks);
    let planted = planted_noisy_runs();
    match &planted {
        Ok((runs, spent)) => {
            r.check_after(*spent, 8, "self-supervision improves planted accuracy", secs(300), || self_supervision_helps(runs));
            r.check_after(*spent, 9, "self-supervision denoises the input graph", secs(600), || noisy_edge_recovery(runs));
        }
        Err(e) => {
            r.check(8, "self-supervision improves planted accuracy", secs(300), || Err(e.clone()));
            r.check(9, "self-supervision denoises the input graph", secs(600), || Err(e.clone()));
        }
    }
    r.check(10, "edge weight tracks label agreement", secs(300), weight_homophily);
    r.check(11, "CLI reports are reproducible", secs(120), reproducible_reports);
    println!("{} of 11 criteria passed", 11 - r.failures);
    if r.failures > 0 {
        std::process::exit(1);
    }
}

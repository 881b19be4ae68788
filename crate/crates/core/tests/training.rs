//! End-to-end training behaviour on small planted data.

use slaps::data_io::{generate_planted, generate_sbm, PlantedConfig};
use slaps::generators::{GeneratorKind, GeneratorRegistry};
use slaps::trainer::{
    ada_edge, knn_gcn, self_training, train_slaps, train_two_stage, Dataset, ExperimentConfig, Selection,
};

fn planted(seed: u64) -> Dataset {
    generate_planted(&PlantedConfig { seed, ..PlantedConfig::default() }).unwrap()
}

fn quick(epochs: usize) -> ExperimentConfig {
    ExperimentConfig { max_epochs: epochs, ..ExperimentConfig::default() }
}

#[test]
fn planted_data_is_learned() {
    let d = planted(0);
    for generator in [GeneratorKind::Mlp, GeneratorKind::MlpDiag, GeneratorKind::Fp] {
        let cfg = ExperimentConfig { generator, ..quick(200) };
        let r = train_slaps(&d, &cfg).unwrap();
        assert!(r.test_accuracy > 0.9, "{generator}: {}", r.test_accuracy);
        assert_eq!(r.epochs.len(), 200);
        assert!(r.best_epoch >= 1 && r.best_epoch <= 200);
    }
}

#[test]
fn training_is_deterministic() {
    let d = planted(3);
    let cfg = quick(40);
    let (a, b) = (train_slaps(&d, &cfg).unwrap(), train_slaps(&d, &cfg).unwrap());
    assert_eq!(a.epochs, b.epochs);
    assert_eq!(a.test_accuracy, b.test_accuracy);
}

#[test]
fn loss_selection_tracks_validation_loss() {
    let d = planted(1);
    let cfg = ExperimentConfig { selection: Selection::Loss, ..quick(60) };
    let r = train_slaps(&d, &cfg).unwrap();
    let min = r.epochs.iter().filter_map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(r.best_val_loss, min);
}

#[test]
fn two_stage_snapshots_follow_the_period() {
    let d = planted(0);
    let cfg = ExperimentConfig { stage_two_epochs: 20, ..quick(30) };
    assert_eq!(train_two_stage(&d, &cfg, 10).unwrap().snapshots, vec![10, 20, 30]);
    assert_eq!(train_two_stage(&d, &cfg, 100).unwrap().snapshots.len(), 1);
}

#[test]
fn self_training_without_pseudo_labels_is_plain_training() {
    let d = planted(2);
    let cfg = quick(40);
    let out = self_training(&d, &cfg, 0).unwrap();
    assert!(out.pseudo_labels.is_empty());
    assert_eq!(out.report.epochs, train_slaps(&d, &cfg).unwrap().epochs);

    let d = generate_planted(&PlantedConfig { test_count: Some(40), seed: 2, ..PlantedConfig::default() }).unwrap();
    let out = self_training(&d, &cfg, 5).unwrap();
    assert_eq!(out.pseudo_labels.len(), 5);
    let pool = d.unlabeled();
    assert!(out.pseudo_labels.iter().all(|(i, _)| pool.contains(i)));
}

#[test]
fn ada_edge_without_rounds_keeps_the_graph() {
    let d = planted(0);
    let g = generate_sbm(&d.y, 0.1, 0.05, 0).unwrap();
    let cfg = ExperimentConfig { ada_rounds: 0, ..quick(50) };
    let out = ada_edge(&d, &cfg, &g, 0.9).unwrap();
    assert_eq!(out.rounds, 0);
    assert_eq!(out.graph, g);
    assert_eq!(out.report.epochs.len(), 50);
}

#[test]
fn knn_gcn_beats_chance() {
    let d = planted(4);
    let r = knn_gcn(&d, &ExperimentConfig { k: 10, ..quick(100) }).unwrap().report;
    assert!(r.test_accuracy > 0.8, "{}", r.test_accuracy);
}

#[test]
fn registry_rejects_unknown_generators() {
    let d = planted(0);
    let options = ExperimentConfig::default().generator_options();
    assert!(GeneratorRegistry::default().create("nope", &d.x, &options).is_err());
    for name in ["mlp", "mlp-d", "fp"] {
        assert!(GeneratorRegistry::default().create(name, &d.x, &options).is_ok(), "{name}");
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let d = planted(0);
    assert!(train_slaps(&d, &ExperimentConfig { max_epochs: 0, ..quick(1) }).is_err());
    assert!(train_slaps(&d, &ExperimentConfig { lambda: -1.0, ..quick(1) }).is_err());
    assert!(train_slaps(&d, &ExperimentConfig { dropout_c: 1.5, ..quick(1) }).is_err());
}

#[test]
fn cli_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_slaps");
    let run = |args: &[&str]| std::process::Command::new(bin).args(args).output().unwrap();
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let er = run(&["analyze", "starved", "--er", "-n", "2708", "-m", "5429", "-q", "140"]);
    assert_eq!(er.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&er.stdout), "0.594\n");
    assert_eq!(run(&["gradcheck"]).status.code(), Some(0));
    assert_eq!(run(&["train", "--dataset", "missing.manifest"]).status.code(), Some(1));
}

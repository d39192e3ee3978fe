use std::path::Path;

use pidd_core::phantom::{build_dataset, PhantomSpec, DEFAULT_RATIOS, MANIFEST_FILE};
use pidd_train::trainer::{CHECKPOINT_FILE, CONFIG_FILE, LOG_FILE};
use pidd_train::{evaluate_items, train, TrainConfig, TrainData, TrainMode};

fn dataset(dir: &Path, count: usize) -> std::path::PathBuf {
    let spec = PhantomSpec {
        size: 32,
        seed: 11,
        ..Default::default()
    };
    build_dataset(&spec, count, DEFAULT_RATIOS, dir).unwrap();
    dir.join(MANIFEST_FILE)
}

fn small(mode: TrainMode) -> TrainConfig {
    TrainConfig {
        mode,
        gen_base: 8,
        disc_base: 8,
        batch: 2,
        seed: 4,
        ..Default::default()
    }
}

#[test]
fn early_stopping_fires_patience_epochs_after_the_best() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 12);
    for patience in [1, 2] {
        let cfg = TrainConfig {
            patience,
            epochs_max: 20,
            lr_init: 5e-3,
            lr_min: 5e-3,
            ..small(TrainMode::Pidd)
        };
        let data = TrainData::<f32>::from_manifest(&cfg, &manifest).unwrap();
        let (mut model, out) = train(&cfg, &data, None).unwrap();
        let epochs = out.log.epochs(&cfg.effective_weights());
        assert_eq!(epochs.len(), out.epochs_run);
        let best = epochs
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, e)| if e.val.nmse < acc.1 { (i, e.val.nmse) } else { acc });
        assert_eq!(out.best_epoch, best.0);
        assert_eq!(out.best_val_nmse, best.1);
        assert!(out.stopped_early, "patience {patience}: ran all {} epochs", out.epochs_run);
        assert_eq!(out.epochs_run - 1, out.best_epoch + patience);

        // The returned model is the best snapshot.
        let again = evaluate_items(&mut model, &data.val, cfg.batch).unwrap();
        assert_eq!(again.mean.nmse, out.best_val_nmse);
    }
}

#[test]
fn without_early_stopping_every_epoch_runs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 12);
    let cfg = TrainConfig {
        patience: 1,
        epochs_max: 4,
        early_stop: false,
        ..small(TrainMode::Pidd)
    };
    let data = TrainData::<f32>::from_manifest(&cfg, &manifest).unwrap();
    let (_, out) = train(&cfg, &data, None).unwrap();
    assert_eq!(out.epochs_run, 4);
    assert!(!out.stopped_early);
    let steps_per_epoch = data.train.len() / cfg.batch;
    assert_eq!(out.steps, 4 * steps_per_epoch);
    for row in &out.log.rows {
        assert_eq!(row.lr, cfg.lr_at(row.epoch));
        assert_eq!(row.val.is_some(), row.step % steps_per_epoch == 0);
    }
}

#[test]
fn identical_seeds_give_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(&dir.path().join("ds"), 24);
    let cfg = TrainConfig {
        max_steps: 10,
        ..small(TrainMode::Pidd)
    };
    let run = |name: &str| {
        let out = dir.path().join(name);
        let data = TrainData::<f32>::from_manifest(&cfg, &manifest).unwrap();
        train(&cfg, &data, Some(&out)).unwrap();
        [LOG_FILE, CHECKPOINT_FILE, CONFIG_FILE].map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let csv = String::from_utf8(a[0].clone()).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10);

    let other = TrainConfig { seed: 5, ..cfg.clone() };
    let data = TrainData::<f32>::from_manifest(&other, &manifest).unwrap();
    let (_, out) = train(&other, &data, None).unwrap();
    assert_ne!(out.log.to_csv().as_bytes(), &a[0][..]);
}

#[test]
fn single_discriminator_trace_equals_dual_build_with_zero_edge_weight() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 24);
    let pisd = TrainConfig {
        max_steps: 10,
        ..small(TrainMode::Pisd)
    };
    let mut dual = TrainConfig {
        max_steps: 10,
        ..small(TrainMode::Pidd)
    };
    dual.weights.mu = 1.0;
    dual.weights.nu = 0.0;
    let data = TrainData::<f32>::from_manifest(&pisd, &manifest).unwrap();
    let (_, a) = train(&pisd, &data, None).unwrap();
    let (_, b) = train(&dual, &data, None).unwrap();
    assert_eq!(a.log.to_csv(), b.log.to_csv());
    assert!(a.log.rows.iter().all(|r| r.disc.d2 == 0.0));
}

#[test]
fn every_mode_trains_with_finite_losses() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dataset(dir.path(), 12);
    for mode in [TrainMode::Pidd, TrainMode::Pisd, TrainMode::NPidd] {
        let cfg = TrainConfig {
            max_steps: 3,
            noise_level: 0.3,
            ..small(mode)
        };
        let data = TrainData::<f32>::from_manifest(&cfg, &manifest).unwrap();
        let coils = if mode == TrainMode::NPidd { 1 } else { 4 };
        assert!(data.train.iter().all(|p| p.maps.coils() == coils));
        let (_, out) = train(&cfg, &data, None).unwrap();
        assert_eq!(out.steps, 3);
        assert!(out.log.rows.iter().all(|r| r.parts.is_finite() && r.disc.d1.is_finite()));
        assert!(out.best_val_nmse.is_finite());
    }
}

use movrptw::nn::load_checkpoint;
use movrptw::policy::PolicyConfig;
use movrptw::train::{read_log, train, CheckpointMeta, TrainConfig, TrainRun, WeightMode, CHECKPOINT_FILE, LOG_FILE};

fn tiny(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 8,
        batches_per_epoch: 2,
        customer_count: 6,
        eval_size: 8,
        seed: 11,
        policy: PolicyConfig { embed_dim: 16, layers: 1, heads: 4, ff_hidden: 32, ..PolicyConfig::default() },
        ..TrainConfig::default()
    }
}

fn reproducible(dir: &std::path::Path, resume: bool) -> TrainRun {
    TrainRun { dir: Some(dir.to_path_buf()), resume, reproducible: true }
}

#[test]
fn same_seed_gives_identical_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = train::<f32>(&tiny(2), &reproducible(a.path(), false)).unwrap();
    let rb = train::<f32>(&tiny(2), &reproducible(b.path(), false)).unwrap();
    assert_eq!(ra.log, rb.log);
    assert_eq!(ra.policy.params(), rb.policy.params());
    for file in [CHECKPOINT_FILE, LOG_FILE] {
        assert_eq!(std::fs::read(a.path().join(file)).unwrap(), std::fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn resuming_matches_an_uninterrupted_run() {
    let full = tempfile::tempdir().unwrap();
    let split = tempfile::tempdir().unwrap();
    let whole = train::<f32>(&tiny(3), &reproducible(full.path(), false)).unwrap();
    train::<f32>(&tiny(1), &reproducible(split.path(), false)).unwrap();
    let resumed = train::<f32>(&tiny(3), &reproducible(split.path(), true)).unwrap();
    assert_eq!(whole.log, resumed.log);
    assert_eq!(whole.policy.params(), resumed.policy.params());
    assert_eq!(read_log(&split.path().join(LOG_FILE)).unwrap().len(), 3);
    let (_, meta): (movrptw::nn::ParamStore<f32>, CheckpointMeta) = load_checkpoint(&split.path().join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(meta.epochs_completed, 3);
}

#[test]
fn resuming_with_another_config_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    train::<f32>(&tiny(1), &reproducible(dir.path(), false)).unwrap();
    let other = TrainConfig { lr: 5e-4, ..tiny(2) };
    assert!(train::<f32>(&other, &reproducible(dir.path(), true)).is_err());
}

#[test]
fn fixed_weight_runs_differ_from_weight_aware_runs() {
    let aware = train::<f32>(&tiny(1), &TrainRun::default()).unwrap();
    let fixed = train::<f32>(&TrainConfig { weight_mode: WeightMode::Fixed(1.0, 0.0), ..tiny(1) }, &TrainRun::default()).unwrap();
    assert_eq!(aware.log.len(), fixed.log.len());
    assert_ne!(aware.policy.params(), fixed.policy.params());
}

#[test]
fn invalid_config_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(train::<f32>(&TrainConfig { batch_size: 0, ..tiny(1) }, &reproducible(&out, false)).is_err());
    assert!(!out.exists());
}

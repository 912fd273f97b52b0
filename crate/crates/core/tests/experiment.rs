mod common;

use std::path::Path;

use scenefuse::backbone::mock::write_mock_registry;
use scenefuse::backbone::LayerId;
use scenefuse::dataset::read_store;
use scenefuse::experiment::{
    ablate_combinations, ablate_layers, read_records, run_eval, run_extract, run_train,
    run_train_eval, store_path, AblationOptions, ExperimentError, ExperimentPlan, StoreMeta,
};
use scenefuse::features::{AggregationMethod, Stream};

fn plan(dir: &Path, train: usize, test: usize) -> ExperimentPlan {
    let manifest = common::write_synthetic_dataset(&dir.join("data"), train, test, 17);
    let mut plan = ExperimentPlan::new(manifest, dir.join("out"));
    plan.registry = Some(write_mock_registry(&dir.join("models"), 5).unwrap());
    plan.training.c_grid = vec![1.0, 10.0];
    plan.training.cv_folds = train.clamp(2, 3);
    plan
}

#[test]
fn extract_writes_one_store_per_stream_and_caches() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan(dir.path(), 1, 1);
    let first = run_extract(&plan, false).unwrap();
    assert_eq!(first.stores.len(), 3);
    assert_eq!(first.inference_calls, 18);
    for s in &first.stores {
        assert!(!s.cached);
        assert_eq!((s.dim, s.count), (512, 6));
        let rows = read_store(&s.path).unwrap();
        assert_eq!(rows.features.dim(), (6, 512));
    }
    let again = run_extract(&plan, false).unwrap();
    assert_eq!(again.inference_calls, 0);
    assert!(again.stores.iter().all(|s| s.cached));

    let forced = run_extract(&plan, true).unwrap();
    assert_eq!(forced.inference_calls, 18);
}

#[test]
fn extract_at_p3_gives_256_dims() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = plan(dir.path(), 1, 1);
    plan.layer = LayerId::P3;
    plan.streams = vec![Stream::Background];
    let summary = run_extract(&plan, false).unwrap();
    assert_eq!(summary.stores.len(), 1);
    assert_eq!(summary.stores[0].dim, 256);
    assert!(summary.stores[0].path.ends_with("background_p3.sfv"));
}

#[test]
fn train_then_eval_separates_the_classes() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan(dir.path(), 4, 2);
    run_extract(&plan, false).unwrap();
    let trained = run_train(&plan).unwrap();
    assert_eq!(trained.len(), 1);
    assert_eq!(trained[0].model.dim(), 1536);
    let record = run_eval(&plan).unwrap();
    assert_eq!(record.accuracy, 1.0);
    assert_eq!(record.splits.len(), 1);
    assert_eq!(record.splits[0].test_count, 6);
    assert!(record.verify_plan());
    assert_eq!(read_records(plan.out_dir.join("results.jsonl")).unwrap(), vec![record]);
}

#[test]
fn missing_and_stale_stores() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = plan(dir.path(), 1, 1);
    assert!(matches!(run_train_eval(&plan), Err(ExperimentError::MissingStore { .. })));

    plan.streams = vec![Stream::Foreground];
    run_extract(&plan, false).unwrap();
    let data = plan.manifest.parent().unwrap();
    std::fs::copy(data.join("images/class0/00.png"), data.join("images/class0/99.png")).unwrap();
    let mut manifest = std::fs::read_to_string(&plan.manifest).unwrap();
    manifest.push_str("images/class0/99.png\tclass0\ttrain\n");
    std::fs::write(&plan.manifest, manifest).unwrap();
    assert!(matches!(run_train_eval(&plan), Err(ExperimentError::StaleStore { .. })));
}

#[test]
fn eval_rejects_a_model_of_another_width() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = plan(dir.path(), 2, 1);
    plan.training.cv_folds = 2;
    run_extract(&plan, false).unwrap();
    let mut single = plan.clone();
    single.streams = vec![Stream::Foreground];
    run_train(&single).unwrap();
    match run_eval(&plan) {
        Err(ExperimentError::DimMismatch { train, test }) => assert_eq!((train, test), (512, 1536)),
        other => panic!("expected dim mismatch, got {other:?}"),
    }
}

#[test]
fn broken_images_are_skipped_unless_a_category_empties() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = plan(dir.path(), 2, 1);
    plan.streams = vec![Stream::Hybrid];
    let data = plan.manifest.parent().unwrap().to_path_buf();
    std::fs::write(data.join("images/class1/00.png"), b"not a png").unwrap();
    let summary = run_extract(&plan, false).unwrap();
    assert_eq!(summary.stores[0].count, 8);
    let meta_path = format!("{}.json", summary.stores[0].path.display());
    let meta: StoreMeta = serde_json::from_str(&std::fs::read_to_string(meta_path).unwrap()).unwrap();
    assert_eq!(meta.failed.len(), 1);
    assert_eq!(meta.failed[0].id, "images/class1/00.png");

    for i in 1..3 {
        std::fs::write(data.join(format!("images/class1/{i:02}.png")), b"").unwrap();
    }
    match run_extract(&plan, true) {
        Err(ExperimentError::CategoryLost { category, .. }) => assert_eq!(category, "class1"),
        other => panic!("expected a lost category, got {other:?}"),
    }
    assert!(!store_path(&plan.store_dir, Stream::Hybrid, plan.layer).exists());
}

#[test]
fn full_combination_matches_the_plain_run() {
    let dir = tempfile::tempdir().unwrap();
    let plan = plan(dir.path(), 3, 1);
    let records = ablate_combinations(&plan, AblationOptions::default()).unwrap();
    assert_eq!(records.len(), 4);
    let labels: Vec<&str> = records.iter().map(|r| r.plan.label.as_str()).collect();
    assert_eq!(
        labels,
        ["combinations/fb", "combinations/fh", "combinations/bh", "combinations/fbh"]
    );
    assert_eq!(records[1].plan.streams, vec![Stream::Foreground, Stream::Hybrid]);

    let plain = run_train_eval(&plan).unwrap();
    assert_eq!(records[3].splits, plain.splits);
    assert_eq!(records[3].chosen_c, plain.chosen_c);

    let parallel = ablate_combinations(
        &plan,
        AblationOptions {
            parallel: true,
            ..AblationOptions::default()
        },
    )
    .unwrap();
    for (a, b) in records.iter().zip(&parallel) {
        assert_eq!(a.splits, b.splits);
    }
}

#[test]
fn layer_ablation_covers_every_pool() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = plan(dir.path(), 2, 1);
    plan.streams = vec![Stream::Foreground, Stream::Background];
    plan.aggregation = AggregationMethod::Max;
    let records = ablate_layers(&plan, AblationOptions::default()).unwrap();
    assert_eq!(records.len(), 5);
    for (r, layer) in records.iter().zip(LayerId::ALL) {
        assert_eq!(r.plan.layer, layer);
        assert_eq!(r.plan.aggregation, AggregationMethod::Max);
        assert!((0.0..=1.0).contains(&r.accuracy));
    }
    let on_disk = read_records(plan.out_dir.join("ablation_layers.jsonl")).unwrap();
    assert_eq!(on_disk, records);
}

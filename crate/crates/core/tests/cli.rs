mod common;

use std::path::Path;
use std::process::{Command, Output};

use scenefuse::backbone::mock::write_mock_registry;

fn scenefuse(args: &[&str], cache: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_scenefuse"));
    cmd.args(args).env_remove("SCENEFUSE_CACHE");
    if let Some(dir) = cache {
        cmd.env("SCENEFUSE_CACHE", dir);
    }
    cmd.output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn error_line(out: &Output) -> String {
    assert!(!out.status.success());
    let text = stderr(out);
    let line = text
        .lines()
        .find(|l| l.starts_with("error kind="))
        .unwrap_or_else(|| panic!("no error line in {text}"))
        .to_string();
    let (_, message) = line.split_once(" message=").unwrap();
    let _: String = serde_json::from_str(message).expect("message is a JSON string");
    line
}

#[test]
fn full_cycle_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::write_synthetic_dataset(&dir.path().join("data"), 3, 1, 4);
    let registry = write_mock_registry(&dir.path().join("models"), 2).unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    let common_args = [
        "--manifest",
        manifest.to_str().unwrap(),
        "--registry",
        registry.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--folds",
        "3",
        "--c-grid",
        "1,5..6",
    ];

    let mut args = vec!["extract"];
    args.extend(common_args);
    let o = scenefuse(&args, Some(&cache));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(cache.join("foreground_p5.sfv").exists());
    assert!(!out.join("stores").exists());

    args[0] = "train";
    let o = scenefuse(&args, Some(&cache));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("models/default.sflr").exists());

    args[0] = "eval";
    let o = scenefuse(&args, Some(&cache));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("accuracy 100.0%"));

    let results = out.join("results.jsonl");
    let o = scenefuse(&["report", results.to_str().unwrap()], None);
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    assert!(csv.starts_with("label,streams,layer,aggregation"));
    assert!(csv.lines().nth(1).unwrap().contains(",100.0,"));

    let o = scenefuse(&["report", "--timing-table", results.to_str().unwrap()], None);
    assert!(String::from_utf8(o.stdout).unwrap().starts_with("label,feature_extraction_s"));

    // without the cache override the stores are not where eval looks
    args[0] = "eval";
    let o = scenefuse(&args, None);
    assert!(error_line(&o).starts_with("error kind=missing-store"));
}

#[test]
fn ablate_streams_prints_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::write_synthetic_dataset(&dir.path().join("data"), 2, 1, 8);
    let registry = write_mock_registry(&dir.path().join("models"), 3).unwrap();
    let out = dir.path().join("out");
    let o = scenefuse(
        &[
            "ablate",
            "streams",
            "--suite",
            manifest.to_str().unwrap(),
            "--registry",
            registry.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--folds",
            "2",
            "--c-grid",
            "1",
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert_eq!(table.lines().count(), 4);
    assert!(table.contains("streams/h,h,p5"));
    assert!(out.join("ablation_streams.jsonl").exists());
}

#[test]
fn errors_are_one_machine_readable_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.tsv");
    let o = scenefuse(&["train", "--manifest", missing.to_str().unwrap()], None);
    assert!(error_line(&o).starts_with("error kind=dataset"));

    let manifest = dir.path().join("m.tsv");
    std::fs::write(&manifest, "a.png\tx\ttrain\nb.png\tx\ttest\n").unwrap();
    let o = scenefuse(
        &["extract", "--manifest", manifest.to_str().unwrap(), "--streams", "f,q"],
        None,
    );
    assert!(error_line(&o).starts_with("error kind=plan"));

    let o = scenefuse(&["extract", "--manifest", manifest.to_str().unwrap()], None);
    assert!(error_line(&o).contains("registry"));

    let o = scenefuse(
        &["train", "--manifest", manifest.to_str().unwrap(), "--c-grid", "0"],
        None,
    );
    assert!(error_line(&o).starts_with("error kind=classifier"));
}

#[test]
fn validate_reports_protocol_violations() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.tsv");
    std::fs::write(&manifest, "a.png\tx\ttrain\nb.png\tx\ttest\n").unwrap();
    let o = scenefuse(&["validate", "--manifest", manifest.to_str().unwrap()], None);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("0 violations"));

    let o = scenefuse(
        &["validate", "--manifest", manifest.to_str().unwrap(), "--protocol", "mit67"],
        None,
    );
    assert!(String::from_utf8_lossy(&o.stdout).contains("expected 67 categories"));
    assert!(error_line(&o).starts_with("error kind=plan"));
}

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::extract::{images_digest, read_meta, row_index, RowIndex, StoreDescriptor};
use super::{
    read_json, store_path, write_json, ExperimentError, ExperimentPlan, ResultRecord, SplitResult,
    Timing,
};
use crate::backbone::RegistryConfig;
use crate::classifier::{grid_search, read_model, write_model, LabeledDataset, TrainedModel};
use crate::dataset::{
    parse_manifest, read_store, FeatureRows, ManifestRecord, SampleManifest, SplitSuite,
};
use crate::features::{aggregate, FeatureVector, Stage};

/// Fused features for one train/test pair.
#[derive(Debug, Clone)]
pub struct FusedSplit {
    pub name: String,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

#[derive(Debug, Clone)]
pub struct TrainedSplit {
    pub name: String,
    pub model: TrainedModel,
    pub training_s: f64,
}

/// Sidecar written next to each saved model.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelMeta {
    plan_hash: String,
    dim: usize,
    train_count: usize,
    training_s: f64,
}

pub(crate) struct Loaded {
    pub splits: Vec<FusedSplit>,
    pub extraction_s: f64,
    pub images: usize,
}

struct StreamRows {
    rows: FeatureRows,
    index: RowIndex,
}

fn load_stream_rows(
    plan: &ExperimentPlan,
    manifest: &SampleManifest,
    registry: Option<&RegistryConfig>,
) -> Result<(Vec<StreamRows>, f64), ExperimentError> {
    let digest = images_digest(manifest);
    let mut out = Vec::new();
    let mut extraction_s = 0.0;
    for &stream in &plan.streams {
        let path = store_path(&plan.store_dir, stream, plan.layer);
        if !path.exists() {
            return Err(ExperimentError::MissingStore { path });
        }
        let rows = read_store(&path)?;
        let meta = read_meta(&path)?;
        let found = StoreDescriptor::decode(&rows.header.descriptor);
        let stale = match &found {
            None => true,
            Some(d) => {
                let inputs_match = d.stream == stream
                    && d.layer == plan.layer
                    && d.epsilon == plan.epsilon
                    && d.images_sha256 == digest;
                let model_match = match registry {
                    Some(cfg) => cfg.entry(stream)?.sha256 == d.model_sha256,
                    None => true,
                };
                !(inputs_match && model_match)
            }
        };
        if stale || meta.descriptor != rows.header.descriptor || meta.ids.len() != rows.header.count {
            return Err(ExperimentError::StaleStore { path });
        }
        extraction_s += meta.extraction_seconds;
        out.push(StreamRows {
            index: row_index(&meta),
            rows,
        });
    }
    Ok((out, extraction_s))
}

fn fuse(
    plan: &ExperimentPlan,
    streams: &[StreamRows],
    id: &str,
) -> Result<Option<Vec<f64>>, ExperimentError> {
    let mut parts = Vec::with_capacity(streams.len());
    for (s, rows) in plan.streams.iter().zip(streams) {
        let Some(&row) = rows.index.get(id) else {
            return Ok(None);
        };
        parts.push((*s, rows.rows.features.row(row).to_vec()));
    }
    if parts.len() == 1 {
        return Ok(parts.pop().map(|(_, v)| v));
    }
    let vectors = parts
        .into_iter()
        .map(|(s, v)| Ok((s, FeatureVector::new(Stage::Normalized, v)?)))
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(Some(aggregate(&vectors, plan.aggregation)?.into_values()))
}

fn dataset(
    plan: &ExperimentPlan,
    manifest: &SampleManifest,
    fused: &BTreeMap<String, Vec<f64>>,
    records: &[usize],
    split: &str,
    side: &'static str,
) -> Result<LabeledDataset, ExperimentError> {
    let all: &[ManifestRecord] = manifest.records();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for &i in records {
        if let Some(v) = fused.get(&all[i].path) {
            rows.push(v.clone());
            labels.push(manifest.label(&all[i]));
        }
    }
    if rows.is_empty() {
        return Err(ExperimentError::EmptySplit {
            split: split.to_string(),
            side,
        });
    }
    if rows.len() < records.len() {
        warn!(
            "split {split}: {} of {} {side} images have no features and are left out",
            records.len() - rows.len(),
            records.len()
        );
    }
    if let Some(r) = rows.iter().find(|r| r.len() != plan.feature_dim()) {
        return Err(ExperimentError::DimMismatch {
            train: plan.feature_dim(),
            test: r.len(),
        });
    }
    Ok(LabeledDataset::from_rows(&rows, labels, manifest.class_count())?)
}

pub(crate) fn load(plan: &ExperimentPlan) -> Result<Loaded, ExperimentError> {
    plan.validate()?;
    let registry = plan.registry.as_ref().map(RegistryConfig::read).transpose()?;
    let manifest = parse_manifest(&plan.manifest)?;
    let suite = SplitSuite::from_manifest(&manifest)?;
    let (streams, extraction_s) = load_stream_rows(plan, &manifest, registry.as_ref())?;

    let mut fused = BTreeMap::new();
    for (id, _) in manifest.unique_images() {
        if let Some(v) = fuse(plan, &streams, id)? {
            fused.insert(id.to_string(), v);
        }
    }
    let images = fused.len();
    let splits = suite
        .pairs
        .iter()
        .map(|pair| {
            Ok(FusedSplit {
                name: pair.name.clone(),
                train: dataset(plan, &manifest, &fused, &pair.train, &pair.name, "train")?,
                test: dataset(plan, &manifest, &fused, &pair.test, &pair.name, "test")?,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(Loaded {
        splits,
        extraction_s,
        images,
    })
}

/// Reads the plan's stores and fuses them into one dataset per split pair.
pub fn load_fused(plan: &ExperimentPlan) -> Result<Vec<FusedSplit>, ExperimentError> {
    Ok(load(plan)?.splits)
}

fn train_split(plan: &ExperimentPlan, split: &FusedSplit) -> Result<TrainedSplit, ExperimentError> {
    let started = Instant::now();
    let model = grid_search(&split.train, &plan.training)?;
    let training_s = started.elapsed().as_secs_f64();
    info!(
        "split {}: C={} chosen, trained in {training_s:.2}s",
        split.name,
        model.chosen_c()
    );
    Ok(TrainedSplit {
        name: split.name.clone(),
        model,
        training_s,
    })
}

fn file_stem(split: &str) -> String {
    split.replace(['/', '\\'], "_")
}

fn model_path(plan: &ExperimentPlan, split: &str) -> PathBuf {
    plan.models_dir().join(format!("{}.sflr", file_stem(split)))
}

fn model_meta_path(plan: &ExperimentPlan, split: &str) -> PathBuf {
    plan.models_dir().join(format!("{}.json", file_stem(split)))
}

/// Trains one model per split pair and saves each under `out/models`.
pub fn run_train(plan: &ExperimentPlan) -> Result<Vec<TrainedSplit>, ExperimentError> {
    let loaded = load(plan)?;
    let dir = plan.models_dir();
    std::fs::create_dir_all(&dir).map_err(ExperimentError::io(&dir))?;
    let mut trained = Vec::new();
    for split in &loaded.splits {
        let t = train_split(plan, split)?;
        let path = model_path(plan, &t.name);
        let file = File::create(&path).map_err(ExperimentError::io(&path))?;
        write_model(&t.model, BufWriter::new(file))?;
        write_json(
            &model_meta_path(plan, &t.name),
            &ModelMeta {
                plan_hash: plan.hash(),
                dim: t.model.dim(),
                train_count: split.train.len(),
                training_s: t.training_s,
            },
        )?;
        trained.push(t);
    }
    Ok(trained)
}

fn evaluate(
    plan: &ExperimentPlan,
    loaded: &Loaded,
    models: &[(TrainedModel, f64)],
) -> Result<ResultRecord, ExperimentError> {
    let mut splits = Vec::new();
    let (mut training_s, mut testing_s, mut tested) = (0.0, 0.0, 0usize);
    for (split, (model, train_s)) in loaded.splits.iter().zip(models) {
        if model.dim() != split.test.dim() {
            return Err(ExperimentError::DimMismatch {
                train: model.dim(),
                test: split.test.dim(),
            });
        }
        let started = Instant::now();
        let accuracy = model.score(&split.test)?;
        testing_s += started.elapsed().as_secs_f64();
        training_s += train_s;
        tested += split.test.len();
        splits.push(SplitResult {
            name: split.name.clone(),
            accuracy,
            chosen_c: model.chosen_c(),
            train_count: split.train.len(),
            test_count: split.test.len(),
        });
    }
    let n = splits.len() as f64;
    let timing = Timing {
        extraction_s: loaded.extraction_s,
        training_s: training_s / n,
        testing_s: testing_s / n,
        extraction_per_image_s: loaded.extraction_s / loaded.images.max(1) as f64,
        testing_per_sample_s: testing_s / tested.max(1) as f64,
    };
    Ok(ResultRecord::new(plan.clone(), splits, timing))
}

/// Scores the saved models on their test sides and writes `out/results.jsonl`.
pub fn run_eval(plan: &ExperimentPlan) -> Result<ResultRecord, ExperimentError> {
    let loaded = load(plan)?;
    let mut models = Vec::new();
    for split in &loaded.splits {
        let path = model_path(plan, &split.name);
        if !path.exists() {
            return Err(ExperimentError::MissingModel {
                split: split.name.clone(),
                dir: plan.models_dir(),
            });
        }
        let file = File::open(&path).map_err(ExperimentError::io(&path))?;
        let model = read_model(BufReader::new(file))?;
        let meta_path = model_meta_path(plan, &split.name);
        let training_s = if meta_path.exists() {
            read_json::<ModelMeta>(&meta_path)?.training_s
        } else {
            0.0
        };
        models.push((model, training_s));
    }
    let record = evaluate(plan, &loaded, &models)?;
    super::report::write_records(&plan.out_dir.join("results.jsonl"), std::slice::from_ref(&record))?;
    Ok(record)
}

/// Trains and scores every split in memory without saving models.
pub fn run_train_eval(plan: &ExperimentPlan) -> Result<ResultRecord, ExperimentError> {
    let loaded = load(plan)?;
    let models = loaded
        .splits
        .iter()
        .map(|split| train_split(plan, split).map(|t| (t.model, t.training_s)))
        .collect::<Result<Vec<_>, _>>()?;
    evaluate(plan, &loaded, &models)
}

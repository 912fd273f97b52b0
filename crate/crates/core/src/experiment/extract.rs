use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_json, write_json, ExperimentError, ExperimentPlan};
use crate::backbone::{preprocess, Backbone, ImageSample, LayerId, RegistryConfig};
use crate::dataset::{parse_manifest, SampleManifest, StoreReader, StoreWriter};
use crate::features::{describe_stream, EncodingConfig, Stream};

const CHUNK: usize = 64;

/// What a store was built from, serialized into the store header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct StoreDescriptor {
    pub stream: Stream,
    pub layer: LayerId,
    pub epsilon: f64,
    pub images_sha256: String,
    pub model_sha256: String,
    pub preprocess: String,
}

impl StoreDescriptor {
    pub(crate) fn encode(&self) -> String {
        serde_json::to_string(self).expect("descriptor serializes")
    }

    pub(crate) fn decode(text: &str) -> Option<Self> {
        serde_json::from_str(text).ok()
    }
}

/// Sidecar next to each store: row ids, failures and timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub descriptor: String,
    /// Image id (manifest path) of each row, in row order.
    pub ids: Vec<String>,
    pub failed: Vec<FailedImage>,
    pub extraction_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedImage {
    pub id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreInfo {
    pub stream: Stream,
    pub layer: LayerId,
    pub path: PathBuf,
    pub dim: usize,
    pub count: usize,
    /// Already up to date; nothing was extracted.
    pub cached: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractSummary {
    pub stores: Vec<StoreInfo>,
    pub inference_calls: usize,
    pub seconds: f64,
}

/// `<store_dir>/<stream>_<layer>.sfv`.
pub fn store_path(store_dir: &Path, stream: Stream, layer: LayerId) -> PathBuf {
    store_dir.join(format!("{}_{}.sfv", stream.name(), layer.short_name()))
}

pub(crate) fn meta_path(store: &Path) -> PathBuf {
    let mut s = store.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub(crate) fn images_digest(manifest: &SampleManifest) -> String {
    let mut hasher = Sha256::new();
    for (path, label) in manifest.unique_images() {
        hasher.update(format!("{path}\t{label}\n").as_bytes());
    }
    hex::encode(hasher.finalize())
}

pub(crate) fn read_meta(store: &Path) -> Result<StoreMeta, ExperimentError> {
    read_json(&meta_path(store))
}

fn is_current(store: &Path, descriptor: &str) -> bool {
    let Ok(reader) = StoreReader::open(store) else {
        return false;
    };
    let Ok(meta) = read_meta(store) else {
        return false;
    };
    reader.header().descriptor == descriptor
        && meta.descriptor == descriptor
        && meta.ids.len() == reader.header().count
}

pub(crate) fn resolve_image(plan: &ExperimentPlan, path: &str) -> PathBuf {
    let p = Path::new(path);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        plan.manifest_dir().join(p)
    }
}

/// Extracts one store per requested stream at the plan's layer.
///
/// Stores whose header already matches the manifest, model and settings are
/// left alone unless `force` is set. Images that fail to decode or run are
/// logged and skipped; losing every image of a category is an error.
pub fn run_extract(plan: &ExperimentPlan, force: bool) -> Result<ExtractSummary, ExperimentError> {
    plan.validate()?;
    let registry = plan
        .registry
        .as_ref()
        .ok_or_else(|| ExperimentError::Plan("extraction needs a registry".into()))?;
    let config = RegistryConfig::read(registry)?;
    for kind in Stream::ALL {
        config.entry(kind)?;
    }
    let manifest = parse_manifest(&plan.manifest)?;
    let images = manifest.unique_images();
    let images_sha256 = images_digest(&manifest);
    let preprocess_desc = serde_json::to_string(&config.preprocess).expect("spec serializes");
    std::fs::create_dir_all(&plan.store_dir).map_err(ExperimentError::io(&plan.store_dir))?;

    let layer = plan.layer;
    let mut stores = Vec::new();
    let mut todo = Vec::new();
    for &stream in &plan.streams {
        let descriptor = StoreDescriptor {
            stream,
            layer,
            epsilon: plan.epsilon,
            images_sha256: images_sha256.clone(),
            model_sha256: config.entry(stream)?.sha256.clone(),
            preprocess: preprocess_desc.clone(),
        }
        .encode();
        let path = store_path(&plan.store_dir, stream, layer);
        if !force && is_current(&path, &descriptor) {
            let count = read_meta(&path)?.ids.len();
            info!("{} is up to date", path.display());
            stores.push(StoreInfo {
                stream,
                layer,
                path,
                dim: layer.depth(),
                count,
                cached: true,
            });
        } else {
            todo.push((stream, path, descriptor));
        }
    }
    if todo.is_empty() {
        return Ok(ExtractSummary {
            stores,
            inference_calls: 0,
            seconds: 0.0,
        });
    }

    let backbones: Vec<Backbone> = todo
        .iter()
        .map(|(stream, _, _)| config.load_backbone(*stream))
        .collect::<Result<_, _>>()?;
    let cfg = EncodingConfig::new(plan.epsilon)?;
    let calls = AtomicUsize::new(0);
    let started = Instant::now();

    let mut writers = todo
        .iter()
        .map(|(_, path, descriptor)| StoreWriter::create(path, layer.depth(), descriptor))
        .collect::<Result<Vec<_>, _>>()?;
    let mut ids: Vec<Vec<String>> = vec![Vec::new(); todo.len()];
    let mut failed: Vec<Vec<FailedImage>> = vec![Vec::new(); todo.len()];
    let mut seen_labels: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); todo.len()];

    for chunk in images.chunks(CHUNK) {
        let results: Vec<Vec<Result<Vec<f64>, String>>> = chunk
            .par_iter()
            .map(|(path, _)| {
                let input = ImageSample::open(resolve_image(plan, path))
                    .and_then(|img| preprocess(&img, &config.preprocess));
                backbones
                    .iter()
                    .map(|backbone| {
                        let input = input.as_ref().map_err(|e| e.to_string())?;
                        calls.fetch_add(1, Ordering::Relaxed);
                        let tensor = backbone.activations(layer, input).map_err(|e| e.to_string())?;
                        describe_stream(&tensor, &cfg)
                            .map(|v| v.into_values())
                            .map_err(|e| e.to_string())
                    })
                    .collect()
            })
            .collect();

        for ((path, label), per_stream) in chunk.iter().zip(results) {
            for (s, result) in per_stream.into_iter().enumerate() {
                match result {
                    Ok(values) => {
                        writers[s].append(*label as u32, &values)?;
                        ids[s].push(path.to_string());
                        seen_labels[s].insert(*label);
                    }
                    Err(error) => {
                        warn!("skipping {path} for the {} stream: {error}", todo[s].0);
                        failed[s].push(FailedImage {
                            id: path.to_string(),
                            error,
                        });
                    }
                }
            }
        }
    }

    let seconds = started.elapsed().as_secs_f64();
    let share = seconds / todo.len() as f64;
    let expected_labels: BTreeSet<usize> = images.iter().map(|(_, l)| *l).collect();
    for (s, writer) in writers.into_iter().enumerate() {
        let (stream, path, descriptor) = &todo[s];
        let header = writer.finish()?;
        if let Some(&lost) = expected_labels.difference(&seen_labels[s]).next() {
            let _ = std::fs::remove_file(path);
            return Err(ExperimentError::CategoryLost {
                stream: *stream,
                category: manifest.categories()[lost].clone(),
            });
        }
        write_json(
            &meta_path(path),
            &StoreMeta {
                descriptor: descriptor.clone(),
                ids: std::mem::take(&mut ids[s]),
                failed: std::mem::take(&mut failed[s]),
                extraction_seconds: share,
            },
        )?;
        stores.push(StoreInfo {
            stream: *stream,
            layer,
            path: path.clone(),
            dim: header.dim,
            count: header.count,
            cached: false,
        });
    }
    stores.sort_by_key(|s| plan.streams.iter().position(|&p| p == s.stream));

    Ok(ExtractSummary {
        stores,
        inference_calls: calls.into_inner(),
        seconds,
    })
}

/// Per-stream `id -> row` lookup for a set of stores.
pub(crate) type RowIndex = BTreeMap<String, usize>;

pub(crate) fn row_index(meta: &StoreMeta) -> RowIndex {
    meta.ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect()
}

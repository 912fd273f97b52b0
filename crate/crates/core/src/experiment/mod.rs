//! Orchestration: feature extraction into stores, training and evaluation,
//! the ablation families, and result reports.

mod ablate;
mod extract;
mod report;
mod train;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backbone::{BackboneError, LayerId};
use crate::classifier::{ClassifierError, TrainingConfig};
use crate::dataset::DatasetError;
use crate::features::{AggregationMethod, PipelineError, Stream, DEFAULT_EPSILON};

pub use ablate::{
    ablate_aggregation, ablate_combinations, ablate_individual, ablate_layers, run_ablation,
    Ablation, AblationOptions, COMBINATIONS,
};
pub use extract::{run_extract, store_path, ExtractSummary, FailedImage, StoreInfo, StoreMeta};
pub use report::{read_records, write_report, write_timing_table, ReportFormat};
pub use train::{load_fused, run_eval, run_train, run_train_eval, FusedSplit, TrainedSplit};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Backbone(#[from] BackboneError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("missing feature store {path}; run extract first")]
    MissingStore { path: PathBuf },
    #[error("feature store {path} was built for a different manifest, model or setting; re-run extract with --force")]
    StaleStore { path: PathBuf },
    #[error("no model for split {split} in {dir}; run train first")]
    MissingModel { split: String, dir: PathBuf },
    #[error("dimension mismatch: model trained on {train}-D features, evaluation features are {test}-D")]
    DimMismatch { train: usize, test: usize },
    #[error("{stream} extraction lost every image of category {category}")]
    CategoryLost { stream: Stream, category: String },
    #[error("split {split}: no {side} images have features in every requested stream")]
    EmptySplit { split: String, side: &'static str },
    #[error("{path}: {message}")]
    Json { path: PathBuf, message: String },
}

impl ExperimentError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| ExperimentError::Io { path, source }
    }

    /// Short machine-readable category, used by the CLI error line.
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentError::Io { .. } => "io",
            ExperimentError::Plan(_) => "plan",
            ExperimentError::Dataset(_) => "dataset",
            ExperimentError::Backbone(_) => "backbone",
            ExperimentError::Pipeline(_) => "pipeline",
            ExperimentError::Classifier(_) => "classifier",
            ExperimentError::MissingStore { .. } => "missing-store",
            ExperimentError::StaleStore { .. } => "stale-store",
            ExperimentError::MissingModel { .. } => "missing-model",
            ExperimentError::DimMismatch { .. } => "dim-mismatch",
            ExperimentError::CategoryLost { .. } => "category-lost",
            ExperimentError::EmptySplit { .. } => "empty-split",
            ExperimentError::Json { .. } => "json",
        }
    }
}

/// Everything that determines one experiment's result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// Variant name, e.g. `layers/p3`; empty for a plain run.
    pub label: String,
    /// Manifest (or split suite) of images.
    pub manifest: PathBuf,
    pub registry: Option<PathBuf>,
    pub streams: Vec<Stream>,
    pub layer: LayerId,
    pub aggregation: AggregationMethod,
    pub training: TrainingConfig,
    pub epsilon: f64,
    pub out_dir: PathBuf,
    pub store_dir: PathBuf,
}

impl ExperimentPlan {
    /// Defaults: all three streams at `p5`, concatenated, stores under `out/stores`.
    pub fn new(manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        let out_dir = out_dir.into();
        Self {
            label: String::new(),
            manifest: manifest.into(),
            registry: None,
            streams: Stream::ALL.to_vec(),
            layer: LayerId::P5,
            aggregation: AggregationMethod::Concat,
            training: TrainingConfig::default(),
            epsilon: DEFAULT_EPSILON,
            store_dir: out_dir.join("stores"),
            out_dir,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.streams.is_empty() {
            return Err(ExperimentError::Plan("stream set is empty".into()));
        }
        for (i, s) in self.streams.iter().enumerate() {
            if self.streams[..i].contains(s) {
                return Err(ExperimentError::Plan(format!("stream {s} listed twice")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ExperimentError::Plan(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        self.training.validate()?;
        Ok(())
    }

    /// Hex SHA-256 of the plan's JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("plan serializes");
        hex::encode(Sha256::digest(json))
    }

    /// Output dimension after fusion.
    pub fn feature_dim(&self) -> usize {
        let depth = self.layer.depth();
        if self.streams.len() == 1 || self.aggregation.is_elementwise() {
            depth
        } else {
            depth * self.streams.len()
        }
    }

    pub(crate) fn models_dir(&self) -> PathBuf {
        self.out_dir.join("models")
    }

    pub(crate) fn manifest_dir(&self) -> &Path {
        self.manifest.parent().unwrap_or(Path::new(""))
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    /// Total extraction time recorded in the stores used.
    pub extraction_s: f64,
    /// Mean per split pair.
    pub training_s: f64,
    /// Mean per split pair.
    pub testing_s: f64,
    pub extraction_per_image_s: f64,
    pub testing_per_sample_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub name: String,
    pub accuracy: f64,
    pub chosen_c: f64,
    pub train_count: usize,
    pub test_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub plan: ExperimentPlan,
    pub plan_hash: String,
    pub seed: u64,
    /// Mean of the per-split accuracies.
    pub accuracy: f64,
    /// Most frequent per-split choice (smallest on ties).
    pub chosen_c: f64,
    pub splits: Vec<SplitResult>,
    pub timing: Timing,
}

impl ResultRecord {
    pub fn new(plan: ExperimentPlan, splits: Vec<SplitResult>, timing: Timing) -> Self {
        let accuracy = splits.iter().map(|s| s.accuracy).sum::<f64>() / splits.len() as f64;
        let mut cs: Vec<f64> = splits.iter().map(|s| s.chosen_c).collect();
        cs.sort_by(f64::total_cmp);
        let mut chosen_c = cs[0];
        let mut best_run = 0;
        let mut i = 0;
        while i < cs.len() {
            let j = cs[i..].iter().take_while(|&&c| c == cs[i]).count();
            if j > best_run {
                best_run = j;
                chosen_c = cs[i];
            }
            i += j;
        }
        Self {
            plan_hash: plan.hash(),
            seed: plan.training.seed,
            plan,
            accuracy,
            chosen_c,
            splits,
            timing,
        }
    }

    /// True when the echoed plan still hashes to the recorded value.
    pub fn verify_plan(&self) -> bool {
        self.plan.hash() == self.plan_hash
    }

    /// Accuracy as a percentage with one decimal, e.g. `82.3`.
    pub fn accuracy_pct(&self) -> String {
        format!("{:.1}", self.accuracy * 100.0)
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ExperimentError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| ExperimentError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(ExperimentError::io(path))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ExperimentError> {
    let text = std::fs::read_to_string(path).map_err(ExperimentError::io(path))?;
    serde_json::from_str(&text).map_err(|e| ExperimentError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(c: f64, acc: f64) -> SplitResult {
        SplitResult {
            name: "s".into(),
            accuracy: acc,
            chosen_c: c,
            train_count: 1,
            test_count: 1,
        }
    }

    #[test]
    fn record_aggregates_splits() {
        let plan = ExperimentPlan::new("m.tsv", "out");
        let r = ResultRecord::new(
            plan,
            vec![split(3.0, 0.5), split(1.0, 1.0), split(3.0, 0.75), split(1.0, 0.25)],
            Timing::default(),
        );
        assert_eq!(r.accuracy, 0.625);
        assert_eq!(r.chosen_c, 1.0);
        assert_eq!(r.accuracy_pct(), "62.5");
        assert!(r.verify_plan());

        let mut tampered = r.clone();
        tampered.plan.layer = LayerId::P3;
        assert!(!tampered.verify_plan());
    }

    #[test]
    fn single_split_mean_is_that_split() {
        let r = ResultRecord::new(
            ExperimentPlan::new("m.tsv", "out"),
            vec![split(7.0, 0.823)],
            Timing::default(),
        );
        assert_eq!(r.accuracy, 0.823);
        assert_eq!(r.accuracy_pct(), "82.3");
        assert_eq!(r.chosen_c, 7.0);
    }

    #[test]
    fn plan_validation_and_dims() {
        let mut plan = ExperimentPlan::new("m.tsv", "out");
        assert!(plan.validate().is_ok());
        assert_eq!(plan.feature_dim(), 1536);
        plan.aggregation = AggregationMethod::Mean;
        assert_eq!(plan.feature_dim(), 512);
        plan.layer = LayerId::P2;
        plan.streams = vec![Stream::Hybrid];
        assert_eq!(plan.feature_dim(), 128);
        plan.streams.clear();
        assert!(plan.validate().is_err());
        plan.streams = vec![Stream::Hybrid, Stream::Hybrid];
        assert!(plan.validate().is_err());
    }
}

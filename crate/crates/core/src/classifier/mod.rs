//! L2-regularized logistic regression with one-vs-rest multiclass training
//! and cross-validated selection of the cost parameter `C`.

mod io;
mod search;
pub mod solver;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use search::{grid_search, stratified_folds, train_ovr};
pub use solver::{minimize, train_binary, BinaryProblem, Solution};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("binary problem has examples of only one sign")]
    SingleClass,
    #[error("class {0} has no training examples")]
    EmptyClass(usize),
    #[error("solver did not converge after {iterations} iterations (gradient norm {gradient_norm:.3e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("training class {class} against the rest failed: {source}")]
    Class {
        class: usize,
        #[source]
        source: Box<ClassifierError>,
    },
    #[error("cannot build {folds} stratified folds: class {class} has only {count} examples")]
    Folds {
        class: usize,
        count: usize,
        folds: usize,
    },
    #[error("feature dimension {actual} does not match model dimension {expected}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("cannot score an empty evaluation set")]
    EmptyEvaluation,
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Feature rows with category indices `0..class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    class_count: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self, ClassifierError> {
        if features.nrows() != labels.len() {
            return Err(ClassifierError::InvalidData(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(ClassifierError::InvalidData(format!(
                "label {bad} out of range for {class_count} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::InvalidData(
                "features contain non-finite values".into(),
            ));
        }
        Ok(Self {
            features,
            labels,
            class_count,
        })
    }

    /// Builds from row vectors, which must share one length.
    pub fn from_rows(
        rows: &[Vec<f64>],
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self, ClassifierError> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(row) = rows.iter().find(|r| r.len() != dim) {
            return Err(ClassifierError::InvalidData(format!(
                "row of length {} in a dataset of dim {dim}",
                row.len()
            )));
        }
        let flat = rows.iter().flatten().copied().collect();
        let features = Array2::from_shape_vec((rows.len(), dim), flat)
            .map_err(|e| ClassifierError::Shape(e.to_string()))?;
        Self::new(features, labels, class_count)
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    /// Number of examples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.class_count];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select(ndarray::Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub c_grid: Vec<f64>,
    pub cv_folds: usize,
    /// Relative gradient-norm stopping threshold.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub fit_bias: bool,
    /// Seed for the stratified fold shuffle.
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            c_grid: (1..=50).map(f64::from).collect(),
            cv_folds: 5,
            tolerance: 1e-8,
            max_iterations: 1000,
            fit_bias: true,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ClassifierError> {
        if self.c_grid.is_empty() {
            return Err(ClassifierError::InvalidConfig("C grid is empty".into()));
        }
        if let Some(c) = self.c_grid.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(ClassifierError::InvalidConfig(format!(
                "C grid values must be positive, got {c}"
            )));
        }
        if self.cv_folds < 2 {
            return Err(ClassifierError::InvalidConfig(format!(
                "need at least 2 folds, got {}",
                self.cv_folds
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(ClassifierError::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

/// Parses a `C` grid such as `1..50`, `0.1,1,10` or `1..5,10`. A range
/// `a..b` covers the integers from `a` to `b` inclusive.
pub fn parse_c_grid(text: &str) -> Result<Vec<f64>, ClassifierError> {
    let bad = |part: &str| ClassifierError::InvalidConfig(format!("bad C grid entry '{part}'"));
    let mut grid = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u32 = a.trim().parse().map_err(|_| bad(part))?;
            let b: u32 = b.trim().parse().map_err(|_| bad(part))?;
            if a > b {
                return Err(bad(part));
            }
            grid.extend((a..=b).map(f64::from));
        } else {
            grid.push(part.parse().map_err(|_| bad(part))?);
        }
    }
    if grid.is_empty() {
        return Err(ClassifierError::InvalidConfig("C grid is empty".into()));
    }
    Ok(grid)
}

/// Cross-validation accuracies for one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub c: f64,
    pub fold_accuracy: Vec<f64>,
}

impl CvRow {
    pub fn mean_accuracy(&self) -> f64 {
        self.fold_accuracy.iter().sum::<f64>() / self.fold_accuracy.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CvTable {
    pub seed: u64,
    pub folds: usize,
    pub rows: Vec<CvRow>,
}

/// One weight vector per class; row `k` scores class `k` against the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    weights: Array2<f64>,
    chosen_c: f64,
    dim: usize,
    fit_bias: bool,
    cv: CvTable,
}

impl TrainedModel {
    pub fn new(
        weights: Array2<f64>,
        chosen_c: f64,
        fit_bias: bool,
        cv: CvTable,
    ) -> Result<Self, ClassifierError> {
        let dim = weights
            .ncols()
            .checked_sub(usize::from(fit_bias))
            .ok_or_else(|| ClassifierError::Shape("weights have no columns".into()))?;
        if weights.nrows() < 2 {
            return Err(ClassifierError::Shape(format!(
                "need at least two classes, got {}",
                weights.nrows()
            )));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(ClassifierError::InvalidData(
                "model weights contain non-finite values".into(),
            ));
        }
        Ok(Self {
            weights,
            chosen_c,
            dim,
            fit_bias,
            cv,
        })
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn chosen_c(&self) -> f64 {
        self.chosen_c
    }

    pub fn class_count(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fit_bias(&self) -> bool {
        self.fit_bias
    }

    pub fn cv_table(&self) -> &CvTable {
        &self.cv
    }

    /// Per-class decision values `w_k . [x, 1]`.
    pub fn decision_values(&self, x: ArrayView1<f64>) -> Result<Vec<f64>, ClassifierError> {
        if x.len() != self.dim {
            return Err(ClassifierError::DimMismatch {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(self
            .weights
            .rows()
            .into_iter()
            .map(|w| {
                let score = w.slice(ndarray::s![..self.dim]).dot(&x);
                if self.fit_bias {
                    score + w[self.dim]
                } else {
                    score
                }
            })
            .collect())
    }

    /// Index of the highest decision value; ties go to the lowest index.
    pub fn predict(&self, x: ArrayView1<f64>) -> Result<usize, ClassifierError> {
        let scores = self.decision_values(x)?;
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate().skip(1) {
            if s > scores[best] {
                best = k;
            }
        }
        Ok(best)
    }

    pub fn predict_all(&self, data: &LabeledDataset) -> Result<Vec<usize>, ClassifierError> {
        data.features()
            .rows()
            .into_iter()
            .map(|row| self.predict(row))
            .collect()
    }

    /// Fraction of correctly classified rows.
    pub fn score(&self, data: &LabeledDataset) -> Result<f64, ClassifierError> {
        if data.is_empty() {
            return Err(ClassifierError::EmptyEvaluation);
        }
        let predictions = self.predict_all(data)?;
        let correct = predictions
            .iter()
            .zip(data.labels())
            .filter(|(p, l)| p == l)
            .count();
        Ok(correct as f64 / data.len() as f64)
    }
}

//! Scene image representation from foreground, background and hybrid deep
//! features, classified with L2-regularized logistic regression.
//!
//! The crate is organised by stage:
//!
//! - [`features`]: global average pooling, encoding, normalization and
//!   aggregation of per-stream activations.
//! - [`backbone`]: ONNX VGG-16 loading, image preprocessing and pooling-layer
//!   extraction (plus mock backbones for tests).
//! - [`classifier`]: one-vs-rest logistic regression with cross-validated `C`.
//! - [`dataset`]: manifests, split protocols and the binary feature store.
//! - [`experiment`]: extraction/training/evaluation runs, ablations and reports.

pub mod backbone;
pub mod classifier;
pub mod dataset;
pub mod experiment;
pub mod features;

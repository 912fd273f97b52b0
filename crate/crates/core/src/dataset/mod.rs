//! Sample manifests, split protocols, and the on-disk feature store.

mod manifest;
mod protocol;
mod store;
mod suite;

use std::path::PathBuf;

use thiserror::Error;

pub use manifest::{parse_manifest, ManifestRecord, SampleManifest};
pub use protocol::{validate_protocol, Protocol, ProtocolReport, Violation};
pub use store::{
    read_store, write_store, FeatureRows, StoreHeader, StoreReader, StoreWriter, STORE_MAGIC,
    STORE_VERSION,
};
pub use suite::{SplitPair, SplitSuite};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("manifest line {line}: duplicate path {path} in split {split} (first seen on line {first})")]
    Duplicate {
        line: usize,
        first: usize,
        path: String,
        split: String,
    },
    #[error("manifest line {line}: {path} is listed under both {first} and {second}")]
    ConflictingCategory {
        line: usize,
        path: String,
        first: String,
        second: String,
    },
    #[error("manifest has no records")]
    EmptyManifest,
    #[error("split suite: {0}")]
    Suite(String),
    #[error("feature store {path}: {message}")]
    Store { path: PathBuf, message: String },
    #[error("feature store {path}: truncated")]
    Truncated { path: PathBuf },
    #[error("feature store: row has dim {actual}, store dim is {expected}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("feature store: non-finite value in row {row}")]
    NonFinite { row: usize },
}

impl DatasetError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| DatasetError::Io { path, source }
    }
}

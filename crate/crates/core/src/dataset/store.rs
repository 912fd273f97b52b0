//! Binary container of labelled feature vectors.
//!
//! ```text
//! "SFV1" | version u32 | dim u32 | count u32 | descriptor_len u32 | descriptor UTF-8
//! count x (label u32 | dim x f32)
//! ```
//!
//! All integers and floats are little-endian. Vectors are held as `f64` in
//! memory and quantized to `f32` on disk.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::DatasetError;
use crate::classifier::LabeledDataset;

pub const STORE_MAGIC: [u8; 4] = *b"SFV1";
pub const STORE_VERSION: u32 = 1;

const COUNT_OFFSET: u64 = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreHeader {
    pub dim: usize,
    pub count: usize,
    /// Free-form description of what the vectors are (stream, layer, source).
    pub descriptor: String,
}

impl StoreHeader {
    fn encoded_len(&self) -> u64 {
        20 + self.descriptor.len() as u64
    }

    fn row_len(&self) -> u64 {
        4 + 4 * self.dim as u64
    }
}

/// Append-only writer. Rows go to `<path>.partial`, which is renamed over
/// `path` by [`StoreWriter::finish`], so an interrupted write never leaves a
/// file that looks complete.
pub struct StoreWriter {
    path: PathBuf,
    partial: PathBuf,
    out: BufWriter<File>,
    dim: usize,
    count: usize,
}

impl StoreWriter {
    pub fn create(
        path: impl AsRef<Path>,
        dim: usize,
        descriptor: &str,
    ) -> Result<Self, DatasetError> {
        let path = path.as_ref().to_path_buf();
        let store_err = |message: String| DatasetError::Store {
            path: path.clone(),
            message,
        };
        let dim32 = u32::try_from(dim).map_err(|_| store_err(format!("dim {dim} exceeds u32")))?;
        if dim == 0 {
            return Err(store_err("dim must be positive".into()));
        }
        let desc_len = u32::try_from(descriptor.len())
            .map_err(|_| store_err("descriptor too long".into()))?;

        let mut partial = path.clone().into_os_string();
        partial.push(".partial");
        let partial = PathBuf::from(partial);
        let file = File::create(&partial).map_err(DatasetError::io(&partial))?;
        let mut out = BufWriter::new(file);
        let io = DatasetError::io(&partial);
        (|| {
            out.write_all(&STORE_MAGIC)?;
            out.write_all(&STORE_VERSION.to_le_bytes())?;
            out.write_all(&dim32.to_le_bytes())?;
            out.write_all(&0u32.to_le_bytes())?;
            out.write_all(&desc_len.to_le_bytes())?;
            out.write_all(descriptor.as_bytes())
        })()
        .map_err(io)?;
        Ok(Self {
            path,
            partial,
            out,
            dim,
            count: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn append(&mut self, label: u32, values: &[f64]) -> Result<(), DatasetError> {
        if values.len() != self.dim {
            return Err(DatasetError::DimMismatch {
                expected: self.dim,
                actual: values.len(),
            });
        }
        let quantized: Vec<f32> = values.iter().map(|&v| v as f32).collect();
        if quantized.iter().any(|v| !v.is_finite()) {
            return Err(DatasetError::NonFinite { row: self.count });
        }
        if self.count == u32::MAX as usize {
            return Err(DatasetError::Store {
                path: self.path.clone(),
                message: "row count exceeds u32".into(),
            });
        }
        let io = DatasetError::io(&self.partial);
        self.out.write_all(&label.to_le_bytes()).map_err(io)?;
        for v in quantized {
            self.out
                .write_all(&v.to_le_bytes())
                .map_err(DatasetError::io(&self.partial))?;
        }
        self.count += 1;
        Ok(())
    }

    /// Patches the row count into the header and moves the file into place.
    pub fn finish(self) -> Result<StoreHeader, DatasetError> {
        let Self {
            path,
            partial,
            out,
            dim,
            count,
        } = self;
        let io = || DatasetError::io(&partial);
        let mut file = out.into_inner().map_err(|e| io()(e.into_error()))?;
        file.seek(SeekFrom::Start(COUNT_OFFSET)).map_err(io())?;
        file.write_all(&(count as u32).to_le_bytes()).map_err(io())?;
        file.sync_all().map_err(io())?;
        drop(file);
        std::fs::rename(&partial, &path).map_err(DatasetError::io(&path))?;
        let header = read_header(&path)?;
        debug_assert_eq!((header.dim, header.count), (dim, count));
        Ok(header)
    }
}

/// Writes all rows in one go.
pub fn write_store<'a>(
    path: impl AsRef<Path>,
    dim: usize,
    descriptor: &str,
    rows: impl IntoIterator<Item = (u32, &'a [f64])>,
) -> Result<StoreHeader, DatasetError> {
    let mut writer = StoreWriter::create(path, dim, descriptor)?;
    for (label, values) in rows {
        writer.append(label, values)?;
    }
    writer.finish()
}

/// Sequential reader over a validated store.
pub struct StoreReader {
    path: PathBuf,
    header: StoreHeader,
    input: BufReader<File>,
    read: usize,
}

fn parse_header(path: &Path, input: &mut impl Read) -> Result<StoreHeader, DatasetError> {
    let store_err = |message: &str| DatasetError::Store {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let mut fixed = [0u8; 20];
    input.read_exact(&mut fixed).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => DatasetError::Truncated {
            path: path.to_path_buf(),
        },
        _ => DatasetError::io(path)(e),
    })?;
    if fixed[..4] != STORE_MAGIC {
        return Err(store_err("bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(fixed[i..i + 4].try_into().unwrap()) as usize;
    if word(4) != STORE_VERSION as usize {
        return Err(store_err(&format!("unsupported version {}", word(4))));
    }
    let (dim, count, desc_len) = (word(8), word(12), word(16));
    if dim == 0 {
        return Err(store_err("dim is zero"));
    }
    let mut desc = vec![0u8; desc_len];
    input.read_exact(&mut desc).map_err(|_| DatasetError::Truncated {
        path: path.to_path_buf(),
    })?;
    let descriptor =
        String::from_utf8(desc).map_err(|_| store_err("descriptor is not UTF-8"))?;
    Ok(StoreHeader {
        dim,
        count,
        descriptor,
    })
}

fn read_header(path: &Path) -> Result<StoreHeader, DatasetError> {
    let mut file = File::open(path).map_err(DatasetError::io(path))?;
    parse_header(path, &mut file)
}

impl StoreReader {
    /// Opens a store and checks that the file length matches the header.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref().to_path_buf();
        let file = File::open(&path).map_err(DatasetError::io(&path))?;
        let len = file.metadata().map_err(DatasetError::io(&path))?.len();
        let mut input = BufReader::new(file);
        let header = parse_header(&path, &mut input)?;
        let expected = header.encoded_len() + header.count as u64 * header.row_len();
        if len < expected {
            return Err(DatasetError::Truncated { path });
        }
        if len > expected {
            return Err(DatasetError::Store {
                path,
                message: format!(
                    "{} trailing bytes beyond the {} rows declared in the header",
                    len - expected,
                    header.count
                ),
            });
        }
        Ok(Self {
            path,
            header,
            input,
            read: 0,
        })
    }

    pub fn header(&self) -> &StoreHeader {
        &self.header
    }
}

impl Iterator for StoreReader {
    type Item = Result<(u32, Vec<f64>), DatasetError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.read == self.header.count {
            return None;
        }
        let mut row = vec![0u8; self.header.row_len() as usize];
        if let Err(e) = self.input.read_exact(&mut row) {
            self.read = self.header.count;
            return Some(Err(match e.kind() {
                std::io::ErrorKind::UnexpectedEof => DatasetError::Truncated {
                    path: self.path.clone(),
                },
                _ => DatasetError::io(&self.path)(e),
            }));
        }
        let index = self.read;
        self.read += 1;
        let label = u32::from_le_bytes(row[..4].try_into().unwrap());
        let values: Vec<f64> = row[4..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Some(Err(DatasetError::NonFinite { row: index }));
        }
        Some(Ok((label, values)))
    }
}

/// Every row of a store, upcast to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRows {
    pub header: StoreHeader,
    pub labels: Vec<u32>,
    pub features: Array2<f64>,
}

impl FeatureRows {
    pub fn into_dataset(self, class_count: usize) -> Result<LabeledDataset, crate::classifier::ClassifierError> {
        let labels = self.labels.into_iter().map(|l| l as usize).collect();
        LabeledDataset::new(self.features, labels, class_count)
    }
}

pub fn read_store(path: impl AsRef<Path>) -> Result<FeatureRows, DatasetError> {
    let reader = StoreReader::open(path)?;
    let header = reader.header().clone();
    let mut labels = Vec::with_capacity(header.count);
    let mut flat = Vec::with_capacity(header.count * header.dim);
    for row in reader {
        let (label, values) = row?;
        labels.push(label);
        flat.extend(values);
    }
    let features = Array2::from_shape_vec((header.count, header.dim), flat)
        .expect("row lengths validated by the reader");
    Ok(FeatureRows {
        header,
        labels,
        features,
    })
}

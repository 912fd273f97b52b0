//! Versioned little-endian model file.
//!
//! ```text
//! "SFLR" | version u32 | K u32 | dim u32 | fit_bias u8 | chosen_c f64
//! K x (dim + fit_bias) f64 weights, row-major
//! seed u64 | folds u32 | rows u32 | rows x (c f64, folds x accuracy f64)
//! ```

use std::io::{Read, Write};

use ndarray::Array2;

use super::{ClassifierError, CvRow, CvTable, TrainedModel};

pub const MODEL_MAGIC: [u8; 4] = *b"SFLR";
pub const MODEL_VERSION: u32 = 1;

pub fn write_model<W: Write>(model: &TrainedModel, mut out: W) -> Result<(), ClassifierError> {
    let to_u32 = |n: usize, what: &str| {
        u32::try_from(n).map_err(|_| ClassifierError::Format(format!("{what} {n} exceeds u32")))
    };
    out.write_all(&MODEL_MAGIC)?;
    out.write_all(&MODEL_VERSION.to_le_bytes())?;
    out.write_all(&to_u32(model.class_count(), "class count")?.to_le_bytes())?;
    out.write_all(&to_u32(model.dim(), "dim")?.to_le_bytes())?;
    out.write_all(&[u8::from(model.fit_bias())])?;
    out.write_all(&model.chosen_c().to_le_bytes())?;
    for w in model.weights().iter() {
        out.write_all(&w.to_le_bytes())?;
    }
    let cv = model.cv_table();
    out.write_all(&cv.seed.to_le_bytes())?;
    out.write_all(&to_u32(cv.folds, "fold count")?.to_le_bytes())?;
    out.write_all(&to_u32(cv.rows.len(), "CV row count")?.to_le_bytes())?;
    for row in &cv.rows {
        if row.fold_accuracy.len() != cv.folds {
            return Err(ClassifierError::Format(format!(
                "CV row for C={} has {} folds, table declares {}",
                row.c,
                row.fold_accuracy.len(),
                cv.folds
            )));
        }
        out.write_all(&row.c.to_le_bytes())?;
        for a in &row.fold_accuracy {
            out.write_all(&a.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], ClassifierError> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => ClassifierError::Format("truncated".into()),
            _ => ClassifierError::Io(e),
        })?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<usize, ClassifierError> {
        Ok(u32::from_le_bytes(self.bytes()?) as usize)
    }

    fn f64(&mut self) -> Result<f64, ClassifierError> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
}

pub fn read_model<R: Read>(input: R) -> Result<TrainedModel, ClassifierError> {
    let mut r = Reader { inner: input };
    if r.bytes::<4>()? != MODEL_MAGIC {
        return Err(ClassifierError::Format("bad magic".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION as usize {
        return Err(ClassifierError::Format(format!(
            "unsupported version {version}"
        )));
    }
    let k = r.u32()?;
    let dim = r.u32()?;
    let fit_bias = match r.bytes::<1>()?[0] {
        0 => false,
        1 => true,
        other => {
            return Err(ClassifierError::Format(format!(
                "invalid bias flag {other}"
            )))
        }
    };
    let chosen_c = r.f64()?;
    let cols = dim + usize::from(fit_bias);
    let weights = (0..k * cols).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
    let weights = Array2::from_shape_vec((k, cols), weights)
        .map_err(|e| ClassifierError::Format(e.to_string()))?;

    let seed = u64::from_le_bytes(r.bytes()?);
    let folds = r.u32()?;
    let n_rows = r.u32()?;
    let rows = (0..n_rows)
        .map(|_| {
            let c = r.f64()?;
            let fold_accuracy = (0..folds).map(|_| r.f64()).collect::<Result<_, _>>()?;
            Ok(CvRow { c, fold_accuracy })
        })
        .collect::<Result<Vec<_>, ClassifierError>>()?;

    let mut trailing = [0u8; 1];
    if r.inner.read(&mut trailing)? != 0 {
        return Err(ClassifierError::Format("trailing bytes".into()));
    }
    TrainedModel::new(weights, chosen_c, fit_bias, CvTable { seed, folds, rows })
}

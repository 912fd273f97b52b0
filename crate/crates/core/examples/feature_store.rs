//! Writes a feature store, inspects its header and reads it back.
//!
//! ```text
//! cargo run --example feature_store [path.sfv]
//! ```
//!
//! With a path argument an existing store is summarized instead.

use scenefuse::dataset::{read_store, StoreReader, StoreWriter};

fn summarize(path: &std::path::Path) -> Result<(), Box<dyn std::error::Error>> {
    let reader = StoreReader::open(path)?;
    let header = reader.header().clone();
    println!("{}: {} rows x {} dims", path.display(), header.count, header.dim);
    println!("descriptor: {}", header.descriptor);
    let rows = read_store(path)?;
    let mut per_label = std::collections::BTreeMap::new();
    for l in &rows.labels {
        *per_label.entry(*l).or_insert(0usize) += 1;
    }
    println!("rows per label: {per_label:?}");
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    if let Some(path) = std::env::args().nth(1) {
        return summarize(path.as_ref());
    }

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("demo.sfv");
    let mut writer = StoreWriter::create(&path, 4, "demo vectors")?;
    for i in 0..6u32 {
        let x = f64::from(i);
        writer.append(i % 3, &[x, x / 3.0, -x, 0.1])?;
    }
    writer.finish()?;
    summarize(&path)?;

    let rows = read_store(&path)?;
    // values are kept at single precision
    println!("row 1 reads back as {:?}", rows.features.row(1).to_vec());
    Ok(())
}

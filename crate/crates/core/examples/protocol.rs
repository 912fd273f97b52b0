//! Checks a manifest against the MIT-67 or SUN-397 split protocol.
//!
//! ```text
//! cargo run --example protocol [manifest.tsv] [mit67|sun397|free]
//! ```
//!
//! Without arguments a MIT-67-shaped manifest is generated, checked, then
//! damaged by dropping one training image.

use scenefuse::dataset::{
    parse_manifest, validate_protocol, ManifestRecord, Protocol, SampleManifest,
};

fn print_report(manifest: &SampleManifest, protocol: Protocol) {
    let report = validate_protocol(manifest, protocol);
    println!(
        "{protocol}: {} categories, {} pairs, {} slots, {} violations",
        report.categories,
        report.pairs,
        report.total_slots,
        report.violations.len()
    );
    for v in report.violations.iter().take(10) {
        println!("  {v}");
    }
}

fn mit67_shaped() -> Vec<ManifestRecord> {
    let mut records = Vec::new();
    for c in 0..67 {
        for (split, n) in [("train", 80), ("test", 20)] {
            for i in 0..n {
                records.push(ManifestRecord {
                    path: format!("scene{c:02}/{split}_{i:03}.jpg"),
                    category: format!("scene{c:02}"),
                    split: split.into(),
                    line: records.len() + 1,
                });
            }
        }
    }
    records
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    if let Some(path) = args.next() {
        let protocol: Protocol = args.next().as_deref().unwrap_or("free").parse()?;
        print_report(&parse_manifest(path)?, protocol);
        return Ok(());
    }

    let mut records = mit67_shaped();
    print_report(&SampleManifest::from_records(records.clone())?, Protocol::Mit67);

    records.remove(5);
    print_report(&SampleManifest::from_records(records)?, Protocol::Mit67);
    Ok(())
}

//! Extract, train, evaluate and run the stream-combination ablation on mock
//! backbones and generated images.
//!
//! ```text
//! cargo run --release --example ablation [out-dir]
//! ```
//!
//! Leaves the stores, models, results and reports in `out-dir` (a temporary
//! directory by default).

use std::path::Path;

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenefuse::backbone::mock::write_mock_registry;
use scenefuse::experiment::{
    ablate_combinations, run_eval, run_extract, run_train, write_report, write_timing_table,
    AblationOptions, ExperimentPlan, ReportFormat,
};

/// Four "scene" classes of striped images with a class-specific palette.
fn write_images(dir: &Path) -> std::io::Result<std::path::PathBuf> {
    let palettes = [
        ([200, 180, 120], [60, 90, 160]),
        ([30, 120, 40], [170, 200, 90]),
        ([90, 90, 90], [230, 230, 230]),
        ([150, 40, 30], [240, 160, 60]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut manifest = String::new();
    for (c, (a, b)) in palettes.iter().enumerate() {
        let class = format!("scene{c}");
        std::fs::create_dir_all(dir.join(&class))?;
        for i in 0..8 {
            let period = rng.gen_range(6..14);
            let img = RgbImage::from_fn(96, 72, |x, y| {
                let base = if (x + y * (c as u32 + 1)) / period % 2 == 0 { a } else { b };
                Rgb(base.map(|v: u8| v.saturating_add(rng.gen_range(0..12))))
            });
            let rel = format!("{class}/{i}.png");
            img.save(dir.join(&rel)).map_err(std::io::Error::other)?;
            let split = if i < 5 { "train" } else { "test" };
            manifest.push_str(&format!("{rel}\t{class}\t{split}\n"));
        }
    }
    let path = dir.join("manifest.tsv");
    std::fs::write(&path, manifest)?;
    Ok(path)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::init();
    let tmp = tempfile::tempdir()?;
    let root = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| tmp.path().to_path_buf());

    let manifest = write_images(&root.join("images"))?;
    let registry = write_mock_registry(&root.join("models"), 11)?;
    let mut plan = ExperimentPlan::new(manifest, root.join("out"));
    plan.registry = Some(registry);
    plan.training.cv_folds = 5;

    let summary = run_extract(&plan, false)?;
    println!(
        "extracted {} stores with {} inference calls in {:.1}s",
        summary.stores.len(),
        summary.inference_calls,
        summary.seconds
    );
    run_train(&plan)?;
    let record = run_eval(&plan)?;
    println!("[F,B,H] concat: {}% (C = {})", record.accuracy_pct(), record.chosen_c);

    let records = ablate_combinations(&plan, AblationOptions::default())?;
    println!("\ncombination ablation:");
    let mut stdout = std::io::stdout().lock();
    write_report(&records, ReportFormat::Csv, false, &mut stdout)?;
    println!("\ntimings:");
    write_timing_table(&records, &mut stdout)?;
    Ok(())
}

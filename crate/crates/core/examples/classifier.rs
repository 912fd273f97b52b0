//! Cross-validated C selection and one-vs-rest training on toy clusters.
//!
//! ```text
//! cargo run --release --example classifier
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenefuse::classifier::{grid_search, read_model, write_model, LabeledDataset, TrainingConfig};

fn clusters(rng: &mut ChaCha8Rng, per_class: usize) -> LabeledDataset {
    let centers = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0], [1.0, 1.0, 1.0]];
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..per_class {
            rows.push(c.iter().map(|v| v + rng.gen_range(-0.8..0.8)).collect());
            labels.push(k);
        }
    }
    LabeledDataset::from_rows(&rows, labels, centers.len()).expect("rows share a length")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let train = clusters(&mut rng, 25);
    let test = clusters(&mut rng, 10);

    let cfg = TrainingConfig {
        c_grid: vec![0.01, 0.1, 1.0, 10.0, 50.0],
        ..TrainingConfig::default()
    };
    let model = grid_search(&train, &cfg)?;

    println!("{:>8}  mean CV accuracy", "C");
    for row in &model.cv_table().rows {
        println!("{:>8}  {:.3}", row.c, row.mean_accuracy());
    }
    println!("chosen C = {}", model.chosen_c());
    println!("test accuracy = {:.1}%", model.score(&test)? * 100.0);

    let mut bytes = Vec::new();
    write_model(&model, &mut bytes)?;
    let restored = read_model(&bytes[..])?;
    assert_eq!(restored.predict_all(&test)?, model.predict_all(&test)?);
    println!("model file: {} bytes, reloads with identical predictions", bytes.len());
    Ok(())
}

//! Loads a backbone registry and extracts the fused descriptor of one image.
//!
//! ```text
//! cargo run --release --example mock_backbone [registry.toml] [image]
//! ```
//!
//! Without arguments three random-weight mock graphs are written to a
//! temporary directory and a generated gradient image is used.

use image::{Rgb, RgbImage};
use scenefuse::backbone::mock::write_mock_registry;
use scenefuse::backbone::{load_registry, preprocess, ImageSample, LayerId};
use scenefuse::features::{extract_proposed, EncodingConfig, Stream};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let tmp = tempfile::tempdir()?;
    let registry_path = match args.next() {
        Some(path) => path.into(),
        None => write_mock_registry(tmp.path(), 42)?,
    };
    let sample = match args.next() {
        Some(path) => ImageSample::open(path)?,
        None => {
            let img = RgbImage::from_fn(320, 240, |x, y| Rgb([(x / 2) as u8, (y / 2) as u8, 128]));
            ImageSample::from_rgb("gradient", img)?
        }
    };

    let registry = load_registry(&registry_path)?;
    println!("registry: {}", registry_path.display());

    let input = preprocess(&sample, registry.preprocess_spec())?;
    for layer in LayerId::ALL {
        let t = registry.activations(Stream::Foreground, layer, &input)?;
        println!("{layer} ({}): {:?}", layer.canonical_name(), t.shape());
    }

    let feature = extract_proposed(&sample, &registry.at_layer(LayerId::P5), &EncodingConfig::default())?;
    println!(
        "{}: {}-D from {:?}",
        sample.id(),
        feature.dim(),
        feature.composition()
    );
    for (stream, part) in feature.split().expect("concatenated") {
        let active = part.values().iter().filter(|v| **v > 0.0).count();
        println!("  {stream}: {active} of {} entries active", part.dim());
    }
    Ok(())
}

//! Per-stream descriptors and their fusion, on synthetic activations.
//!
//! ```text
//! cargo run --example pipeline
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenefuse::features::{
    aggregate, describe_stream, encode, gap, AggregationMethod, EncodingConfig, FeatureTensor,
    Stream,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cfg = EncodingConfig::default();

    // a 7x7x512 tensor, shaped like the last pooling layer
    let tensors: Vec<(Stream, FeatureTensor)> = Stream::ALL
        .iter()
        .map(|&s| {
            let t = FeatureTensor::from_fn(7, 7, 512, |_, _| rng.gen_range(-1.0f64..3.0).max(0.0));
            Ok((s, t?))
        })
        .collect::<Result<_, Box<dyn std::error::Error>>>()?;

    let (_, first) = &tensors[0];
    let pooled = gap(first);
    let encoded = encode(&pooled)?;
    let kept = encoded.values().iter().filter(|v| **v > 0.0).count();
    println!("gap: {} values, encoding keeps {kept} above the mean", pooled.dim());

    let described = tensors
        .iter()
        .map(|(s, t)| Ok((*s, describe_stream(t, &cfg)?)))
        .collect::<Result<Vec<_>, scenefuse::features::PipelineError>>()?;
    for (s, v) in &described {
        println!("{s:>10}: dim {}, norm {:.6}", v.dim(), v.norm());
    }

    for method in AggregationMethod::ALL {
        let fused = aggregate(&described, method)?;
        println!("{method:>7}: {}-D", fused.dim());
    }

    let concat = aggregate(&described, AggregationMethod::Concat)?;
    let parts = concat.split().expect("concatenation splits");
    assert!(parts.iter().zip(&described).all(|(a, b)| a.1 == b.1));
    println!("concatenation splits back into its {} streams", parts.len());
    Ok(())
}

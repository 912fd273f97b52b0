mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenefuse::features::{
    aggregate, describe_stream, encode, gap, l2_normalize, AggregationMethod, EncodingConfig,
    FeatureTensor, FeatureVector, Stage, Stream,
};

fn gap_vector(values: Vec<f64>) -> FeatureVector {
    FeatureVector::new(Stage::Gap, values).unwrap()
}

fn normalized(values: &[f64]) -> FeatureVector {
    let enc = encode(&gap_vector(values.to_vec())).unwrap();
    l2_normalize(&enc, &EncodingConfig::default()).unwrap()
}

fn non_negative(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..100.0, len)
}

proptest! {
    #[test]
    fn encode_is_scale_invariant(v in non_negative(1..64), s in 0.01f64..1000.0) {
        let a = encode(&gap_vector(v.clone())).unwrap();
        let b = encode(&gap_vector(v.iter().map(|x| x * s).collect())).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn encode_keeps_exactly_the_above_mean_entries(v in non_negative(1..64)) {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let max = v.iter().cloned().fold(0.0, f64::max);
        let out = encode(&gap_vector(v.clone())).unwrap();
        for (x, y) in v.iter().zip(out.values()) {
            prop_assert!((0.0..=1.0).contains(y));
            if *x < mean || max == 0.0 {
                prop_assert_eq!(*y, 0.0);
            } else {
                prop_assert!(*y > 0.0 || *x == 0.0);
            }
        }
    }

    #[test]
    fn encode_commutes_with_permutation(v in non_negative(2..32), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..v.len()).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let permuted: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
        let a = encode(&gap_vector(v)).unwrap();
        let b = encode(&gap_vector(permuted)).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(b.values()[k], a.values()[i]);
        }
    }

    #[test]
    fn describe_commutes_with_map_permutation(seed in any::<u64>(), d in 2usize..24) {
        use rand::seq::SliceRandom;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = common::random_tensor_values(&mut rng, 3 * 3 * d);
        let mut perm: Vec<usize> = (0..d).collect();
        perm.shuffle(&mut rng);
        let t = FeatureTensor::new(3, 3, d, values.clone()).unwrap();
        let p = FeatureTensor::from_fn(3, 3, d, |j, i| values[perm[j] * 9 + i]).unwrap();
        let cfg = EncodingConfig::default();
        let a = describe_stream(&t, &cfg).unwrap();
        let b = describe_stream(&p, &cfg).unwrap();
        let pooled = gap(&t);
        let pooled_p = gap(&p);
        for (k, &j) in perm.iter().enumerate() {
            prop_assert_eq!(pooled_p.values()[k], pooled.values()[j]);
            prop_assert!((b.values()[k] - a.values()[j]).abs() <= 1e-15);
        }
    }

    #[test]
    fn normalized_norm_is_below_one(v in non_negative(1..64)) {
        let n = normalized(&v).norm();
        prop_assert!(n < 1.0);
        if v.iter().any(|&x| x > 0.0) {
            prop_assert!(n > 1.0 - 1e-6);
        }
    }

    #[test]
    fn concat_split_round_trips(
        f in non_negative(8..9), b in non_negative(8..9), h in non_negative(8..9)
    ) {
        let parts = vec![
            (Stream::Foreground, normalized(&f)),
            (Stream::Background, normalized(&b)),
            (Stream::Hybrid, normalized(&h)),
        ];
        let fused = aggregate(&parts, AggregationMethod::Concat).unwrap();
        prop_assert_eq!(fused.dim(), 24);
        let back = fused.split().unwrap();
        for ((s0, v0), (s1, v1)) in parts.iter().zip(&back) {
            prop_assert_eq!(s0, s1);
            prop_assert_eq!(v0.values(), v1.values());
        }
    }

    #[test]
    fn elementwise_methods_bound_each_other(
        f in non_negative(6..7), b in non_negative(6..7), h in non_negative(6..7)
    ) {
        let parts = vec![
            (Stream::Foreground, normalized(&f)),
            (Stream::Background, normalized(&b)),
            (Stream::Hybrid, normalized(&h)),
        ];
        let min = aggregate(&parts, AggregationMethod::Min).unwrap();
        let max = aggregate(&parts, AggregationMethod::Max).unwrap();
        let mean = aggregate(&parts, AggregationMethod::Mean).unwrap();
        for i in 0..6 {
            prop_assert!(min.values()[i] <= mean.values()[i] + 1e-15);
            prop_assert!(mean.values()[i] <= max.values()[i] + 1e-15);
        }
    }
}

#[test]
fn gap_of_constant_maps() {
    let t = FeatureTensor::from_fn(3, 4, 5, |j, _| j as f64).unwrap();
    assert_eq!(gap(&t).values(), &[0.0, 1.0, 2.0, 3.0, 4.0]);
}

#[test]
fn describe_matches_naive_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = EncodingConfig::default();
    for (h, w, d) in [(1, 1, 1), (2, 3, 4), (7, 7, 64), (14, 14, 32)] {
        let values = common::random_tensor_values(&mut rng, h * w * d);
        let t = FeatureTensor::new(h, w, d, values.clone()).unwrap();
        let got = describe_stream(&t, &cfg).unwrap();
        let want = common::naive_describe(h, w, d, &values, cfg.epsilon);
        for (a, b) in got.values().iter().zip(&want) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn all_zero_tensor_describes_to_zero() {
    let t = FeatureTensor::new(2, 2, 3, vec![0.0; 12]).unwrap();
    let v = describe_stream(&t, &EncodingConfig::default()).unwrap();
    assert_eq!(v.values(), &[0.0, 0.0, 0.0]);
    assert_eq!(v.stage(), Stage::Normalized);
}

#[test]
fn stage_order_is_enforced() {
    let v = gap_vector(vec![1.0, 2.0]);
    assert!(l2_normalize(&v, &EncodingConfig::default()).is_err());
    let enc = encode(&v).unwrap();
    assert!(encode(&enc).is_err());
    assert!(aggregate(&[(Stream::Foreground, enc.clone()), (Stream::Hybrid, enc)], AggregationMethod::Concat).is_err());
}

#[test]
fn elementwise_requires_equal_dims() {
    let a = normalized(&[1.0, 2.0]);
    let b = normalized(&[1.0, 2.0, 3.0]);
    let parts = [(Stream::Foreground, a), (Stream::Background, b)];
    assert!(aggregate(&parts, AggregationMethod::Mean).is_err());
    assert_eq!(aggregate(&parts, AggregationMethod::Concat).unwrap().dim(), 5);
}

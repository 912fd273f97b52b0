#![allow(dead_code)]

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct scalar evaluation of the per-stream descriptor on a depth-major
/// tensor: per-map means, thresholding at their mean, scaling by their max,
/// then division by the norm plus `eps`.
pub fn naive_describe(h: usize, w: usize, d: usize, values: &[f64], eps: f64) -> Vec<f64> {
    let cells = h * w;
    let mut means = vec![0.0; d];
    for j in 0..d {
        let mut s = 0.0;
        for i in 0..cells {
            s += values[j * cells + i];
        }
        means[j] = s / cells as f64;
    }
    let mut avg = 0.0;
    let mut max = f64::NEG_INFINITY;
    for &m in &means {
        avg += m;
        if m > max {
            max = m;
        }
    }
    avg /= d as f64;
    let mut enc = vec![0.0; d];
    for j in 0..d {
        if means[j] >= avg && max != 0.0 {
            enc[j] = means[j] / max;
        }
    }
    let mut sq = 0.0;
    for &e in &enc {
        sq += e * e;
    }
    let norm = sq.sqrt();
    enc.iter().map(|e| e / (norm + eps)).collect()
}

/// Base colours of the synthetic classes.
pub const CLASS_COLORS: [[u8; 3]; 3] = [[220, 40, 40], [40, 200, 60], [50, 60, 230]];

/// Writes `train + test` jittered flat-colour PNGs per class and a manifest
/// listing them with relative paths. Returns the manifest path.
pub fn write_synthetic_dataset(dir: &Path, train: usize, test: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut manifest = String::from("# synthetic colour classes\n");
    for (c, base) in CLASS_COLORS.iter().enumerate() {
        let name = format!("class{c}");
        std::fs::create_dir_all(dir.join("images").join(&name)).unwrap();
        for i in 0..train + test {
            let tint: [i16; 3] = std::array::from_fn(|_| rng.gen_range(-15..=15));
            let img = RgbImage::from_fn(48, 40, |_, _| {
                let px: [u8; 3] = std::array::from_fn(|k| {
                    (base[k] as i16 + tint[k] + rng.gen_range(-4..=4)).clamp(0, 255) as u8
                });
                Rgb(px)
            });
            let rel = format!("images/{name}/{i:02}.png");
            img.save(dir.join(&rel)).unwrap();
            let split = if i < train { "train" } else { "test" };
            manifest.push_str(&format!("{rel}\t{name}\t{split}\n"));
        }
    }
    let path = dir.join("manifest.tsv");
    std::fs::write(&path, manifest).unwrap();
    path
}

pub fn random_tensor_values(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| {
            // ReLU-like: about a third of activations are exactly zero
            let v: f64 = rng.gen_range(-0.5..2.0);
            v.max(0.0)
        })
        .collect()
}

/// Objective written out term by term.
pub fn naive_objective(x: &Array2<f64>, y: &[f64], c: f64, w: &[f64]) -> f64 {
    let mut reg = 0.0;
    for v in w {
        reg += v * v;
    }
    let mut loss = 0.0;
    for (i, yi) in y.iter().enumerate() {
        let mut m = 0.0;
        for j in 0..w.len() {
            m += w[j] * x[[i, j]];
        }
        loss += (1.0 + (-yi * m).exp()).ln();
    }
    0.5 * reg + c * loss
}

/// Plain fixed-step gradient descent on the naive objective.
pub fn gradient_descent(x: &Array2<f64>, y: &[f64], c: f64) -> Vec<f64> {
    let (n, d) = x.dim();
    let frob: f64 = x.iter().map(|v| v * v).sum();
    let step = 1.0 / (1.0 + 0.25 * c * frob);
    let mut w = vec![0.0; d];
    for _ in 0..200_000 {
        let mut g = w.clone();
        for i in 0..n {
            let mut m = 0.0;
            for j in 0..d {
                m += w[j] * x[[i, j]];
            }
            let s = 1.0 / (1.0 + (y[i] * m).exp());
            for j in 0..d {
                g[j] -= c * y[i] * s * x[[i, j]];
            }
        }
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gn < 1e-11 {
            break;
        }
        for j in 0..d {
            w[j] -= step * g[j];
        }
    }
    w
}

/// Root of a continuous function with a sign change on `[lo, hi]`.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    assert!(f(lo) * f(hi) <= 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

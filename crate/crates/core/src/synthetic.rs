//! Seeded toy data: oriented-grating images and feature tables with a
//! known informative subset. Used by the demos and the test suites.

use crate::dataset::{FeatureRow, FeatureTable, ImageSample, Split};
use crate::error::{Error, Result};
use crate::numerics::{RngState, Tensor};
use crate::scalar::Scalar;

/// Class `k` of `C` is a grating at angle `kπ/C` with period 16 px on a
/// 0.5 background, plus i.i.d. Gaussian noise per pixel and channel.
pub fn grating_images<T: Scalar>(
    num_classes: usize,
    per_class: usize,
    size: (usize, usize),
    noise_std: f64,
    split: Split,
    seed: u64,
) -> Vec<ImageSample<T>> {
    let (h, w) = size;
    let mut rng = RngState::new(seed);
    let mut out = Vec::with_capacity(num_classes * per_class);
    for i in 0..per_class {
        for k in 0..num_classes {
            let theta = std::f64::consts::PI * k as f64 / num_classes as f64;
            let (s, c) = theta.sin_cos();
            let mut data = Vec::with_capacity(h * w * 3);
            for y in 0..h {
                for x in 0..w {
                    let phase = std::f64::consts::TAU * (x as f64 * c + y as f64 * s) / 16.0;
                    let mean = 0.5 + 0.35 * phase.cos();
                    for _ in 0..3 {
                        data.push(T::lit(mean + rng.normal(0.0, noise_std)));
                    }
                }
            }
            out.push(ImageSample {
                id: format!("{split}_{k}_{i}"),
                pixels: Tensor::new(&[h, w, 3], data).unwrap(),
                label: k,
                split,
            });
        }
    }
    out
}

/// Two classes decided by the sign of `x₀ + x₁` (kept at least `margin`
/// away from zero). The remaining `noise_dims` columns are independent
/// N(0, 1) draws. Neither informative column separates the classes alone.
pub fn informative_table(rows: usize, noise_dims: usize, margin: f64, seed: u64) -> Result<FeatureTable> {
    if rows < 4 {
        return Err(Error::domain("need at least 4 rows"));
    }
    let mut rng = RngState::new(seed);
    let mut table = FeatureTable::new(2 + noise_dims, 2);
    for i in 0..rows {
        let label = i % 2;
        let (x0, x1) = loop {
            let x0 = rng.uniform(-1.0, 1.0);
            let x1 = rng.uniform(-1.0, 1.0);
            let s = x0 + x1;
            if s.abs() >= margin && (s > 0.0) == (label == 1) {
                break (x0, x1);
            }
        };
        let mut features = vec![x0, x1];
        features.extend((0..noise_dims).map(|_| rng.normal(0.0, 1.0)));
        table.push(FeatureRow {
            id: format!("row{i}"),
            features,
            label,
        })?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gratings_are_labelled_and_seeded() {
        let a = grating_images::<f64>(3, 2, (8, 8), 0.1, Split::Train, 1);
        let b = grating_images::<f64>(3, 2, (8, 8), 0.1, Split::Train, 1);
        assert_eq!(a.len(), 6);
        assert_eq!(a.iter().map(|s| s.label).collect::<Vec<_>>(), [0, 1, 2, 0, 1, 2]);
        assert_eq!(a[4].pixels, b[4].pixels);
        assert_eq!(a[0].pixels.shape(), &[8, 8, 3]);
    }

    #[test]
    fn informative_labels_follow_sum() {
        let t = informative_table(50, 3, 0.1, 2).unwrap();
        assert_eq!(t.feature_dim(), 5);
        for r in t.rows() {
            assert_eq!(r.features[0] + r.features[1] > 0.0, r.label == 1);
        }
    }
}

use serde::{Deserialize, Serialize};

use super::gray_dims;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlcmParams {
    pub distances: Vec<usize>,
    /// Radians; 0 pairs a pixel with its right neighbour, π/2 with the one
    /// `d` rows below.
    pub angles: Vec<f64>,
    pub levels: usize,
    pub symmetric: bool,
    pub normalized: bool,
}

impl Default for GlcmParams {
    fn default() -> Self {
        use std::f64::consts::PI;
        Self {
            distances: vec![1],
            angles: vec![0.0, PI / 4.0, PI / 2.0, 3.0 * PI / 4.0],
            levels: 32,
            symmetric: true,
            normalized: true,
        }
    }
}

/// Statistics emitted per co-occurrence matrix, in output order.
pub const HARALICK_STATS: [&str; 5] = ["contrast", "homogeneity", "entropy", "energy", "correlation"];

impl GlcmParams {
    pub fn dim(&self) -> usize {
        self.distances.len() * self.angles.len() * HARALICK_STATS.len()
    }

    fn offset(d: usize, angle: f64) -> (isize, isize) {
        let d = d as f64;
        ((d * angle.sin()).round() as isize, (d * angle.cos()).round() as isize)
    }
}

/// Maps `[0, 1]` intensities onto `levels` equal-width bins.
pub fn quantize<T: Scalar>(gray: &Tensor<T>, levels: usize) -> Vec<usize> {
    let top = levels - 1;
    gray.data()
        .iter()
        .map(|v| {
            let q = (v.as_f64().clamp(0.0, 1.0) * levels as f64).floor() as usize;
            q.min(top)
        })
        .collect()
}

/// One `levels × levels` co-occurrence matrix per (distance, angle), distance
/// outer. Counts unless `normalized`.
pub fn glcm_matrices<T: Scalar>(gray: &Tensor<T>, p: &GlcmParams) -> Result<Vec<Vec<T>>> {
    if p.levels < 2 {
        return Err(Error::domain(format!("GLCM needs at least 2 levels, got {}", p.levels)));
    }
    let (h, w) = gray_dims(gray)?;
    if h < 2 || w < 2 {
        return Err(Error::domain(format!("{h}x{w} image too small for GLCM")));
    }
    let q = quantize(gray, p.levels);
    let n = p.levels;
    let mut out = Vec::with_capacity(p.distances.len() * p.angles.len());
    for &d in &p.distances {
        for &angle in &p.angles {
            let (dr, dc) = GlcmParams::offset(d, angle);
            let mut counts = vec![0u64; n * n];
            for r in 0..h as isize {
                let r2 = r + dr;
                if r2 < 0 || r2 >= h as isize {
                    continue;
                }
                for c in 0..w as isize {
                    let c2 = c + dc;
                    if c2 < 0 || c2 >= w as isize {
                        continue;
                    }
                    let i = q[r as usize * w + c as usize];
                    let j = q[r2 as usize * w + c2 as usize];
                    counts[i * n + j] += 1;
                    if p.symmetric {
                        counts[j * n + i] += 1;
                    }
                }
            }
            let total: u64 = counts.iter().sum();
            if total == 0 {
                return Err(Error::domain(format!(
                    "no pixel pairs at distance {d}, angle {angle} in a {h}x{w} image"
                )));
            }
            let scale = if p.normalized { 1.0 / total as f64 } else { 1.0 };
            out.push(counts.into_iter().map(|c| T::lit(c as f64 * scale)).collect());
        }
    }
    Ok(out)
}

/// Contrast, homogeneity, entropy, energy and correlation of a normalized
/// matrix. Correlation is 1 when either marginal has zero variance.
pub fn haralick_stats<T: Scalar>(p: &[T], levels: usize) -> [T; 5] {
    let mut contrast = T::zero();
    let mut homogeneity = T::zero();
    let mut entropy = T::zero();
    let mut energy = T::zero();
    let mut mu_i = T::zero();
    let mut mu_j = T::zero();
    for i in 0..levels {
        for j in 0..levels {
            let v = p[i * levels + j];
            if v == T::zero() {
                continue;
            }
            let (fi, fj) = (T::lit(i as f64), T::lit(j as f64));
            let diff = fi - fj;
            contrast += v * diff * diff;
            homogeneity += v / (T::one() + diff * diff);
            entropy -= v * v.ln();
            energy += v * v;
            mu_i += fi * v;
            mu_j += fj * v;
        }
    }
    let mut var_i = T::zero();
    let mut var_j = T::zero();
    let mut cov = T::zero();
    for i in 0..levels {
        for j in 0..levels {
            let v = p[i * levels + j];
            if v == T::zero() {
                continue;
            }
            let di = T::lit(i as f64) - mu_i;
            let dj = T::lit(j as f64) - mu_j;
            var_i += di * di * v;
            var_j += dj * dj * v;
            cov += di * dj * v;
        }
    }
    let sigma = (var_i * var_j).sqrt();
    let correlation = if sigma <= T::epsilon() { T::one() } else { cov / sigma };
    [contrast, homogeneity, entropy, energy, correlation]
}

/// Five Haralick statistics per (distance, angle) matrix.
pub fn glcm_haralick_features<T: Scalar>(gray: &Tensor<T>, p: &GlcmParams) -> Result<Vec<T>> {
    let normalized = GlcmParams {
        normalized: true,
        ..p.clone()
    };
    let mats = glcm_matrices(gray, &normalized)?;
    Ok(mats.iter().flat_map(|m| haralick_stats(m, p.levels)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_statistics() {
        let v = glcm_haralick_features(&Tensor::<f64>::filled(&[6, 6], 0.3), &GlcmParams::default()).unwrap();
        assert_eq!(v.len(), 20);
        for s in v.chunks(5) {
            assert_eq!(s, &[0.0, 1.0, 0.0, 1.0, 1.0]);
        }
    }

    #[test]
    fn checkerboard_pairs() {
        let img = Tensor::<f64>::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let p = GlcmParams {
            angles: vec![0.0],
            levels: 2,
            normalized: false,
            ..GlcmParams::default()
        };
        let m = glcm_matrices(&img, &p).unwrap();
        assert_eq!(m[0], vec![0.0, 2.0, 2.0, 0.0]);
        let s = glcm_haralick_features(&img, &p).unwrap();
        assert!((s[0] - 1.0).abs() < 1e-15);
        assert!((s[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn matrices_normalize() {
        let mut r = crate::numerics::RngState::new(1);
        let img = Tensor::<f64>::new(&[11, 9], (0..99).map(|_| r.next_f64()).collect()).unwrap();
        for m in glcm_matrices(&img, &GlcmParams::default()).unwrap() {
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_levels() {
        let p = GlcmParams {
            levels: 1,
            ..GlcmParams::default()
        };
        assert!(glcm_haralick_features(&Tensor::<f64>::zeros(&[4, 4]), &p).is_err());
    }

    #[test]
    fn quantization_top_edge() {
        let t = Tensor::<f64>::from_vec(vec![0.0, 0.49, 0.5, 1.0])
            .reshape(&[2, 2])
            .unwrap();
        assert_eq!(quantize(&t, 2), vec![0, 0, 1, 1]);
    }
}

use serde::{Deserialize, Serialize};

use super::gray_dims;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HogParams {
    pub orientations: usize,
    /// Cell size in pixels, (rows, cols).
    pub cell: (usize, usize),
    /// Block size in cells, (rows, cols).
    pub block: (usize, usize),
    /// L2-Hys clipping threshold.
    pub clip: f64,
    /// Orientations over 0–360° instead of 0–180°.
    pub signed: bool,
}

impl Default for HogParams {
    fn default() -> Self {
        Self {
            orientations: 9,
            cell: (8, 8),
            block: (2, 2),
            clip: 0.2,
            signed: false,
        }
    }
}

const NORM_EPS: f64 = 1e-12;

impl HogParams {
    fn grid(&self, h: usize, w: usize) -> Result<(usize, usize, usize, usize)> {
        if self.orientations == 0 || self.cell.0 == 0 || self.cell.1 == 0 || self.block.0 == 0 || self.block.1 == 0 {
            return Err(Error::domain("HOG orientations, cell and block sizes must be positive"));
        }
        let (cy, cx) = (h / self.cell.0, w / self.cell.1);
        if cy < self.block.0 || cx < self.block.1 {
            return Err(Error::domain(format!(
                "{h}x{w} image is smaller than one {}x{} block of {}x{} cells",
                self.block.0, self.block.1, self.cell.0, self.cell.1
            )));
        }
        Ok((cy, cx, cy - self.block.0 + 1, cx - self.block.1 + 1))
    }

    /// Descriptor length for an `h × w` image.
    pub fn dim(&self, h: usize, w: usize) -> Result<usize> {
        let (_, _, by, bx) = self.grid(h, w)?;
        Ok(by * bx * self.block.0 * self.block.1 * self.orientations)
    }
}

/// Histogram of oriented gradients with L2-Hys block normalization.
///
/// Gradients are centred differences (zero on the outermost rows/columns),
/// votes are split linearly between the two nearest orientation bins and
/// partial cells at the right/bottom edges are ignored. Output order is
/// block row, block column, cell row, cell column, bin.
pub fn hog_features<T: Scalar>(gray: &Tensor<T>, p: &HogParams) -> Result<Vec<T>> {
    let (h, w) = gray_dims(gray)?;
    let (ncy, ncx, nby, nbx) = p.grid(h, w)?;
    let img = gray.data();
    let nbins = p.orientations;
    let range = if p.signed { 360.0 } else { 180.0 };
    let bin_width = range / nbins as f64;

    let mut cells = vec![T::zero(); ncy * ncx * nbins];
    for y in 0..ncy * p.cell.0 {
        for x in 0..ncx * p.cell.1 {
            let gx = if x > 0 && x + 1 < w {
                img[y * w + x + 1] - img[y * w + x - 1]
            } else {
                T::zero()
            };
            let gy = if y > 0 && y + 1 < h {
                img[(y + 1) * w + x] - img[(y - 1) * w + x]
            } else {
                T::zero()
            };
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == T::zero() {
                continue;
            }
            let mut angle = gy.as_f64().atan2(gx.as_f64()).to_degrees();
            angle = angle.rem_euclid(range);
            if angle >= range {
                angle -= range;
            }
            let pos = angle / bin_width - 0.5;
            let lower = pos.floor();
            let frac = T::lit(pos - lower);
            let b0 = (lower as isize).rem_euclid(nbins as isize) as usize;
            let b1 = (b0 + 1) % nbins;
            let base = ((y / p.cell.0) * ncx + x / p.cell.1) * nbins;
            cells[base + b0] += mag * (T::one() - frac);
            cells[base + b1] += mag * frac;
        }
    }

    let clip = T::lit(p.clip);
    let eps2 = T::lit(NORM_EPS * NORM_EPS);
    let block_len = p.block.0 * p.block.1 * nbins;
    let mut out = Vec::with_capacity(nby * nbx * block_len);
    let mut block = Vec::with_capacity(block_len);
    for by in 0..nby {
        for bx in 0..nbx {
            block.clear();
            for cy in by..by + p.block.0 {
                for cx in bx..bx + p.block.1 {
                    let base = (cy * ncx + cx) * nbins;
                    block.extend_from_slice(&cells[base..base + nbins]);
                }
            }
            let norm = (block.iter().map(|&v| v * v).sum::<T>() + eps2).sqrt();
            for v in &mut block {
                *v = (*v / norm).min(clip);
            }
            let norm = (block.iter().map(|&v| v * v).sum::<T>() + eps2).sqrt();
            out.extend(block.iter().map(|&v| v / norm));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Tensor<f64> {
        Tensor::new(&[h, w], (0..h * w).map(|i| ((i * 37) % 101) as f64 / 100.0).collect()).unwrap()
    }

    #[test]
    fn full_scale_dimension() {
        assert_eq!(HogParams::default().dim(224, 224).unwrap(), 26244);
        let v = hog_features(&ramp(224, 224), &HogParams::default()).unwrap();
        assert_eq!(v.len(), 26244);
    }

    #[test]
    fn single_block_is_36() {
        assert_eq!(hog_features(&ramp(16, 16), &HogParams::default()).unwrap().len(), 36);
    }

    #[test]
    fn partial_cells_truncated() {
        assert_eq!(
            HogParams::default().dim(23, 17).unwrap(),
            HogParams::default().dim(16, 16).unwrap()
        );
    }

    #[test]
    fn constant_image_zero_descriptor() {
        let v = hog_features(&Tensor::<f64>::filled(&[32, 32], 0.7), &HogParams::default()).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn too_small_is_domain_error() {
        assert!(matches!(
            hog_features(&Tensor::<f64>::zeros(&[7, 20]), &HogParams::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn entries_bounded() {
        let v = hog_features(&ramp(40, 48), &HogParams::default()).unwrap();
        assert!(v.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn vertical_edge_votes_horizontal_gradient_bins() {
        // Gradient along x only: angle 0°, split between bins 0 and 8.
        let mut img = Tensor::<f64>::zeros(&[16, 16]);
        for y in 0..16 {
            for x in 8..16 {
                img.set(y, x, 1.0);
            }
        }
        let v = hog_features(&img, &HogParams::default()).unwrap();
        for cell in v.chunks(9) {
            for (b, &x) in cell.iter().enumerate() {
                if b != 0 && b != 8 {
                    assert_eq!(x, 0.0);
                }
            }
        }
        assert!(v[0] > 0.0 || v[9] > 0.0);
    }
}

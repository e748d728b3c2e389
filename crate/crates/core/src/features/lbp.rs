use serde::{Deserialize, Serialize};

use super::gray_dims;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbpParams {
    pub radius: f64,
    pub points: usize,
}

impl Default for LbpParams {
    fn default() -> Self {
        Self { radius: 1.0, points: 8 }
    }
}

const MAX_POINTS: usize = 16;

impl LbpParams {
    /// `P(P-1) + 3`: every uniform code gets a bin, the rest share one.
    pub fn bins(&self) -> usize {
        self.points * (self.points - 1) + 3
    }

    fn validate(&self) -> Result<()> {
        if !(4..=MAX_POINTS).contains(&self.points) {
            return Err(Error::domain(format!("LBP points must be in 4..={MAX_POINTS}")));
        }
        if !(self.radius > 0.0) {
            return Err(Error::domain("LBP radius must be positive"));
        }
        Ok(())
    }
}

/// Circular 0/1 transitions in a `points`-bit code.
pub fn transitions(code: u32, points: usize) -> u32 {
    let rotated = ((code >> 1) | ((code & 1) << (points - 1))) & ((1u32 << points) - 1);
    (code ^ rotated).count_ones()
}

/// Code → histogram bin. Uniform codes are numbered in ascending code
/// order; all other codes map to the final bin.
pub fn uniform_lookup(points: usize) -> Vec<usize> {
    let n_codes = 1usize << points;
    let other = points * (points - 1) + 2;
    let mut next = 0;
    (0..n_codes as u32)
        .map(|code| {
            if transitions(code, points) <= 2 {
                next += 1;
                next - 1
            } else {
                other
            }
        })
        .collect()
}

fn snap(v: f64) -> f64 {
    if (v - v.round()).abs() < 1e-9 {
        v.round()
    } else {
        v
    }
}

/// Unnormalized uniform-LBP histogram over interior pixels.
pub fn lbp_counts<T: Scalar>(gray: &Tensor<T>, p: &LbpParams) -> Result<Vec<u64>> {
    p.validate()?;
    let (h, w) = gray_dims(gray)?;
    let margin = p.radius.ceil() as usize;
    if h < 2 * margin + 1 || w < 2 * margin + 1 {
        return Err(Error::domain(format!(
            "{h}x{w} image has no interior for LBP radius {}",
            p.radius
        )));
    }
    let offsets: Vec<(f64, f64)> = (0..p.points)
        .map(|k| {
            let theta = std::f64::consts::TAU * k as f64 / p.points as f64;
            (snap(-p.radius * theta.sin()), snap(p.radius * theta.cos()))
        })
        .collect();
    let lookup = uniform_lookup(p.points);
    let img = gray.data();
    let sample = |y: f64, x: f64| -> T {
        let y0 = y.floor();
        let x0 = x.floor();
        let (fy, fx) = (y - y0, x - x0);
        let (y0, x0) = (y0 as usize, x0 as usize);
        let at = |yy: usize, xx: usize| img[yy.min(h - 1) * w + xx.min(w - 1)];
        if fy == 0.0 && fx == 0.0 {
            return at(y0, x0);
        }
        let (fy, fx) = (T::lit(fy), T::lit(fx));
        // a + (b - a)·f is exact when a == b.
        let (a, b) = (at(y0, x0), at(y0, x0 + 1));
        let (c, d) = (at(y0 + 1, x0), at(y0 + 1, x0 + 1));
        let top = a + (b - a) * fx;
        let bot = c + (d - c) * fx;
        top + (bot - top) * fy
    };
    let mut hist = vec![0u64; p.bins()];
    for r in margin..h - margin {
        for c in margin..w - margin {
            let center = img[r * w + c];
            let mut code = 0u32;
            for (k, &(dy, dx)) in offsets.iter().enumerate() {
                if sample(r as f64 + dy, c as f64 + dx) >= center {
                    code |= 1 << k;
                }
            }
            hist[lookup[code as usize]] += 1;
        }
    }
    Ok(hist)
}

/// Uniform-LBP histogram divided by the interior pixel count.
pub fn lbp_features<T: Scalar>(gray: &Tensor<T>, p: &LbpParams) -> Result<Vec<T>> {
    let counts = lbp_counts(gray, p)?;
    let total: u64 = counts.iter().sum();
    let total = T::lit(total as f64);
    Ok(counts.into_iter().map(|c| T::lit(c as f64) / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(h: usize, w: usize) -> Tensor<f64> {
        let mut r = crate::numerics::RngState::new(5);
        Tensor::new(&[h, w], (0..h * w).map(|_| r.next_f64()).collect()).unwrap()
    }

    #[test]
    fn fifty_nine_bins_by_enumeration() {
        let uniform = (0..256u32).filter(|&c| transitions(c, 8) <= 2).count();
        assert_eq!(uniform, 58);
        assert_eq!(LbpParams::default().bins(), uniform + 1);
        assert_eq!(*uniform_lookup(8).iter().max().unwrap(), 58);
    }

    #[test]
    fn constant_image_single_bin() {
        let v = lbp_features(&Tensor::<f64>::filled(&[9, 9], 0.4), &LbpParams::default()).unwrap();
        let bin = uniform_lookup(8)[255];
        assert_eq!(v[bin], 1.0);
        assert_eq!(v.iter().filter(|&&x| x != 0.0).count(), 1);
    }

    #[test]
    fn counts_cover_interior() {
        let c = lbp_counts(&noise(13, 17), &LbpParams::default()).unwrap();
        let mut interior = 0;
        for _r in 1..12 {
            for _c in 1..16 {
                interior += 1;
            }
        }
        assert_eq!(c.iter().sum::<u64>(), interior);
        assert_eq!(interior, (13 - 2) * (17 - 2));
    }

    #[test]
    fn histogram_sums_to_one() {
        let v = lbp_features(&noise(20, 20), &LbpParams::default()).unwrap();
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn too_small_rejected() {
        assert!(lbp_features(&Tensor::<f64>::zeros(&[2, 5]), &LbpParams::default()).is_err());
    }

    #[test]
    fn axis_neighbours_are_exact_pixels() {
        // Only the east neighbour is brighter than the centre.
        let mut img = Tensor::<f64>::zeros(&[3, 3]);
        img.set(1, 1, 0.5);
        img.set(1, 2, 1.0);
        let c = lbp_counts(&img, &LbpParams::default()).unwrap();
        assert_eq!(c[uniform_lookup(8)[1]], 1);
    }
}

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::gray_dims;
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaborBankParams {
    /// Kernel size (rows, cols); both odd.
    pub kernel: (usize, usize),
    pub sigmas: Vec<f64>,
    /// Number of orientations spread evenly over `[0, π)`.
    pub orientations: usize,
    /// Wavelengths in pixels.
    pub wavelengths: Vec<f64>,
    pub gamma: f64,
    pub psi: f64,
}

impl Default for GaborBankParams {
    fn default() -> Self {
        Self {
            kernel: (21, 21),
            sigmas: vec![1.0, 3.0],
            orientations: 4,
            wavelengths: vec![PI / 4.0, PI / 2.0],
            gamma: 0.5,
            psi: 0.0,
        }
    }
}

impl GaborBankParams {
    pub fn bank_size(&self) -> usize {
        self.sigmas.len() * self.orientations * self.wavelengths.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.bank_size()
    }

    pub fn thetas(&self) -> Vec<f64> {
        (0..self.orientations)
            .map(|k| PI * k as f64 / self.orientations as f64)
            .collect()
    }

    /// Kernels ordered σ outer, θ middle, λ inner.
    pub fn bank<T: Scalar>(&self) -> Result<Vec<Tensor<T>>> {
        if self.kernel.0.is_multiple_of(2) || self.kernel.1.is_multiple_of(2) {
            return Err(Error::domain("Gabor kernel dimensions must be odd"));
        }
        let mut out = Vec::with_capacity(self.bank_size());
        for &sigma in &self.sigmas {
            for theta in self.thetas() {
                for &lambda in &self.wavelengths {
                    out.push(gabor_kernel(self.kernel, sigma, theta, lambda, self.gamma, self.psi));
                }
            }
        }
        Ok(out)
    }
}

/// Real part of a Gabor kernel centred in a `size` grid; `x` runs along
/// columns and `y` along rows.
pub fn gabor_kernel<T: Scalar>(
    size: (usize, usize),
    sigma: f64,
    theta: f64,
    lambda: f64,
    gamma: f64,
    psi: f64,
) -> Tensor<T> {
    let (rows, cols) = size;
    let (cy, cx) = ((rows / 2) as f64, (cols / 2) as f64);
    let (s, c) = theta.sin_cos();
    let mut data = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for col in 0..cols {
            let x = col as f64 - cx;
            let y = r as f64 - cy;
            let xr = x * c + y * s;
            let yr = -x * s + y * c;
            let env = (-(xr * xr + gamma * gamma * yr * yr) / (2.0 * sigma * sigma)).exp();
            data.push(T::lit(env * (2.0 * PI * xr / lambda + psi).cos()));
        }
    }
    Tensor::new(&[rows, cols], data).expect("kernel buffer")
}

/// Reflect about the edge sample (`dcb|abcd|cba`).
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Same-size 2-D convolution with reflected borders.
pub fn convolve_reflect<T: Scalar>(gray: &Tensor<T>, kernel: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = gray_dims(gray)?;
    let (kh, kw) = gray_dims(kernel)?;
    if h < kh || w < kw {
        return Err(Error::domain(format!("{h}x{w} image smaller than {kh}x{kw} kernel")));
    }
    let (cy, cx) = ((kh / 2) as isize, (kw / 2) as isize);
    let img = gray.data();
    let k = kernel.data();
    let mut out = Vec::with_capacity(h * w);
    for r in 0..h as isize {
        for c in 0..w as isize {
            let mut acc = T::zero();
            for i in 0..kh as isize {
                let rr = reflect(r - i + cy, h);
                let row = &img[rr * w..(rr + 1) * w];
                let krow = &k[i as usize * kw..(i as usize + 1) * kw];
                for (j, &kv) in krow.iter().enumerate() {
                    acc += kv * row[reflect(c - j as isize + cx, w)];
                }
            }
            out.push(acc);
        }
    }
    Tensor::new(&[h, w], out)
}

/// Mean and population standard deviation, shifted by the first sample so
/// that constant input yields exactly that value and zero spread.
pub(crate) fn mean_std<T: Scalar>(x: &[T]) -> (T, T) {
    let shift = x[0];
    let n = T::lit(x.len() as f64);
    let m = x.iter().map(|&v| v - shift).sum::<T>() / n;
    let var = x.iter().map(|&v| (v - shift - m) * (v - shift - m)).sum::<T>() / n;
    (shift + m, var.sqrt())
}

/// (mean, std) of each filter response, in bank order.
pub fn gabor_features<T: Scalar>(gray: &Tensor<T>, p: &GaborBankParams) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(p.dim());
    for kernel in p.bank::<T>()? {
        let resp = convolve_reflect(gray, &kernel)?;
        let (m, s) = mean_std(resp.data());
        out.push(m);
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bank_has_sixteen_filters() {
        let p = GaborBankParams::default();
        assert_eq!(p.bank::<f64>().unwrap().len(), 16);
        let v = gabor_features(&Tensor::<f64>::filled(&[21, 24], 0.5), &p).unwrap();
        assert_eq!(v.len(), 32);
    }

    #[test]
    fn constant_image_response() {
        let p = GaborBankParams::default();
        let v = 0.37;
        let feats = gabor_features(&Tensor::<f64>::filled(&[25, 25], v), &p).unwrap();
        for (pair, k) in feats.chunks(2).zip(p.bank::<f64>().unwrap()) {
            let ksum: f64 = k.data().iter().sum();
            assert!((pair[0] - v * ksum).abs() < 1e-12);
            assert_eq!(pair[1], 0.0);
        }
    }

    #[test]
    fn matched_grating_beats_orthogonal() {
        let lambda = PI / 2.0;
        let (h, w) = (48, 48);
        let mut img = Tensor::<f64>::zeros(&[h, w]);
        for r in 0..h {
            for c in 0..w {
                img.set(r, c, 0.5 + 0.5 * (2.0 * PI * c as f64 / lambda).cos());
            }
        }
        let matched = gabor_kernel::<f64>((21, 21), 3.0, 0.0, lambda, 0.5, 0.0);
        let ortho = gabor_kernel::<f64>((21, 21), 3.0, PI / 2.0, lambda, 0.5, 0.0);
        let (_, s_matched) = mean_std(convolve_reflect(&img, &matched).unwrap().data());
        let (_, s_ortho) = mean_std(convolve_reflect(&img, &ortho).unwrap().data());
        assert!(s_matched > s_ortho, "{s_matched} vs {s_ortho}");
    }

    #[test]
    fn small_image_rejected() {
        assert!(gabor_features(&Tensor::<f64>::zeros(&[20, 40]), &GaborBankParams::default()).is_err());
    }

    #[test]
    fn reflect_indices() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-3, 5), 3);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(2, 5), 2);
    }
}

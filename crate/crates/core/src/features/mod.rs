//! Classical image descriptors: HOG, uniform LBP, GLCM/Haralick and a
//! Gabor filter bank. All operate on a single luminance channel.

mod gabor;
mod glcm;
mod hog;
mod lbp;

pub use gabor::{convolve_reflect, gabor_features, gabor_kernel, GaborBankParams};
pub use glcm::{glcm_haralick_features, glcm_matrices, haralick_stats, quantize, GlcmParams, HARALICK_STATS};
pub use hog::{hog_features, HogParams};
pub use lbp::{lbp_counts, lbp_features, transitions, uniform_lookup, LbpParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

pub(crate) fn gray_dims<T: Scalar>(t: &Tensor<T>) -> Result<(usize, usize)> {
    match t.shape() {
        [h, w] => Ok((*h, *w)),
        other => Err(Error::dim("grayscale image", other, &[0, 0])),
    }
}

/// `0.299 R + 0.587 G + 0.114 B` of an `[H, W, 3]` image.
pub fn luminance<T: Scalar>(rgb: &Tensor<T>) -> Result<Tensor<T>> {
    let (h, w) = match rgb.shape() {
        [h, w, 3] => (*h, *w),
        other => return Err(Error::dim("luminance", other, &[0, 0, 3])),
    };
    let (kr, kg, kb) = (T::lit(0.299), T::lit(0.587), T::lit(0.114));
    let data = rgb
        .data()
        .chunks(3)
        .map(|p| kr * p[0] + kg * p[1] + kb * p[2])
        .collect();
    Tensor::new(&[h, w], data)
}

/// A classical extractor with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassicalExtractor {
    Hog(HogParams),
    Lbp(LbpParams),
    Glcm(GlcmParams),
    Gabor(GaborBankParams),
}

impl ClassicalExtractor {
    pub fn name(&self) -> &'static str {
        match self {
            ClassicalExtractor::Hog(_) => "hog",
            ClassicalExtractor::Lbp(_) => "lbp",
            ClassicalExtractor::Glcm(_) => "glcm",
            ClassicalExtractor::Gabor(_) => "gabor",
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Some(match name {
            "hog" => ClassicalExtractor::Hog(HogParams::default()),
            "lbp" => ClassicalExtractor::Lbp(LbpParams::default()),
            "glcm" => ClassicalExtractor::Glcm(GlcmParams::default()),
            "gabor" => ClassicalExtractor::Gabor(GaborBankParams::default()),
            _ => return None,
        })
    }

    /// Descriptor of an `[H, W, 3]` image.
    pub fn extract<T: Scalar>(&self, rgb: &Tensor<T>) -> Result<Vec<T>> {
        let gray = luminance(rgb)?;
        match self {
            ClassicalExtractor::Hog(p) => hog_features(&gray, p),
            ClassicalExtractor::Lbp(p) => lbp_features(&gray, p),
            ClassicalExtractor::Glcm(p) => glcm_haralick_features(&gray, p),
            ClassicalExtractor::Gabor(p) => gabor_features(&gray, p),
        }
    }
}

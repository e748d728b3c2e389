use std::path::Path;

use image::DynamicImage;
use rayon::prelude::*;

use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

/// A decoded, resized RGB image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample<T> {
    pub id: String,
    /// `[H, W, 3]`
    pub pixels: Tensor<T>,
    pub label: usize,
    pub split: Split,
}

/// Decodes `path` to a `[H, W, 3]` tensor in `[0, 1]`: grayscale is
/// replicated, alpha dropped, then bilinearly resized to `target`.
pub fn ingest_image<T: Scalar>(path: &Path, target: (usize, usize)) -> Result<Tensor<T>> {
    if target.0 == 0 || target.1 == 0 {
        return Err(Error::domain(format!("zero-sized target {target:?}")));
    }
    let img = image::open(path).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    resize_bilinear(&to_unit_rgb(&img), target)
}

fn to_unit_rgb<T: Scalar>(img: &DynamicImage) -> Tensor<T> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let wide = matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    let data: Vec<T> = if wide {
        let scale = 1.0 / 65535.0;
        img.to_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| T::lit(f64::from(v) * scale))
            .collect()
    } else if matches!(img, DynamicImage::ImageRgb32F(_) | DynamicImage::ImageRgba32F(_)) {
        img.to_rgb32f()
            .into_raw()
            .into_iter()
            .map(|v| T::lit(f64::from(v).clamp(0.0, 1.0)))
            .collect()
    } else {
        img.to_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| T::lit(f64::from(v) / 255.0))
            .collect()
    };
    Tensor::new(&[h, w, 3], data).expect("decoded buffer matches its dimensions")
}

/// Bilinear resize of an `[H, W, C]` tensor with half-pixel centres.
/// Same-size input is returned unchanged.
pub fn resize_bilinear<T: Scalar>(src: &Tensor<T>, target: (usize, usize)) -> Result<Tensor<T>> {
    let shape = src.shape();
    if shape.len() != 3 {
        return Err(Error::dim("resize_bilinear", shape, &[0, 0, 0]));
    }
    let (h, w, c) = (shape[0], shape[1], shape[2]);
    let (th, tw) = target;
    if th == 0 || tw == 0 || h == 0 || w == 0 {
        return Err(Error::domain(format!("cannot resize {shape:?} to {target:?}")));
    }
    if (h, w) == (th, tw) {
        return Ok(src.clone());
    }
    let sy = h as f64 / th as f64;
    let sx = w as f64 / tw as f64;
    let axis = |d: usize, scale: f64, n: usize| {
        let p = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
        let i0 = p.floor() as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, T::lit(p - i0 as f64))
    };
    let px = src.data();
    let mut out = Vec::with_capacity(th * tw * c);
    for y in 0..th {
        let (y0, y1, fy) = axis(y, sy, h);
        for x in 0..tw {
            let (x0, x1, fx) = axis(x, sx, w);
            for ch in 0..c {
                let at = |yy: usize, xx: usize| px[(yy * w + xx) * c + ch];
                let top = at(y0, x0) * (T::one() - fx) + at(y0, x1) * fx;
                let bot = at(y1, x0) * (T::one() - fx) + at(y1, x1) * fx;
                out.push(top * (T::one() - fy) + bot * fy);
            }
        }
    }
    Tensor::new(&[th, tw, c], out)
}

/// Ingests every sample of `split`, in manifest order.
pub fn load_split<T: Scalar>(
    manifest: &DatasetManifest,
    split: Split,
    target: (usize, usize),
) -> Result<Vec<ImageSample<T>>> {
    let entries: Vec<_> = manifest.split_entries(split).collect();
    entries
        .par_iter()
        .map(|e| {
            Ok(ImageSample {
                id: e.path.display().to_string(),
                pixels: ingest_image(&e.path, target)?,
                label: e.label,
                split,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{GrayImage, Luma, Rgba, RgbaImage};

    #[test]
    fn grayscale_is_replicated_and_scaled() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        GrayImage::from_pixel(2, 2, Luma([128])).save(&path).unwrap();
        let t: Tensor<f64> = ingest_image(&path, (2, 2)).unwrap();
        assert_eq!(t.shape(), &[2, 2, 3]);
        assert!(t.data().iter().all(|&v| (v - 128.0 / 255.0).abs() < 1e-12));
        assert!((t.data()[0] - 0.502).abs() < 1e-3);
    }

    #[test]
    fn alpha_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        RgbaImage::from_pixel(3, 3, Rgba([255, 0, 51, 7])).save(&path).unwrap();
        let t: Tensor<f64> = ingest_image(&path, (3, 3)).unwrap();
        assert_eq!(&t.data()[..3], &[1.0, 0.0, 0.2]);
    }

    #[test]
    fn downsample_blends_blocks() {
        let data: Vec<f64> = (0..16).map(|v| v as f64 / 16.0).collect();
        let src = Tensor::new(&[4, 4, 1], data.clone()).unwrap();
        let out = resize_bilinear(&src, (2, 2)).unwrap();
        for oy in 0..2 {
            for ox in 0..2 {
                let mut acc = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        acc += data[(2 * oy + dy) * 4 + 2 * ox + dx];
                    }
                }
                assert!((out.data()[oy * 2 + ox] - acc / 4.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_scale_target_shape() {
        let src = Tensor::<f64>::filled(&[10, 13, 3], 0.3);
        let out = resize_bilinear(&src, (224, 224)).unwrap();
        assert_eq!(out.shape(), &[224, 224, 3]);
    }

    #[test]
    fn same_size_is_identity() {
        let src = Tensor::<f64>::new(&[2, 3, 3], (0..18).map(|v| (v as f64).sin().abs()).collect()).unwrap();
        assert_eq!(resize_bilinear(&src, (2, 3)).unwrap(), src);
    }

    #[test]
    fn undecodable_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.png");
        std::fs::write(&path, b"not an image").unwrap();
        let err = ingest_image::<f64>(&path, (2, 2)).unwrap_err();
        assert!(err.to_string().contains("junk.png"));
    }

    #[test]
    fn zero_target_rejected() {
        assert!(matches!(
            ingest_image::<f64>(Path::new("missing.png"), (0, 4)),
            Err(Error::Domain(_))
        ));
    }
}

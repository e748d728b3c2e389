//! Image decoding, manifests, stratified splits and feature tables.

mod image_io;
mod manifest;
mod table;

pub use image_io::{ingest_image, load_split, resize_bilinear, ImageSample};
pub use manifest::{split_manifest, stratified_indices, DatasetManifest, ManifestEntry, Split};
pub use table::{FeatureRow, FeatureTable};

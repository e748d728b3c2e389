//! Patch embedding, pre-norm transformer encoder, [CLS] refinement,
//! classification head, cross-entropy and hand-derived gradients.

mod backward;
pub mod checkpoint;
mod config;
mod forward;
mod params;

pub use backward::backward;
pub use config::ModelConfig;
pub use forward::{
    classify_head, cross_entropy, embed, encoder_forward, extract_features, extract_h_out, forward, gelu, gelu_grad,
    patchify, refine, unpatchify, EncoderOutput, ForwardTrace, LayerCache, NormCache,
};
pub use params::{LayerParams, ModelParams};

use rayon::prelude::*;

use crate::dataset::{FeatureRow, FeatureTable, ImageSample};
use crate::error::Result;
use crate::scalar::Scalar;

/// Forward pass plus loss and gradients for one labelled image.
pub fn loss_and_grad<T: Scalar>(
    pixels: &crate::numerics::Tensor<T>,
    label: usize,
    params: &ModelParams<T>,
) -> Result<(T, ModelParams<T>)> {
    let trace = forward(pixels, params)?;
    let loss = cross_entropy(&trace.probs, label)?;
    Ok((loss, backward(&trace, label, params)?))
}

/// Refined features of every sample, one row each, in input order.
pub fn extract_table<T: Scalar>(samples: &[ImageSample<T>], params: &ModelParams<T>) -> Result<FeatureTable> {
    let rows: Vec<FeatureRow> = samples
        .par_iter()
        .map(|s| {
            Ok(FeatureRow {
                id: s.id.clone(),
                features: extract_features(&s.pixels, params)?
                    .into_iter()
                    .map(|v| v.as_f64())
                    .collect(),
                label: s.label,
            })
        })
        .collect::<Result<_>>()?;
    FeatureTable::with_rows(params.config.embed_dim, params.config.num_classes, rows)
}

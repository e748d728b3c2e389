use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Encoder geometry. Full scale is 224×224 inputs, 16-pixel patches and
/// 768-wide tokens over 12 layers; the default is a desk-scale toy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// (H, W)
    pub image_size: (usize, usize),
    pub patch_size: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub mlp_ratio: f64,
    pub num_classes: usize,
    /// LayerNorm on the final [CLS] state before refinement.
    pub final_norm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: (32, 32),
            patch_size: 8,
            channels: 3,
            embed_dim: 64,
            num_layers: 2,
            num_heads: 4,
            mlp_ratio: 4.0,
            num_classes: 2,
            final_norm: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image_size;
        let p = self.patch_size;
        if p == 0 || h == 0 || w == 0 || h % p != 0 || w % p != 0 {
            return Err(Error::domain(format!(
                "image {h}x{w} is not divisible into {p}-pixel patches"
            )));
        }
        if self.channels == 0 || self.embed_dim == 0 || self.num_classes == 0 {
            return Err(Error::domain("channels, embed_dim and num_classes must be positive"));
        }
        if self.num_heads == 0 || !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(Error::domain(format!(
                "embed_dim {} not divisible by {} heads",
                self.embed_dim, self.num_heads
            )));
        }
        if !(self.mlp_ratio > 0.0) || self.hidden_dim() == 0 {
            return Err(Error::domain("mlp_ratio must give a positive hidden width"));
        }
        Ok(())
    }

    /// N = H·W / P²
    pub fn num_patches(&self) -> usize {
        (self.image_size.0 / self.patch_size) * (self.image_size.1 / self.patch_size)
    }

    /// Tokens including [CLS].
    pub fn seq_len(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.channels
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn hidden_dim(&self) -> usize {
        (self.mlp_ratio * self.embed_dim as f64).round() as usize
    }
}

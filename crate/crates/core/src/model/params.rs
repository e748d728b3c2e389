use crate::error::Result;
use crate::model::ModelConfig;
use crate::numerics::{RngState, Tensor};
use crate::scalar::Scalar;

const INIT_STD: f64 = 0.02;

/// One pre-norm encoder block. Projections are `[in × out]` so that a row
/// of tokens maps as `x·W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_gamma: Tensor<T>,
    pub ln1_beta: Tensor<T>,
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub ln2_gamma: Tensor<T>,
    pub ln2_beta: Tensor<T>,
    pub w1: Tensor<T>,
    pub b1: Tensor<T>,
    pub w2: Tensor<T>,
    pub b2: Tensor<T>,
}

pub(crate) const LAYER_FIELDS: [&str; 16] = [
    "ln1_gamma",
    "ln1_beta",
    "wq",
    "bq",
    "wk",
    "bk",
    "wv",
    "bv",
    "wo",
    "bo",
    "ln2_gamma",
    "ln2_beta",
    "w1",
    "b1",
    "w2",
    "b2",
];

impl<T: Scalar> LayerParams<T> {
    fn zeros(d: usize, hidden: usize) -> Self {
        Self {
            ln1_gamma: Tensor::zeros(&[d]),
            ln1_beta: Tensor::zeros(&[d]),
            wq: Tensor::zeros(&[d, d]),
            bq: Tensor::zeros(&[d]),
            wk: Tensor::zeros(&[d, d]),
            bk: Tensor::zeros(&[d]),
            wv: Tensor::zeros(&[d, d]),
            bv: Tensor::zeros(&[d]),
            wo: Tensor::zeros(&[d, d]),
            bo: Tensor::zeros(&[d]),
            ln2_gamma: Tensor::zeros(&[d]),
            ln2_beta: Tensor::zeros(&[d]),
            w1: Tensor::zeros(&[d, hidden]),
            b1: Tensor::zeros(&[hidden]),
            w2: Tensor::zeros(&[hidden, d]),
            b2: Tensor::zeros(&[d]),
        }
    }

    fn tensors(&self) -> [&Tensor<T>; 16] {
        [
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln2_gamma,
            &self.ln2_beta,
            &self.w1,
            &self.b1,
            &self.w2,
            &self.b2,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; 16] {
        [
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
        ]
    }
}

/// Every learnable parameter. The same struct carries gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    /// `[P²·C × D]`
    pub patch_proj: Tensor<T>,
    pub patch_bias: Tensor<T>,
    pub cls_token: Tensor<T>,
    /// `[(N+1) × D]`
    pub pos_embed: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    pub final_gamma: Tensor<T>,
    pub final_beta: Tensor<T>,
    /// Element-wise weights applied to the final [CLS] state.
    pub w_refine: Tensor<T>,
    /// `[C_cls × D]`
    pub head_weight: Tensor<T>,
    pub head_bias: Tensor<T>,
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero parameters (the gradient accumulator shape).
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let d = config.embed_dim;
        Ok(Self {
            config: config.clone(),
            patch_proj: Tensor::zeros(&[config.patch_dim(), d]),
            patch_bias: Tensor::zeros(&[d]),
            cls_token: Tensor::zeros(&[d]),
            pos_embed: Tensor::zeros(&[config.seq_len(), d]),
            layers: (0..config.num_layers)
                .map(|_| LayerParams::zeros(d, config.hidden_dim()))
                .collect(),
            final_gamma: Tensor::zeros(&[d]),
            final_beta: Tensor::zeros(&[d]),
            w_refine: Tensor::zeros(&[d]),
            head_weight: Tensor::zeros(&[config.num_classes, d]),
            head_bias: Tensor::zeros(&[config.num_classes]),
        })
    }

    /// Truncated-normal (σ = 0.02) weights, zero biases, unit LayerNorm
    /// scales and refinement weights drawn from N(1, 0.02).
    pub fn init(config: &ModelConfig, rng: &mut RngState) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        let mut trunc = |t: &mut Tensor<T>| {
            for v in t.data_mut() {
                *v = T::lit(rng.truncated_normal(0.0, INIT_STD));
            }
        };
        trunc(&mut p.patch_proj);
        trunc(&mut p.cls_token);
        trunc(&mut p.pos_embed);
        for layer in &mut p.layers {
            for w in [
                &mut layer.wq,
                &mut layer.wk,
                &mut layer.wv,
                &mut layer.wo,
                &mut layer.w1,
                &mut layer.w2,
            ] {
                trunc(w);
            }
            layer.ln1_gamma = Tensor::filled(&[config.embed_dim], T::one());
            layer.ln2_gamma = Tensor::filled(&[config.embed_dim], T::one());
        }
        trunc(&mut p.head_weight);
        p.final_gamma = Tensor::filled(&[config.embed_dim], T::one());
        for v in p.w_refine.data_mut() {
            *v = T::lit(rng.normal(1.0, INIT_STD));
        }
        Ok(p)
    }

    /// Parameter tensors in their persisted order, with stable names.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = vec![
            ("patch_proj".into(), &self.patch_proj),
            ("patch_bias".into(), &self.patch_bias),
            ("cls_token".into(), &self.cls_token),
            ("pos_embed".into(), &self.pos_embed),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, t) in LAYER_FIELDS.iter().zip(layer.tensors()) {
                out.push((format!("layers.{l}.{name}"), t));
            }
        }
        out.push(("final_gamma".into(), &self.final_gamma));
        out.push(("final_beta".into(), &self.final_beta));
        out.push(("w_refine".into(), &self.w_refine));
        out.push(("head_weight".into(), &self.head_weight));
        out.push(("head_bias".into(), &self.head_bias));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    /// Mutable view in `named_tensors` order.
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = vec![
            &mut self.patch_proj,
            &mut self.patch_bias,
            &mut self.cls_token,
            &mut self.pos_embed,
        ];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.push(&mut self.final_gamma);
        out.push(&mut self.final_beta);
        out.push(&mut self.w_refine);
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }

    /// Adds `other` in place; both must come from the same config.
    pub fn accumulate(&mut self, other: &ModelParams<T>) -> Result<()> {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        for t in self.tensors_mut() {
            t.scale(s);
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            patch_proj: self.patch_proj.cast(),
            patch_bias: self.patch_bias.cast(),
            cls_token: self.cls_token.cast(),
            pos_embed: self.pos_embed.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    ln1_gamma: l.ln1_gamma.cast(),
                    ln1_beta: l.ln1_beta.cast(),
                    wq: l.wq.cast(),
                    bq: l.bq.cast(),
                    wk: l.wk.cast(),
                    bk: l.bk.cast(),
                    wv: l.wv.cast(),
                    bv: l.bv.cast(),
                    wo: l.wo.cast(),
                    bo: l.bo.cast(),
                    ln2_gamma: l.ln2_gamma.cast(),
                    ln2_beta: l.ln2_beta.cast(),
                    w1: l.w1.cast(),
                    b1: l.b1.cast(),
                    w2: l.w2.cast(),
                    b2: l.b2.cast(),
                })
                .collect(),
            final_gamma: self.final_gamma.cast(),
            final_beta: self.final_beta.cast(),
            w_refine: self.w_refine.cast(),
            head_weight: self.head_weight.cast(),
            head_bias: self.head_bias.cast(),
        }
    }
}

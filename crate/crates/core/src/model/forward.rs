use crate::error::{Error, Result};
use crate::model::{LayerParams, ModelConfig, ModelParams};
use crate::numerics::{softmax_in_place, Tensor};
use crate::scalar::Scalar;

pub(crate) const LN_EPS: f64 = 1e-6;
const PROB_FLOOR: f64 = 1e-12;

/// Splits an `[H, W, C]` image into `[N × P²·C]` rows: patches in raster
/// order, each flattened by row, then column, then channel.
pub fn patchify<T: Scalar>(pixels: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    let (h, w, c) = match pixels.shape() {
        [h, w, c] => (*h, *w, *c),
        other => return Err(Error::dim("patchify", other, &[0, 0, 0])),
    };
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::domain(format!(
            "{h}x{w} image not divisible into {patch}-pixel patches"
        )));
    }
    let (ph, pw) = (h / patch, w / patch);
    let k = patch * patch * c;
    let src = pixels.data();
    let mut out = Vec::with_capacity(ph * pw * k);
    for py in 0..ph {
        for px in 0..pw {
            for dy in 0..patch {
                let row = (py * patch + dy) * w + px * patch;
                out.extend_from_slice(&src[row * c..(row + patch) * c]);
            }
        }
    }
    Tensor::new(&[ph * pw, k], out)
}

/// Inverse of [`patchify`].
pub fn unpatchify<T: Scalar>(patches: &Tensor<T>, dims: (usize, usize, usize), patch: usize) -> Result<Tensor<T>> {
    let (h, w, c) = dims;
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::domain("image not divisible into patches"));
    }
    let (ph, pw) = (h / patch, w / patch);
    if patches.shape() != [ph * pw, patch * patch * c] {
        return Err(Error::dim("unpatchify", patches.shape(), &[ph * pw, patch * patch * c]));
    }
    let mut out = vec![T::zero(); h * w * c];
    for (n, row) in patches.data().chunks(patch * patch * c).enumerate() {
        let (py, px) = (n / pw, n % pw);
        for dy in 0..patch {
            let dst = ((py * patch + dy) * w + px * patch) * c;
            out[dst..dst + patch * c].copy_from_slice(&row[dy * patch * c..(dy + 1) * patch * c]);
        }
    }
    Tensor::new(&[h, w, c], out)
}

/// `Z_0 = [cls; patches·W_p + b_p] + E_pos`.
pub fn embed<T: Scalar>(patches: &Tensor<T>, params: &ModelParams<T>) -> Result<Tensor<T>> {
    let cfg = &params.config;
    if patches.shape() != [cfg.num_patches(), cfg.patch_dim()] {
        return Err(Error::dim(
            "embed",
            patches.shape(),
            &[cfg.num_patches(), cfg.patch_dim()],
        ));
    }
    let mut proj = patches.matmul(&params.patch_proj)?;
    proj.add_row_vector(params.patch_bias.data())?;
    let d = cfg.embed_dim;
    let mut z = Vec::with_capacity(cfg.seq_len() * d);
    z.extend_from_slice(params.cls_token.data());
    z.extend_from_slice(proj.data());
    for (v, &p) in z.iter_mut().zip(params.pos_embed.data()) {
        *v += p;
    }
    Tensor::new(&[cfg.seq_len(), d], z)
}

/// Per-row LayerNorm state kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NormCache<T> {
    pub xhat: Tensor<T>,
    pub rstd: Vec<T>,
    pub out: Tensor<T>,
}

pub(crate) fn layer_norm<T: Scalar>(x: &Tensor<T>, gamma: &[T], beta: &[T]) -> NormCache<T> {
    let d = x.cols();
    let eps = T::lit(LN_EPS);
    let inv_d = T::one() / T::lit(d as f64);
    let mut xhat = x.clone();
    let mut out = x.clone();
    let mut rstd = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().copied().sum::<T>() * inv_d;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
        let rs = T::one() / (var + eps).sqrt();
        rstd.push(rs);
        let xh = xhat.row_mut(r);
        for (h, &v) in xh.iter_mut().zip(row) {
            *h = (v - mean) * rs;
        }
        let xh = xhat.row(r).to_vec();
        for ((o, h), (&g, &b)) in out.row_mut(r).iter_mut().zip(xh).zip(gamma.iter().zip(beta)) {
            *o = g * h + b;
        }
    }
    NormCache { xhat, rstd, out }
}

const GELU_C: f64 = 0.044_715;

/// Tanh-form GELU.
#[inline]
pub fn gelu<T: Scalar>(x: T) -> T {
    let k = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let u = k * (x + T::lit(GELU_C) * x * x * x);
    T::lit(0.5) * x * (T::one() + u.tanh())
}

#[inline]
pub fn gelu_grad<T: Scalar>(x: T) -> T {
    let k = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let c = T::lit(GELU_C);
    let t = (k * (x + c * x * x * x)).tanh();
    let half = T::lit(0.5);
    half * (T::one() + t) + half * x * (T::one() - t * t) * k * (T::one() + T::lit(3.0) * c * x * x)
}

/// Activations of one block retained for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerCache<T> {
    pub input: Tensor<T>,
    pub ln1: NormCache<T>,
    pub q: Tensor<T>,
    pub k: Tensor<T>,
    pub v: Tensor<T>,
    /// `[heads, T, T]`, each row a distribution.
    pub attn: Tensor<T>,
    pub context: Tensor<T>,
    pub mid: Tensor<T>,
    pub ln2: NormCache<T>,
    /// MLP pre-activation `[T × hidden]`.
    pub pre: Tensor<T>,
    pub act: Tensor<T>,
}

fn affine<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let mut y = x.matmul(w)?;
    y.add_row_vector(b.data())?;
    Ok(y)
}

fn layer_forward<T: Scalar>(
    x: &Tensor<T>,
    p: &LayerParams<T>,
    cfg: &ModelConfig,
) -> Result<(Tensor<T>, LayerCache<T>)> {
    let t = x.rows();
    let d = cfg.embed_dim;
    let heads = cfg.num_heads;
    let hd = cfg.head_dim();
    let scale = T::one() / T::lit(hd as f64).sqrt();

    let ln1 = layer_norm(x, p.ln1_gamma.data(), p.ln1_beta.data());
    let q = affine(&ln1.out, &p.wq, &p.bq)?;
    let k = affine(&ln1.out, &p.wk, &p.bk)?;
    let v = affine(&ln1.out, &p.wv, &p.bv)?;

    let mut attn = vec![T::zero(); heads * t * t];
    let mut ctx = vec![T::zero(); t * d];
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    for h in 0..heads {
        let off = h * hd;
        for i in 0..t {
            let qi = &qd[i * d + off..i * d + off + hd];
            let row = &mut attn[(h * t + i) * t..(h * t + i + 1) * t];
            for (j, s) in row.iter_mut().enumerate() {
                let kj = &kd[j * d + off..j * d + off + hd];
                *s = qi.iter().zip(kj).map(|(&a, &b)| a * b).sum::<T>() * scale;
            }
            softmax_in_place(row);
            let out = &mut ctx[i * d + off..i * d + off + hd];
            for (j, &pij) in row.iter().enumerate() {
                let vj = &vd[j * d + off..j * d + off + hd];
                for (o, &vv) in out.iter_mut().zip(vj) {
                    *o += pij * vv;
                }
            }
        }
    }
    let attn = Tensor::new(&[heads, t, t], attn)?;
    let context = Tensor::new(&[t, d], ctx)?;

    let mut mid = affine(&context, &p.wo, &p.bo)?;
    mid.add_assign(x)?;

    let ln2 = layer_norm(&mid, p.ln2_gamma.data(), p.ln2_beta.data());
    let pre = affine(&ln2.out, &p.w1, &p.b1)?;
    let act = pre.map(gelu);
    let mut out = affine(&act, &p.w2, &p.b2)?;
    out.add_assign(&mid)?;

    let cache = LayerCache {
        input: x.clone(),
        ln1,
        q,
        k,
        v,
        attn,
        context,
        mid,
        ln2,
        pre,
        act,
    };
    Ok((out, cache))
}

/// Output of the encoder stack.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput<T> {
    /// `Z_L`, `[(N+1) × D]`
    pub output: Tensor<T>,
    pub layers: Vec<LayerCache<T>>,
}

/// Runs the pre-norm blocks `X ← X + MHSA(LN₁X)`, `X ← X + MLP(LN₂X)`.
pub fn encoder_forward<T: Scalar>(z0: &Tensor<T>, params: &ModelParams<T>) -> Result<EncoderOutput<T>> {
    let cfg = &params.config;
    if z0.shape() != [cfg.seq_len(), cfg.embed_dim] {
        return Err(Error::dim(
            "encoder_forward",
            z0.shape(),
            &[cfg.seq_len(), cfg.embed_dim],
        ));
    }
    let mut x = z0.clone();
    let mut layers = Vec::with_capacity(params.layers.len());
    for (l, lp) in params.layers.iter().enumerate() {
        let (out, cache) = layer_forward(&x, lp, cfg)?;
        if !out.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite activations after encoder layer {l}"
            )));
        }
        layers.push(cache);
        x = out;
    }
    Ok(EncoderOutput { output: x, layers })
}

/// `R_F = h_out ⊙ w_refine`.
pub fn refine<T: Scalar>(h_out: &[T], w_refine: &[T]) -> Result<Vec<T>> {
    if h_out.len() != w_refine.len() {
        return Err(Error::dim("refine", &[h_out.len()], &[w_refine.len()]));
    }
    Ok(h_out.iter().zip(w_refine).map(|(&h, &w)| h * w).collect())
}

/// `logits = a·R_F + b`, `probs = softmax(logits)`.
pub fn classify_head<T: Scalar>(r_f: &[T], a: &Tensor<T>, b: &[T]) -> Result<(Vec<T>, Vec<T>)> {
    if a.shape().len() != 2 || a.cols() != r_f.len() || a.rows() != b.len() || b.is_empty() {
        return Err(Error::dim("classify_head", a.shape(), &[b.len(), r_f.len()]));
    }
    let logits: Vec<T> = (0..a.rows())
        .map(|c| a.row(c).iter().zip(r_f).map(|(&w, &x)| w * x).sum::<T>() + b[c])
        .collect();
    let mut probs = logits.clone();
    softmax_in_place(&mut probs);
    Ok((logits, probs))
}

/// `-ln max(probs[label], 1e-12)`.
pub fn cross_entropy<T: Scalar>(probs: &[T], label: usize) -> Result<T> {
    let p = probs
        .get(label)
        .ok_or_else(|| Error::domain(format!("label {label} out of range for {} classes", probs.len())))?;
    Ok(-p.max(T::lit(PROB_FLOOR)).ln())
}

/// Everything one forward pass produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<T> {
    pub config: ModelConfig,
    pub patches: Tensor<T>,
    pub encoder: EncoderOutput<T>,
    /// LayerNorm of the final [CLS] row, when enabled.
    pub final_norm: Option<NormCache<T>>,
    pub h_out: Vec<T>,
    pub r_f: Vec<T>,
    pub logits: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> ForwardTrace<T> {
    /// Attention matrices, one `[heads, T, T]` tensor per layer.
    pub fn attention(&self) -> impl Iterator<Item = &Tensor<T>> {
        self.encoder.layers.iter().map(|l| &l.attn)
    }
}

/// Final [CLS] state: row 0 of `Z_L`, layer-normalized when configured.
fn cls_state<T: Scalar>(z_l: &Tensor<T>, params: &ModelParams<T>) -> Result<(Vec<T>, Option<NormCache<T>>)> {
    let row0 = Tensor::new(&[1, params.config.embed_dim], z_l.row(0).to_vec())?;
    if params.config.final_norm {
        let cache = layer_norm(&row0, params.final_gamma.data(), params.final_beta.data());
        Ok((cache.out.data().to_vec(), Some(cache)))
    } else {
        Ok((row0.into_data(), None))
    }
}

/// Full pass from pixels to class probabilities.
pub fn forward<T: Scalar>(pixels: &Tensor<T>, params: &ModelParams<T>) -> Result<ForwardTrace<T>> {
    let cfg = &params.config;
    let expected = [cfg.image_size.0, cfg.image_size.1, cfg.channels];
    if pixels.shape() != expected {
        return Err(Error::dim("forward", pixels.shape(), &expected));
    }
    let patches = patchify(pixels, cfg.patch_size)?;
    let z0 = embed(&patches, params)?;
    let encoder = encoder_forward(&z0, params)?;
    let (h_out, final_norm) = cls_state(&encoder.output, params)?;
    let r_f = refine(&h_out, params.w_refine.data())?;
    let (logits, probs) = classify_head(&r_f, &params.head_weight, params.head_bias.data())?;
    if !probs.iter().all(|p| p.is_finite()) {
        return Err(Error::Numeric("non-finite class probabilities".into()));
    }
    Ok(ForwardTrace {
        config: cfg.clone(),
        patches,
        encoder,
        final_norm,
        h_out,
        r_f,
        logits,
        probs,
    })
}

/// [CLS] state before refinement.
pub fn extract_h_out<T: Scalar>(pixels: &Tensor<T>, params: &ModelParams<T>) -> Result<Vec<T>> {
    let patches = patchify(pixels, params.config.patch_size)?;
    let z0 = embed(&patches, params)?;
    let enc = encoder_forward(&z0, params)?;
    Ok(cls_state(&enc.output, params)?.0)
}

/// Refined feature vector `R_F` of one image.
pub fn extract_features<T: Scalar>(pixels: &Tensor<T>, params: &ModelParams<T>) -> Result<Vec<T>> {
    refine(&extract_h_out(pixels, params)?, params.w_refine.data())
}

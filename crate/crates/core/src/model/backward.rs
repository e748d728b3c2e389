use crate::error::{Error, Result};
use crate::model::forward::{gelu_grad, ForwardTrace, LayerCache, NormCache};
use crate::model::{LayerParams, ModelParams};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

/// Gradient of a LayerNorm given the upstream `dy`; accumulates into the
/// scale/shift gradients and returns `dx`.
fn layer_norm_backward<T: Scalar>(
    dy: &Tensor<T>,
    cache: &NormCache<T>,
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Tensor<T> {
    let d = dy.cols();
    let inv_d = T::one() / T::lit(d as f64);
    let mut dx = Tensor::zeros(dy.shape());
    let mut dxhat = vec![T::zero(); d];
    for r in 0..dy.rows() {
        let g = dy.row(r);
        let xh = cache.xhat.row(r);
        for j in 0..d {
            dgamma[j] += g[j] * xh[j];
            dbeta[j] += g[j];
            dxhat[j] = g[j] * gamma[j];
        }
        let mean_dxhat = dxhat.iter().copied().sum::<T>() * inv_d;
        let mean_dxhat_xhat = dxhat.iter().zip(xh).map(|(&a, &b)| a * b).sum::<T>() * inv_d;
        let rs = cache.rstd[r];
        for ((o, &dh), &h) in dx.row_mut(r).iter_mut().zip(&dxhat).zip(xh) {
            *o = rs * (dh - mean_dxhat - h * mean_dxhat_xhat);
        }
    }
    dx
}

/// For `y = x·W + b`: accumulates `dW += xᵀ·dy`, `db += Σ dy` and returns `dx = dy·Wᵀ`.
fn affine_backward<T: Scalar>(
    dy: &Tensor<T>,
    x: &Tensor<T>,
    w: &Tensor<T>,
    dw: &mut Tensor<T>,
    db: &mut Tensor<T>,
) -> Result<Tensor<T>> {
    dw.add_assign(&x.matmul_tn(dy)?)?;
    for (b, s) in db.data_mut().iter_mut().zip(dy.sum_rows()) {
        *b += s;
    }
    dy.matmul_nt(w)
}

fn layer_backward<T: Scalar>(
    dout: &Tensor<T>,
    cache: &LayerCache<T>,
    p: &LayerParams<T>,
    g: &mut LayerParams<T>,
    heads: usize,
) -> Result<Tensor<T>> {
    let t = dout.rows();
    let d = dout.cols();
    let hd = d / heads;
    let scale = T::one() / T::lit(hd as f64).sqrt();

    // MLP branch.
    let mut d_act = affine_backward(dout, &cache.act, &p.w2, &mut g.w2, &mut g.b2)?;
    for (da, &z) in d_act.data_mut().iter_mut().zip(cache.pre.data()) {
        *da *= gelu_grad(z);
    }
    let d_ln2 = affine_backward(&d_act, &cache.ln2.out, &p.w1, &mut g.w1, &mut g.b1)?;
    let mut d_mid = layer_norm_backward(
        &d_ln2,
        &cache.ln2,
        p.ln2_gamma.data(),
        g.ln2_gamma.data_mut(),
        g.ln2_beta.data_mut(),
    );
    d_mid.add_assign(dout)?;

    // Attention branch.
    let d_ctx = affine_backward(&d_mid, &cache.context, &p.wo, &mut g.wo, &mut g.bo)?;
    let (qd, kd, vd) = (cache.q.data(), cache.k.data(), cache.v.data());
    let attn = cache.attn.data();
    let dc = d_ctx.data();
    let mut dq = vec![T::zero(); t * d];
    let mut dk = vec![T::zero(); t * d];
    let mut dv = vec![T::zero(); t * d];
    let mut dp = vec![T::zero(); t];
    for h in 0..heads {
        let off = h * hd;
        for i in 0..t {
            let prow = &attn[(h * t + i) * t..(h * t + i + 1) * t];
            let dci = &dc[i * d + off..i * d + off + hd];
            for j in 0..t {
                let vj = &vd[j * d + off..j * d + off + hd];
                dp[j] = dci.iter().zip(vj).map(|(&a, &b)| a * b).sum();
                for (o, &c) in dv[j * d + off..j * d + off + hd].iter_mut().zip(dci) {
                    *o += prow[j] * c;
                }
            }
            let dot = prow.iter().zip(&dp).map(|(&a, &b)| a * b).sum::<T>();
            for j in 0..t {
                let ds = prow[j] * (dp[j] - dot) * scale;
                if ds == T::zero() {
                    continue;
                }
                for x in 0..hd {
                    dq[i * d + off + x] += ds * kd[j * d + off + x];
                    dk[j * d + off + x] += ds * qd[i * d + off + x];
                }
            }
        }
    }
    let shape = [t, d];
    let dq = Tensor::new(&shape, dq)?;
    let dk = Tensor::new(&shape, dk)?;
    let dv = Tensor::new(&shape, dv)?;
    let x1 = &cache.ln1.out;
    let mut d_ln1 = affine_backward(&dq, x1, &p.wq, &mut g.wq, &mut g.bq)?;
    d_ln1.add_assign(&affine_backward(&dk, x1, &p.wk, &mut g.wk, &mut g.bk)?)?;
    d_ln1.add_assign(&affine_backward(&dv, x1, &p.wv, &mut g.wv, &mut g.bv)?)?;
    let mut dx = layer_norm_backward(
        &d_ln1,
        &cache.ln1,
        p.ln1_gamma.data(),
        g.ln1_gamma.data_mut(),
        g.ln1_beta.data_mut(),
    );
    dx.add_assign(&d_mid)?;
    Ok(dx)
}

fn check_trace<T: Scalar>(trace: &ForwardTrace<T>, params: &ModelParams<T>) -> Result<()> {
    let cfg = &params.config;
    let consistent = trace.config == *cfg
        && trace.encoder.layers.len() == params.layers.len()
        && trace.h_out.len() == cfg.embed_dim
        && trace.probs.len() == cfg.num_classes
        && trace.final_norm.is_some() == cfg.final_norm;
    if !consistent {
        return Err(Error::Contract("forward trace does not match these parameters".into()));
    }
    Ok(())
}

/// Analytic cross-entropy gradients for one sample.
pub fn backward<T: Scalar>(trace: &ForwardTrace<T>, label: usize, params: &ModelParams<T>) -> Result<ModelParams<T>> {
    check_trace(trace, params)?;
    let cfg = &params.config;
    if label >= cfg.num_classes {
        return Err(Error::domain(format!(
            "label {label} out of range for {} classes",
            cfg.num_classes
        )));
    }
    let d = cfg.embed_dim;
    let mut g = ModelParams::zeros(cfg)?;

    // Head and refinement.
    let mut dlogits = trace.probs.clone();
    dlogits[label] -= T::one();
    g.head_bias.data_mut().copy_from_slice(&dlogits);
    let mut d_rf = vec![T::zero(); d];
    for (c, &dl) in dlogits.iter().enumerate() {
        let a_row = params.head_weight.row(c);
        for (i, gw) in g.head_weight.row_mut(c).iter_mut().enumerate() {
            *gw = dl * trace.r_f[i];
            d_rf[i] += a_row[i] * dl;
        }
    }
    let w = params.w_refine.data();
    for i in 0..d {
        g.w_refine.data_mut()[i] = d_rf[i] * trace.h_out[i];
    }
    let dh: Vec<T> = d_rf.iter().zip(w).map(|(&a, &b)| a * b).collect();

    // Final norm on the [CLS] row.
    let dh = Tensor::new(&[1, d], dh)?;
    let d_cls = match &trace.final_norm {
        Some(cache) => layer_norm_backward(
            &dh,
            cache,
            params.final_gamma.data(),
            g.final_gamma.data_mut(),
            g.final_beta.data_mut(),
        ),
        None => dh,
    };
    let mut dz = Tensor::zeros(&[cfg.seq_len(), d]);
    dz.row_mut(0).copy_from_slice(d_cls.data());

    for l in (0..params.layers.len()).rev() {
        dz = layer_backward(
            &dz,
            &trace.encoder.layers[l],
            &params.layers[l],
            &mut g.layers[l],
            cfg.num_heads,
        )?;
    }

    // Embedding.
    g.pos_embed = dz.clone();
    g.cls_token.data_mut().copy_from_slice(dz.row(0));
    let d_proj = Tensor::new(&[cfg.num_patches(), d], dz.data()[d..].to_vec())?;
    g.patch_proj = trace.patches.matmul_tn(&d_proj)?;
    g.patch_bias = Tensor::from_vec(d_proj.sum_rows());
    Ok(g)
}

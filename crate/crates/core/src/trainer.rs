//! Mini-batch training with Nadam, per-epoch loss recording and split
//! evaluation.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::ImageSample;
use crate::error::{Error, Result};
use crate::metrics::{confusion, ConfusionMatrix};
use crate::model::{forward, loss_and_grad, ModelParams};
use crate::numerics::{argmax, RngState, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NadamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for NadamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl NadamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::domain("Nadam betas must lie in [0, 1)"));
        }
        if !(self.learning_rate >= 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::domain("Nadam needs learning_rate >= 0 and epsilon > 0"));
        }
        Ok(())
    }
}

/// Moment estimates for one parameter tensor; `t` is the number of updates
/// applied so far.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentState<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub t: u64,
}

impl<T: Scalar> MomentState<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            t: 0,
        }
    }
}

/// One Nadam update of `param` in place.
///
/// With `t` the new step count: `m̂ = m/(1-β₁^(t+1))`, `ĝ = g/(1-β₁^t)`,
/// `v̂ = v/(1-β₂^t)` and `θ -= lr·(β₁m̂ + (1-β₁)ĝ)/(√v̂ + ε)`.
pub fn nadam_step<T: Scalar>(
    param: &mut Tensor<T>,
    grad: &Tensor<T>,
    state: &mut MomentState<T>,
    cfg: &NadamConfig,
) -> Result<()> {
    for shape in [grad.shape(), state.m.shape(), state.v.shape()] {
        if shape != param.shape() {
            return Err(Error::dim("nadam_step", param.shape(), shape));
        }
    }
    state.t += 1;
    let t = state.t as f64;
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let (one_b1, one_b2) = (T::lit(1.0 - cfg.beta1), T::lit(1.0 - cfg.beta2));
    let m_corr = T::lit(1.0 - cfg.beta1.powf(t + 1.0));
    let g_corr = T::lit(1.0 - cfg.beta1.powf(t));
    let v_corr = T::lit(1.0 - cfg.beta2.powf(t));
    let (lr, eps) = (T::lit(cfg.learning_rate), T::lit(cfg.epsilon));
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (i, (p, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
        m[i] = b1 * m[i] + one_b1 * g;
        v[i] = b2 * v[i] + one_b2 * g * g;
        let blend = b1 * (m[i] / m_corr) + one_b1 * (g / g_corr);
        *p -= lr * blend / ((v[i] / v_corr).sqrt() + eps);
    }
    Ok(())
}

/// Nadam state for every tensor of a [`ModelParams`].
#[derive(Debug, Clone)]
pub struct Nadam<T> {
    pub config: NadamConfig,
    states: Vec<MomentState<T>>,
}

impl<T: Scalar> Nadam<T> {
    pub fn new(params: &ModelParams<T>, config: NadamConfig) -> Result<Self> {
        config.validate()?;
        let states = params.tensors().iter().map(|t| MomentState::zeros(t.shape())).collect();
        Ok(Self { config, states })
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>) -> Result<()> {
        let grads = grads.tensors();
        let slots = params.tensors_mut();
        if grads.len() != slots.len() || slots.len() != self.states.len() {
            return Err(Error::dim("Nadam::step", &[slots.len()], &[grads.len()]));
        }
        for ((p, g), s) in slots.into_iter().zip(grads).zip(&mut self.states) {
            nadam_step(p, g, s, &self.config)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 8,
            seed: 0,
            shuffle: true,
        }
    }
}

/// Mean training loss of each completed epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LossCurve {
    pub losses: Vec<f64>,
}

impl LossCurve {
    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }

    pub fn first(&self) -> Option<f64> {
        self.losses.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.losses.last().copied()
    }

    /// `epoch,loss` with 1-based epochs and round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss\n");
        for (i, l) in self.losses.iter().enumerate() {
            writeln!(s, "{},{l:?}", i + 1).unwrap();
        }
        s
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Mean loss and mean gradient over `indices`. Per-sample work runs in
/// parallel; the reduction follows `indices` order.
pub fn batch_gradient<T: Scalar>(
    samples: &[ImageSample<T>],
    indices: &[usize],
    params: &ModelParams<T>,
) -> Result<(T, ModelParams<T>)> {
    if indices.is_empty() {
        return Err(Error::domain("empty batch"));
    }
    let per_sample: Vec<(T, ModelParams<T>)> = indices
        .par_iter()
        .map(|&i| loss_and_grad(&samples[i].pixels, samples[i].label, params))
        .collect::<Result<_>>()?;
    let mut iter = per_sample.into_iter();
    let (mut loss, mut grad) = iter.next().unwrap();
    for (l, g) in iter {
        loss += l;
        grad.accumulate(&g)?;
    }
    let inv = T::one() / T::lit(indices.len() as f64);
    grad.scale(inv);
    Ok((loss * inv, grad))
}

fn check_labels<T>(samples: &[ImageSample<T>], num_classes: usize) -> Result<()> {
    match samples.iter().find(|s| s.label >= num_classes) {
        Some(s) => Err(Error::domain(format!(
            "sample {} has label {} but the model has {num_classes} classes",
            s.id, s.label
        ))),
        None => Ok(()),
    }
}

/// Trains from `params`, calling `on_epoch(epoch, mean_loss)` after each
/// epoch (1-based). The last batch of an epoch may be partial.
pub fn train_with<T: Scalar>(
    mut params: ModelParams<T>,
    samples: &[ImageSample<T>],
    tc: &TrainConfig,
    nc: &NadamConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<(ModelParams<T>, LossCurve)> {
    if samples.is_empty() {
        return Err(Error::domain("training set is empty"));
    }
    if tc.batch_size == 0 {
        return Err(Error::domain("batch_size must be at least 1"));
    }
    check_labels(samples, params.config.num_classes)?;
    let mut opt = Nadam::new(&params, nc.clone())?;
    let mut rng = RngState::new(tc.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut curve = LossCurve::default();
    for epoch in 1..=tc.epochs {
        if tc.shuffle {
            rng.shuffle(&mut order);
        }
        let mut total = 0.0;
        for (step, batch) in order.chunks(tc.batch_size).enumerate() {
            let (loss, grad) = batch_gradient(samples, batch, &params)?;
            let loss = loss.as_f64();
            if !loss.is_finite() || !grad.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss or gradient at epoch {epoch}, step {}",
                    step + 1
                )));
            }
            total += loss * batch.len() as f64;
            opt.step(&mut params, &grad)?;
        }
        let mean = total / samples.len() as f64;
        curve.losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok((params, curve))
}

pub fn train<T: Scalar>(
    params: ModelParams<T>,
    samples: &[ImageSample<T>],
    tc: &TrainConfig,
    nc: &NadamConfig,
) -> Result<(ModelParams<T>, LossCurve)> {
    train_with(params, samples, tc, nc, |_, _| {})
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<usize>,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Argmax-probability predictions; ties go to the lower class.
pub fn predict<T: Scalar>(params: &ModelParams<T>, samples: &[ImageSample<T>]) -> Result<Vec<usize>> {
    samples
        .par_iter()
        .map(|s| Ok(argmax(&forward(&s.pixels, params)?.probs)))
        .collect()
}

pub fn evaluate<T: Scalar>(params: &ModelParams<T>, samples: &[ImageSample<T>]) -> Result<Evaluation> {
    let predictions = predict(params, samples)?;
    let truth: Vec<usize> = samples.iter().map(|s| s.label).collect();
    let confusion = confusion(&predictions, &truth, params.config.num_classes)?;
    Ok(Evaluation {
        accuracy: confusion.accuracy(),
        predictions,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::from_vec(vec![v])
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let cfg = NadamConfig {
            learning_rate: 0.0,
            ..NadamConfig::default()
        };
        let mut p = scalar(3.0);
        let mut s = MomentState::zeros(&[1]);
        nadam_step(&mut p, &scalar(2.5), &mut s, &cfg).unwrap();
        assert_eq!(p.data(), &[3.0]);
        assert_eq!(s.t, 1);
    }

    #[test]
    fn first_step_hand_evaluated() {
        // g = 1, zero state: m = 0.1, v = 0.001.
        let cfg = NadamConfig::default();
        let m_hat = 0.1 / (1.0 - 0.9f64 * 0.9);
        let g_hat = 1.0 / (1.0 - 0.9);
        let v_hat: f64 = 0.001 / (1.0 - 0.999);
        let expected = 1.0 - 1e-4 * (0.9 * m_hat + 0.1 * g_hat) / (v_hat.sqrt() + 1e-8);
        let mut p = scalar(1.0);
        let mut s = MomentState::zeros(&[1]);
        nadam_step(&mut p, &scalar(1.0), &mut s, &cfg).unwrap();
        assert!((p.data()[0] - expected).abs() < 1e-12, "{} vs {expected}", p.data()[0]);
    }

    #[test]
    fn zero_gradient_zero_state_stays_put() {
        let mut p = scalar(-0.7);
        let mut s = MomentState::zeros(&[1]);
        for _ in 0..3 {
            nadam_step(&mut p, &scalar(0.0), &mut s, &NadamConfig::default()).unwrap();
        }
        assert_eq!(p.data(), &[-0.7]);
    }

    #[test]
    fn minimizes_square() {
        let cfg = NadamConfig {
            learning_rate: 1e-2,
            ..NadamConfig::default()
        };
        let mut x = scalar(5.0);
        let mut s = MomentState::zeros(&[1]);
        let mut steps = 0;
        while x.data()[0].abs() >= 1e-2 && steps < 5000 {
            let g = scalar(2.0 * x.data()[0]);
            nadam_step(&mut x, &g, &mut s, &cfg).unwrap();
            steps += 1;
        }
        assert!(x.data()[0].abs() < 1e-2, "x = {} after {steps} steps", x.data()[0]);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Tensor::<f64>::zeros(&[2]);
        let mut s = MomentState::zeros(&[2]);
        let r = nadam_step(&mut p, &Tensor::zeros(&[3]), &mut s, &NadamConfig::default());
        assert!(matches!(r, Err(Error::Dimension { .. })));
    }

    #[test]
    fn bad_betas_rejected() {
        let cfg = NadamConfig {
            beta2: 1.0,
            ..NadamConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn curve_csv() {
        let c = LossCurve {
            losses: vec![1.5, 0.25],
        };
        assert_eq!(c.to_csv(), "epoch,loss\n1,1.5\n2,0.25\n");
    }
}

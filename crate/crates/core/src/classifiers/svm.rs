use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::model::checkpoint::{read_tensor, write_tensor};
use crate::numerics::{argmax, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    /// Penalty; the hinge objective uses `λ = 1/(C·n)`.
    pub c: f64,
    pub iterations: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            iterations: 1000,
        }
    }
}

/// One-vs-rest linear SVM. Decision value of class `c` is `W[c]·x + b[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel {
    /// `[C × D]`
    pub weights: Tensor<f64>,
    pub bias: Vec<f64>,
}

/// Minimizes `(λ/2)‖w‖² + mean hinge` per class with full-batch
/// subgradient steps `1/(λt)` and the usual projection onto the
/// `1/√λ` ball. The bias is the weight of a constant-1 feature.
fn fit_binary(x: &[Vec<f64>], y: &[f64], lambda: f64, iterations: usize) -> Vec<f64> {
    let n = x.len() as f64;
    let dim = x[0].len() + 1;
    let mut w = vec![0.0; dim];
    let radius = 1.0 / lambda.sqrt();
    for t in 1..=iterations {
        let eta = 1.0 / (lambda * t as f64);
        let mut step = vec![0.0; dim];
        for (xi, &yi) in x.iter().zip(y) {
            let margin = yi * (dot(&w[..dim - 1], xi) + w[dim - 1]);
            if margin < 1.0 {
                for (s, v) in step.iter_mut().zip(xi) {
                    *s += yi * v;
                }
                step[dim - 1] += yi;
            }
        }
        let shrink = 1.0 - eta * lambda;
        for (wj, sj) in w.iter_mut().zip(&step) {
            *wj = shrink * *wj + eta * sj / n;
        }
        let norm = dot(&w, &w).sqrt();
        if norm > radius {
            let s = radius / norm;
            w.iter_mut().for_each(|v| *v *= s);
        }
    }
    w
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn svm_fit(table: &FeatureTable, cfg: &SvmConfig) -> Result<LinearSvmModel> {
    let labels = table.labels();
    let mut present = labels.clone();
    present.sort_unstable();
    present.dedup();
    if present.len() < 2 {
        return Err(Error::domain("SVM needs at least two classes in the training table"));
    }
    if !(cfg.c > 0.0) || cfg.iterations == 0 {
        return Err(Error::domain("SVM needs C > 0 and at least one iteration"));
    }
    let lambda = 1.0 / (cfg.c * table.len() as f64);
    let x: Vec<Vec<f64>> = table.rows().iter().map(|r| r.features.clone()).collect();
    let d = table.feature_dim();
    let per_class: Vec<Vec<f64>> = (0..table.num_classes())
        .into_par_iter()
        .map(|c| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
            fit_binary(&x, &y, lambda, cfg.iterations)
        })
        .collect();
    let mut weights = Tensor::zeros(&[table.num_classes(), d]);
    let mut bias = Vec::with_capacity(per_class.len());
    for (c, w) in per_class.iter().enumerate() {
        weights.row_mut(c).copy_from_slice(&w[..d]);
        bias.push(w[d]);
    }
    Ok(LinearSvmModel { weights, bias })
}

impl LinearSvmModel {
    pub fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn decision_values(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.feature_dim() {
            return Err(Error::dim("svm query", &[self.feature_dim()], &[x.len()]));
        }
        Ok((0..self.bias.len())
            .map(|c| dot(self.weights.row(c), x) + self.bias[c])
            .collect())
    }

    pub fn predict(&self, table: &FeatureTable) -> Result<Vec<usize>> {
        table
            .rows()
            .par_iter()
            .map(|r| Ok(argmax(&self.decision_values(&r.features)?)))
            .collect()
    }

    pub(crate) fn write_payload(&self, w: &mut impl Write) -> std::io::Result<()> {
        write_tensor(w, &self.weights)?;
        write_tensor(w, &Tensor::from_vec(self.bias.clone()))
    }

    pub(crate) fn read_payload(r: &mut impl Read) -> Result<Self> {
        let weights: Tensor<f64> = read_tensor(r)?;
        let bias: Tensor<f64> = read_tensor(r)?;
        if weights.shape().len() != 2 || bias.shape() != [weights.rows()] {
            return Err(Error::Corrupt("SVM payload is inconsistent".into()));
        }
        Ok(Self {
            weights,
            bias: bias.into_data(),
        })
    }
}

/// Shorthand for [`LinearSvmModel::predict`].
pub fn svm_predict(model: &LinearSvmModel, table: &FeatureTable) -> Result<Vec<usize>> {
    model.predict(table)
}

use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::model::checkpoint::{corrupt, read_tensor, write_tensor};
use crate::numerics::{argmax, softmax_in_place, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    /// Inverse regularization; the penalty is `l2 = 1/(C·n)` unless `l2`
    /// is given explicitly.
    pub c: f64,
    pub l2: Option<f64>,
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            l2: None,
            max_iters: 1000,
            tolerance: 1e-6,
        }
    }
}

/// Multinomial logistic regression, `softmax(W·x + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    /// `[C × D]`
    pub weights: Tensor<f64>,
    pub bias: Vec<f64>,
    pub l2: f64,
}

/// Diagnostics from a fit: loss after every accepted step (starting with
/// the initial loss) and the final gradient norm.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRegTrace {
    pub losses: Vec<f64>,
    pub grad_norm: f64,
    pub iterations: usize,
}

struct Problem {
    x: Tensor<f64>,
    y: Vec<usize>,
    classes: usize,
    l2: f64,
}

impl Problem {
    /// Mean cross-entropy plus `(l2/2)‖W‖²`, and its gradient packed as
    /// `[W row-major, b]`.
    fn loss_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let (w, b) = unpack(theta, self.classes, self.x.cols());
        let mut probs = self.x.matmul_nt(&w).expect("shapes fixed at fit");
        probs.add_row_vector(&b).expect("shapes fixed at fit");
        let n = self.y.len() as f64;
        let mut loss = 0.0;
        for (i, &yi) in self.y.iter().enumerate() {
            let row = probs.row_mut(i);
            softmax_in_place(row);
            loss -= row[yi].max(1e-300).ln();
            row[yi] -= 1.0;
        }
        probs.scale(1.0 / n);
        let mut gw = probs.matmul_tn(&self.x).expect("shapes fixed at fit");
        let gb = probs.sum_rows();
        let mut reg = 0.0;
        for (g, &wv) in gw.data_mut().iter_mut().zip(w.data()) {
            *g += self.l2 * wv;
            reg += wv * wv;
        }
        let mut grad = gw.into_data();
        grad.extend(gb);
        (loss / n + 0.5 * self.l2 * reg, grad)
    }
}

fn unpack(theta: &[f64], classes: usize, dim: usize) -> (Tensor<f64>, Vec<f64>) {
    let (w, b) = theta.split_at(classes * dim);
    (Tensor::new(&[classes, dim], w.to_vec()).unwrap(), b.to_vec())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full-batch gradient descent. Each step starts from a Barzilai-Borwein
/// length and backtracks until the Armijo condition holds, so accepted
/// losses never increase.
pub fn logreg_fit_traced(table: &FeatureTable, cfg: &LogRegConfig) -> Result<(LogRegModel, LogRegTrace)> {
    if table.is_empty() {
        return Err(Error::domain("cannot fit logistic regression on an empty table"));
    }
    let n = table.len();
    let l2 = match cfg.l2 {
        Some(l2) => l2,
        None => 1.0 / (cfg.c * n as f64),
    };
    if !(l2 >= 0.0 && l2.is_finite()) {
        return Err(Error::domain("l2 must be finite and non-negative (C > 0)"));
    }
    let rows: Vec<Vec<f64>> = table.rows().iter().map(|r| r.features.clone()).collect();
    let p = Problem {
        x: Tensor::from_rows(&rows)?,
        y: table.labels(),
        classes: table.num_classes(),
        l2,
    };
    let mut theta = vec![0.0; p.classes * (table.feature_dim() + 1)];
    let (mut loss, mut grad) = p.loss_grad(&theta);
    let mut losses = vec![loss];
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let gg = dot(&grad, &grad);
        if gg.sqrt() < cfg.tolerance {
            break;
        }
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
            let (l, g) = p.loss_grad(&cand);
            if l <= loss - 1e-4 * step * gg {
                accepted = Some((cand, l, g));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, l, g)) = accepted else { break };
        let s: Vec<f64> = cand.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        step = if sy > 0.0 { dot(&s, &s) / sy } else { step * 2.0 };
        theta = cand;
        loss = l;
        grad = g;
        losses.push(loss);
        iterations += 1;
    }
    let (weights, bias) = unpack(&theta, p.classes, table.feature_dim());
    let model = LogRegModel { weights, bias, l2 };
    let trace = LogRegTrace {
        losses,
        grad_norm: dot(&grad, &grad).sqrt(),
        iterations,
    };
    Ok((model, trace))
}

pub fn logreg_fit(table: &FeatureTable, cfg: &LogRegConfig) -> Result<LogRegModel> {
    Ok(logreg_fit_traced(table, cfg)?.0)
}

impl LogRegModel {
    pub fn feature_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.feature_dim() {
            return Err(Error::dim("logreg query", &[self.feature_dim()], &[x.len()]));
        }
        let mut z: Vec<f64> = (0..self.num_classes())
            .map(|c| dot(self.weights.row(c), x) + self.bias[c])
            .collect();
        softmax_in_place(&mut z);
        Ok(z)
    }

    pub fn predict(&self, table: &FeatureTable) -> Result<Vec<usize>> {
        table
            .rows()
            .par_iter()
            .map(|r| Ok(argmax(&self.probabilities(&r.features)?)))
            .collect()
    }

    pub(crate) fn write_payload(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_f64::<LittleEndian>(self.l2)?;
        write_tensor(w, &self.weights)?;
        write_tensor(w, &Tensor::from_vec(self.bias.clone()))
    }

    pub(crate) fn read_payload(r: &mut impl Read) -> Result<Self> {
        let l2 = r.read_f64::<LittleEndian>().map_err(corrupt)?;
        let weights: Tensor<f64> = read_tensor(r)?;
        let bias: Tensor<f64> = read_tensor(r)?;
        if weights.shape().len() != 2 || bias.shape() != [weights.rows()] {
            return Err(Error::Corrupt("logistic-regression payload is inconsistent".into()));
        }
        Ok(Self {
            weights,
            bias: bias.into_data(),
            l2,
        })
    }
}

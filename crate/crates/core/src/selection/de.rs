use serde::{Deserialize, Serialize};

use super::{sigmoid, Algorithm, BitMask, Elite, Fitness, FsConfig, FsResult};
use crate::error::Result;
use crate::numerics::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeParams {
    pub f: f64,
    pub cr: f64,
    /// A gene is on when `sigmoid(g) >= threshold`.
    pub threshold: f64,
}

impl Default for DeParams {
    fn default() -> Self {
        Self {
            f: 0.5,
            cr: 0.9,
            threshold: 0.5,
        }
    }
}

fn phenotype(g: &[f64], threshold: f64) -> BitMask {
    BitMask(g.iter().map(|&v| sigmoid(v) >= threshold).collect())
}

/// `k` distinct indices from `0..n` other than `skip`; repeats are allowed
/// only when fewer than `k` candidates exist.
fn donors(n: usize, skip: usize, k: usize, rng: &mut RngState) -> Vec<usize> {
    let mut out = Vec::with_capacity(k);
    let distinct = n > k;
    while out.len() < k {
        let r = rng.below(n - 1);
        let r = if r >= skip { r + 1 } else { r };
        if !distinct || !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

/// DE/rand/1/bin on real genotypes in `[-1, 1]`, binarized through the
/// sigmoid. A trial replaces its target when it scores at least as well.
pub(super) fn run(fit: &Fitness, cfg: &FsConfig, rng: &mut RngState) -> Result<FsResult> {
    let p = &cfg.de;
    let d = fit.dim();
    let n = cfg.population;
    let mut genes: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .collect();
    for g in &mut genes {
        repair(g, p.threshold, rng);
    }
    let masks: Vec<BitMask> = genes.iter().map(|g| phenotype(g, p.threshold)).collect();
    let mut scores = fit.score_all(&masks)?;
    let mut elite = Elite::new(&masks, &scores);

    for _ in 1..cfg.iterations {
        let trials: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let r = donors(n, i, 3, rng);
                let jrand = rng.below(d);
                let mut t: Vec<f64> = (0..d)
                    .map(|j| {
                        if j == jrand || rng.next_f64() < p.cr {
                            genes[r[0]][j] + p.f * (genes[r[1]][j] - genes[r[2]][j])
                        } else {
                            genes[i][j]
                        }
                    })
                    .collect();
                repair(&mut t, p.threshold, rng);
                t
            })
            .collect();
        let trial_masks: Vec<BitMask> = trials.iter().map(|t| phenotype(t, p.threshold)).collect();
        let trial_scores = fit.score_all(&trial_masks)?;
        for (i, t) in trials.into_iter().enumerate() {
            if trial_scores[i] >= scores[i] {
                genes[i] = t;
                scores[i] = trial_scores[i];
            }
        }
        elite.offer(&trial_masks, &trial_scores);
    }
    Ok(elite.finish(Algorithm::De))
}

/// If no gene is on, switches on one uniformly chosen gene by moving it one
/// unit past the threshold's logit.
fn repair(g: &mut [f64], threshold: f64, rng: &mut RngState) {
    if let Some(j) = phenotype(g, threshold).repair(rng) {
        g[j] = (threshold / (1.0 - threshold)).ln() + 1.0;
    }
}

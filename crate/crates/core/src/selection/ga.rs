use serde::{Deserialize, Serialize};

use super::{random_mask, Algorithm, BitMask, Elite, Fitness, FsConfig, FsResult};
use crate::error::Result;
use crate::numerics::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaParams {
    pub tournament: usize,
    pub crossover_rate: f64,
    /// Per-bit flip probability; `None` means `1/D`.
    pub mutation_rate: Option<f64>,
    pub elitism: usize,
}

impl Default for GaParams {
    fn default() -> Self {
        Self {
            tournament: 3,
            crossover_rate: 0.9,
            mutation_rate: None,
            elitism: 1,
        }
    }
}

/// Index of the best of `size` uniform draws (with replacement); ties keep
/// the first drawn.
fn tournament(scores: &[f64], size: usize, rng: &mut RngState) -> usize {
    let mut best = rng.below(scores.len());
    for _ in 1..size {
        let c = rng.below(scores.len());
        if scores[c] > scores[best] {
            best = c;
        }
    }
    best
}

/// Generational GA on bitstrings: tournament selection, one-point
/// crossover, bit-flip mutation, and the top `elitism` carried over.
pub(super) fn run(fit: &Fitness, cfg: &FsConfig, rng: &mut RngState) -> Result<FsResult> {
    let p = &cfg.ga;
    let d = fit.dim();
    let n = cfg.population;
    let mutation = p.mutation_rate.unwrap_or(1.0 / d as f64);
    let keep = p.elitism.min(n);
    let mut pop: Vec<BitMask> = (0..n).map(|_| random_mask(d, rng)).collect();
    let mut scores = fit.score_all(&pop)?;
    let mut elite = Elite::new(&pop, &scores);

    for _ in 1..cfg.iterations {
        // Stable sort: equal scores keep population order.
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut next: Vec<BitMask> = order[..keep].iter().map(|&i| pop[i].clone()).collect();
        while next.len() < n {
            let a = &pop[tournament(&scores, p.tournament.max(1), rng)];
            let b = &pop[tournament(&scores, p.tournament.max(1), rng)];
            let (mut c1, mut c2) = (a.clone(), b.clone());
            if d > 1 && rng.next_f64() < p.crossover_rate {
                let cut = 1 + rng.below(d - 1);
                c1.0[cut..].copy_from_slice(&b.0[cut..]);
                c2.0[cut..].copy_from_slice(&a.0[cut..]);
            }
            for child in [c1, c2] {
                if next.len() == n {
                    break;
                }
                let mut child = child;
                for bit in child.0.iter_mut() {
                    if rng.next_f64() < mutation {
                        *bit = !*bit;
                    }
                }
                child.repair(rng);
                next.push(child);
            }
        }
        let new_scores = fit.score_all(&next[keep..])?;
        let mut all = order[..keep].iter().map(|&i| scores[i]).collect::<Vec<_>>();
        all.extend(&new_scores);
        elite.offer(&next[keep..], &new_scores);
        pop = next;
        scores = all;
    }
    Ok(elite.finish(Algorithm::Ga))
}

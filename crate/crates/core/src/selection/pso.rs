use serde::{Deserialize, Serialize};

use super::{random_mask, sigmoid, Algorithm, BitMask, Elite, Fitness, FsConfig, FsResult};
use crate::error::Result;
use crate::numerics::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoParams {
    /// Inertia falls linearly from `inertia_start` to `inertia_end`.
    pub inertia_start: f64,
    pub inertia_end: f64,
    pub c1: f64,
    pub c2: f64,
    pub v_max: f64,
}

impl Default for PsoParams {
    fn default() -> Self {
        Self {
            inertia_start: 0.9,
            inertia_end: 0.4,
            c1: 2.0,
            c2: 2.0,
            v_max: 6.0,
        }
    }
}

/// Binary PSO: velocities are real, every bit is resampled with
/// probability `sigmoid(v)` each generation.
pub(super) fn run(fit: &Fitness, cfg: &FsConfig, rng: &mut RngState) -> Result<FsResult> {
    let p = &cfg.pso;
    let d = fit.dim();
    let mut pos: Vec<BitMask> = (0..cfg.population).map(|_| random_mask(d, rng)).collect();
    let mut vel: Vec<Vec<f64>> = (0..cfg.population)
        .map(|_| (0..d).map(|_| rng.uniform(-1.0, 1.0)).collect())
        .collect();
    let scores = fit.score_all(&pos)?;
    let mut pbest = pos.clone();
    let mut pbest_score = scores.clone();
    let mut elite = Elite::new(&pos, &scores);

    for it in 1..cfg.iterations {
        let frac = it as f64 / (cfg.iterations - 1) as f64;
        let w = p.inertia_start + (p.inertia_end - p.inertia_start) * frac;
        let g = &elite.mask.0;
        let bit = |b: bool| f64::from(u8::from(b));
        for i in 0..cfg.population {
            let (x, v, pb) = (&mut pos[i].0, &mut vel[i], &pbest[i].0);
            for j in 0..d {
                let r1 = rng.next_f64();
                let r2 = rng.next_f64();
                let xj = bit(x[j]);
                let vj = w * v[j] + p.c1 * r1 * (bit(pb[j]) - xj) + p.c2 * r2 * (bit(g[j]) - xj);
                v[j] = vj.clamp(-p.v_max, p.v_max);
                x[j] = rng.next_f64() < sigmoid(v[j]);
            }
            pos[i].repair(rng);
        }
        let scores = fit.score_all(&pos)?;
        for i in 0..cfg.population {
            if scores[i] > pbest_score[i] {
                pbest_score[i] = scores[i];
                pbest[i] = pos[i].clone();
            }
        }
        elite.offer(&pos, &scores);
    }
    Ok(elite.finish(Algorithm::Pso))
}

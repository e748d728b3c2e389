//! Wrapper feature selection: binary PSO, differential evolution and a
//! genetic algorithm searching column masks scored by k-NN validation
//! accuracy with a small parsimony bonus.
//!
//! A run scores at most `population × iterations` candidates.
//! Iteration 1 scores the initial population; each later iteration scores
//! one new generation. The reported history holds the best fitness seen up
//! to each iteration. Random draws happen on one thread in a fixed order
//! and fitness is memoized per mask, so threading never changes results.

mod de;
mod ga;
mod pso;

use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{vote, DEFAULT_K};
use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::numerics::{derive_seed, RngState, Tensor};

pub use de::DeParams;
pub use ga::GaParams;
pub use pso::PsoParams;

/// Column subset; `true` keeps the column.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitMask(pub Vec<bool>);

impl BitMask {
    pub fn full(dim: usize) -> Self {
        BitMask(vec![true; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn columns(&self) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    pub fn bits(&self) -> &[bool] {
        &self.0
    }

    /// Bits of `index` in little-endian order, for exhaustive enumeration.
    pub fn from_index(index: u64, dim: usize) -> Self {
        BitMask((0..dim).map(|j| index >> j & 1 == 1).collect())
    }

    /// Sets one uniformly chosen bit if none is set.
    pub(crate) fn repair(&mut self, rng: &mut RngState) -> Option<usize> {
        if self.count() == 0 && !self.0.is_empty() {
            let j = rng.below(self.0.len());
            self.0[j] = true;
            Some(j)
        } else {
            None
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse().map_err(|e: Error| Error::Format {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, format!("{self}\n")).map_err(|e| Error::io(path, e))
    }
}

/// One `0`/`1` character per column.
impl fmt::Display for BitMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for BitMask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::domain(format!("mask character `{other}` is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(BitMask)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Pso,
    De,
    Ga,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Pso, Algorithm::De, Algorithm::Ga];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pso => "pso",
            Algorithm::De => "de",
            Algorithm::Ga => "ga",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::domain(format!("unknown algorithm `{s}` (expected one of pso, de, ga)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FsConfig {
    pub algorithm: Algorithm,
    pub population: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Neighbours in the k-NN fitness.
    pub k: usize,
    /// Weight of validation accuracy; `1 - alpha` rewards small masks.
    pub alpha: f64,
    /// Share of the training table used to fit k-NN during the search; the
    /// rest is the validation set.
    pub train_fraction: f64,
    pub pso: PsoParams,
    pub de: DeParams,
    pub ga: GaParams,
}

impl Default for FsConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Pso,
            population: 30,
            iterations: 200,
            seed: 0,
            k: DEFAULT_K,
            alpha: 0.99,
            train_fraction: 0.8,
            pso: PsoParams::default(),
            de: DeParams::default(),
            ga: GaParams::default(),
        }
    }
}

impl FsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 2 || self.iterations < 1 {
            return Err(Error::domain("selection needs population >= 2 and iterations >= 1"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::domain("alpha must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// k-NN validation scorer over one (train, validation) pair, memoized per
/// mask.
pub struct Fitness {
    train: Tensor<f64>,
    train_labels: Vec<usize>,
    val: Tensor<f64>,
    val_labels: Vec<usize>,
    num_classes: usize,
    dim: usize,
    k: usize,
    alpha: f64,
    cache: Mutex<HashMap<BitMask, f64>>,
}

fn as_matrix(t: &FeatureTable) -> Result<Tensor<f64>> {
    let rows: Vec<Vec<f64>> = t.rows().iter().map(|r| r.features.clone()).collect();
    if rows.is_empty() {
        return Ok(Tensor::zeros(&[0, t.feature_dim()]));
    }
    Tensor::from_rows(&rows)
}

impl Fitness {
    pub fn new(train: &FeatureTable, validation: &FeatureTable, k: usize, alpha: f64) -> Result<Self> {
        if train.feature_dim() != validation.feature_dim() || train.num_classes() != validation.num_classes() {
            return Err(Error::dim(
                "fitness tables",
                &[train.feature_dim(), train.num_classes()],
                &[validation.feature_dim(), validation.num_classes()],
            ));
        }
        if k == 0 || k > train.len() {
            return Err(Error::domain(format!(
                "k = {k} needs 1..={} training rows",
                train.len()
            )));
        }
        if validation.is_empty() {
            return Err(Error::domain("validation table is empty"));
        }
        if train.feature_dim() == 0 {
            return Err(Error::domain("tables have no feature columns"));
        }
        Ok(Self {
            train: as_matrix(train)?,
            train_labels: train.labels(),
            val: as_matrix(validation)?,
            val_labels: validation.labels(),
            num_classes: train.num_classes(),
            dim: train.feature_dim(),
            k,
            alpha,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// k-NN accuracy on the validation rows using the mask's columns.
    pub fn accuracy(&self, mask: &BitMask) -> Result<f64> {
        if mask.len() != self.dim {
            return Err(Error::dim("fitness mask", &[self.dim], &[mask.len()]));
        }
        let cols = mask.columns();
        if cols.is_empty() {
            return Err(Error::domain("fitness of an empty mask"));
        }
        let correct = (0..self.val_labels.len())
            .filter(|&i| {
                vote(
                    &self.train,
                    &self.train_labels,
                    self.num_classes,
                    self.val.row(i),
                    Some(&cols),
                    self.k,
                ) == self.val_labels[i]
            })
            .count();
        Ok(correct as f64 / self.val_labels.len() as f64)
    }

    /// `alpha·accuracy + (1 - alpha)·(1 - |mask|/D)`.
    pub fn score(&self, mask: &BitMask) -> Result<f64> {
        if let Some(&v) = self.cache.lock().unwrap().get(mask) {
            return Ok(v);
        }
        let acc = self.accuracy(mask)?;
        let v = self.alpha * acc + (1.0 - self.alpha) * (1.0 - mask.count() as f64 / self.dim as f64);
        self.cache.lock().unwrap().insert(mask.clone(), v);
        Ok(v)
    }

    /// Scores in input order; distinct masks are evaluated in parallel.
    pub fn score_all(&self, masks: &[BitMask]) -> Result<Vec<f64>> {
        masks.par_iter().map(|m| self.score(m)).collect()
    }

    /// Distinct masks scored so far.
    pub fn evaluated(&self) -> usize {
        self.cache.lock().unwrap().len()
    }
}

/// Fitness of one mask: `0.99·(k-NN validation accuracy) + 0.01·(1 - |mask|/D)`.
pub fn fitness(mask: &BitMask, train: &FeatureTable, validation: &FeatureTable, k: usize) -> Result<f64> {
    Fitness::new(train, validation, k, 0.99)?.score(mask)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FsResult {
    pub algorithm: Algorithm,
    pub mask: BitMask,
    pub fitness: f64,
    /// Best-so-far fitness after each iteration.
    pub history: Vec<f64>,
}

impl FsResult {
    pub fn selected(&self) -> usize {
        self.mask.count()
    }

    /// `iteration,best_fitness`, 1-based, round-trip precision.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("iteration,best_fitness\n");
        for (i, f) in self.history.iter().enumerate() {
            writeln!(s, "{},{f:?}", i + 1).unwrap();
        }
        s
    }

    /// One selected column index per line.
    pub fn columns_text(&self) -> String {
        self.mask.columns().iter().map(|c| format!("{c}\n")).collect()
    }
}

/// Best-so-far tracker shared by the algorithms. Ties keep the earlier
/// candidate.
pub(crate) struct Elite {
    pub mask: BitMask,
    pub fitness: f64,
    pub history: Vec<f64>,
}

impl Elite {
    pub fn new(masks: &[BitMask], scores: &[f64]) -> Self {
        let mut e = Elite {
            mask: masks[0].clone(),
            fitness: scores[0],
            history: Vec::new(),
        };
        e.offer(masks, scores);
        e
    }

    pub fn offer(&mut self, masks: &[BitMask], scores: &[f64]) {
        for (m, &s) in masks.iter().zip(scores) {
            if s > self.fitness {
                self.fitness = s;
                self.mask = m.clone();
            }
        }
        self.history.push(self.fitness);
    }

    pub fn finish(self, algorithm: Algorithm) -> FsResult {
        FsResult {
            algorithm,
            mask: self.mask,
            fitness: self.fitness,
            history: self.history,
        }
    }
}

pub(crate) fn random_mask(dim: usize, rng: &mut RngState) -> BitMask {
    let mut m = BitMask((0..dim).map(|_| rng.bernoulli(0.5)).collect());
    m.repair(rng);
    m
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Runs `cfg.algorithm` against an already-built scorer.
pub fn run(fit: &Fitness, cfg: &FsConfig) -> Result<FsResult> {
    cfg.validate()?;
    let mut rng = RngState::new(derive_seed(cfg.seed, cfg.algorithm.name()));
    match cfg.algorithm {
        Algorithm::Pso => pso::run(fit, cfg, &mut rng),
        Algorithm::De => de::run(fit, cfg, &mut rng),
        Algorithm::Ga => ga::run(fit, cfg, &mut rng),
    }
}

pub fn pso_select(train: &FeatureTable, validation: &FeatureTable, cfg: &FsConfig) -> Result<FsResult> {
    let cfg = FsConfig {
        algorithm: Algorithm::Pso,
        ..cfg.clone()
    };
    run(&Fitness::new(train, validation, cfg.k, cfg.alpha)?, &cfg)
}

pub fn de_select(train: &FeatureTable, validation: &FeatureTable, cfg: &FsConfig) -> Result<FsResult> {
    let cfg = FsConfig {
        algorithm: Algorithm::De,
        ..cfg.clone()
    };
    run(&Fitness::new(train, validation, cfg.k, cfg.alpha)?, &cfg)
}

pub fn ga_select(train: &FeatureTable, validation: &FeatureTable, cfg: &FsConfig) -> Result<FsResult> {
    let cfg = FsConfig {
        algorithm: Algorithm::Ga,
        ..cfg.clone()
    };
    run(&Fitness::new(train, validation, cfg.k, cfg.alpha)?, &cfg)
}

/// Splits `table` into search-train and validation parts (stratified,
/// seeded) and runs the configured algorithm. The split seed is derived
/// from `cfg.seed`, so it does not depend on the algorithm.
pub fn select_features(table: &FeatureTable, cfg: &FsConfig) -> Result<FsResult> {
    let (train, val) = table.stratified_split(cfg.train_fraction, derive_seed(cfg.seed, "validation"))?;
    run(&Fitness::new(&train, &val, cfg.k, cfg.alpha)?, cfg)
}

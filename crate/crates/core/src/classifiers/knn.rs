use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::model::checkpoint::{corrupt, read_tensor, write_tensor};
use crate::numerics::Tensor;

/// Stored training rows for majority-vote nearest-neighbour prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    num_classes: usize,
    /// `[n × D]`
    features: Tensor<f64>,
    labels: Vec<usize>,
}

impl KnnModel {
    pub fn fit(table: &FeatureTable, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::domain("k must be at least 1"));
        }
        if k > table.len() {
            return Err(Error::domain(format!("k = {k} exceeds {} training rows", table.len())));
        }
        let rows: Vec<Vec<f64>> = table.rows().iter().map(|r| r.features.clone()).collect();
        let features = if rows.is_empty() {
            Tensor::zeros(&[0, table.feature_dim()])
        } else {
            Tensor::from_rows(&rows)?
        };
        Ok(Self {
            k,
            num_classes: table.num_classes(),
            features,
            labels: table.labels(),
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn predict_one(&self, query: &[f64]) -> Result<usize> {
        if query.len() != self.feature_dim() {
            return Err(Error::dim("knn query", &[self.feature_dim()], &[query.len()]));
        }
        Ok(vote(
            &self.features,
            &self.labels,
            self.num_classes,
            query,
            None,
            self.k,
        ))
    }

    pub fn predict(&self, queries: &FeatureTable) -> Result<Vec<usize>> {
        queries
            .rows()
            .par_iter()
            .map(|r| self.predict_one(&r.features))
            .collect()
    }

    pub(crate) fn write_payload(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_u64::<LittleEndian>(self.k as u64)?;
        w.write_u64::<LittleEndian>(self.num_classes as u64)?;
        write_tensor(w, &self.features)?;
        for &l in &self.labels {
            w.write_u64::<LittleEndian>(l as u64)?;
        }
        Ok(())
    }

    pub(crate) fn read_payload(r: &mut impl Read) -> Result<Self> {
        let k = r.read_u64::<LittleEndian>().map_err(corrupt)? as usize;
        let num_classes = r.read_u64::<LittleEndian>().map_err(corrupt)? as usize;
        let features: Tensor<f64> = read_tensor(r)?;
        if features.shape().len() != 2 || k == 0 || k > features.rows() {
            return Err(Error::Corrupt("k-NN payload is inconsistent".into()));
        }
        let mut labels = Vec::with_capacity(features.rows());
        for _ in 0..features.rows() {
            let l = r.read_u64::<LittleEndian>().map_err(corrupt)? as usize;
            if l >= num_classes {
                return Err(Error::Corrupt(format!("k-NN label {l} out of range")));
            }
            labels.push(l);
        }
        Ok(Self {
            k,
            num_classes,
            features,
            labels,
        })
    }
}

/// Majority label among the `k` rows nearest to `query` in squared
/// Euclidean distance, restricted to `cols` when given. Distance ties keep
/// the lower row index; vote ties go to the lower class.
pub(crate) fn vote(
    features: &Tensor<f64>,
    labels: &[usize],
    num_classes: usize,
    query: &[f64],
    cols: Option<&[usize]>,
    k: usize,
) -> usize {
    // Sorted by (distance, index); rows arrive in index order, so an
    // equal distance never displaces an earlier row.
    let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
    for i in 0..labels.len() {
        let row = features.row(i);
        let d: f64 = match cols {
            Some(cols) => cols.iter().map(|&j| (row[j] - query[j]).powi(2)).sum(),
            None => row.iter().zip(query).map(|(a, b)| (a - b).powi(2)).sum(),
        };
        if best.len() == k && d >= best[k - 1].0 {
            continue;
        }
        let pos = best.partition_point(|&(bd, _)| bd <= d);
        best.insert(pos, (d, i));
        best.truncate(k);
    }
    let mut counts = vec![0usize; num_classes];
    for &(_, i) in &best {
        counts[labels[i]] += 1;
    }
    let mut winner = 0;
    for c in 1..num_classes {
        if counts[c] > counts[winner] {
            winner = c;
        }
    }
    winner
}

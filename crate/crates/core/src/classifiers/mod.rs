//! Classifiers over [`FeatureTable`]s: k-nearest neighbours, multinomial
//! logistic regression and a one-vs-rest linear SVM.
//!
//! Fitted models persist in the checkpoint container with their own kind
//! tag (see [`crate::model::checkpoint`]).

mod knn;
mod logreg;
mod svm;

pub(crate) use knn::vote;
pub use knn::KnnModel;
pub use logreg::{logreg_fit, logreg_fit_traced, LogRegConfig, LogRegModel, LogRegTrace};
pub use svm::{svm_fit, svm_predict, LinearSvmModel, SvmConfig};

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::FeatureTable;
use crate::error::{Error, Result};
use crate::model::checkpoint::{read_header, write_header, CheckpointKind};

pub const DEFAULT_K: usize = 5;

/// Fits a k-NN model and predicts `queries` in one go.
pub fn knn_predict(train: &FeatureTable, queries: &FeatureTable, k: usize) -> Result<Vec<usize>> {
    KnnModel::fit(train, k)?.predict(queries)
}

/// Which classifier to fit, with its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ClassifierSpec {
    Knn {
        #[serde(default = "default_k")]
        k: usize,
    },
    #[serde(rename = "logreg")]
    LogReg(LogRegConfig),
    Svm(SvmConfig),
}

fn default_k() -> usize {
    DEFAULT_K
}

impl ClassifierSpec {
    pub const NAMES: [&'static str; 3] = ["knn", "logreg", "svm"];

    pub fn name(&self) -> &'static str {
        match self {
            ClassifierSpec::Knn { .. } => "knn",
            ClassifierSpec::LogReg(_) => "logreg",
            ClassifierSpec::Svm(_) => "svm",
        }
    }

    /// Default settings for a classifier name.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "knn" => ClassifierSpec::Knn { k: DEFAULT_K },
            "logreg" => ClassifierSpec::LogReg(LogRegConfig::default()),
            "svm" => ClassifierSpec::Svm(SvmConfig::default()),
            other => {
                return Err(Error::domain(format!(
                    "unknown classifier `{other}` (expected one of {})",
                    Self::NAMES.join(", ")
                )))
            }
        })
    }

    pub fn fit(&self, table: &FeatureTable) -> Result<Classifier> {
        Ok(match self {
            ClassifierSpec::Knn { k } => Classifier::Knn(KnnModel::fit(table, *k)?),
            ClassifierSpec::LogReg(cfg) => Classifier::LogReg(logreg_fit(table, cfg)?),
            ClassifierSpec::Svm(cfg) => Classifier::Svm(svm_fit(table, cfg)?),
        })
    }
}

/// A fitted classifier of any supported kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Classifier {
    Knn(KnnModel),
    LogReg(LogRegModel),
    Svm(LinearSvmModel),
}

impl Classifier {
    pub fn name(&self) -> &'static str {
        match self {
            Classifier::Knn(_) => "knn",
            Classifier::LogReg(_) => "logreg",
            Classifier::Svm(_) => "svm",
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            Classifier::Knn(m) => m.feature_dim(),
            Classifier::LogReg(m) => m.feature_dim(),
            Classifier::Svm(m) => m.feature_dim(),
        }
    }

    pub fn predict(&self, table: &FeatureTable) -> Result<Vec<usize>> {
        if table.feature_dim() != self.feature_dim() {
            return Err(Error::dim(
                "classifier input",
                &[self.feature_dim()],
                &[table.feature_dim()],
            ));
        }
        match self {
            Classifier::Knn(m) => m.predict(table),
            Classifier::LogReg(m) => m.predict(table),
            Classifier::Svm(m) => m.predict(table),
        }
    }

    pub fn write_checkpoint(&self, w: &mut impl Write) -> std::io::Result<()> {
        match self {
            Classifier::Knn(m) => {
                write_header(w, CheckpointKind::Knn)?;
                m.write_payload(w)
            }
            Classifier::LogReg(m) => {
                write_header(w, CheckpointKind::LogReg)?;
                m.write_payload(w)
            }
            Classifier::Svm(m) => {
                write_header(w, CheckpointKind::LinearSvm)?;
                m.write_payload(w)
            }
        }
    }

    pub fn read_checkpoint(r: &mut impl Read) -> Result<Self> {
        Ok(match read_header(r)? {
            CheckpointKind::Knn => Classifier::Knn(KnnModel::read_payload(r)?),
            CheckpointKind::LogReg => Classifier::LogReg(LogRegModel::read_payload(r)?),
            CheckpointKind::LinearSvm => Classifier::Svm(LinearSvmModel::read_payload(r)?),
            CheckpointKind::Model => return Err(Error::Corrupt("checkpoint holds a model, not a classifier".into())),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_checkpoint(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(&mut BufReader::new(f))
    }
}

//! Pipeline configuration file (TOML, `version = 1`).
//!
//! ```toml
//! version = 1
//! seed = 7
//! out_dir = "out"            # relative to this file
//! threads = 1
//!
//! [dataset]
//! manifest = "manifest.tsv"  # relative to this file
//! image_size = [32, 32]      # every image is resized to this
//! train_fraction = 0.8       # used when the manifest has unassigned splits
//!
//! [extractor]
//! kind = "miafex"            # or hog / lbp / glcm / gabor with their params
//!
//! [model]                    # image_size, channels, num_classes come from the dataset
//! embed_dim = 64
//!
//! [train]
//! epochs = 50
//!
//! [nadam]
//! learning_rate = 1e-4
//!
//! [selection]
//! algorithm = "de"
//!
//! [[classifiers]]
//! kind = "knn"
//! k = 5
//! ```
//!
//! Every section except `[dataset]` is optional. Seeds inside sections are
//! ignored: each stage gets `derive_seed(seed, <stage>)`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use miafex::classifiers::ClassifierSpec;
use miafex::features::{ClassicalExtractor, GaborBankParams, GlcmParams, HogParams, LbpParams};
use miafex::model::ModelConfig;
use miafex::numerics::derive_seed;
use miafex::selection::FsConfig;
use miafex::trainer::{NadamConfig, TrainConfig};

use crate::CliError;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub manifest: PathBuf,
    #[serde(default = "default_image_size")]
    pub image_size: (usize, usize),
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_image_size() -> (usize, usize) {
    (224, 224)
}

fn default_train_fraction() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ExtractorSpec {
    #[default]
    Miafex,
    Hog(HogParams),
    Lbp(LbpParams),
    Glcm(GlcmParams),
    Gabor(GaborBankParams),
}

impl ExtractorSpec {
    pub const NAMES: [&'static str; 5] = ["miafex", "hog", "lbp", "glcm", "gabor"];

    pub fn name(&self) -> &'static str {
        match self {
            ExtractorSpec::Miafex => "miafex",
            ExtractorSpec::Hog(_) => "hog",
            ExtractorSpec::Lbp(_) => "lbp",
            ExtractorSpec::Glcm(_) => "glcm",
            ExtractorSpec::Gabor(_) => "gabor",
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        if name == "miafex" {
            return Some(ExtractorSpec::Miafex);
        }
        Some(match ClassicalExtractor::by_name(name)? {
            ClassicalExtractor::Hog(p) => ExtractorSpec::Hog(p),
            ClassicalExtractor::Lbp(p) => ExtractorSpec::Lbp(p),
            ClassicalExtractor::Glcm(p) => ExtractorSpec::Glcm(p),
            ClassicalExtractor::Gabor(p) => ExtractorSpec::Gabor(p),
        })
    }

    pub fn classical(&self) -> Option<ClassicalExtractor> {
        Some(match self {
            ExtractorSpec::Miafex => return None,
            ExtractorSpec::Hog(p) => ClassicalExtractor::Hog(p.clone()),
            ExtractorSpec::Lbp(p) => ClassicalExtractor::Lbp(p.clone()),
            ExtractorSpec::Glcm(p) => ClassicalExtractor::Glcm(p.clone()),
            ExtractorSpec::Gabor(p) => ClassicalExtractor::Gabor(p.clone()),
        })
    }
}

/// A classifier to run, optionally under a custom method label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub spec: ClassifierSpec,
}

impl ClassifierEntry {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.spec.name().to_string())
    }
}

fn default_classifiers() -> Vec<ClassifierEntry> {
    ClassifierSpec::NAMES
        .iter()
        .map(|n| ClassifierEntry {
            label: None,
            spec: ClassifierSpec::by_name(n).unwrap(),
        })
        .collect()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_threads() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default = "default_threads")]
    pub threads: usize,
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub extractor: ExtractorSpec,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub nadam: NadamConfig,
    #[serde(default)]
    pub selection: FsConfig,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ClassifierEntry>,
}

impl PipelineConfig {
    /// Parses `text`; relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, CliError> {
        let mut cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
        if cfg.version != CONFIG_VERSION {
            return Err(CliError::Usage(format!(
                "config version {} is not supported (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        if cfg.threads == 0 {
            return Err(CliError::Usage("threads must be at least 1".into()));
        }
        cfg.dataset.manifest = base.join(&cfg.dataset.manifest);
        cfg.out_dir = base.join(&cfg.out_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    /// Model geometry with input size and class count taken from the data.
    pub fn model_config(&self, num_classes: usize) -> ModelConfig {
        ModelConfig {
            image_size: self.dataset.image_size,
            channels: 3,
            num_classes,
            ..self.model.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.stage_seed("train"),
            ..self.train.clone()
        }
    }

    pub fn selection_config(&self) -> FsConfig {
        FsConfig {
            seed: self.stage_seed("selection"),
            ..self.selection.clone()
        }
    }
}

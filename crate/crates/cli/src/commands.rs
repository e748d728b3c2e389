//! Stage implementations. Each reads its inputs from the configured output
//! directory, so stages can be rerun independently.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use miafex::classifiers::{Classifier, ClassifierSpec};
use miafex::dataset::{load_split, split_manifest, DatasetManifest, FeatureRow, FeatureTable, ImageSample, Split};
use miafex::metrics::{emit_report, emit_summary, metrics_csv, pct, MetricsReport, ReportEntry};
use miafex::model::{extract_table, ModelParams};
use miafex::numerics::RngState;
use miafex::selection::{select_features, BitMask};
use miafex::trainer::{evaluate, train_with};
use miafex::Error;

use crate::config::{ClassifierEntry, ExtractorSpec, PipelineConfig};
use crate::{CliError, CliResult};

pub const CHECKPOINT: &str = "model.ckpt";
pub const LOSS_CURVE: &str = "loss_curve.csv";
const SPLITS: [Split; 2] = [Split::Train, Split::Test];

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn feature_path(out: &Path, extractor: &str, split: Split) -> PathBuf {
    out.join(format!("features_{extractor}_{split}.bin"))
}

pub fn selection_prefix(out: &Path, extractor: &str, algorithm: &str) -> PathBuf {
    out.join(format!("selection_{extractor}_{algorithm}"))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn ensure_out_dir(cfg: &PipelineConfig) -> CliResult<()> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| {
        CliError::Runtime(Error::Io {
            path: cfg.out_dir.clone(),
            source: e,
        })
    })
}

/// The manifest with splits assigned; bad or missing files are usage errors.
pub fn load_manifest(cfg: &PipelineConfig) -> CliResult<DatasetManifest> {
    let path = &cfg.dataset.manifest;
    if !path.is_file() {
        return Err(usage(format!("manifest not found: {}", path.display())));
    }
    let m = DatasetManifest::load(path).map_err(|e| usage(e.to_string()))?;
    let m = split_manifest(&m, cfg.dataset.train_fraction, cfg.stage_seed("split"))?;
    m.require_splits().map_err(|e| usage(e.to_string()))?;
    Ok(m)
}

fn load_images(cfg: &PipelineConfig, m: &DatasetManifest, split: Split) -> CliResult<Vec<ImageSample<f64>>> {
    Ok(load_split(m, split, cfg.dataset.image_size)?)
}

/// The configured extractor, or the named one with default parameters when
/// it differs from the configured kind.
fn resolve_extractor(cfg: &PipelineConfig, name: Option<&str>) -> CliResult<ExtractorSpec> {
    match name {
        None => Ok(cfg.extractor.clone()),
        Some(n) if n == cfg.extractor.name() => Ok(cfg.extractor.clone()),
        Some(n) => ExtractorSpec::by_name(n).ok_or_else(|| {
            usage(format!(
                "unknown extractor `{n}` (expected one of {})",
                ExtractorSpec::NAMES.join(", ")
            ))
        }),
    }
}

/// Trains the transformer on the train split; writes the checkpoint and
/// the per-epoch loss curve.
pub fn train(cfg: &PipelineConfig) -> CliResult<ModelParams<f64>> {
    cfg.nadam.validate().map_err(|e| usage(e.to_string()))?;
    if cfg.train.batch_size == 0 {
        return Err(usage("batch_size must be at least 1"));
    }
    let m = load_manifest(cfg)?;
    let train_set = load_images(cfg, &m, Split::Train)?;
    let mc = cfg.model_config(m.num_classes());
    let mut rng = RngState::new(cfg.stage_seed("model-init"));
    let params = ModelParams::<f64>::init(&mc, &mut rng).map_err(|e| usage(e.to_string()))?;
    let tc = cfg.train_config();
    println!(
        "training on {} images: epochs={} batch={} lr={:e}",
        train_set.len(),
        tc.epochs,
        tc.batch_size,
        cfg.nadam.learning_rate
    );
    let epochs = tc.epochs;
    let (params, curve) = train_with(params, &train_set, &tc, &cfg.nadam, |e, loss| {
        println!("epoch {e}/{epochs} loss {loss:.6}");
    })?;
    ensure_out_dir(cfg)?;
    let ckpt = cfg.out_dir.join(CHECKPOINT);
    params.save(&ckpt)?;
    curve.save_csv(&cfg.out_dir.join(LOSS_CURVE))?;
    let test_set = load_images(cfg, &m, Split::Test)?;
    let eval = evaluate(&params, &test_set)?;
    println!("test accuracy {}%", pct(eval.accuracy));
    println!("wrote {}", ckpt.display());
    Ok(params)
}

fn provenance(cfg: &PipelineConfig, spec: &ExtractorSpec, params: Option<&ModelParams<f64>>, split: Split) -> String {
    let flat = |text: String| text.lines().filter(|l| !l.is_empty()).collect::<Vec<_>>().join("; ");
    let mut s = format!(
        "extractor={}; split={split}; seed={}; image_size={}x{}",
        spec.name(),
        cfg.seed,
        cfg.dataset.image_size.0,
        cfg.dataset.image_size.1
    );
    let detail = match params {
        Some(p) => toml::to_string(&p.config),
        None => toml::to_string(spec),
    };
    if let Ok(d) = detail {
        write!(s, "; {}", flat(d)).unwrap();
    }
    s
}

fn classical_table(
    ext: &miafex::features::ClassicalExtractor,
    samples: &[ImageSample<f64>],
    num_classes: usize,
) -> CliResult<FeatureTable> {
    let rows: Vec<FeatureRow> = samples
        .par_iter()
        .map(|s| {
            Ok(FeatureRow {
                id: s.id.clone(),
                features: ext.extract(&s.pixels)?,
                label: s.label,
            })
        })
        .collect::<miafex::Result<_>>()?;
    let dim = rows.first().map_or(0, |r| r.features.len());
    Ok(FeatureTable::with_rows(dim, num_classes, rows)?)
}

/// Extracts both splits with one extractor.
pub fn extract(cfg: &PipelineConfig, name: Option<&str>, train_first: bool, csv: bool) -> CliResult<()> {
    let spec = resolve_extractor(cfg, name)?;
    let m = load_manifest(cfg)?;
    let params = match spec {
        ExtractorSpec::Miafex => {
            let ckpt = cfg.out_dir.join(CHECKPOINT);
            let p = if train_first {
                train(cfg)?
            } else if ckpt.is_file() {
                ModelParams::<f64>::load(&ckpt)?
            } else {
                return Err(usage(format!(
                    "no model checkpoint at {}; run `train` first or pass --train-first",
                    ckpt.display()
                )));
            };
            let want = cfg.model_config(m.num_classes());
            if p.config != want {
                return Err(usage(format!(
                    "checkpoint {} was trained with a different model configuration",
                    ckpt.display()
                )));
            }
            Some(p)
        }
        _ => None,
    };
    ensure_out_dir(cfg)?;
    for split in SPLITS {
        let samples = load_images(cfg, &m, split)?;
        let mut table = match (&params, spec.classical()) {
            (Some(p), _) => extract_table(&samples, p)?,
            (None, Some(ext)) => classical_table(&ext, &samples, m.num_classes())?,
            (None, None) => unreachable!("miafex always has parameters"),
        };
        table.provenance = provenance(cfg, &spec, params.as_ref(), split);
        let path = feature_path(&cfg.out_dir, spec.name(), split);
        table.save(&path)?;
        if csv {
            table.save_csv(&path.with_extension("csv"))?;
        }
        println!(
            "wrote {} ({} rows x {} features)",
            path.display(),
            table.len(),
            table.feature_dim()
        );
    }
    Ok(())
}

fn load_tables(cfg: &PipelineConfig, extractor: &str) -> CliResult<(FeatureTable, FeatureTable)> {
    let load = |split| {
        let path = feature_path(&cfg.out_dir, extractor, split);
        if !path.is_file() {
            return Err(usage(format!(
                "missing {}; run `extract --extractor {extractor}` first",
                path.display()
            )));
        }
        Ok(FeatureTable::load(&path)?)
    };
    let (train, test) = (load(Split::Train)?, load(Split::Test)?);
    if train.feature_dim() != test.feature_dim() {
        return Err(usage(format!(
            "train and test tables for `{extractor}` disagree on feature dimension ({} vs {})",
            train.feature_dim(),
            test.feature_dim()
        )));
    }
    Ok((train, test))
}

/// Wrapper selection on the training table; the test table is never read
/// beyond the dimension check.
pub fn select(cfg: &PipelineConfig, name: Option<&str>) -> CliResult<()> {
    let spec = resolve_extractor(cfg, name)?;
    let (train, _) = load_tables(cfg, spec.name())?;
    let fs = cfg.selection_config();
    fs.validate().map_err(|e| usage(e.to_string()))?;
    let result = select_features(&train, &fs)?;
    let prefix = selection_prefix(&cfg.out_dir, spec.name(), fs.algorithm.name());
    let mask_path = with_suffix(&prefix, "_mask.txt");
    result.mask.save(&mask_path)?;
    let write = |path: PathBuf, text: String| fs::write(&path, text).map_err(|e| Error::Io { path, source: e });
    write(with_suffix(&prefix, "_history.csv"), result.history_csv())?;
    write(with_suffix(&prefix, "_columns.txt"), result.columns_text())?;
    println!(
        "{}: best fitness {:.6}, {} of {} features selected",
        fs.algorithm,
        result.fitness,
        result.selected(),
        result.mask.len()
    );
    println!("wrote {}", mask_path.display());
    Ok(())
}

fn check_name(what: &str, s: &str) -> CliResult<()> {
    if s.is_empty() || s.contains(['+', '/', '\\', ',']) {
        return Err(usage(format!(
            "{what} `{s}` must be non-empty without '+', '/', '\\' or ','"
        )));
    }
    Ok(())
}

fn class_names(cfg: &PipelineConfig, num_classes: usize) -> Vec<String> {
    match load_manifest(cfg) {
        Ok(m) if m.num_classes() == num_classes => m.class_names,
        _ => (0..num_classes).map(|c| c.to_string()).collect(),
    }
}

pub fn predictions_csv(ids: &[String], truth: &[usize], preds: &[usize]) -> String {
    let mut s = String::from("id,truth,prediction\n");
    for ((id, t), p) in ids.iter().zip(truth).zip(preds) {
        writeln!(s, "{id},{t},{p}").unwrap();
    }
    s
}

/// `(truth, predictions)` from a predictions file.
pub fn parse_predictions(path: &Path) -> CliResult<(Vec<usize>, Vec<usize>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let bad = |n: usize| {
        CliError::Runtime(Error::Format {
            path: path.to_path_buf(),
            msg: format!("line {n}: expected id,truth,prediction"),
        })
    };
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, l)| l) != Some("id,truth,prediction") {
        return Err(bad(1));
    }
    let (mut truth, mut preds) = (Vec::new(), Vec::new());
    for (i, line) in lines {
        let mut f = line.rsplitn(3, ',');
        let (p, t) = (f.next(), f.next());
        match (t.and_then(|v| v.parse().ok()), p.and_then(|v| v.parse().ok()), f.next()) {
            (Some(t), Some(p), Some(_)) => {
                truth.push(t);
                preds.push(p);
            }
            _ => return Err(bad(i + 1)),
        }
    }
    Ok((truth, preds))
}

fn classifiers_to_run(cfg: &PipelineConfig, kind: Option<&str>) -> CliResult<Vec<ClassifierEntry>> {
    let Some(kind) = kind else {
        return Ok(cfg.classifiers.clone());
    };
    let chosen: Vec<_> = cfg
        .classifiers
        .iter()
        .filter(|c| c.spec.name() == kind)
        .cloned()
        .collect();
    if !chosen.is_empty() {
        return Ok(chosen);
    }
    let spec = ClassifierSpec::by_name(kind).map_err(|e| usage(e.to_string()))?;
    Ok(vec![ClassifierEntry { label: None, spec }])
}

/// Fits each classifier on the (masked) train table and scores the test
/// table. Method names are `<extractor>[-<tag>]+<label>`.
pub fn classify(
    cfg: &PipelineConfig,
    name: Option<&str>,
    kind: Option<&str>,
    mask: Option<&Path>,
    tag: Option<&str>,
) -> CliResult<()> {
    let spec = resolve_extractor(cfg, name)?;
    let (mut train, mut test) = load_tables(cfg, spec.name())?;
    if train.num_classes() != test.num_classes() {
        return Err(CliError::Runtime(Error::Domain(format!(
            "train table has {} classes but test table has {}",
            train.num_classes(),
            test.num_classes()
        ))));
    }
    if let Some(path) = mask {
        if !path.is_file() {
            return Err(usage(format!("mask file not found: {}", path.display())));
        }
        let m = BitMask::load(path)?;
        if m.len() != train.feature_dim() {
            return Err(usage(format!(
                "mask has {} bits but the `{}` tables have {} features",
                m.len(),
                spec.name(),
                train.feature_dim()
            )));
        }
        train = train.select_columns(m.bits())?;
        test = test.select_columns(m.bits())?;
    }
    let ext_part = match tag {
        Some(t) => {
            check_name("tag", t)?;
            format!("{}-{t}", spec.name())
        }
        None => spec.name().to_string(),
    };
    let entries = classifiers_to_run(cfg, kind)?;
    if entries.is_empty() {
        return Err(usage("no classifiers configured"));
    }
    let names = class_names(cfg, train.num_classes());
    let ids: Vec<String> = test.rows().iter().map(|r| r.id.clone()).collect();
    let truth = test.labels();
    ensure_out_dir(cfg)?;
    for entry in entries {
        let label = entry.label();
        check_name("classifier label", &label)?;
        let method = format!("{ext_part}+{label}");
        let model: Classifier = entry.spec.fit(&train)?;
        let preds = model.predict(&test)?;
        let pred_path = cfg.out_dir.join(format!("predictions_{method}.csv"));
        fs::write(&pred_path, predictions_csv(&ids, &truth, &preds)).map_err(|e| Error::Io {
            path: pred_path.clone(),
            source: e,
        })?;
        let report = MetricsReport::from_predictions(&preds, &truth, train.num_classes())?;
        emit_report(&report, &names, &cfg.out_dir.join(format!("report_{method}.csv")))?;
        model.save(&cfg.out_dir.join(format!("classifier_{method}.ckpt")))?;
        println!("{method}: accuracy {}%", pct(report.weighted.accuracy));
    }
    Ok(())
}

/// Every `predictions_*.csv` in the output directory, sorted by name.
pub fn prediction_files(out: &Path) -> CliResult<Vec<(String, PathBuf)>> {
    let dir = fs::read_dir(out).map_err(|_| usage(format!("output directory {} not found", out.display())))?;
    let mut found = Vec::new();
    for entry in dir {
        let path = entry
            .map_err(|e| Error::Io {
                path: out.to_path_buf(),
                source: e,
            })?
            .path();
        let Some(file) = path.file_name().and_then(|f| f.to_str()) else {
            continue;
        };
        if let Some(method) = file.strip_prefix("predictions_").and_then(|f| f.strip_suffix(".csv")) {
            found.push((method.to_string(), path.clone()));
        }
    }
    found.sort();
    Ok(found)
}

/// Aggregates all predictions into `metrics.csv` and `accuracy_grid.csv`.
pub fn report(cfg: &PipelineConfig) -> CliResult<()> {
    let m = load_manifest(cfg)?;
    let files = prediction_files(&cfg.out_dir)?;
    if files.is_empty() {
        return Err(usage(format!(
            "no predictions_*.csv in {}; run `classify` first",
            cfg.out_dir.display()
        )));
    }
    let mut entries = Vec::with_capacity(files.len());
    for (method, path) in files {
        let (extractor, classifier) = method
            .split_once('+')
            .ok_or_else(|| usage(format!("{}: method name lacks '+'", path.display())))?;
        let (truth, preds) = parse_predictions(&path)?;
        entries.push(ReportEntry {
            extractor: extractor.to_string(),
            classifier: classifier.to_string(),
            report: MetricsReport::from_predictions(&preds, &truth, m.num_classes())?,
        });
    }
    emit_summary(&entries, &cfg.out_dir)?;
    print!("{}", metrics_csv(&entries));
    println!("wrote {}", cfg.out_dir.join("metrics.csv").display());
    Ok(())
}

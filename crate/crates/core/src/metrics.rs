//! Confusion matrices, one-vs-rest per-class metrics, support-weighted
//! averages and the CSV reports built from them.
//!
//! Every metric is kept as a ratio of integer counts. Weighted averages form
//! each term as `(N·num)/den`, which is exact whenever `den == N`, so the
//! weighted recall equals the accuracy bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    /// Builds from nested rows; must be square.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let c = rows.len();
        let mut cm = Self::new(c);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(Error::dim("confusion rows", &[c, c], &[t, row.len()]));
            }
            cm.counts[t * c..(t + 1) * c].copy_from_slice(row);
        }
        Ok(cm)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn record(&mut self, truth: usize, pred: usize) -> Result<()> {
        let c = self.num_classes;
        if truth >= c || pred >= c {
            return Err(Error::domain(format!(
                "label pair ({truth}, {pred}) outside {c} classes"
            )));
        }
        self.counts[truth * c + pred] += 1;
        Ok(())
    }

    pub fn row_sum(&self, class: usize) -> u64 {
        (0..self.num_classes).map(|p| self.get(class, p)).sum()
    }

    pub fn col_sum(&self, class: usize) -> u64 {
        (0..self.num_classes).map(|t| self.get(t, class)).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|c| self.get(c, c)).sum()
    }

    /// `trace / total`; zero for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        ratio(self.trace(), self.total())
    }

    /// `true\pred` header followed by one row per true class.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let names = display_names(class_names, self.num_classes);
        let mut s = String::from("true\\pred");
        for n in &names {
            write!(s, ",{n}").unwrap();
        }
        s.push('\n');
        for (t, n) in names.iter().enumerate() {
            s.push_str(n);
            for p in 0..self.num_classes {
                write!(s, ",{}", self.get(t, p)).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// Counts `(truth, pred)` pairs.
pub fn confusion(preds: &[usize], truth: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != truth.len() {
        return Err(Error::domain(format!(
            "{} predictions for {} labels",
            preds.len(),
            truth.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (&p, &t) in preds.iter().zip(truth) {
        cm.record(t, p)?;
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(n·num)/den`, the support-weighted term of a count ratio.
fn weighted_term(n: u64, num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        (n as f64 * num as f64) / den as f64
    }
}

/// One-vs-rest counts and the metrics derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassMetrics {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        Self {
            tp,
            fp,
            fn_,
            support: tp + fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            // 2PR/(P+R) reduced to counts; zero whenever TP is.
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        }
    }
}

/// Metrics with a zero denominator are 0.
pub fn per_class_metrics(cm: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..cm.num_classes())
        .map(|c| {
            let tp = cm.get(c, c);
            ClassMetrics::from_counts(tp, cm.col_sum(c) - tp, cm.row_sum(c) - tp)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// `Σ Nᵢ·Mᵢ / Σ Nᵢ` over arbitrary per-class values.
pub fn weighted_average(values: &[f64], supports: &[u64]) -> Result<f64> {
    if values.len() != supports.len() {
        return Err(Error::dim("weighted_average", &[values.len()], &[supports.len()]));
    }
    let total: u64 = supports.iter().sum();
    if total == 0 {
        return Err(Error::domain("all class supports are zero"));
    }
    let acc: f64 = values.iter().zip(supports).map(|(&m, &n)| n as f64 * m).sum();
    Ok(acc / total as f64)
}

pub fn weighted_metrics(per_class: &[ClassMetrics]) -> Result<WeightedMetrics> {
    let total: u64 = per_class.iter().map(|m| m.support).sum();
    if total == 0 {
        return Err(Error::domain("all class supports are zero"));
    }
    let avg = |term: &dyn Fn(&ClassMetrics) -> f64| per_class.iter().map(term).sum::<f64>() / total as f64;
    Ok(WeightedMetrics {
        accuracy: ratio(per_class.iter().map(|m| m.tp).sum(), total),
        precision: avg(&|m| weighted_term(m.support, m.tp, m.tp + m.fp)),
        recall: avg(&|m| weighted_term(m.support, m.tp, m.tp + m.fn_)),
        f1: avg(&|m| weighted_term(m.support, 2 * m.tp, 2 * m.tp + m.fp + m.fn_)),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub weighted: WeightedMetrics,
}

impl MetricsReport {
    pub fn from_confusion(cm: ConfusionMatrix) -> Result<Self> {
        let per_class = per_class_metrics(&cm);
        let weighted = weighted_metrics(&per_class)?;
        Ok(Self {
            confusion: cm,
            per_class,
            weighted,
        })
    }

    pub fn from_predictions(preds: &[usize], truth: &[usize], num_classes: usize) -> Result<Self> {
        Self::from_confusion(confusion(preds, truth, num_classes)?)
    }

    /// Per-class rows, then the weighted row and accuracy, as percentages.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let names = display_names(class_names, self.per_class.len());
        let mut s = String::from("class,precision,recall,f1,support\n");
        for (n, m) in names.iter().zip(&self.per_class) {
            writeln!(
                s,
                "{n},{},{},{},{}",
                pct(m.precision),
                pct(m.recall),
                pct(m.f1),
                m.support
            )
            .unwrap();
        }
        let w = &self.weighted;
        let total = self.confusion.total();
        writeln!(
            s,
            "weighted,{},{},{},{total}",
            pct(w.precision),
            pct(w.recall),
            pct(w.f1)
        )
        .unwrap();
        writeln!(s, "accuracy,,,{},{total}", pct(w.accuracy)).unwrap();
        s
    }
}

/// Percentage with two decimals.
pub fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

fn display_names(names: &[String], n: usize) -> Vec<String> {
    if names.len() == n {
        names.to_vec()
    } else {
        (0..n).map(|c| format!("class_{c}")).collect()
    }
}

pub const METRICS_HEADER: &str = "method,accuracy,precision,recall,f1";

/// `method,accuracy,precision,recall,f1` with percentage values.
pub fn metrics_row(method: &str, w: &WeightedMetrics) -> String {
    format!(
        "{method},{},{},{},{}",
        pct(w.accuracy),
        pct(w.precision),
        pct(w.recall),
        pct(w.f1)
    )
}

/// One evaluated extractor/classifier pairing.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportEntry {
    pub extractor: String,
    pub classifier: String,
    pub report: MetricsReport,
}

impl ReportEntry {
    pub fn method(&self) -> String {
        format!("{}+{}", self.extractor, self.classifier)
    }
}

pub fn metrics_csv(entries: &[ReportEntry]) -> String {
    let mut s = format!("{METRICS_HEADER}\n");
    for e in entries {
        writeln!(s, "{}", metrics_row(&e.method(), &e.report.weighted)).unwrap();
    }
    s
}

/// Accuracy percentages laid out extractor × classifier, in first-seen
/// order. Pairings with no entry are left blank.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyGrid {
    pub extractors: Vec<String>,
    pub classifiers: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
}

impl AccuracyGrid {
    pub fn from_entries(entries: &[ReportEntry]) -> Self {
        let mut extractors: Vec<String> = Vec::new();
        let mut classifiers: Vec<String> = Vec::new();
        for e in entries {
            if !extractors.contains(&e.extractor) {
                extractors.push(e.extractor.clone());
            }
            if !classifiers.contains(&e.classifier) {
                classifiers.push(e.classifier.clone());
            }
        }
        let mut cells = vec![vec![None; classifiers.len()]; extractors.len()];
        for e in entries {
            let r = extractors.iter().position(|x| *x == e.extractor).unwrap();
            let c = classifiers.iter().position(|x| *x == e.classifier).unwrap();
            cells[r][c] = Some(e.report.weighted.accuracy);
        }
        Self {
            extractors,
            classifiers,
            cells,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("extractor");
        for c in &self.classifiers {
            write!(s, ",{c}").unwrap();
        }
        s.push('\n');
        for (name, row) in self.extractors.iter().zip(&self.cells) {
            s.push_str(name);
            for cell in row {
                s.push(',');
                if let Some(v) = cell {
                    s.push_str(&pct(*v));
                }
            }
            s.push('\n');
        }
        s
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes one method's per-class/weighted CSV and its confusion matrix
/// (`<stem>_confusion.csv` beside it).
pub fn emit_report(report: &MetricsReport, class_names: &[String], path: &Path) -> Result<()> {
    write_file(path, &report.to_csv(class_names))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    let cm_path = path.with_file_name(format!("{stem}_confusion.csv"));
    write_file(&cm_path, &report.confusion.to_csv(class_names))
}

/// `metrics.csv` and `accuracy_grid.csv` under `dir`.
pub fn emit_summary(entries: &[ReportEntry], dir: &Path) -> Result<()> {
    write_file(&dir.join("metrics.csv"), &metrics_csv(entries))?;
    write_file(
        &dir.join("accuracy_grid.csv"),
        &AccuracyGrid::from_entries(entries).to_csv(),
    )
}

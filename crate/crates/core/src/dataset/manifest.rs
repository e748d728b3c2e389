use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::numerics::RngState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(Error::domain(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    pub split: Option<Split>,
}

/// Labelled image list. Text form:
///
/// ```text
/// #manifest<TAB>1
/// #name<TAB>chest-ct
/// #num_classes<TAB>2
/// #classes<TAB>normal<TAB>tumor
/// images/a.png<TAB>0<TAB>train
/// images/b.png<TAB>1<TAB>-
/// ```
///
/// The split column is `train`, `test` or `-` (unassigned). Relative paths
/// resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub class_names: Vec<String>,
    pub samples: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, class_names: Vec<String>, samples: Vec<ManifestEntry>) -> Result<Self> {
        let m = Self {
            name: name.into(),
            class_names,
            samples,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_names.is_empty() {
            return Err(Error::domain("manifest declares no classes"));
        }
        for s in &self.samples {
            if s.label >= self.num_classes() {
                return Err(Error::domain(format!(
                    "{}: label {} out of range for {} classes",
                    s.path.display(),
                    s.label,
                    self.num_classes()
                )));
            }
        }
        Ok(())
    }

    pub fn split_entries(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.samples.iter().filter(move |s| s.split == Some(split))
    }

    /// Both splits populated, as train/evaluate workflows need.
    pub fn require_splits(&self) -> Result<()> {
        for split in [Split::Train, Split::Test] {
            if self.split_entries(split).next().is_none() {
                return Err(Error::domain(format!(
                    "manifest `{}` has an empty {split} split",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, root).map_err(|e| match e {
            Error::Domain(msg) => Error::Format {
                path: path.to_path_buf(),
                msg,
            },
            other => other,
        })
    }

    pub fn parse(text: &str, root: &Path) -> Result<Self> {
        let mut name = String::new();
        let mut declared: Option<usize> = None;
        let mut class_names = Vec::new();
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if let Some(key) = fields[0].strip_prefix('#') {
                match key {
                    "manifest" => {}
                    "name" => name = fields.get(1).copied().unwrap_or_default().to_string(),
                    "num_classes" => {
                        let n = fields
                            .get(1)
                            .and_then(|v| v.parse().ok())
                            .ok_or_else(|| Error::domain(format!("line {}: bad num_classes", lineno + 1)))?;
                        declared = Some(n);
                    }
                    "classes" => class_names = fields[1..].iter().map(|s| s.to_string()).collect(),
                    _ => {}
                }
                continue;
            }
            if fields.len() != 3 {
                return Err(Error::domain(format!(
                    "line {}: expected path<TAB>label<TAB>split",
                    lineno + 1
                )));
            }
            let label = fields[1]
                .parse()
                .map_err(|_| Error::domain(format!("line {}: bad label `{}`", lineno + 1, fields[1])))?;
            let split = match fields[2] {
                "-" | "" => None,
                s => Some(s.parse()?),
            };
            let raw = PathBuf::from(fields[0]);
            let path = if raw.is_absolute() { raw } else { root.join(raw) };
            samples.push(ManifestEntry { path, label, split });
        }
        match declared {
            Some(n) if n != class_names.len() => {
                return Err(Error::domain(format!(
                    "num_classes {n} disagrees with {} class names",
                    class_names.len()
                )))
            }
            None => return Err(Error::domain("missing #num_classes header")),
            _ => {}
        }
        Self::new(name, class_names, samples)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("#manifest\t1\n");
        out.push_str(&format!("#name\t{}\n", self.name));
        out.push_str(&format!("#num_classes\t{}\n", self.num_classes()));
        out.push_str("#classes");
        for c in &self.class_names {
            out.push('\t');
            out.push_str(c);
        }
        out.push('\n');
        for s in &self.samples {
            let split = s.split.map_or_else(|| "-".to_string(), |v| v.to_string());
            out.push_str(&format!("{}\t{}\t{}\n", s.path.display(), s.label, split));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

/// Stratified train/held-out index split. Each class with `n ≥ 2` members
/// contributes `round(fraction·n)` (clamped to `1..n-1`) training indices.
/// Both returned lists are in ascending order.
pub fn stratified_indices(
    labels: &[usize],
    num_classes: usize,
    train_fraction: f64,
    rng: &mut RngState,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::domain(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::domain(format!("label {l} out of range")));
        }
        by_class[l].push(i);
    }
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < 2 {
            return Err(Error::domain(format!(
                "class {class} has {} sample(s); stratification needs at least 2",
                members.len()
            )));
        }
        rng.shuffle(&mut members);
        let n = members.len();
        let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
        train.extend_from_slice(&members[..n_train]);
        held.extend_from_slice(&members[n_train..]);
    }
    train.sort_unstable();
    held.sort_unstable();
    Ok((train, held))
}

/// Assigns stratified splits when any sample lacks one; a manifest whose
/// samples all carry a split is returned as is.
pub fn split_manifest(manifest: &DatasetManifest, train_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if manifest.samples.iter().all(|s| s.split.is_some()) && !manifest.samples.is_empty() {
        return Ok(manifest.clone());
    }
    let labels: Vec<usize> = manifest.samples.iter().map(|s| s.label).collect();
    let mut rng = RngState::new(seed);
    let (train, _) = stratified_indices(&labels, manifest.num_classes(), train_fraction, &mut rng)?;
    let mut out = manifest.clone();
    for s in &mut out.samples {
        s.split = Some(Split::Test);
    }
    for i in train {
        out.samples[i].split = Some(Split::Train);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unsplit(per_class: usize, classes: usize) -> DatasetManifest {
        let samples = (0..classes * per_class)
            .map(|i| ManifestEntry {
                path: PathBuf::from(format!("img{i}.png")),
                label: i % classes,
                split: None,
            })
            .collect();
        DatasetManifest::new("t", (0..classes).map(|c| format!("c{c}")).collect(), samples).unwrap()
    }

    fn count(m: &DatasetManifest, label: usize, split: Split) -> usize {
        m.samples
            .iter()
            .filter(|s| s.label == label && s.split == Some(split))
            .count()
    }

    #[test]
    fn exact_eighty_twenty() {
        let m = split_manifest(&unsplit(100, 3), 0.8, 7).unwrap();
        for c in 0..3 {
            assert_eq!(count(&m, c, Split::Train), 80);
            assert_eq!(count(&m, c, Split::Test), 20);
        }
    }

    #[test]
    fn split_is_seeded() {
        let a = split_manifest(&unsplit(10, 2), 0.7, 1).unwrap();
        let b = split_manifest(&unsplit(10, 2), 0.7, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_split_preserved() {
        // Chest CT carries its published 613/354 split.
        let samples = (0..967)
            .map(|i| ManifestEntry {
                path: PathBuf::from(format!("ct{i}.png")),
                label: i % 4,
                split: Some(if i < 613 { Split::Train } else { Split::Test }),
            })
            .collect();
        let m = DatasetManifest::new("chest-ct", (0..4).map(|c| c.to_string()).collect(), samples).unwrap();
        let out = split_manifest(&m, 0.8, 3).unwrap();
        assert_eq!(out.split_entries(Split::Train).count(), 613);
        assert_eq!(out.split_entries(Split::Test).count(), 354);
    }

    #[test]
    fn singleton_class_rejected() {
        let mut m = unsplit(3, 2);
        m.samples.push(ManifestEntry {
            path: "x.png".into(),
            label: 0,
            split: None,
        });
        m.class_names.push("lonely".into());
        m.samples.push(ManifestEntry {
            path: "y.png".into(),
            label: 2,
            split: None,
        });
        assert!(split_manifest(&m, 0.5, 0).is_err());
    }

    #[test]
    fn parse_round_trip() {
        let m = split_manifest(&unsplit(4, 2), 0.5, 0).unwrap();
        let back = DatasetManifest::parse(&m.to_text(), Path::new("")).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn relative_paths_resolve_against_root() {
        let text = "#num_classes\t1\n#classes\ta\nimg.png\t0\ttrain\n";
        let m = DatasetManifest::parse(text, Path::new("/data")).unwrap();
        assert_eq!(m.samples[0].path, PathBuf::from("/data/img.png"));
    }

    #[test]
    fn label_out_of_range_rejected() {
        let text = "#num_classes\t1\n#classes\ta\nimg.png\t3\ttrain\n";
        assert!(DatasetManifest::parse(text, Path::new("")).is_err());
    }
}

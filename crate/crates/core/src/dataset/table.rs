use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::dataset::stratified_indices;
use crate::error::{Error, Result};
use crate::numerics::RngState;

const MAGIC: &[u8; 8] = b"MFXFTAB\0";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub id: String,
    pub features: Vec<f64>,
    pub label: usize,
}

/// Fixed-width feature vectors with labels, exchanged between extraction,
/// selection and classification.
///
/// Binary layout (little endian): magic `MFXFTAB\0`, version `u8`,
/// `feature_dim: u64`, `num_classes: u64`, `rows: u64`, provenance as
/// `u32` length + UTF-8, then per row `u32` id length + UTF-8 id,
/// `label: u32` and `feature_dim` `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    feature_dim: usize,
    num_classes: usize,
    /// Free-form description of what produced the table.
    pub provenance: String,
    rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(feature_dim: usize, num_classes: usize) -> Self {
        Self {
            feature_dim,
            num_classes,
            provenance: String::new(),
            rows: Vec::new(),
        }
    }

    pub fn with_rows(feature_dim: usize, num_classes: usize, rows: Vec<FeatureRow>) -> Result<Self> {
        let mut t = Self::new(feature_dim, num_classes);
        for r in rows {
            t.push(r)?;
        }
        Ok(t)
    }

    pub fn push(&mut self, row: FeatureRow) -> Result<()> {
        if row.features.len() != self.feature_dim {
            return Err(Error::dim("feature row", &[self.feature_dim], &[row.features.len()]));
        }
        if row.label >= self.num_classes {
            return Err(Error::domain(format!(
                "label {} out of range for {} classes",
                row.label, self.num_classes
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn rows(&self) -> &[FeatureRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Same rows restricted to the columns where `mask` is set.
    pub fn select_columns(&self, mask: &[bool]) -> Result<FeatureTable> {
        if mask.len() != self.feature_dim {
            return Err(Error::dim("select_columns", &[self.feature_dim], &[mask.len()]));
        }
        let dim = mask.iter().filter(|&&b| b).count();
        let rows = self
            .rows
            .iter()
            .map(|r| FeatureRow {
                id: r.id.clone(),
                features: r
                    .features
                    .iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|(&v, _)| v)
                    .collect(),
                label: r.label,
            })
            .collect();
        Ok(FeatureTable {
            feature_dim: dim,
            num_classes: self.num_classes,
            provenance: self.provenance.clone(),
            rows,
        })
    }

    pub fn subset(&self, indices: &[usize]) -> FeatureTable {
        FeatureTable {
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
            provenance: self.provenance.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// Seeded stratified split into (train, held-out) tables.
    pub fn stratified_split(&self, train_fraction: f64, seed: u64) -> Result<(FeatureTable, FeatureTable)> {
        let mut rng = RngState::new(seed);
        let (a, b) = stratified_indices(&self.labels(), self.num_classes, train_fraction, &mut rng)?;
        Ok((self.subset(&a), self.subset(&b)))
    }

    pub fn write_binary(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u8(VERSION)?;
        w.write_u64::<LittleEndian>(self.feature_dim as u64)?;
        w.write_u64::<LittleEndian>(self.num_classes as u64)?;
        w.write_u64::<LittleEndian>(self.rows.len() as u64)?;
        write_str(w, &self.provenance)?;
        for r in &self.rows {
            write_str(w, &r.id)?;
            w.write_u32::<LittleEndian>(r.label as u32)?;
            for &v in &r.features {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn read_binary(r: &mut impl Read) -> Result<FeatureTable> {
        let corrupt = |what: &str| Error::Corrupt(format!("feature table: {what}"));
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
        if &magic != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.read_u8().map_err(|_| corrupt("truncated header"))?;
        if version != VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let mut header = [0u64; 3];
        for h in &mut header {
            *h = r.read_u64::<LittleEndian>().map_err(|_| corrupt("truncated header"))?;
        }
        let [dim, classes, count] = header.map(|v| v as usize);
        let provenance = read_str(r).map_err(|_| corrupt("truncated provenance"))?;
        let mut table = FeatureTable::new(dim, classes);
        table.provenance = provenance;
        for i in 0..count {
            let id = read_str(r).map_err(|_| corrupt(&format!("row {i} truncated")))?;
            let label = r
                .read_u32::<LittleEndian>()
                .map_err(|_| corrupt(&format!("row {i} truncated")))? as usize;
            let mut features = vec![0.0; dim];
            r.read_f64_into::<LittleEndian>(&mut features)
                .map_err(|_| corrupt(&format!("row {i} shorter than feature_dim {dim}")))?;
            table
                .push(FeatureRow { id, features, label })
                .map_err(|e| corrupt(&e.to_string()))?;
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(|_| corrupt("read failure"))? != 0 {
            return Err(corrupt("trailing bytes after declared rows"));
        }
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_binary(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<FeatureTable> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_binary(&mut BufReader::new(f))
    }

    /// CSV with header `id,label,f0..f{D-1}`, values at 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,label");
        for j in 0..self.feature_dim {
            out.push_str(&format!(",f{j}"));
        }
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.id);
            out.push_str(&format!(",{}", r.label));
            for v in &r.features {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str(r: &mut impl Read) -> std::io::Result<String> {
    let len = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

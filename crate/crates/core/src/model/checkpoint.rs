//! Binary container shared by model and classifier checkpoints.
//!
//! Layout (little endian): magic `MFXCKPT\0`, version `u8`, kind tag `u8`,
//! then a kind-specific payload. Model payload: `image_h, image_w,
//! patch_size, channels, embed_dim, num_layers, num_heads` as `u64`,
//! `mlp_ratio: f64`, `num_classes: u64`, `final_norm: u8`, a `u32` tensor
//! count, then each tensor in [`ModelParams::named_tensors`] order as
//! `u8` rank, `u64` dims and `f64` values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::numerics::Tensor;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 8] = b"MFXCKPT\0";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CheckpointKind {
    Model = 0,
    Knn = 1,
    LogReg = 2,
    LinearSvm = 3,
}

impl CheckpointKind {
    fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Self::Model,
            1 => Self::Knn,
            2 => Self::LogReg,
            3 => Self::LinearSvm,
            t => return Err(Error::Corrupt(format!("unknown checkpoint kind {t}"))),
        })
    }
}

pub(crate) fn corrupt(e: std::io::Error) -> Error {
    Error::Corrupt(format!("checkpoint truncated or unreadable: {e}"))
}

pub fn write_header(w: &mut impl Write, kind: CheckpointKind) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_u8(VERSION)?;
    w.write_u8(kind as u8)
}

pub fn read_header(r: &mut impl Read) -> Result<CheckpointKind> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(corrupt)?;
    if &magic != MAGIC {
        return Err(Error::Corrupt("not a checkpoint (bad magic)".into()));
    }
    let version = r.read_u8().map_err(corrupt)?;
    if version != VERSION {
        return Err(Error::Corrupt(format!("unsupported checkpoint version {version}")));
    }
    CheckpointKind::from_tag(r.read_u8().map_err(corrupt)?)
}

pub fn write_tensor<T: Scalar>(w: &mut impl Write, t: &Tensor<T>) -> std::io::Result<()> {
    w.write_u8(t.shape().len() as u8)?;
    for &d in t.shape() {
        w.write_u64::<LittleEndian>(d as u64)?;
    }
    for &v in t.data() {
        w.write_f64::<LittleEndian>(v.as_f64())?;
    }
    Ok(())
}

pub fn read_tensor<T: Scalar>(r: &mut impl Read) -> Result<Tensor<T>> {
    let rank = r.read_u8().map_err(corrupt)? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.read_u64::<LittleEndian>().map_err(corrupt)? as usize);
    }
    let n: usize = shape.iter().product();
    let mut data = vec![0.0f64; n];
    r.read_f64_into::<LittleEndian>(&mut data).map_err(corrupt)?;
    Tensor::new(&shape, data.into_iter().map(T::lit).collect())
}

fn write_config(w: &mut impl Write, c: &ModelConfig) -> std::io::Result<()> {
    for v in [
        c.image_size.0,
        c.image_size.1,
        c.patch_size,
        c.channels,
        c.embed_dim,
        c.num_layers,
        c.num_heads,
    ] {
        w.write_u64::<LittleEndian>(v as u64)?;
    }
    w.write_f64::<LittleEndian>(c.mlp_ratio)?;
    w.write_u64::<LittleEndian>(c.num_classes as u64)?;
    w.write_u8(u8::from(c.final_norm))
}

fn read_config(r: &mut impl Read) -> Result<ModelConfig> {
    let mut u = [0usize; 7];
    for v in &mut u {
        *v = r.read_u64::<LittleEndian>().map_err(corrupt)? as usize;
    }
    let mlp_ratio = r.read_f64::<LittleEndian>().map_err(corrupt)?;
    let num_classes = r.read_u64::<LittleEndian>().map_err(corrupt)? as usize;
    let final_norm = r.read_u8().map_err(corrupt)? != 0;
    let cfg = ModelConfig {
        image_size: (u[0], u[1]),
        patch_size: u[2],
        channels: u[3],
        embed_dim: u[4],
        num_layers: u[5],
        num_heads: u[6],
        mlp_ratio,
        num_classes,
        final_norm,
    };
    cfg.validate()
        .map_err(|e| Error::Corrupt(format!("checkpoint config invalid: {e}")))?;
    Ok(cfg)
}

impl<T: Scalar> ModelParams<T> {
    pub fn write_checkpoint(&self, w: &mut impl Write) -> std::io::Result<()> {
        write_header(w, CheckpointKind::Model)?;
        write_config(w, &self.config)?;
        let tensors = self.tensors();
        w.write_u32::<LittleEndian>(tensors.len() as u32)?;
        for t in tensors {
            write_tensor(w, t)?;
        }
        Ok(())
    }

    pub fn read_checkpoint(r: &mut impl Read) -> Result<Self> {
        if read_header(r)? != CheckpointKind::Model {
            return Err(Error::Corrupt("checkpoint does not hold a model".into()));
        }
        let cfg = read_config(r)?;
        let mut params = ModelParams::zeros(&cfg)?;
        let count = r.read_u32::<LittleEndian>().map_err(corrupt)? as usize;
        let mut slots = params.tensors_mut();
        if count != slots.len() {
            return Err(Error::Corrupt(format!(
                "expected {} tensors, found {count}",
                slots.len()
            )));
        }
        for slot in slots.iter_mut() {
            let t: Tensor<T> = read_tensor(r)?;
            if t.shape() != slot.shape() {
                return Err(Error::Corrupt(format!(
                    "tensor shape {:?} where {:?} expected",
                    t.shape(),
                    slot.shape()
                )));
            }
            **slot = t;
        }
        Ok(params)
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

//! DCMK checkpoints.
//!
//! Layout (little-endian): magic `DCMK`, version u16, u32 length of a JSON
//! header, the header, u32 array count, then per array a u16 name length,
//! the UTF-8 name, u32 rows, u32 cols and `rows * cols` f32 values.
//! Parameters appear in [`Params::tensors`] order; optimizer momentum, when
//! present, follows with names prefixed `momentum.`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::denoiser::{Denoiser, DenoiserConfig, Params};
use super::train::{TrainConfig, Trainer};
use crate::dataset::{NormalizationStats, PoseScaling};
use crate::diffusion::ScheduleConfig;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"DCMK";
pub const VERSION: u16 = 1;
const MOMENTUM_PREFIX: &str = "momentum.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub config: DenoiserConfig,
    pub train: TrainConfig,
    pub stats: NormalizationStats,
    pub pose_scaling: PoseScaling,
    pub schedule: ScheduleConfig,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Params<f32>,
    pub momentum: Option<Params<f32>>,
}

fn format_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Format(msg.into()))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return format_err("checkpoint truncated");
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl Checkpoint {
    pub fn from_trainer<T: Scalar>(trainer: &Trainer<T>) -> Self {
        Self {
            header: CheckpointHeader {
                config: trainer.model.config.clone(),
                train: trainer.config.clone(),
                stats: trainer.stats.clone(),
                pose_scaling: trainer.pose_scaling.clone(),
                schedule: trainer.config.schedule,
                step: trainer.step as u64,
            },
            params: trainer.model.params.cast(),
            momentum: Some(trainer.velocity.cast()),
        }
    }

    /// Rebuild a trainer positioned at the stored step.
    pub fn into_trainer<T: Scalar>(self) -> Result<Trainer<T>> {
        let h = self.header;
        let model = Denoiser::from_params(h.config.clone(), self.params.cast())?;
        let mut train = h.train;
        train.schedule = h.schedule;
        let mut trainer = Trainer::new(model, train, h.stats, h.pose_scaling)?;
        if let Some(m) = self.momentum {
            trainer.velocity = m.cast();
        }
        trainer.step = h.step as usize;
        Ok(trainer)
    }

    pub fn model<T: Scalar>(&self) -> Result<Denoiser<T>> {
        Denoiser::from_params(self.header.config.clone(), self.params.cast())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut arrays: Vec<(String, &Matrix<f32>)> = self.params.tensors();
        if let Some(m) = &self.momentum {
            arrays.extend(m.tensors().into_iter().map(|(n, t)| (format!("{MOMENTUM_PREFIX}{n}"), t)));
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
        for (name, m) in arrays {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(4)? != MAGIC {
            return format_err("not a DCMK checkpoint (bad magic)");
        }
        let version = r.u16()?;
        if version != VERSION {
            return format_err(format!("unsupported checkpoint version {version}"));
        }
        let len = r.u32()? as usize;
        let header: CheckpointHeader = serde_json::from_slice(r.take(len)?)?;
        header.config.validate()?;
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Format("array name is not UTF-8".into()))?
                .to_string();
            let (rows, cols) = (r.u32()? as usize, r.u32()? as usize);
            let bytes = r.take(rows.checked_mul(cols).and_then(|n| n.checked_mul(4)).ok_or_else(|| Error::Format("array too large".into()))?)?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            arrays.push((name, Matrix::from_vec(rows, cols, data)?));
        }
        if r.pos != buf.len() {
            return format_err("trailing bytes after checkpoint arrays");
        }
        let mut params = Params::<f32>::zeros(&header.config);
        let n_params = params.tensors().len();
        let has_momentum = match arrays.len() {
            n if n == n_params => false,
            n if n == 2 * n_params => true,
            n => return format_err(format!("expected {n_params} or {} arrays, found {n}", 2 * n_params)),
        };
        let mut momentum = has_momentum.then(|| Params::<f32>::zeros(&header.config));
        fill(&mut params, &arrays[..n_params], "")?;
        if let Some(m) = momentum.as_mut() {
            fill(m, &arrays[n_params..], MOMENTUM_PREFIX)?;
        }
        if !params.is_finite() || momentum.as_ref().is_some_and(|m| !m.is_finite()) {
            return Err(Error::Numerical("checkpoint holds non-finite values".into()));
        }
        Ok(Self {
            header,
            params,
            momentum,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.encode()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

fn fill(params: &mut Params<f32>, arrays: &[(String, Matrix<f32>)], prefix: &str) -> Result<()> {
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| format!("{prefix}{n}")).collect();
    for ((slot, expected), (name, m)) in params.tensors_mut().into_iter().zip(&names).zip(arrays) {
        if name != expected {
            return format_err(format!("expected array {expected}, found {name}"));
        }
        if slot.shape() != m.shape() {
            return format_err(format!("array {name} has shape {:?}, expected {:?}", m.shape(), slot.shape()));
        }
        *slot = m.clone();
    }
    Ok(())
}

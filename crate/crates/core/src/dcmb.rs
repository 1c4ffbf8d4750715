//! The `DCMB` dense-sequence container.
//!
//! Layout (all little-endian):
//!
//! ```text
//! 0   4  magic "DCMB" (0x44 0x43 0x4D 0x42)
//! 4   2  version u16 = 1
//! 6   4  n_frames u32
//! 10  4  n_channels u32
//! 14  2  fps u16
//! 16  .. n_frames * n_channels f32, frame-major
//! ```
//!
//! Values are held as `f64` in memory; every `f32` widens exactly, so
//! read -> write reproduces the original bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: [u8; 4] = *b"DCMB";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;
pub const DEFAULT_FPS: u16 = 30;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseSequence {
    pub fps: u16,
    pub frames: Matrix<f64>,
}

impl DenseSequence {
    pub fn new(frames: Matrix<f64>) -> Self {
        Self {
            fps: DEFAULT_FPS,
            frames,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    pub fn n_channels(&self) -> usize {
        self.frames.cols()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.frames.as_slice().len());
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.n_frames() as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_channels() as u32).to_le_bytes());
        out.extend_from_slice(&self.fps.to_le_bytes());
        for &v in self.frames.as_slice() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format("DCMB: truncated header".into()));
        }
        if bytes[..4] != MAGIC {
            return Err(Error::Format("DCMB: bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("DCMB: unsupported version {version}")));
        }
        let n_frames = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let n_channels = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let fps = u16::from_le_bytes([bytes[14], bytes[15]]);
        let expected = n_frames
            .checked_mul(n_channels)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("DCMB: size overflow".into()))?;
        let body = &bytes[HEADER_LEN..];
        if body.len() != expected {
            return Err(Error::Format(format!(
                "DCMB: expected {expected} payload bytes, found {}",
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(Self {
            fps,
            frames: Matrix::from_vec(n_frames, n_channels, data)?,
        })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        Self::decode(&bytes)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn expect_channels(&self, channels: &[usize], what: &str) -> Result<()> {
        if !channels.contains(&self.n_channels()) {
            return Err(Error::Shape(format!(
                "{what}: expected {channels:?} channels, found {}",
                self.n_channels()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let seq = DenseSequence::new(Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap());
        let bytes = seq.encode();
        assert_eq!(&bytes[..4], &[0x44, 0x43, 0x4D, 0x42]);
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[2, 0, 0, 0]);
        assert_eq!(&bytes[10..14], &[3, 0, 0, 0]);
        assert_eq!(&bytes[14..16], &[30, 0]);
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(&bytes[16..20], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[36..40], &6.5f32.to_le_bytes());
    }

    #[test]
    fn rejects_corrupt_input() {
        let mut bytes = DenseSequence::new(Matrix::zeros(1, 1)).encode();
        assert!(DenseSequence::decode(&bytes[..10]).is_err());
        bytes.push(0);
        assert!(DenseSequence::decode(&bytes).is_err());
        bytes.pop();
        bytes[0] = b'X';
        assert!(DenseSequence::decode(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn write_read_write_is_byte_stable(
            rows in 0usize..6,
            cols in 1usize..5,
            seed in proptest::collection::vec(-1e6f64..1e6, 30),
            fps in 1u16..240,
        ) {
            let data: Vec<f64> = (0..rows * cols).map(|i| seed[i % seed.len()] * 1.37).collect();
            let seq = DenseSequence { fps, frames: Matrix::from_vec(rows, cols, data).unwrap() };
            let first = seq.encode();
            let again = DenseSequence::decode(&first).unwrap().encode();
            prop_assert_eq!(first, again);
        }
    }
}

//! The `EMO1` model file.
//!
//! Little-endian layout:
//!
//! ```text
//! "EMO1"            4 bytes magic
//! version           u32 (currently 1)
//! head              u8  (0 classification, 1 regression)
//! layer count       u32
//! per layer         u8 kind, then u32 fields:
//!                     0 conv    in_ch out_ch kh kw stride pad
//!                     1 fc      in_dim out_dim
//!                     2 relu    -
//!                     3 maxpool size stride
//!                     4 dropout p (f32 bit pattern)
//! weights           every weight tensor as f32, declaration order
//! biases            every bias tensor as f32, declaration order
//! crc32             u32 over all preceding bytes
//! ```

use std::path::Path;

use thiserror::Error;

use crate::dataset::TaskMode;
use crate::nn::{Architecture, LayerSpec, ModelParams, NnError};

pub const MAGIC: &[u8; 4] = b"EMO1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelFileError {
    #[error("model file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("model format version {found}, this build reads {FORMAT_VERSION}")]
    VersionMismatch { found: u32 },
    #[error("model checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Serialised form of `params` with the given head.
pub fn encode_model(params: &ModelParams<f32>, mode: TaskMode) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + params.param_count() * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(match mode {
        TaskMode::Classification => 0,
        TaskMode::Regression => 1,
    });
    out.extend_from_slice(&(params.arch.layers.len() as u32).to_le_bytes());
    let put = |out: &mut Vec<u8>, vals: &[usize]| {
        for &v in vals {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
    };
    for layer in &params.arch.layers {
        match *layer {
            LayerSpec::Conv {
                in_ch,
                out_ch,
                kh,
                kw,
                stride,
                pad,
            } => {
                out.push(0);
                put(&mut out, &[in_ch, out_ch, kh, kw, stride, pad]);
            }
            LayerSpec::Fc { in_dim, out_dim } => {
                out.push(1);
                put(&mut out, &[in_dim, out_dim]);
            }
            LayerSpec::Relu => out.push(2),
            LayerSpec::MaxPool { size, stride } => {
                out.push(3);
                put(&mut out, &[size, stride]);
            }
            LayerSpec::Dropout { p } => {
                out.push(4);
                out.extend_from_slice(&(p as f32).to_bits().to_le_bytes());
            }
        }
    }
    for t in params.tensors() {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], ModelFileError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| ModelFileError::Malformed("unexpected end of data".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelFileError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelFileError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn usize(&mut self) -> Result<usize, ModelFileError> {
        self.u32().map(|v| v as usize)
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<(ModelParams<f32>, TaskMode), ModelFileError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(ModelFileError::BadMagic);
    }
    if bytes.len() < 12 {
        return Err(ModelFileError::Malformed("file too short".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(ModelFileError::VersionMismatch { found: version });
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(trailer.try_into().expect("4 bytes"));
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(ModelFileError::ChecksumMismatch { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 8 };
    let mode = match r.u8()? {
        0 => TaskMode::Classification,
        1 => TaskMode::Regression,
        other => return Err(ModelFileError::Malformed(format!("unknown head byte {other}"))),
    };
    let count = r.usize()?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let layer = match r.u8()? {
            0 => LayerSpec::Conv {
                in_ch: r.usize()?,
                out_ch: r.usize()?,
                kh: r.usize()?,
                kw: r.usize()?,
                stride: r.usize()?,
                pad: r.usize()?,
            },
            1 => LayerSpec::Fc {
                in_dim: r.usize()?,
                out_dim: r.usize()?,
            },
            2 => LayerSpec::Relu,
            3 => LayerSpec::MaxPool {
                size: r.usize()?,
                stride: r.usize()?,
            },
            4 => LayerSpec::Dropout {
                p: f32::from_bits(r.u32()?) as f64,
            },
            other => return Err(ModelFileError::Malformed(format!("unknown layer kind {other}"))),
        };
        layers.push(layer);
    }
    let arch = Architecture::infer_input(layers)?;
    let mut params = ModelParams::<f32>::zeros(&arch);
    for t in params.tensors_mut() {
        let raw = r.take(t.len() * 4)?;
        for (v, b) in t.data_mut().iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
        }
    }
    if r.pos != body.len() {
        return Err(ModelFileError::Malformed(format!(
            "{} trailing bytes after parameters",
            body.len() - r.pos
        )));
    }
    Ok((params, mode))
}

pub fn save_model(
    params: &ModelParams<f32>,
    mode: TaskMode,
    path: &Path,
) -> Result<(), ModelFileError> {
    std::fs::write(path, encode_model(params, mode))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(ModelParams<f32>, TaskMode), ModelFileError> {
    decode_model(&std::fs::read(path)?)
}

/// Size in bytes of the encoded file for `arch`.
pub fn encoded_len(arch: &Architecture) -> usize {
    let header = 4 + 4 + 1 + 4;
    let layers: usize = arch
        .layers
        .iter()
        .map(|l| {
            1 + 4 * match l {
                LayerSpec::Conv { .. } => 6,
                LayerSpec::Fc { .. } | LayerSpec::MaxPool { .. } => 2,
                LayerSpec::Dropout { .. } => 1,
                LayerSpec::Relu => 0,
            }
        })
        .sum();
    header + layers + arch.param_count() * 4 + 4
}

//! Checkpoint persistence.
//!
//! Layout (all integers little-endian):
//!   magic "UISR" · version u32 · config-JSON length u32 + bytes ·
//!   array count u32 · per array: name (u16 length + UTF-8), ndim u8,
//!   dims u32 each, then the data as 32-bit floats.
//!
//! Parameters are stored in [`ModelParams::visit`] order, so a round trip
//! reproduces them bit-exactly in single precision.

use std::io::Write;
use std::path::Path;

use crate::model::{Conv, Linear, ModelConfig, ModelParams};
use crate::numerics::Tensor;

use super::TrainError;

const MAGIC: [u8; 4] = *b"UISR";
const VERSION: u32 = 1;

/// Serializes parameters and config to `path`. The file is written to a
/// temporary sibling and atomically renamed, so a crash never leaves a
/// partial checkpoint behind.
pub fn save_checkpoint(
    params: &ModelParams<f32>,
    cfg: &ModelConfig,
    path: &Path,
) -> Result<(), TrainError> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());

    let cfg_json = serde_json::to_vec(cfg).expect("config serializes");
    buf.extend_from_slice(&(cfg_json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg_json);

    let mut arrays: Vec<(String, Vec<usize>, Vec<f32>)> = Vec::new();
    params.visit(|name, t| arrays.push((name, t.shape().to_vec(), t.data().to_vec())));
    buf.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for (name, shape, data) in &arrays {
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.push(shape.len() as u8);
        for &d in shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }

    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })?;
    tmp.write_all(&buf)
        .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })?;
    tmp.persist(path)
        .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e.error })?;
    Ok(())
}

/// Byte-cursor that turns premature EOF into a truncation error.
struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        if self.pos + n > self.buf.len() {
            return Err(TrainError::Truncated { need: self.pos + n, have: self.buf.len() });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, TrainError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Reads a checkpoint back. Errors distinguish a wrong magic, an unsupported
/// version, a short file, and structural corruption.
pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f32>, ModelConfig), TrainError> {
    let bytes = std::fs::read(path)
        .map_err(|e| TrainError::Io { path: path.display().to_string(), source: e })?;
    let mut cur = Cursor { buf: &bytes, pos: 0 };

    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(TrainError::BadMagic(magic));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(TrainError::BadVersion(version));
    }

    let cfg_len = cur.u32()? as usize;
    let cfg: ModelConfig = serde_json::from_slice(cur.take(cfg_len)?)
        .map_err(|e| TrainError::Corrupt(format!("config JSON: {e}")))?;
    cfg.validate().map_err(|e| TrainError::Corrupt(format!("config: {e}")))?;

    let count = cur.u32()? as usize;
    let mut arrays = Vec::with_capacity(count);
    for _ in 0..count {
        let name_len = cur.u16()? as usize;
        let name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| TrainError::Corrupt("array name is not UTF-8".into()))?
            .to_string();
        let ndim = cur.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(cur.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = cur.take(4 * len)?;
        let data: Vec<f32> =
            raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        arrays.push((name, shape, data));
    }
    if cur.pos != bytes.len() {
        return Err(TrainError::Corrupt(format!("{} trailing bytes", bytes.len() - cur.pos)));
    }

    assemble(&cfg, arrays).map(|params| (params, cfg))
}

/// Rebuilds [`ModelParams`] from named arrays, insisting on the exact
/// sequence and shapes the config dictates.
fn assemble(
    cfg: &ModelConfig,
    arrays: Vec<(String, Vec<usize>, Vec<f32>)>,
) -> Result<ModelParams<f32>, TrainError> {
    let mut iter = arrays.into_iter();
    let mut next = |want_name: String, want_shape: &[usize]| -> Result<Tensor<f32>, TrainError> {
        let (name, shape, data) = iter
            .next()
            .ok_or_else(|| TrainError::Corrupt(format!("missing array {want_name}")))?;
        if name != want_name || shape != want_shape {
            return Err(TrainError::Corrupt(format!(
                "expected {want_name} {want_shape:?}, found {name} {shape:?}"
            )));
        }
        Tensor::from_vec(&shape, data)
            .map_err(|e| TrainError::Corrupt(format!("array {name}: {e}")))
    };

    let c = cfg.enc_channels;
    let head = Conv {
        w: next("encoder.head.w".into(), &[c, 3, 3, 3])?,
        b: next("encoder.head.b".into(), &[c])?,
    };
    let mut blocks = Vec::with_capacity(cfg.enc_blocks);
    for i in 0..cfg.enc_blocks {
        let c1 = Conv {
            w: next(format!("encoder.block{i}.conv1.w"), &[c, c, 3, 3])?,
            b: next(format!("encoder.block{i}.conv1.b"), &[c])?,
        };
        let c2 = Conv {
            w: next(format!("encoder.block{i}.conv2.w"), &[c, c, 3, 3])?,
            b: next(format!("encoder.block{i}.conv2.b"), &[c])?,
        };
        blocks.push((c1, c2));
    }
    let w = cfg.hidden_width;
    let mut layers = Vec::with_capacity(cfg.hidden_layers + 2);
    layers.push(Linear {
        w: next("decoder.layer0.w".into(), &[cfg.decoder_input_width(), w])?,
        b: next("decoder.layer0.b".into(), &[w])?,
    });
    for k in 1..=cfg.hidden_layers {
        let input = w + cfg.fusion_width();
        layers.push(Linear {
            w: next(format!("decoder.layer{k}.w"), &[input, w])?,
            b: next(format!("decoder.layer{k}.b"), &[w])?,
        });
    }
    layers.push(Linear {
        w: next("decoder.out.w".into(), &[w, 3])?,
        b: next("decoder.out.b".into(), &[3])?,
    });
    let freqs = if cfg.use_encoding {
        Some(next("encoding.freqs".into(), &[cfg.freq_count()])?)
    } else {
        None
    };
    if iter.next().is_some() {
        return Err(TrainError::Corrupt("unexpected extra arrays".into()));
    }
    Ok(ModelParams { head, blocks, layers, freqs })
}

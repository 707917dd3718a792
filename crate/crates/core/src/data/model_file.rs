//! Binary model files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic "HENETMDL" | u32 version | u8 family
//! u32 len | config text (key = value lines)
//! u32 count | f32 input means
//! u32 count | blobs: u32 name len, name, 4 × u32 shape, f32 data
//! u32 crc32 of everything above
//! ```
//!
//! Trainable parameters come first in graph order, then batch-norm running statistics.

use std::fs;
use std::path::Path;

use crate::arch::{build_model, ModelFamily, ModelGraph, NetworkConfig};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

pub const MODEL_MAGIC: &[u8; 8] = b"HENETMDL";
pub const MODEL_VERSION: u32 = 1;

fn family_code(f: ModelFamily) -> u8 {
    match f {
        ModelFamily::HeNet => 0,
        ModelFamily::ShuffleNet => 1,
    }
}

fn family_from_code(b: u8) -> Result<ModelFamily> {
    match b {
        0 => Ok(ModelFamily::HeNet),
        1 => Ok(ModelFamily::ShuffleNet),
        other => Err(Error::Format(format!("unknown model family code {other}"))),
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_len(out: &mut Vec<u8>, v: usize) {
    put_u32(out, u32::try_from(v).expect("length fits in u32"));
}

fn put_blob(out: &mut Vec<u8>, name: &str, t: &Tensor<f32>) {
    put_len(out, name.len());
    out.extend_from_slice(name.as_bytes());
    for d in t.shape().dims() {
        put_len(out, d);
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes parameters, running statistics, config and input means.
pub fn write_model(g: &ModelGraph<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut out, MODEL_VERSION);
    out.push(family_code(g.family()));
    let cfg = g.config().to_text();
    put_len(&mut out, cfg.len());
    out.extend_from_slice(cfg.as_bytes());
    put_len(&mut out, g.input_mean().len());
    for m in g.input_mean() {
        out.extend_from_slice(&m.to_le_bytes());
    }
    let infos = g.param_infos();
    let buffers = g.buffers();
    put_len(&mut out, infos.len() + buffers.len());
    for (info, t) in infos.iter().zip(g.params()) {
        put_blob(&mut out, &info.name, t);
    }
    for (name, t) in &buffers {
        put_blob(&mut out, name, t);
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Format(format!("unexpected end of file at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| Error::Format("blob too large".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    fn string(&mut self) -> Result<String> {
        let n = self.len()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("name is not UTF-8".into()))
    }

    fn blob(&mut self) -> Result<(String, Tensor<f32>)> {
        let name = self.string()?;
        let dims = [self.len()?, self.len()?, self.len()?, self.len()?];
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let data = self.f32s(shape.numel())?;
        Ok((name, Tensor::from_vec(shape, data)?))
    }
}

fn assign(name: &str, want_name: &str, dst: &mut Tensor<f32>, src: Tensor<f32>) -> Result<()> {
    if name != want_name {
        return Err(Error::Format(format!("expected tensor {want_name}, found {name}")));
    }
    if src.shape() != dst.shape() {
        return Err(Error::ShapeMismatch {
            op: "load_model",
            left: src.shape(),
            right: dst.shape(),
        });
    }
    *dst = src;
    Ok(())
}

/// Parses a model file image. The graph is rebuilt from the embedded config, then overwritten.
pub fn read_model(bytes: &[u8]) -> Result<ModelGraph<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MODEL_MAGIC.len()).ok() != Some(&MODEL_MAGIC[..]) {
        return Err(Error::Format("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Version {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    if bytes.len() < r.pos + 4 {
        return Err(Error::Format("file too short for checksum".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::Format(format!(
            "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
        )));
    }
    let mut r = Reader {
        bytes: body,
        pos: r.pos,
    };
    let family = family_from_code(r.take(1)?[0])?;
    let cfg_len = r.len()?;
    let cfg_text =
        std::str::from_utf8(r.take(cfg_len)?).map_err(|_| Error::Format("config text is not UTF-8".into()))?;
    let cfg = NetworkConfig::parse(cfg_text)?;
    let mut g = build_model::<f32>(family, &cfg, 0)?;
    let mean_count = r.len()?;
    let means = r.f32s(mean_count)?;
    g.set_input_mean(means).map_err(|e| Error::Format(e.to_string()))?;

    let infos = g.param_infos();
    let buffer_names: Vec<String> = g.buffers().into_iter().map(|(n, _)| n).collect();
    let count = r.len()?;
    if count != infos.len() + buffer_names.len() {
        return Err(Error::Format(format!(
            "{count} tensors stored, config implies {}",
            infos.len() + buffer_names.len()
        )));
    }
    for (info, dst) in infos.iter().zip(g.params_mut()) {
        let (name, t) = r.blob()?;
        assign(&name, &info.name, dst, t)?;
    }
    for (want, (_, dst)) in buffer_names.iter().zip(g.buffers_mut()) {
        let (name, t) = r.blob()?;
        assign(&name, want, dst, t)?;
    }
    if r.pos != body.len() {
        return Err(Error::Format(format!(
            "{} unread bytes before checksum",
            body.len() - r.pos
        )));
    }
    Ok(g)
}

pub fn save_model(g: &ModelGraph<f32>, path: &Path) -> Result<()> {
    fs::write(path, write_model(g)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelGraph<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_model(&bytes)
}

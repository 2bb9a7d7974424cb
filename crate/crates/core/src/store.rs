//! Binary model files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ACLN"                       magic
//! u16                          format version (1)
//! u32 sample_rate, u8 conv_type (0 = standard, 1 = separable),
//! u32 wm_num, u32 wm_den, u32 c1, u32 s1, u32 s2,
//! u32 llf_kernel1, u32 llf_kernel2, u32 num_classes, f64 dropout_p
//! u32 tensor count
//! per tensor: u16 name length, name bytes (UTF-8), u8 rank,
//!             u32 dims[rank], u64 element count
//! f32 payload, tensors in directory order
//! ```
//!
//! Learnable parameters come first in graph order, followed by batch norm
//! running statistics.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::builder::{build, min_input_len, ConvType, NamedTensor, NetworkConfig, Param, WeightSet, WidthMultiplier};
use crate::error::{Error, Result, StoreError};
use crate::model::Model;
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"ACLN";
pub const VERSION: u16 = 1;

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| StoreError::Malformed(format!("{what} {v} exceeds u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn to_bytes(config: &NetworkConfig, weights: &WeightSet<f32>) -> Result<Vec<u8>> {
    config.validate()?;
    let graph = build(config, min_input_len(config)?)?;
    weights.check_against(&graph)?;

    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&config.sample_rate.to_le_bytes());
    out.push(match config.conv_type {
        ConvType::Standard => 0,
        ConvType::Separable => 1,
    });
    out.extend_from_slice(&config.width_multiplier.numerator().to_le_bytes());
    out.extend_from_slice(&config.width_multiplier.denominator().to_le_bytes());
    for (what, v) in [
        ("c1", config.c1),
        ("s1", config.s1),
        ("s2", config.s2),
        ("llf_kernel1", config.llf_kernel1),
        ("llf_kernel2", config.llf_kernel2),
        ("num_classes", config.num_classes),
    ] {
        put_u32(&mut out, v, what)?;
    }
    out.extend_from_slice(&config.dropout_p.to_le_bytes());

    let tensors: Vec<(&str, &Tensor<f32>)> = weights
        .params
        .iter()
        .map(|p| (p.name.as_str(), &p.tensor))
        .chain(weights.buffers.iter().map(|b| (b.name.as_str(), &b.tensor)))
        .collect();
    put_u32(&mut out, tensors.len(), "tensor count")?;
    for (name, t) in &tensors {
        let len = u16::try_from(name.len())
            .map_err(|_| StoreError::Malformed(format!("tensor name `{name}` too long")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.dims().len() as u8);
        for &d in t.dims() {
            put_u32(&mut out, d, "dimension")?;
        }
        out.extend_from_slice(&(t.len() as u64).to_le_bytes());
    }
    for (_, t) in &tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.b.len() - self.at < n {
            return Err(StoreError::Malformed(format!(
                "file ends inside {what} at byte {}",
                self.at
            ))
            .into());
        }
        let s = &self.b[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.b.len() - self.at
    }
}

struct Entry {
    name: String,
    dims: Vec<usize>,
    count: usize,
}

pub fn from_bytes(b: &[u8]) -> Result<(NetworkConfig, WeightSet<f32>)> {
    let mut found = [0u8; 4];
    let n = b.len().min(4);
    found[..n].copy_from_slice(&b[..n]);
    if found != MAGIC {
        return Err(StoreError::BadMagic { found }.into());
    }
    let mut r = Reader { b, at: 4 };
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(StoreError::UnknownVersion(version).into());
    }

    let sample_rate = r.u32("config")?;
    let conv_type = match r.u8("config")? {
        0 => ConvType::Standard,
        1 => ConvType::Separable,
        t => return Err(StoreError::Malformed(format!("unknown conv type code {t}")).into()),
    };
    let (num, den) = (r.u32("config")?, r.u32("config")?);
    let width_multiplier = WidthMultiplier::new(num, den)
        .map_err(|_| StoreError::Malformed(format!("width multiplier {num}/{den}")))?;
    let mut fields = [0usize; 6];
    for f in &mut fields {
        *f = r.u32("config")? as usize;
    }
    let [c1, s1, s2, llf_kernel1, llf_kernel2, num_classes] = fields;
    let dropout_p = r.f64("config")?;
    let config = NetworkConfig {
        sample_rate,
        conv_type,
        width_multiplier,
        c1,
        s1,
        s2,
        llf_kernel1,
        llf_kernel2,
        num_classes,
        dropout_p,
    };
    config
        .validate()
        .map_err(|e| StoreError::Malformed(format!("stored config is invalid: {e}")))?;
    let graph = build(&config, min_input_len(&config)?)?;
    let want_params = graph.param_shapes();
    let want_buffers = graph.buffer_shapes();
    let want: Vec<(&String, &Vec<usize>)> = want_params
        .iter()
        .map(|(n, d, _)| (n, d))
        .chain(want_buffers.iter().map(|(n, d)| (n, d)))
        .collect();

    let count = r.u32("tensor count")? as usize;
    if count != want.len() {
        return Err(StoreError::Malformed(format!(
            "{count} tensors stored, config requires {}",
            want.len()
        ))
        .into());
    }
    let mut entries = Vec::with_capacity(count);
    let mut total = 0usize;
    for (wn, wd) in &want {
        let len = r.u16("tensor directory")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor directory")?)
            .map_err(|_| StoreError::Malformed("tensor name is not UTF-8".into()))?
            .to_string();
        if &&name != wn {
            return Err(StoreError::Malformed(format!(
                "tensor `{name}` found where `{wn}` is required"
            ))
            .into());
        }
        let rank = r.u8("tensor directory")? as usize;
        let dims = (0..rank)
            .map(|_| r.u32("tensor directory").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let declared = r.u64("tensor directory")?;
        if dims != **wd {
            return Err(StoreError::ShapeMismatch {
                name,
                expected: wd.to_vec(),
                found: dims,
            }
            .into());
        }
        let numel: usize = dims.iter().product();
        if declared != numel as u64 {
            return Err(StoreError::Malformed(format!(
                "tensor `{name}` declares {declared} elements for shape {dims:?}"
            ))
            .into());
        }
        total += numel;
        entries.push(Entry { name, dims, count: numel });
    }

    let need = total * 4;
    let have = r.remaining();
    if have < need {
        return Err(StoreError::Truncated(need - have).into());
    }
    if have > need {
        return Err(StoreError::Malformed(format!("{} trailing bytes after payload", have - need)).into());
    }
    let mut tensors = entries.into_iter().map(|e| {
        let raw = r.take(e.count * 4, "payload").expect("length checked");
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        (e.name, Tensor::from_vec(e.dims, data).expect("dims checked"))
    });
    let params = want_params
        .iter()
        .map(|(_, _, kind)| {
            let (name, tensor) = tensors.next().expect("count checked");
            Param { name, kind: *kind, tensor }
        })
        .collect();
    let buffers = tensors.map(|(name, tensor)| NamedTensor { name, tensor }).collect();
    Ok((config, WeightSet { params, buffers }))
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn save(path: impl AsRef<Path>, config: &NetworkConfig, weights: &WeightSet<f32>) -> Result<()> {
    let path = path.as_ref();
    let bytes = to_bytes(config, weights)?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn load(path: impl AsRef<Path>) -> Result<(NetworkConfig, WeightSet<f32>)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

pub fn save_model(path: impl AsRef<Path>, model: &Model<f32>) -> Result<()> {
    save(path, model.config(), model.weights())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model<f32>> {
    let (config, weights) = load(path)?;
    Model::from_weights(&config, weights)
}

//! Binary checkpoints.
//!
//! Layout (little-endian): magic `TDCEDN01`, u32 version, u8 precision tag,
//! u32 record count, then per record u16 name length, name bytes, u8 rank,
//! u32 dims, raw values; finally a u32 CRC-32 of every preceding byte.
//!
//! Besides parameters and BN running statistics, a graph checkpoint carries
//! `meta.*` records describing the configuration. Integers and `f64`
//! hyperparameters are stored as four 16-bit limbs so that they survive an
//! `f32` payload exactly.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{NetworkConfig, NetworkGraph};
use crate::tensor::{Float, Precision, Shape, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TDCEDN01";
pub const CHECKPOINT_VERSION: u32 = 1;

/// One named array of a checkpoint file.
#[derive(Debug, Clone, PartialEq)]
pub struct Record<T: Float> {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Float> Record<T> {
    pub fn from_tensor(name: impl Into<String>, t: &Tensor<T>) -> Self {
        Record {
            name: name.into(),
            dims: t.shape().dims().to_vec(),
            values: t.data().to_vec(),
        }
    }

    pub fn vector(name: impl Into<String>, values: Vec<T>) -> Self {
        Record {
            name: name.into(),
            dims: vec![values.len()],
            values,
        }
    }

    /// A `u64` as four 16-bit limbs, least significant first.
    pub fn from_u64(name: impl Into<String>, v: u64) -> Self {
        Self::vector(name, (0..4).map(|i| T::from_f64(((v >> (16 * i)) & 0xffff) as f64)).collect())
    }

    pub fn to_u64(&self) -> Result<u64> {
        if self.values.len() != 4 {
            return Err(Error::invalid("checkpoint", format!("record `{}` is not a u64", self.name)));
        }
        let mut v = 0u64;
        for (i, limb) in self.values.iter().enumerate() {
            let x = limb.as_f64();
            if !(0.0..=65535.0).contains(&x) || x.fract() != 0.0 {
                return Err(Error::invalid("checkpoint", format!("record `{}` has a bad limb {x}", self.name)));
            }
            v |= (x as u64) << (16 * i);
        }
        Ok(v)
    }

    pub fn from_f64_bits(name: impl Into<String>, v: f64) -> Self {
        Self::from_u64(name, v.to_bits())
    }

    pub fn to_f64_bits(&self) -> Result<f64> {
        Ok(f64::from_bits(self.to_u64()?))
    }

    pub fn to_tensor(&self) -> Result<Tensor<T>> {
        let d = &self.dims;
        let shape = match d.len() {
            4 => Shape::new(d[0], d[1], d[2], d[3]),
            1 => Shape::new(1, 1, 1, d[0]),
            r => return Err(Error::invalid("checkpoint", format!("record `{}` has rank {r}", self.name))),
        };
        Tensor::from_values(shape, self.values.clone())
    }
}

pub fn write_records<T: Float>(path: &Path, records: &[Record<T>]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.push(T::PRECISION.tag());
    buf.extend_from_slice(&(records.len() as u32).to_le_bytes());
    for r in records {
        let name = r.name.as_bytes();
        let name_len = u16::try_from(name.len())
            .map_err(|_| Error::invalid("checkpoint", format!("record name `{}` too long", r.name)))?;
        buf.extend_from_slice(&name_len.to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(r.dims.len() as u8);
        for &d in &r.dims {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &r.values {
            v.write_le(&mut buf);
        }
    }
    let crc = crc32fast::hash(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Cursor<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Malformed {
                path: self.path.to_path_buf(),
                msg: format!("unexpected end of data at byte {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Checks magic and CRC, returning the body (everything before the CRC).
fn verified_body<'a>(path: &Path, bytes: &'a [u8]) -> Result<&'a [u8]> {
    if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if bytes.len() < 8 + 4 {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            msg: "file too short".into(),
        });
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::CrcMismatch {
            path: path.to_path_buf(),
            stored,
            computed,
        });
    }
    Ok(body)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Precision tag of a checkpoint after magic, CRC and version checks.
pub fn peek_precision(path: &Path) -> Result<Precision> {
    let bytes = read_bytes(path)?;
    let body = verified_body(path, &bytes)?;
    let mut c = Cursor { path, bytes: body, pos: 8 };
    check_version(path, c.u32()?)?;
    let tag = c.u8()?;
    Precision::from_tag(tag).ok_or_else(|| Error::Malformed {
        path: path.to_path_buf(),
        msg: format!("unknown precision tag {tag}"),
    })
}

fn check_version(path: &Path, found: u32) -> Result<()> {
    if found != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found,
            expected: CHECKPOINT_VERSION,
        });
    }
    Ok(())
}

pub fn read_records<T: Float>(path: &Path) -> Result<Vec<Record<T>>> {
    let found = peek_precision(path)?;
    if found != T::PRECISION {
        return Err(Error::PrecisionMismatch {
            path: path.to_path_buf(),
            found,
            expected: T::PRECISION,
        });
    }
    let bytes = read_bytes(path)?;
    let body = verified_body(path, &bytes)?;
    let mut c = Cursor { path, bytes: body, pos: 8 + 4 + 1 };
    let count = c.u32()? as usize;
    let width = T::PRECISION.byte_width();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = c.u16()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec()).map_err(|_| Error::Malformed {
            path: path.to_path_buf(),
            msg: "record name is not UTF-8".into(),
        })?;
        let rank = c.u8()? as usize;
        let dims = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let raw = c.take(n * width)?;
        let values = raw.chunks_exact(width).map(T::read_le).collect();
        out.push(Record { name, dims, values });
    }
    if c.pos != body.len() {
        return Err(Error::Malformed {
            path: path.to_path_buf(),
            msg: format!("{} trailing bytes", body.len() - c.pos),
        });
    }
    Ok(out)
}

fn meta_records<T: Float>(g: &NetworkGraph<T>) -> Vec<Record<T>> {
    let c = g.config();
    vec![
        Record::from_u64("meta.input_channels", c.input_channels as u64),
        Record::vector("meta.widths", c.widths.iter().map(|&w| T::from_f64(w as f64)).collect()),
        Record::from_f64_bits("meta.dropout_rate", c.dropout_rate),
        Record::from_f64_bits("meta.bn_eps", c.bn_eps),
        Record::from_f64_bits("meta.bn_momentum", c.bn_momentum),
        Record::from_u64("meta.seed", g.seed()),
    ]
}

/// Parameters and BN statistics, followed by `extra` records (for instance
/// optimizer state).
pub fn save_checkpoint_with<T: Float>(g: &NetworkGraph<T>, extra: &[Record<T>], path: &Path) -> Result<()> {
    let mut records = meta_records(g);
    records.extend(g.state().into_iter().map(|(name, t)| Record::from_tensor(name, t)));
    records.extend_from_slice(extra);
    write_records(path, &records)
}

pub fn save_checkpoint<T: Float>(g: &NetworkGraph<T>, path: &Path) -> Result<()> {
    save_checkpoint_with(g, &[], path)
}

/// Copies graph state from `records` into `g`. Every graph tensor must be
/// present with the same shape; names outside the graph that are not
/// `meta.*` or `optim.*` are rejected.
fn apply_records<T: Float>(g: &mut NetworkGraph<T>, records: &[Record<T>]) -> Result<()> {
    let mut by_name: HashMap<&str, &Record<T>> = records.iter().map(|r| (r.name.as_str(), r)).collect();
    for (name, t) in g.state_mut() {
        let r = by_name.remove(name.as_str()).ok_or_else(|| Error::MissingParameter(name.clone()))?;
        let expected = t.shape().dims().to_vec();
        if r.dims != expected {
            return Err(Error::ParameterShape {
                name,
                expected,
                found: r.dims.clone(),
            });
        }
        t.data_mut().copy_from_slice(&r.values);
        t.clear_grad();
    }
    let mut extra: Vec<&str> = by_name
        .into_keys()
        .filter(|n| !n.starts_with("meta.") && !n.starts_with("optim."))
        .collect();
    extra.sort_unstable();
    match extra.first() {
        Some(n) => Err(Error::UnexpectedParameter(n.to_string())),
        None => Ok(()),
    }
}

/// Loads parameters into an existing graph, checking the schema.
pub fn load_into<T: Float>(g: &mut NetworkGraph<T>, path: &Path) -> Result<()> {
    let records = read_records(path)?;
    apply_records(g, &records)
}

fn find<'a, T: Float>(records: &'a [Record<T>], path: &Path, name: &str) -> Result<&'a Record<T>> {
    records.iter().find(|r| r.name == name).ok_or_else(|| Error::Malformed {
        path: path.to_path_buf(),
        msg: format!("missing `{name}`"),
    })
}

fn config_from<T: Float>(records: &[Record<T>], path: &Path) -> Result<(NetworkConfig, u64)> {
    let widths_rec = find(records, path, "meta.widths")?;
    let widths: [usize; 5] = widths_rec
        .values
        .iter()
        .map(|v| v.as_f64() as usize)
        .collect::<Vec<_>>()
        .try_into()
        .map_err(|_| Error::Malformed {
            path: path.to_path_buf(),
            msg: "meta.widths must have 5 entries".into(),
        })?;
    let cfg = NetworkConfig {
        input_channels: find(records, path, "meta.input_channels")?.to_u64()? as usize,
        widths,
        dropout_rate: find(records, path, "meta.dropout_rate")?.to_f64_bits()?,
        bn_eps: find(records, path, "meta.bn_eps")?.to_f64_bits()?,
        bn_momentum: find(records, path, "meta.bn_momentum")?.to_f64_bits()?,
    };
    Ok((cfg, find(records, path, "meta.seed")?.to_u64()?))
}

/// Rebuilds a graph from a checkpoint and returns the `optim.*` records too.
pub fn load_checkpoint_with<T: Float>(path: &Path) -> Result<(NetworkGraph<T>, Vec<Record<T>>)> {
    let records = read_records::<T>(path)?;
    let (cfg, seed) = config_from(&records, path)?;
    let mut g = NetworkGraph::new(cfg, seed)?;
    apply_records(&mut g, &records)?;
    let extra = records.into_iter().filter(|r| r.name.starts_with("optim.")).collect();
    Ok((g, extra))
}

pub fn load_checkpoint<T: Float>(path: &Path) -> Result<NetworkGraph<T>> {
    Ok(load_checkpoint_with(path)?.0)
}

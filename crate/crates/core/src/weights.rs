//! `DLT1` bundles: named f32 tensors plus string metadata.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "DLT1"
//! u32 entry count
//!   per entry: u32 name length, name bytes (UTF-8), u8 rank, rank × u32 dims,
//!              product(dims) × f32 payload
//! u32 metadata count
//!   per pair:  u32 key length, key bytes, u32 value length, value bytes
//! ```
//!
//! Metadata is written in key order so equal bundles produce equal files.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use indexmap::IndexMap;

use crate::{Error, Result, Tensor};

pub const MAGIC: &[u8; 4] = b"DLT1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorBundle {
    entries: IndexMap<String, Tensor>,
    pub metadata: BTreeMap<String, String>,
}

impl TensorBundle {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor; names must be non-empty and unique.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<()> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::Schema("empty tensor name".into()));
        }
        if self.entries.contains_key(&name) {
            return Err(Error::Schema(format!("duplicate tensor name {name:?}")));
        }
        self.entries.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    /// Fetches `name` and checks its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&Tensor> {
        let t = self
            .entries
            .get(name)
            .ok_or_else(|| Error::Schema(format!("missing parameter {name}")))?;
        if t.shape() != shape {
            return Err(Error::Schema(format!(
                "parameter {name} has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        Ok(t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.metadata.get(key).map(String::as_str)
    }

    /// Parses a required metadata value.
    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .meta(key)
            .ok_or_else(|| Error::Schema(format!("missing metadata key {key}")))?;
        raw.parse()
            .map_err(|_| Error::Schema(format!("metadata {key}={raw:?} does not parse")))
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.metadata.insert(key.into(), value.to_string());
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.entries.values().map(|t| t.len() * 4).sum();
        let mut out = Vec::with_capacity(12 + payload + 64 * self.entries.len());
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, self.entries.len());
        for (name, t) in &self.entries {
            put_str(&mut out, name);
            out.push(t.rank() as u8);
            for &d in t.shape() {
                put_u32(&mut out, d);
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        put_u32(&mut out, self.metadata.len());
        for (k, v) in &self.metadata {
            put_str(&mut out, k);
            put_str(&mut out, v);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic(origin.to_path_buf()));
        }
        let mut r = Reader { buf: bytes, pos: 4 };
        let corrupt = |what: &str| Error::CorruptBundle(what.to_string());

        let count = r.u32().ok_or_else(|| corrupt("<header>"))?;
        let mut bundle = TensorBundle::new();
        for i in 0..count {
            let placeholder = format!("#{i}");
            let name = r.string().ok_or_else(|| corrupt(&placeholder))?;
            let rank = r.u8().ok_or_else(|| corrupt(&name))? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32().ok_or_else(|| corrupt(&name))?);
            }
            if shape.contains(&0) {
                return Err(corrupt(&name));
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| corrupt(&name))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| corrupt(&name))?)
                .ok_or_else(|| corrupt(&name))?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let tensor = Tensor::new(shape, data)?;
            bundle.insert(name, tensor)?;
        }

        let meta_count = r.u32().ok_or_else(|| corrupt("<metadata>"))?;
        for _ in 0..meta_count {
            let k = r.string().ok_or_else(|| corrupt("<metadata>"))?;
            let v = r.string().ok_or_else(|| corrupt("<metadata>"))?;
            if bundle.metadata.insert(k.clone(), v).is_some() {
                return Err(Error::Schema(format!("duplicate metadata key {k:?}")));
            }
        }
        if r.pos != bytes.len() {
            return Err(corrupt("<trailing bytes>"));
        }
        Ok(bundle)
    }
}

pub fn save_bundle(bundle: &TensorBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, bundle.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: impl AsRef<Path>) -> Result<TensorBundle> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    TensorBundle::from_bytes(&bytes, path)
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u8(&mut self) -> Option<u8> {
        self.take(1).map(|b| b[0])
    }

    fn u32(&mut self) -> Option<usize> {
        self.take(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn string(&mut self) -> Option<String> {
        let n = self.u32()?;
        let b = self.take(n)?;
        String::from_utf8(b.to_vec()).ok()
    }
}

/// Canonical encoder parameter names for `layers` layers, in write order.
pub fn canonical_encoder_names(layers: usize) -> Vec<String> {
    let mut names: Vec<String> = ["embed.word", "embed.pos", "embed.type", "embed.ln.gamma", "embed.ln.beta"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for i in 0..layers {
        for p in ["q", "k", "v", "o"] {
            names.push(format!("layer.{i}.attn.{p}.w"));
            names.push(format!("layer.{i}.attn.{p}.b"));
        }
        names.push(format!("layer.{i}.attn.ln.gamma"));
        names.push(format!("layer.{i}.attn.ln.beta"));
        for p in ["w1", "b1", "w2", "b2"] {
            names.push(format!("layer.{i}.ffn.{p}"));
        }
        names.push(format!("layer.{i}.ffn.ln.gamma"));
        names.push(format!("layer.{i}.ffn.ln.beta"));
    }
    names
}

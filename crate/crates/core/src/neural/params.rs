//! Flat parameter storage and the checkpoint format.
//!
//! A checkpoint is an 8-byte little-endian header length, a JSON header
//! `{"format", "len", "params": {name: {offset, shape}}, "meta"}`, then
//! `len` little-endian f64 values.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FORMAT: &str = "cutlab-params-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    specs: Vec<ParamSpec>,
    index: HashMap<String, usize>,
    pub data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    offset: usize,
    shape: [usize; 2],
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    len: usize,
    params: BTreeMap<String, Entry>,
    #[serde(default)]
    meta: serde_json::Value,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn spec(&self, name: &str) -> Option<&ParamSpec> {
        self.index_of(name).map(|i| &self.specs[i])
    }

    pub fn slice(&self, idx: usize) -> &[f64] {
        let s = &self.specs[idx];
        &self.data[s.offset..s.offset + s.rows * s.cols]
    }

    /// Append a `rows × cols` block initialized with `values`.
    pub fn add_values(&mut self, name: &str, rows: usize, cols: usize, values: Vec<f64>) {
        assert_eq!(values.len(), rows * cols);
        assert!(!self.index.contains_key(name), "duplicate parameter {name}");
        self.index.insert(name.to_string(), self.specs.len());
        self.specs.push(ParamSpec { name: name.to_string(), offset: self.data.len(), rows, cols });
        self.data.extend(values);
    }

    /// Append a block drawn from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn add_uniform<R: Rng>(&mut self, name: &str, rows: usize, cols: usize, fan_in: usize, rng: &mut R) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let values = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
        self.add_values(name, rows, cols, values);
    }

    /// Flat index ranges of every parameter whose name starts with `prefix`.
    pub fn block(&self, prefix: &str) -> Vec<std::ops::Range<usize>> {
        self.specs
            .iter()
            .filter(|s| s.name.starts_with(prefix))
            .map(|s| s.offset..s.offset + s.rows * s.cols)
            .collect()
    }

    /// Boolean mask over the flat layout selecting `prefix`'s parameters.
    pub fn block_mask(&self, prefix: &str) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for r in self.block(prefix) {
            mask[r].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    pub fn mean_abs(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|v| v.abs()).sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn to_bytes(&self, meta: &serde_json::Value) -> Vec<u8> {
        let header = Header {
            format: FORMAT.to_string(),
            len: self.len(),
            params: self
                .specs
                .iter()
                .map(|s| (s.name.clone(), Entry { offset: s.offset, shape: [s.rows, s.cols] }))
                .collect(),
            meta: meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + json.len() + 8 * self.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, serde_json::Value)> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 8 {
            return Err(bad("truncated header length"));
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
        let body = bytes.get(8..8 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| bad(&format!("header: {e}")))?;
        if header.format != FORMAT {
            return Err(bad(&format!("unknown format {:?}", header.format)));
        }
        let raw = &bytes[8 + hlen..];
        if raw.len() != 8 * header.len {
            return Err(bad(&format!("expected {} values, found {} bytes", header.len, raw.len())));
        }
        let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        let mut entries: Vec<(String, Entry)> = header.params.into_iter().collect();
        entries.sort_by_key(|(_, e)| e.offset);
        let mut set = ParamSet::new();
        for (name, e) in entries {
            let [rows, cols] = e.shape;
            if e.offset != set.len() || e.offset + rows * cols > data.len() {
                return Err(bad(&format!("parameter {name} has an inconsistent offset")));
            }
            set.add_values(&name, rows, cols, data[e.offset..e.offset + rows * cols].to_vec());
        }
        if set.len() != data.len() {
            return Err(bad("parameters do not cover the data"));
        }
        Ok((set, header.meta))
    }

    pub fn save(&self, path: &Path, meta: &serde_json::Value) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes(meta))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

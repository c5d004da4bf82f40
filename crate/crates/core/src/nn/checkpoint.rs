//! Named-tensor container used for weight checkpoints and face models.
//!
//! Layout:
//!
//! ```text
//! offset 0   8 bytes   magic "THTENSOR"
//! offset 8   8 bytes   header length N, u64 little-endian
//! offset 16  N bytes   JSON manifest, pretty-printed:
//!                      {"meta": {...}, "tensors": [{"name", "shape", "offset", "count"}]}
//! offset 16+N          tensor data, f64 little-endian, concatenated in
//!                      manifest order; "offset" is in bytes from here
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::weights::{NetWeights, Param};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"THTENSOR";

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    count: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Manifest {
    meta: BTreeMap<String, serde_json::Value>,
    tensors: Vec<Entry>,
}

/// An ordered set of named tensors plus free-form metadata.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TensorFile {
    pub meta: BTreeMap<String, serde_json::Value>,
    pub tensors: Vec<(String, Tensor)>,
}

impl TensorFile {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| Error::Malformed(format!("tensor file has no entry {name}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut offset = 0u64;
        let entries: Vec<Entry> = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let e = Entry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                    count: t.len() as u64,
                };
                offset += 8 * t.len() as u64;
                e
            })
            .collect();
        let manifest = Manifest {
            meta: self.meta.clone(),
            tensors: entries,
        };
        let header = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        let mut out = Vec::with_capacity(16 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, t) in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Malformed("not a tensor file (bad magic)".into()));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let data_start = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Malformed("truncated tensor file header".into()))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[16..data_start])
            .map_err(|e| Error::Malformed(format!("tensor manifest: {e}")))?;
        let data = &bytes[data_start..];
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for e in manifest.tensors {
            let start = e.offset as usize;
            let end = start + 8 * e.count as usize;
            if end > data.len() || e.shape.iter().product::<usize>() != e.count as usize {
                return Err(Error::Malformed(format!("tensor {} out of bounds", e.name)));
            }
            let values = data[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push((e.name, Tensor::new(e.shape, values)?));
        }
        Ok(Self {
            meta: manifest.meta,
            tensors,
        })
    }

    /// Writes the file, creating missing parent directories.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl NetWeights {
    /// Parameters and Adam moments (`<name>#m`, `<name>#v`) as a tensor file.
    pub fn to_tensor_file(&self) -> TensorFile {
        let mut tensors = Vec::new();
        for (name, p) in self.iter() {
            tensors.push((name.to_string(), p.value.clone()));
            tensors.push((format!("{name}#m"), p.m.clone()));
            tensors.push((format!("{name}#v"), p.v.clone()));
        }
        let meta = BTreeMap::from([
            ("kind".to_string(), serde_json::json!("net_weights")),
            ("step".to_string(), serde_json::json!(self.step())),
        ]);
        TensorFile { meta, tensors }
    }

    pub fn from_tensor_file(file: &TensorFile) -> Result<Self> {
        let mut w = NetWeights::new();
        let step = file.meta.get("step").and_then(|v| v.as_u64()).unwrap_or(0);
        for (name, t) in &file.tensors {
            if name.contains('#') {
                continue;
            }
            let m = file.get(&format!("{name}#m"))?.clone();
            let v = file.get(&format!("{name}#v"))?.clone();
            if m.shape() != t.shape() || v.shape() != t.shape() {
                return Err(Error::Malformed(format!("moment shapes differ for {name}")));
            }
            w.insert_param(name.clone(), Param { value: t.clone(), m, v });
        }
        w.set_step(step);
        Ok(w)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_tensor_file().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tensor_file(&TensorFile::load(path)?)
    }
}

//! Model checkpoints: a flat little-endian tensor file plus a JSON sidecar
//! holding the configuration and the reference topology.
//!
//! Tensor file layout: magic `SHAPECKP`, `u32` version, `u32` tensor count,
//! then per tensor a `u32` name length, UTF-8 name, `u64` rows, `u64` cols
//! and `rows · cols` row-major `f64` values.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use shapecomp_core::grad::Tensor;
use shapecomp_core::mesh::Mesh;
use shapecomp_core::vae::{VaeConfig, VaeModel};

use crate::error::{Error, Result};
use crate::fs::{ensure_parent, read_json, with_suffix, write_json};

pub const MAGIC: &[u8; 8] = b"SHAPECKP";
pub const VERSION: u32 = 1;

pub fn encode_tensors<'a>(tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let tensors: Vec<_> = tensors.into_iter().collect();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

pub fn decode_tensors(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor)>> {
    let truncated = || Error::format(path, "truncated checkpoint");
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8) != Some(MAGIC.as_slice()) {
        return Err(Error::format(path, "not a checkpoint (bad magic)"));
    }
    let version = r.u32().ok_or_else(truncated)?;
    if version != VERSION {
        return Err(Error::format(path, format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32().ok_or_else(truncated)? as usize;
    let mut out = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32().ok_or_else(truncated)? as usize;
        let name = std::str::from_utf8(r.take(len).ok_or_else(truncated)?)
            .map_err(|_| Error::format(path, "tensor name is not UTF-8"))?
            .to_string();
        let rows = r.u64().ok_or_else(truncated)? as usize;
        let cols = r.u64().ok_or_else(truncated)? as usize;
        let n = rows.checked_mul(cols).ok_or_else(truncated)?;
        let raw = r.take(n.checked_mul(8).ok_or_else(truncated)?).ok_or_else(truncated)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        out.push((name, Tensor::from_vec(rows, cols, data)?));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(path, "trailing bytes after last tensor"));
    }
    Ok(out)
}

pub fn write_tensors<'a>(path: &Path, tensors: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
    ensure_parent(path)?;
    std::fs::write(path, encode_tensors(tensors)).map_err(|e| Error::io(path, e))
}

pub fn read_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensors(&bytes, path)
}

/// JSON sidecar stored next to the tensor file as `<checkpoint>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format_version: u32,
    pub config: VaeConfig,
    /// Hex-encoded reference topology hash.
    pub topology_hash: String,
    pub vertex_count: usize,
    pub faces: Vec<[usize; 3]>,
}

pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    with_suffix(checkpoint, ".json")
}

pub fn save_model(model: &VaeModel, path: &Path) -> Result<()> {
    write_tensors(path, model.params().iter().map(|(_, p)| (p.name(), p.value())))?;
    let topology = model.topology();
    write_json(
        &sidecar_path(path),
        &Sidecar {
            format_version: VERSION,
            config: model.config().clone(),
            topology_hash: format!("{:016x}", topology.hash()),
            vertex_count: topology.vertex_count(),
            faces: topology.faces().to_vec(),
        },
    )
}

pub fn load_model(path: &Path) -> Result<VaeModel> {
    let sidecar_file = sidecar_path(path);
    let sidecar: Sidecar = read_json(&sidecar_file)?;
    let reference = Mesh::new(vec![[0.0; 3]; sidecar.vertex_count], sidecar.faces)?;
    let hash = format!("{:016x}", reference.topology_hash());
    if hash != sidecar.topology_hash {
        return Err(Error::format(
            &sidecar_file,
            format!("topology hash {hash} does not match recorded {}", sidecar.topology_hash),
        ));
    }
    let mut model = VaeModel::new(&reference, &sidecar.config)?;
    model.load_named(&read_tensors(path)?)?;
    Ok(model)
}

//! `ICFE` binary feature container.
//!
//! ```text
//! "ICFE" | u32 version=1 | u32 count | u32 L | u32 D
//! per record: u32 id_len | id bytes (UTF-8) | L·D f32
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::FeatureSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"ICFE";
const VERSION: u32 = 1;

pub fn encode_features<S: Scalar>(sets: &[FeatureSet<S>]) -> Result<Vec<u8>> {
    let (l, d) = sets
        .first()
        .map_or((0, 0), |s| (s.locations(), s.dim()));
    if let Some(bad) = sets.iter().find(|s| (s.locations(), s.dim()) != (l, d)) {
        return Err(Error::Contract(format!(
            "feature sets must share one shape: {l}x{d} vs {}x{} for {:?}",
            bad.locations(),
            bad.dim(),
            bad.image_id
        )));
    }
    let mut out = Vec::with_capacity(20 + sets.len() * (8 + 4 * l * d));
    out.extend_from_slice(MAGIC);
    for v in [VERSION, sets.len() as u32, l as u32, d as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for s in sets {
        out.extend_from_slice(&(s.image_id.len() as u32).to_le_bytes());
        out.extend_from_slice(s.image_id.as_bytes());
        for &v in s.annotations.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_features<S: Scalar>(sets: &[FeatureSet<S>], path: &Path) -> Result<()> {
    let bytes = encode_features(sets)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Format(format!(
                "feature file truncated at byte offset {} while reading {what}",
                self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

pub fn decode_features<S: Scalar>(bytes: &[u8]) -> Result<Vec<FeatureSet<S>>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("not an ICFE feature file (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported ICFE version {version}")));
    }
    let count = r.u32("record count")? as usize;
    let l = r.u32("location count")? as usize;
    let d = r.u32("feature width")? as usize;
    if count > 0 && (l == 0 || d == 0) {
        return Err(Error::Format(format!("records declared with empty shape {l}x{d}")));
    }
    let mut sets = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let id_len = r.u32("id length")? as usize;
        let id_start = r.pos;
        let id = std::str::from_utf8(r.take(id_len, "image id")?)
            .map_err(|_| Error::Format(format!("image id at byte offset {id_start} is not UTF-8")))?
            .to_owned();
        let raw = r.take(4 * l * d, "annotation values")?;
        let data = raw
            .chunks_exact(4)
            .map(|c| S::of(f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64))
            .collect();
        let set = FeatureSet::new(id, Tensor::matrix(l, d, data)?)
            .map_err(|e| Error::Format(e.to_string()))?;
        sets.push(set);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after the last record",
            bytes.len() - r.pos
        )));
    }
    Ok(sets)
}

pub fn read_features<S: Scalar>(path: &Path) -> Result<Vec<FeatureSet<S>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_features(&bytes)
}

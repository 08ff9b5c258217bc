//! Shared on-disk framing for datasets and checkpoints:
//!
//! ```text
//! magic       8 bytes
//! header_len  u32, little-endian
//! header      header_len bytes of UTF-8 JSON (pretty-printed)
//! payload     little-endian binary arrays, layout described by the header
//! ```
//!
//! The header always carries `version`, `payload_bytes` and `sha256` (hex
//! digest of the payload). Files are written to a temporary sibling and
//! renamed into place.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn encode(magic: &[u8; 8], version: u32, mut header: Map<String, Value>, payload: &[u8]) -> Result<Vec<u8>> {
    header.insert("version".into(), Value::from(version));
    header.insert("payload_bytes".into(), Value::from(payload.len()));
    header.insert("sha256".into(), Value::from(sha256_hex(payload)));
    let text = serde_json::to_vec_pretty(&Value::Object(header))?;
    let mut out = Vec::with_capacity(12 + text.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(&text);
    out.extend_from_slice(payload);
    Ok(out)
}

pub fn decode<'a>(magic: &[u8; 8], version: u32, bytes: &'a [u8]) -> Result<(Map<String, Value>, &'a [u8])> {
    if bytes.len() < 12 || &bytes[..8] != magic {
        return Err(Error::Format(format!(
            "missing magic bytes {:?}",
            String::from_utf8_lossy(magic).trim_end()
        )));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let header_end = 12usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or(Error::Truncated {
            expected: header_len,
            found: bytes.len() - 12,
        })?;
    let header: Value = serde_json::from_slice(&bytes[12..header_end])
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?;
    let Value::Object(header) = header else {
        return Err(Error::Format("header is not a JSON object".into()));
    };
    let found = header
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Format("header has no version".into()))? as u32;
    if found != version {
        return Err(Error::Version { found, supported: version });
    }
    let expected = header
        .get("payload_bytes")
        .and_then(Value::as_u64)
        .ok_or_else(|| Error::Format("header has no payload_bytes".into()))? as usize;
    let payload = &bytes[header_end..];
    if payload.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - expected
        )));
    }
    let declared = header.get("sha256").and_then(Value::as_str).unwrap_or_default();
    let actual = sha256_hex(payload);
    if declared != actual {
        return Err(Error::Checksum {
            expected: declared.to_string(),
            actual,
        });
    }
    Ok((header, payload))
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Little-endian reader over a payload slice.
pub struct PayloadReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> PayloadReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        PayloadReader { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            expected: self.pos + n,
            found: self.bytes.len(),
        })?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 8)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format(format!(
                "payload has {} unread bytes",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn push_f32s(out: &mut Vec<u8>, xs: &[f32]) {
    out.reserve(xs.len() * 4);
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn push_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    out.reserve(xs.len() * 8);
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

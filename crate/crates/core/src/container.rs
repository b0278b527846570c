//! Single-file container: a versioned TOML manifest followed by
//! little-endian `f64` blobs, one per named tensor.
//!
//! ```text
//! starplus-container\n
//! manifest-bytes <N>\n
//! <N bytes of TOML: format_version, kind, [meta], [[tensors]] name/rows/cols>
//! <tensor 0 as rows*cols LE f64> <tensor 1> ...
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

const MAGIC: &str = "starplus-container";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    kind: String,
    meta: toml::Table,
    tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub kind: String,
    pub meta: toml::Table,
    pub tensors: Vec<(String, Matrix)>,
}

impl Container {
    pub fn new(kind: impl Into<String>, meta: toml::Table) -> Self {
        Self {
            kind: kind.into(),
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, m: Matrix) {
        self.tensors.push((name.into(), m));
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            kind: self.kind.clone(),
            meta: self.meta.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|(name, m)| TensorEntry {
                    name: name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
        };
        let text = toml::to_string(&manifest).expect("manifest is always representable");
        let payload: usize = self.tensors.iter().map(|(_, m)| m.as_slice().len() * 8).sum();
        let mut out = Vec::with_capacity(text.len() + payload + 64);
        out.extend_from_slice(format!("{MAGIC}\nmanifest-bytes {}\n", text.len()).as_bytes());
        out.extend_from_slice(text.as_bytes());
        for (_, m) in &self.tensors {
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        let mut cursor = 0usize;
        let mut next_line = || -> Result<&str> {
            let rest = &bytes[cursor..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| bad("truncated header".into()))?;
            cursor += end + 1;
            std::str::from_utf8(&rest[..end]).map_err(|_| bad("header is not UTF-8".into()))
        };
        let magic = next_line()?;
        if magic != MAGIC {
            return Err(bad(format!("expected `{MAGIC}` header, found `{magic}`")));
        }
        let len_line = next_line()?;
        let len: usize = len_line
            .strip_prefix("manifest-bytes ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("bad manifest length line `{len_line}`")))?;
        let text = bytes
            .get(cursor..cursor + len)
            .ok_or_else(|| bad("truncated manifest".into()))?;
        cursor += len;
        let text = std::str::from_utf8(text).map_err(|_| bad("manifest is not UTF-8".into()))?;
        let manifest: Manifest = toml::from_str(text).map_err(|e| bad(format!("manifest: {e}")))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format_version {} (this build reads {FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        let mut tensors = Vec::with_capacity(manifest.tensors.len());
        for entry in manifest.tensors {
            let n = entry.rows * entry.cols;
            let raw = bytes
                .get(cursor..cursor + n * 8)
                .ok_or_else(|| bad(format!("truncated blob for `{}`", entry.name)))?;
            cursor += n * 8;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
                .collect();
            tensors.push((entry.name, Matrix::from_vec(entry.rows, entry.cols, data)?));
        }
        if cursor != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - cursor)));
        }
        Ok(Self {
            kind: manifest.kind,
            meta: manifest.meta,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

//! Single-file container of named 32-bit arrays behind a JSON text header.
//!
//! ```text
//! MULTISR-CONTAINER <version>\n
//! <header byte length>\n
//! <header JSON>\n
//! <little-endian f32 payload, arrays back to back in header order>
//! ```

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use multisr_tensor::{Scalar, Tensor};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAGIC: &str = "MULTISR-CONTAINER";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ArrayHeader {
    name: String,
    shape: Vec<usize>,
    dtype: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    arrays: Vec<ArrayHeader>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedArray {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub meta: serde_json::Value,
    pub arrays: Vec<NamedArray>,
}

impl Container {
    pub fn new(meta: serde_json::Value) -> Self {
        Container {
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn push<T: Scalar>(&mut self, name: impl Into<String>, t: &Tensor<T>) {
        self.arrays.push(NamedArray {
            name: name.into(),
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v.as_f64() as f32).collect(),
        });
    }

    pub fn get(&self, name: &str) -> Option<&NamedArray> {
        self.arrays.iter().find(|a| a.name == name)
    }

    pub fn tensor<T: Scalar>(&self, name: &str) -> Option<Tensor<T>> {
        self.get(name).map(|a| {
            Tensor::from_vec(&a.shape, a.data.iter().map(|&v| T::lit(v as f64)).collect())
        })
    }

    pub fn write_to(&self, mut w: impl Write) -> std::io::Result<()> {
        let header = Header {
            meta: self.meta.clone(),
            arrays: self
                .arrays
                .iter()
                .map(|a| ArrayHeader {
                    name: a.name.clone(),
                    shape: a.shape.clone(),
                    dtype: "f32".into(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&header).map_err(std::io::Error::other)?;
        write!(w, "{MAGIC} {VERSION}\n{}\n{text}\n", text.len())?;
        for a in &self.arrays {
            let mut buf = Vec::with_capacity(a.data.len() * 4);
            for v in &a.data {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        w.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("partial");
        let f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        self.write_to(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn read_from(r: impl Read, path: &Path) -> Result<Self> {
        Self::read_filtered(r, path, |_| true)
    }

    /// Reads only the arrays whose name passes `keep`; the others are
    /// skipped without being decoded.
    pub fn read_filtered(r: impl Read, path: &Path, keep: impl Fn(&str) -> bool) -> Result<Self> {
        let mut r = BufReader::new(r);
        let header = read_header(&mut r, path)?;
        let bad = |reason: String| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        };
        let mut arrays = Vec::new();
        for a in header.arrays {
            if a.dtype != "f32" {
                return Err(bad(format!("array {}: unsupported dtype {}", a.name, a.dtype)));
            }
            let n: usize = a.shape.iter().product();
            if !keep(&a.name) {
                let skipped = std::io::copy(&mut (&mut r).take(n as u64 * 4), &mut std::io::sink())
                    .map_err(|e| Error::io(path, e))?;
                if skipped != n as u64 * 4 {
                    return Err(bad(format!("array {} truncated", a.name)));
                }
                continue;
            }
            let mut bytes = vec![0u8; n * 4];
            r.read_exact(&mut bytes)
                .map_err(|_| bad(format!("array {} truncated", a.name)))?;
            let data = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            arrays.push(NamedArray {
                name: a.name,
                shape: a.shape,
                data,
            });
        }
        Ok(Container {
            meta: header.meta,
            arrays,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f, path)
    }

    pub fn load_filtered(path: impl AsRef<Path>, keep: impl Fn(&str) -> bool) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_filtered(f, path, keep)
    }

    /// Header metadata only; the payload is not read.
    pub fn load_meta(path: impl AsRef<Path>) -> Result<serde_json::Value> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(read_header(&mut BufReader::new(f), path)?.meta)
    }
}

fn read_header(r: &mut impl BufRead, path: &Path) -> Result<Header> {
    let bad = |reason: String| Error::Checkpoint {
        path: path.to_path_buf(),
        reason,
    };
    let mut line = String::new();
    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let mut parts = line.trim_end().split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(bad("not a multisr container".into()));
    }
    let version: u32 = parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad("missing format version".into()))?;
    if version != VERSION {
        return Err(bad(format!("unsupported format version {version}")));
    }
    line.clear();
    r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
    let len: usize = line
        .trim_end()
        .parse()
        .map_err(|_| bad("bad header length".into()))?;
    let mut text = vec![0u8; len + 1];
    r.read_exact(&mut text).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&text[..len]).map_err(|e| bad(format!("header: {e}")))
}

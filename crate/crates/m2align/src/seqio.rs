//! FSQ1: a single-file container of named, shaped real tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "FSQ1"                      4 bytes
//! count                       u32
//! per tensor:
//!   name length, name         u32, UTF-8 bytes
//!   rank, dims                u32, rank x u32
//!   element type              u8 (0 = f32, 1 = f64)
//!   payload offset            u64, from the start of the file
//! payloads                    packed in header order
//! ```

use std::collections::HashSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

pub const MAGIC: &[u8; 4] = b"FSQ1";

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn tag(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::F64(_) => 1,
        }
    }

    fn width(tag: u8) -> usize {
        if tag == 0 {
            4
        } else {
            8
        }
    }

    /// Values widened to f64.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            TensorData::F32(v) => v.iter().map(|&x| x as f64).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(name: impl Into<String>, dims: Vec<u32>, data: Vec<f32>) -> Self {
        Self {
            name: name.into(),
            dims,
            data: TensorData::F32(data),
        }
    }

    pub fn f64(name: impl Into<String>, dims: Vec<u32>, data: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            dims,
            data: TensorData::F64(data),
        }
    }

    pub fn element_count(&self) -> u64 {
        self.dims.iter().map(|&d| d as u64).product()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SeqioError {
    #[error("bad magic: expected \"FSQ1\", found {0:?}")]
    BadMagic(Vec<u8>),
    #[error("truncated payload: {0}")]
    Truncated(String),
    #[error("overlapping offsets: tensors {first:?} and {second:?}")]
    OverlappingOffsets { first: String, second: String },
    #[error("duplicate tensor name {0:?}")]
    DuplicateName(String),
    #[error("malformed header: {0}")]
    Malformed(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub type Result<T> = std::result::Result<T, SeqioError>;

fn header_len(tensors: &[Tensor]) -> usize {
    8 + tensors
        .iter()
        .map(|t| 4 + t.name.len() + 4 + 4 * t.dims.len() + 1 + 8)
        .sum::<usize>()
}

/// Serializes `tensors` in order. Byte-deterministic.
pub fn encode(tensors: &[Tensor]) -> Result<Vec<u8>> {
    let mut names = HashSet::new();
    for t in tensors {
        if !names.insert(t.name.as_str()) {
            return Err(SeqioError::DuplicateName(t.name.clone()));
        }
        if t.element_count() != t.data.len() as u64 {
            return Err(SeqioError::Malformed(format!(
                "tensor {:?}: dims {:?} hold {} values, data has {}",
                t.name,
                t.dims,
                t.element_count(),
                t.data.len()
            )));
        }
    }
    let count = u32::try_from(tensors.len())
        .map_err(|_| SeqioError::Malformed("too many tensors".into()))?;
    let mut out = Vec::with_capacity(header_len(tensors));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    let mut offset = header_len(tensors) as u64;
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for d in &t.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.push(t.data.tag());
        out.extend_from_slice(&offset.to_le_bytes());
        offset += (t.data.len() * TensorData::width(t.data.tag())) as u64;
    }
    for t in tensors {
        match &t.data {
            TensorData::F32(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
            TensorData::F64(v) => v
                .iter()
                .for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                SeqioError::Truncated(format!(
                    "header ends inside {what} at byte {} of {}",
                    self.pos,
                    self.bytes.len()
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

struct Entry {
    name: String,
    dims: Vec<u32>,
    tag: u8,
    offset: u64,
    size: u64,
}

/// Exact inverse of [`encode`].
pub fn decode(bytes: &[u8]) -> Result<Vec<Tensor>> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(SeqioError::BadMagic(bytes[..bytes.len().min(4)].to_vec()));
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let count = cur.u32("tensor count")?;
    let mut entries = Vec::new();
    let mut names = HashSet::new();
    for i in 0..count {
        let len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(len, "tensor name")?)
            .map_err(|_| SeqioError::Malformed(format!("tensor {i}: name is not UTF-8")))?
            .to_string();
        if !names.insert(name.clone()) {
            return Err(SeqioError::DuplicateName(name));
        }
        let rank = cur.u32("rank")? as usize;
        let dims = (0..rank)
            .map(|_| cur.u32("dims"))
            .collect::<Result<Vec<u32>>>()?;
        let tag = cur.take(1, "element type")?[0];
        if tag > 1 {
            return Err(SeqioError::Malformed(format!(
                "tensor {name:?}: unknown element type {tag}"
            )));
        }
        let offset = cur.u64("payload offset")?;
        let size = dims
            .iter()
            .try_fold(TensorData::width(tag) as u64, |acc, &d| {
                acc.checked_mul(d as u64)
            })
            .ok_or_else(|| SeqioError::Malformed(format!("tensor {name:?}: size overflows")))?;
        entries.push(Entry {
            name,
            dims,
            tag,
            offset,
            size,
        });
    }
    let header_end = cur.pos as u64;
    for e in &entries {
        if e.offset < header_end {
            return Err(SeqioError::Malformed(format!(
                "tensor {:?}: payload offset {} lies inside the header",
                e.name, e.offset
            )));
        }
        let end = e.offset.checked_add(e.size);
        if end.is_none_or(|end| end > bytes.len() as u64) {
            return Err(SeqioError::Truncated(format!(
                "tensor {:?} needs bytes {}..{} but the file has {}",
                e.name,
                e.offset,
                e.offset.saturating_add(e.size),
                bytes.len()
            )));
        }
    }
    let mut order: Vec<&Entry> = entries.iter().filter(|e| e.size > 0).collect();
    order.sort_by_key(|e| e.offset);
    for w in order.windows(2) {
        if w[0].offset + w[0].size > w[1].offset {
            return Err(SeqioError::OverlappingOffsets {
                first: w[0].name.clone(),
                second: w[1].name.clone(),
            });
        }
    }
    Ok(entries
        .into_iter()
        .map(|e| {
            let raw = &bytes[e.offset as usize..(e.offset + e.size) as usize];
            let data = if e.tag == 0 {
                TensorData::F32(
                    raw.chunks_exact(4)
                        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            } else {
                TensorData::F64(
                    raw.chunks_exact(8)
                        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                        .collect(),
                )
            };
            Tensor {
                name: e.name,
                dims: e.dims,
                data,
            }
        })
        .collect())
}

pub fn write_container(tensors: &[Tensor], path: &Path) -> Result<()> {
    let bytes = encode(tensors)?;
    fs::write(path, bytes).map_err(|source| SeqioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_container(path: &Path) -> Result<Vec<Tensor>> {
    let bytes = fs::read(path).map_err(|source| SeqioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

/// Finds a tensor by name.
pub fn find<'a>(tensors: &'a [Tensor], name: &str) -> Option<&'a Tensor> {
    tensors.iter().find(|t| t.name == name)
}

//! Precomputed-representation files and text word vectors.
//!
//! Store layout, all integers little-endian:
//! `"NSEMB1"`, u32 count, u32 dim, then `count` records of
//! u16 id length, UTF-8 id bytes, `dim` × f32.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use snowball_core::encoder::WordVectors;
use snowball_core::EmbeddingStore;

use crate::error::{Error, Result};

pub const STORE_MAGIC: &[u8; 6] = b"NSEMB1";

/// Bounds-checked little-endian reader over a byte slice.
pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated: need {n} bytes at offset {}", self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u16(&mut self) -> std::result::Result<u16, String> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> std::result::Result<f32, String> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

/// Records are written in ascending id order.
pub fn encode_store(store: &EmbeddingStore) -> std::result::Result<Vec<u8>, String> {
    let count = u32::try_from(store.len()).map_err(|_| "too many records".to_string())?;
    let dim = u32::try_from(store.dim()).map_err(|_| "dimension too large".to_string())?;
    let mut out = Vec::with_capacity(14 + store.len() * (2 + 16 + 4 * store.dim()));
    out.extend_from_slice(STORE_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for (id, v) in store.iter() {
        let len = u16::try_from(id.len()).map_err(|_| format!("id `{id}` is longer than 65535 bytes"))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_store(bytes: &[u8]) -> std::result::Result<EmbeddingStore, String> {
    let mut c = Cursor::new(bytes);
    if c.take(STORE_MAGIC.len()).ok() != Some(STORE_MAGIC.as_slice()) {
        return Err("not an NSEMB1 embedding store".into());
    }
    let count = c.u32()? as usize;
    let dim = c.u32()? as usize;
    let mut store = EmbeddingStore::new(dim);
    for i in 0..count {
        let len = c.u16()? as usize;
        let id = std::str::from_utf8(c.take(len)?).map_err(|_| format!("record {i}: id is not UTF-8"))?;
        let v = (0..dim).map(|_| c.f32()).collect::<std::result::Result<Vec<_>, _>>()?;
        store.insert(id, v).map_err(|e| format!("record {i}: {e}"))?;
    }
    if !c.is_empty() {
        return Err(format!("{} trailing bytes after {count} records", bytes.len() - c.offset()));
    }
    Ok(store)
}

pub fn load_embedding_store(path: &Path) -> Result<EmbeddingStore> {
    let bytes = fs::read(path).map_err(|e| Error::read(path, e))?;
    decode_store(&bytes).map_err(|m| Error::format(path, None, m))
}

pub fn save_embedding_store(path: &Path, store: &EmbeddingStore) -> Result<()> {
    let bytes = encode_store(store).map_err(|m| Error::format(path, None, m))?;
    fs::write(path, bytes).map_err(|e| Error::write(path, e))
}

/// Whitespace-separated `token v1 … v_d` lines; every line must have the
/// same width.
pub fn parse_word_vectors(text: &str, path: &Path) -> Result<WordVectors> {
    let mut vectors = BTreeMap::new();
    let mut dim = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = Some(i + 1);
        let mut fields = line.split_whitespace();
        let Some(token) = fields.next() else { continue };
        let v = fields
            .map(|f| f.parse::<f64>().map_err(|_| Error::format(path, lineno, format!("`{f}` is not a number"))))
            .collect::<Result<Vec<_>>>()?;
        if v.is_empty() {
            return Err(Error::format(path, lineno, format!("no values for `{token}`")));
        }
        match dim {
            None => dim = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(Error::format(path, lineno, format!("{} values, expected {d}", v.len())));
            }
            _ => {}
        }
        if vectors.insert(token.to_string(), v).is_some() {
            return Err(Error::format(path, lineno, format!("duplicate token `{token}`")));
        }
    }
    Ok(WordVectors { dim: dim.unwrap_or(0), vectors })
}

pub fn read_word_vectors(path: &Path) -> Result<WordVectors> {
    let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    parse_word_vectors(&text, path)
}

/// Values are written with Rust's shortest round-trip formatting.
pub fn write_word_vectors(path: &Path, vectors: &WordVectors) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::write(path, e))?;
    let mut w = BufWriter::new(file);
    for (token, v) in &vectors.vectors {
        let mut line = token.clone();
        for x in v {
            line.push(' ');
            line.push_str(&x.to_string());
        }
        writeln!(w, "{line}").map_err(|e| Error::write(path, e))?;
    }
    w.flush().map_err(|e| Error::write(path, e))
}

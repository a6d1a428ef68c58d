use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use super::{Encoder, Representation};
use crate::corpus::Instance;
use crate::error::{Error, Result};

/// Precomputed instance representations keyed by instance id, stored at
/// single precision (the precision of the on-disk format).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    table: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Self {
        EmbeddingStore { dim, table: BTreeMap::new() }
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: vector.len() });
        }
        if self.table.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.table.insert(id, vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f32]> {
        self.table.get(id).map(Vec::as_slice)
    }

    /// Entries in ascending id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.table.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn lookup(&self, x: &Instance) -> Result<Representation> {
        let v = self.get(&x.id).ok_or_else(|| Error::MissingId(x.id.clone()))?;
        Ok(Representation::new(v.iter().map(|&f| f64::from(f)).collect()))
    }
}

impl Encoder for EmbeddingStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, x: &Instance) -> Result<Representation> {
        self.lookup(x)
    }
}

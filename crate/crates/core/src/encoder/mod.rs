//! Instance encoders: a trainable convolutional encoder and a lookup table
//! of precomputed vectors.

mod conv;
mod store;
mod vocab;

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Deref;

pub use conv::{ConvConfig, ConvEncoder, ConvParams, PoolTrace};
pub use store::EmbeddingStore;
pub use vocab::{Vocab, UNK_TOKEN};

use crate::corpus::Instance;
use crate::error::Result;

/// Fixed-length real vector produced by an encoder.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Representation(Vec<f64>);

impl Representation {
    pub fn new(values: Vec<f64>) -> Self {
        Representation(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for Representation {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for Representation {
    fn from(v: Vec<f64>) -> Self {
        Representation(v)
    }
}

pub trait Encoder {
    /// Output dimension.
    fn dim(&self) -> usize;
    fn encode(&self, x: &Instance) -> Result<Representation>;
}

impl<E: Encoder + ?Sized> Encoder for &E {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn encode(&self, x: &Instance) -> Result<Representation> {
        (**self).encode(x)
    }
}

/// The encoders a model checkpoint can carry.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceEncoder {
    Conv(ConvEncoder),
    Lookup(EmbeddingStore),
}

impl InstanceEncoder {
    pub fn as_conv(&self) -> Option<&ConvEncoder> {
        match self {
            InstanceEncoder::Conv(c) => Some(c),
            InstanceEncoder::Lookup(_) => None,
        }
    }

    pub fn as_conv_mut(&mut self) -> Option<&mut ConvEncoder> {
        match self {
            InstanceEncoder::Conv(c) => Some(c),
            InstanceEncoder::Lookup(_) => None,
        }
    }
}

impl Encoder for InstanceEncoder {
    fn dim(&self) -> usize {
        match self {
            InstanceEncoder::Conv(c) => c.dim(),
            InstanceEncoder::Lookup(s) => s.dim(),
        }
    }

    fn encode(&self, x: &Instance) -> Result<Representation> {
        match self {
            InstanceEncoder::Conv(c) => c.encode(x),
            InstanceEncoder::Lookup(s) => s.encode(x),
        }
    }
}

impl From<ConvEncoder> for InstanceEncoder {
    fn from(c: ConvEncoder) -> Self {
        InstanceEncoder::Conv(c)
    }
}

impl From<EmbeddingStore> for InstanceEncoder {
    fn from(s: EmbeddingStore) -> Self {
        InstanceEncoder::Lookup(s)
    }
}

/// Pretrained word vectors keyed by token.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WordVectors {
    pub dim: usize,
    pub vectors: BTreeMap<String, Vec<f64>>,
}

/// Encodes every instance, in order.
pub fn encode_all<E: Encoder + ?Sized>(encoder: &E, instances: &[Instance]) -> Result<Vec<Representation>> {
    instances.iter().map(|x| encoder.encode(x)).collect()
}

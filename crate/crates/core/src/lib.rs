//! Few-shot relation learning by bootstrapping.
//!
//! Given a handful of seed instances for a relation that the models have
//! never seen, the engine grows the seed set from an unlabeled corpus in
//! rounds. Each round first pulls in sentences that mention the same entity
//! pairs as already-selected instances, then sentences that a freshly tuned
//! binary classifier is confident about. Both candidate pools are filtered
//! by a pre-trained siamese relation metric before anything is accepted.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, the command
//! line front end and the thread pool live in the `snowball` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod classifier;
pub mod corpus;
pub mod encoder;
mod error;
pub mod eval;
pub mod exec;
pub mod math;
pub mod optim;
pub mod rng;
pub mod rsn;
pub mod snowball;

pub use classifier::{ClassifierHead, FinetuneConfig, PretrainConfig};
pub use corpus::{EntityPair, EntityPairIndex, Instance, LabeledCorpus, SeedSet, Span, UnlabeledCorpus};
pub use encoder::{ConvConfig, ConvEncoder, EmbeddingStore, Encoder, InstanceEncoder, Representation};
pub use error::{Error, Result};
pub use exec::{ScoreExecutor, Sequential};
pub use rsn::{DistanceHead, RsnModel, RsnTrainConfig};
pub use snowball::{IterationRecord, SnowballConfig, SnowballState};

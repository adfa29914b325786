//! Document-level relation extraction: global-context input encoding, a
//! from-scratch transformer encoder with hand-rolled reverse-mode gradients,
//! and a training/evaluation pipeline over DocRED-style corpora.

pub mod checkpoint;
pub mod cli;
pub mod corpus;
pub mod encoding;
pub mod error;
pub mod math;
pub mod metrics;
pub mod model;
pub mod tokenizer;
pub mod training;

pub use corpus::{Document, Entity, Mention, NegativePolicy, PairInstance, RelationSchema};
pub use encoding::EncodedInput;
pub use error::{DocreError, Result};
pub use metrics::{Averaging, EpochReport, SplitMetrics};
pub use model::{ModelConfig, Parameters};
pub use tokenizer::Vocab;
pub use training::TrainConfig;

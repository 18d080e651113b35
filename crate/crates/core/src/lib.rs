//! Preposition sense disambiguation from word-vector geometry.
//!
//! Each preposition occurrence is described by three vectors built from a
//! pretrained embedding table: the mean of its left context, the mean of its
//! right context, and the unit vector jointly closest to the subspaces spanned
//! by the two contexts. Those features drive an unsupervised k-means sense
//! inducer and a weighted k-NN classifier. The classifier can tag a raw corpus,
//! which is then used to retrain CBOW embeddings with one vector per
//! preposition sense, and the resulting vectors are evaluated on relation
//! approximation and phrasal-verb paraphrasing.

pub mod classify;
pub mod cluster;
pub mod config;
pub mod corpus;
pub mod embed_train;
pub mod embeddings;
mod error;
pub mod eval;
pub mod features;
mod linalg;

pub use error::{Error, Result};

pub use classify::{KnnModel, TuneGrid};
pub use cluster::KMeansModel;
pub use corpus::{Corpus, TaggedCorpus};
pub use embed_train::{TrainConfig, Vocab};
pub use embeddings::EmbeddingTable;
pub use features::{FeatureMode, FeatureTriple, PrepInstance};

/// Separator between a preposition and its sense id in tagged tokens.
pub const SENSE_DELIMITER: &str = "::";

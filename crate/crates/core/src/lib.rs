//! Classifier synthesis for zero-shot learning.
//!
//! Seen and unseen classes share a semantic embedding space. A set of
//! phantom classes carries base classifiers; any real class's linear
//! classifier is the softmax-similarity-weighted combination of those bases.
//! Training the bases on seen-class data therefore yields classifiers for
//! unseen classes with no unseen training samples at all.
//!
//! The crate covers the full workflow: similarity weighting ([`semantic`]),
//! synthesis and prediction ([`synthesis`]), base-classifier training under
//! one-vs-other and Crammer-Singer losses ([`training`]), phantom-embedding
//! and metric adaptation ([`adaptation`]), class-wise cross-validation
//! ([`model_selection`]), the ConSE baseline ([`conse`]), flat and
//! hierarchical evaluation metrics ([`evaluation`]), plus file formats,
//! synthetic data, and experiment orchestration ([`data`], [`synthetic`],
//! [`pipeline`]).

pub mod adaptation;
pub mod conse;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod model_selection;
pub mod parallel;
pub mod pipeline;
pub mod rng;
pub mod semantic;
pub mod synthesis;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use semantic::{EmbeddingTable, Metric, SimilarityMatrix};
pub use synthesis::{BaseClassifierSet, ClassifierSet};
pub use training::{LabeledDataset, LossKind, TrainConfig};

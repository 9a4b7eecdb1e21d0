//! Node embeddings for evolving weighted graphs.
//!
//! Each snapshot in a window gets a two-layer GCN. The first-layer weights of
//! consecutive GCNs are linked by edge-weighted multi-head self-attention, so
//! the chain carries node state forward through time. A large teacher chain
//! is trained to reconstruct the latest snapshot's adjacency, then distilled
//! into a compact student, and both are scored on the links that appear in
//! the next snapshot.

pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod distill;
pub mod error;
pub mod eval;
pub mod gcn;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod sim;
pub mod tape;
pub mod teacher;

pub use config::{ModelConfig, Role};
pub use error::{Error, Result};
pub use gcn::{count_params, Embeddings};
pub use graph::{EventSequence, LinkSet, NodeId, NodeRegistry, RawEvent, SnapshotGraph};
pub use matrix::DenseMatrix;
pub use teacher::{train_teacher, EgadModel, TrainedModel, TrainingTrace};

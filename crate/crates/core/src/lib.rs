//! Rumor classification over tweet propagation graphs.
//!
//! Record files are joined into post sets, turned into directed propagation
//! graphs, given per-node text embeddings, and classified at the source
//! tweet by a GraphSAGE network extended with attention over edge-difference
//! attributes.

pub mod artifact;
pub mod classes;
pub mod graph;
pub mod ingestion;
pub mod model;
pub mod numerics;
pub mod pairs;
pub mod synth;
pub mod train_eval;

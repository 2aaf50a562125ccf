//! Concept ranking over query-specific knowledge graphs, and per-topic
//! indexing of image-text instances by their ranked concepts.
//!
//! The pipeline links tags and image labels to knowledge-graph concepts,
//! grows each instance's seeds into a query graph, clusters it, extracts
//! concept features, ranks concepts with a learned linear model, and then
//! ranks instances per topic from the top concepts.

pub mod cluster;
pub mod error;
pub mod eval;
pub mod features;
pub mod kg;
pub mod linking;
pub mod ltr;
pub mod pipeline;
pub mod query_graph;
pub mod topics;

pub use error::{Error, Result};
pub use eval::Mode;
pub use kg::{KnowledgeGraph, NodeId};

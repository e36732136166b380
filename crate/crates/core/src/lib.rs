//! Mention-graph retrieval engine and evaluation harness.
//!
//! Documents are split into paragraph-aligned chunks, capitalized entity
//! mentions link chunks into a bipartite graph, and an exact cosine index
//! covers every chunk. Four controllers retrieve evidence over the same
//! tools and budget:
//!
//! * vector-only dense retrieval,
//! * GraphRAG-local seed-and-expand,
//! * a rule-based breadth-first traversal,
//! * an LLM-driven tool-calling loop behind the [`gateway::Gateway`] trait.
//!
//! [`eval`] scores them against gold evidence with paired bootstrap tests
//! and derives graph-health diagnostics from their traces.

pub mod config;
pub mod controllers;
pub mod corpus;
pub mod engine;
pub mod entity;
pub mod error;
pub mod eval;
pub mod fuzzy;
pub mod gateway;
pub mod graph;
pub mod tools;
pub mod trace;
pub mod vector;

pub use controllers::{ControllerConfig, ControllerKind, EvidenceItem, EvidenceList, EvidenceSource};
pub use engine::{BuildOptions, EmbedderSpec, Engine};
pub use error::{Error, Result};
pub use graph::MentionGraph;
pub use tools::Clock;

//! Transfer of dependency-graph structure from a mature source domain to an
//! immature target domain.
//!
//! The pipeline embeds source entities from meta-path distances, selects the
//! source entities most relevant to the observed target, and then fills in
//! missing target dependencies with a constrained low-rank model.

pub mod dcm;
pub mod eem;
pub mod error;
pub mod evalkit;
pub mod hetgraph;
pub mod ingest;
pub mod metapath;
pub mod numerics;
pub mod sweep;
pub mod synthbench;
pub mod transfer;

pub use error::{Error, Result};
pub use hetgraph::{EntityId, EntityType, HeteroGraph};

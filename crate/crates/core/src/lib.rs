//! Homophily-driven rewiring of heterogeneous graphs.
//!
//! A graph's meta-path subgraphs are scored by label homophily, a
//! similarity learner is fitted to attribute and label neighborhood
//! distributions along each meta-path, and the learned similarity is used
//! to add and prune edges before the rewired subgraphs are merged back as
//! new relations.

// Negated comparisons are used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod csr;
pub mod diagnostics;
pub mod error;
pub mod graph;
pub mod io;
pub mod metapath;
pub mod moo;
pub mod msl;
pub mod pipeline;
pub mod rewire;
pub mod targets;

pub use csr::CsrMatrix;
pub use error::{Error, ErrorClass, Result};
pub use graph::{HeteroGraph, HeteroSchema, NodeType, Relation, Split, UNLABELED};
pub use metapath::{MetaPath, MetaPathSubgraph};
pub use msl::{MslConfig, MslModel};
pub use rewire::RewireConfig;
pub use targets::{SimilarityTargets, TargetsConfig};

//! Toolkit for two-stage SPARQL generation over knowledge graphs.
//!
//! A query is split into a *structure* (keywords plus typed placeholders such
//! as `[ent]` or `[rel]`) and a *content* assignment that fills those
//! placeholders. The crate provides:
//!
//! - [`sparql`]: a parser and canonicalizer for the supported SPARQL subset,
//! - [`scaffold`]: decomposition into structure/content and the inverse merge,
//! - [`grammar`]: a finite-state acceptor for the structure language,
//! - [`decode`]: constrained beam search over pluggable scorers,
//! - [`ontology`]: ontology snapshots, verbalization, and prompt assembly,
//! - [`kg`]: an N-Triples store with top-K path retrieval,
//! - [`corpus`]: dataset records and structure-level statistics.

pub mod corpus;
pub mod decode;
pub mod grammar;
pub mod kg;
pub mod ontology;
pub mod scaffold;
pub mod sparql;

use serde::{Deserialize, Serialize};

/// The two generation stages: structure prediction and content population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    #[serde(rename = "S")]
    Structure,
    #[serde(rename = "C")]
    Content,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::Structure => write!(f, "S"),
            Stage::Content => write!(f, "C"),
        }
    }
}

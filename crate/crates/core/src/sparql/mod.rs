//! Parsing, serialization, and canonicalization for the supported SPARQL
//! subset: SELECT/ASK queries over basic graph patterns with FILTER, ORDER BY,
//! GROUP BY, HAVING, LIMIT, and OFFSET. UNION, OPTIONAL, property paths, and
//! subqueries are rejected as unsupported rather than silently mangled.

mod ast;
mod canonical;
mod lexer;
mod parser;

pub use ast::{
    AggFunc, AggregateProjection, ExprSpan, LiteralSuffix, Modifier, Pattern, Projection, QueryAst,
    QueryForm, QueryToken, SlotCtx, SortDirection, SortKey, Term, TermKind, TriplePattern,
};
pub use canonical::{canonicalize, serialize, CanonicalQuery, CanonicalizeWarning};
pub use parser::parse_sparql;

pub(crate) use ast::is_canonical_var;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use thiserror::Error;

pub const RDF_TYPE_IRI: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PrefixTableError {
    #[error("prefix label must be non-empty")]
    EmptyLabel,
    #[error("invalid prefix label {0:?}")]
    InvalidLabel(String),
    #[error("namespace {0:?} must be an absolute IRI ending in '/' or '#'")]
    InvalidNamespace(String),
    #[error("namespace {shorter:?} is a prefix of {longer:?}")]
    OverlappingNamespace { shorter: String, longer: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SparqlError {
    #[error("syntax error at byte {position}: expected {}, found {found}", format_expected(expected))]
    Syntax {
        position: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unsupported construct at byte {position}: {construct}")]
    Unsupported { construct: String, position: usize },
    #[error("variable {name:?} is projected or referenced but never appears in the query patterns")]
    UnboundVariable { name: String },
    #[error(transparent)]
    Prefix(#[from] PrefixTableError),
}

fn format_expected(expected: &[String]) -> String {
    if expected.is_empty() {
        "nothing".to_string()
    } else {
        expected.join(" | ")
    }
}

/// Maps prefix labels to namespace IRIs, e.g. `dbr` -> `http://dbpedia.org/resource/`.
///
/// Namespaces may not be prefixes of one another, so at most one entry can
/// match any given IRI and longest-match compaction is unambiguous.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PrefixTable {
    entries: BTreeMap<String, String>,
}

impl PrefixTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, label: &str, namespace: &str) -> Result<(), PrefixTableError> {
        if label.is_empty() {
            return Err(PrefixTableError::EmptyLabel);
        }
        if label.contains(':') || label.chars().any(|c| c.is_whitespace()) {
            return Err(PrefixTableError::InvalidLabel(label.to_string()));
        }
        if !namespace.contains(':') || !(namespace.ends_with('/') || namespace.ends_with('#')) {
            return Err(PrefixTableError::InvalidNamespace(namespace.to_string()));
        }
        for (other_label, other_ns) in &self.entries {
            if other_label == label {
                continue; // replacing an entry with itself is checked below
            }
            if namespace != other_ns {
                if namespace.starts_with(other_ns.as_str()) {
                    return Err(PrefixTableError::OverlappingNamespace {
                        shorter: other_ns.clone(),
                        longer: namespace.to_string(),
                    });
                }
                if other_ns.starts_with(namespace) {
                    return Err(PrefixTableError::OverlappingNamespace {
                        shorter: namespace.to_string(),
                        longer: other_ns.clone(),
                    });
                }
            }
        }
        self.entries.insert(label.to_string(), namespace.to_string());
        Ok(())
    }

    pub fn from_pairs<I, S, T>(pairs: I) -> Result<Self, PrefixTableError>
    where
        I: IntoIterator<Item = (S, T)>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let mut table = Self::new();
        for (label, ns) in pairs {
            table.insert(label.as_ref(), ns.as_ref())?;
        }
        Ok(table)
    }

    /// Loads a JSON object of the shape `{"dbr": "http://dbpedia.org/resource/", ...}`.
    pub fn from_json_str(json: &str) -> Result<Self, PrefixLoadError> {
        let raw: BTreeMap<String, String> = serde_json::from_str(json)?;
        Ok(Self::from_pairs(raw)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PrefixLoadError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    pub fn namespace(&self, label: &str) -> Option<&str> {
        self.entries.get(label).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(l, n)| (l.as_str(), n.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest-namespace-match compaction. Returns the prefix label and local
    /// name when exactly one namespace covers the IRI and the local part is
    /// non-empty.
    pub fn compact<'t, 'i>(&'t self, iri: &'i str) -> Option<(&'t str, &'i str)> {
        let mut best: Option<(&'t str, &'i str)> = None;
        for (label, ns) in &self.entries {
            if let Some(local) = iri.strip_prefix(ns.as_str()) {
                if !local.is_empty() {
                    match best {
                        Some((_, prev)) if prev.len() <= local.len() => {}
                        _ => best = Some((label.as_str(), local)),
                    }
                }
            }
        }
        best
    }

    pub fn expand(&self, label: &str, local: &str) -> Option<String> {
        self.namespace(label).map(|ns| format!("{ns}{local}"))
    }

    /// Returns a copy with in-query PREFIX declarations layered on top. A
    /// declaration replaces any table entry with the same label.
    pub(crate) fn with_declarations(
        &self,
        decls: &[(String, String)],
    ) -> Result<Self, PrefixTableError> {
        let mut merged = Self::new();
        let shadowed: Vec<&str> = decls.iter().map(|(l, _)| l.as_str()).collect();
        for (label, ns) in &self.entries {
            if !shadowed.contains(&label.as_str()) {
                merged.insert(label, ns)?;
            }
        }
        for (label, ns) in decls {
            merged.insert(label, ns)?;
        }
        Ok(merged)
    }
}

#[derive(Debug, Error)]
pub enum PrefixLoadError {
    #[error("cannot read prefix table: {0}")]
    Io(#[from] std::io::Error),
    #[error("prefix table is not a JSON object of strings: {0}")]
    Format(#[from] serde_json::Error),
    #[error(transparent)]
    Invalid(#[from] PrefixTableError),
}

impl fmt::Display for CanonicalizeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CanonicalizeWarning::UnknownNamespace { iri } => {
                write!(f, "no prefix covers <{iri}>; kept in full form")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_table_rejects_overlapping_namespaces() {
        let mut table = PrefixTable::new();
        table.insert("dbr", "http://dbpedia.org/resource/").unwrap();
        let err = table
            .insert("dbrx", "http://dbpedia.org/resource/X/")
            .unwrap_err();
        assert!(matches!(err, PrefixTableError::OverlappingNamespace { .. }));
        // Symmetric case: new namespace is a prefix of an existing one.
        let err = table.insert("db", "http://dbpedia.org/").unwrap_err();
        assert!(matches!(err, PrefixTableError::OverlappingNamespace { .. }));
    }

    #[test]
    fn prefix_table_rejects_relative_or_unterminated_namespaces() {
        let mut table = PrefixTable::new();
        assert!(table.insert("dbo", "http://dbpedia.org/ontology").is_err());
        assert!(table.insert("bad", "not-an-iri/").is_err());
        assert!(table.insert("", "http://x.org/").is_err());
    }

    #[test]
    fn compact_picks_the_covering_namespace() {
        let table = PrefixTable::from_pairs([
            ("dbr", "http://dbpedia.org/resource/"),
            ("dbo", "http://dbpedia.org/ontology/"),
        ])
        .unwrap();
        assert_eq!(
            table.compact("http://dbpedia.org/resource/Microsoft"),
            Some(("dbr", "Microsoft"))
        );
        assert_eq!(table.compact("http://example.org/x"), None);
        // Empty local names stay uncompacted.
        assert_eq!(table.compact("http://dbpedia.org/resource/"), None);
    }

    #[test]
    fn loads_from_json_object() {
        let table = PrefixTable::from_json_str(r#"{"dbr": "http://dbpedia.org/resource/"}"#).unwrap();
        assert_eq!(table.namespace("dbr"), Some("http://dbpedia.org/resource/"));
        assert!(PrefixTable::from_json_str("[]").is_err());
    }
}

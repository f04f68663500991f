//! In-memory triple store over an N-Triples subset, plus best-first top-K
//! path retrieval from topic entities.
//!
//! Retrieval scores a path as the product of per-hop lexical relevance
//! between the relation label and the question terms, standing in for a
//! trained retriever while keeping the interface and pruning behavior.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("cannot read triples: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Immutable triple store with adjacency indexes in both directions.
/// Identifiers are stored verbatim: IRIs without angle brackets, literals
/// with their quotes and suffix.
#[derive(Debug, Default)]
pub struct KgStore {
    triples: BTreeSet<(String, String, String)>,
    outgoing: BTreeMap<String, Vec<(String, String)>>,
    incoming: BTreeMap<String, Vec<(String, String)>>,
    nodes: BTreeSet<String>,
}

fn is_literal(term: &str) -> bool {
    term.starts_with('"')
}

/// Human-readable label of an identifier: the text of a literal, or the part
/// of an IRI after its last `/` or `#`.
pub fn label_of(term: &str) -> &str {
    if let Some(rest) = term.strip_prefix('"') {
        if let Some(end) = rest.find('"') {
            return &rest[..end];
        }
    }
    term.rsplit(['/', '#']).next().unwrap_or(term)
}

impl KgStore {
    pub fn from_triples(triples: impl IntoIterator<Item = (String, String, String)>) -> Self {
        let triples: BTreeSet<(String, String, String)> = triples.into_iter().collect();
        let mut outgoing: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        let mut incoming: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
        let mut nodes = BTreeSet::new();
        for (s, p, o) in &triples {
            outgoing
                .entry(s.clone())
                .or_default()
                .push((p.clone(), o.clone()));
            incoming
                .entry(o.clone())
                .or_default()
                .push((p.clone(), s.clone()));
            nodes.insert(s.clone());
            if !is_literal(o) {
                nodes.insert(o.clone());
            }
        }
        for edges in outgoing.values_mut().chain(incoming.values_mut()) {
            edges.sort();
        }
        Self {
            triples,
            outgoing,
            incoming,
            nodes,
        }
    }

    pub fn parse_ntriples(text: &str) -> Result<Self, KgError> {
        let mut triples = Vec::new();
        for (index, raw) in text.lines().enumerate() {
            let line = index + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            triples.push(parse_triple_line(trimmed, line)?);
        }
        Ok(Self::from_triples(triples))
    }

    pub fn load_ntriples(path: impl AsRef<Path>) -> Result<Self, KgError> {
        Self::parse_ntriples(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn triples(&self) -> impl Iterator<Item = &(String, String, String)> {
        self.triples.iter()
    }

    /// `(predicate, object)` edges leaving `node`.
    pub fn outgoing(&self, node: &str) -> &[(String, String)] {
        self.outgoing.get(node).map_or(&[], Vec::as_slice)
    }

    /// `(predicate, subject)` edges arriving at `node`.
    pub fn incoming(&self, node: &str) -> &[(String, String)] {
        self.incoming.get(node).map_or(&[], Vec::as_slice)
    }

    /// Nodes matching a topic entity: the exact identifier if present,
    /// otherwise every node whose label equals the given name.
    pub fn resolve_entity(&self, name: &str) -> Vec<String> {
        if self.nodes.contains(name) {
            return vec![name.to_string()];
        }
        self.nodes
            .iter()
            .filter(|node| label_of(node) == name)
            .cloned()
            .collect()
    }
}

fn parse_triple_line(line: &str, number: usize) -> Result<(String, String, String), KgError> {
    let err = |message: String| KgError::Parse {
        line: number,
        message,
    };
    let (subject, rest) = parse_iri(line, number)?;
    let (predicate, rest) = parse_iri(rest, number)?;
    let rest = rest.trim_start();
    let (object, rest) = if rest.starts_with('"') {
        parse_literal_term(rest, number)?
    } else {
        parse_iri(rest, number)?
    };
    if rest.trim() != "." {
        return Err(err(format!(
            "expected terminating '.', found {:?}",
            rest.trim()
        )));
    }
    Ok((subject, predicate, object))
}

fn parse_iri(text: &str, line: usize) -> Result<(String, &str), KgError> {
    let text = text.trim_start();
    let rest = text.strip_prefix('<').ok_or_else(|| KgError::Parse {
        line,
        message: format!("expected '<', found {:?}", text.chars().next()),
    })?;
    let end = rest.find('>').ok_or_else(|| KgError::Parse {
        line,
        message: "unterminated IRI".into(),
    })?;
    Ok((rest[..end].to_string(), &rest[end + 1..]))
}

fn parse_literal_term(text: &str, line: usize) -> Result<(String, &str), KgError> {
    let mut escaped = false;
    let mut close = None;
    for (i, c) in text.char_indices().skip(1) {
        if escaped {
            escaped = false;
        } else if c == '\\' {
            escaped = true;
        } else if c == '"' {
            close = Some(i);
            break;
        }
    }
    let close = close.ok_or_else(|| KgError::Parse {
        line,
        message: "unterminated literal".into(),
    })?;
    let mut end = close + 1;
    let rest = &text[end..];
    if let Some(lang) = rest.strip_prefix('@') {
        let len = lang
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
            .unwrap_or(lang.len());
        end += 1 + len;
    } else if let Some(dt) = rest.strip_prefix("^^") {
        let (_, after) = parse_iri(dt, line)?;
        end += 2 + (dt.len() - after.len());
    }
    Ok((text[..end].to_string(), &text[end..]))
}

/// Lowercased alphanumeric terms of a question.
pub fn question_terms(question: &str) -> BTreeSet<String> {
    question
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Tokens of a relation label: split on `.`, `_`, `/` and camelCase
/// boundaries, lowercased, as a set.
pub fn label_tokens(label: &str) -> BTreeSet<String> {
    let mut tokens = BTreeSet::new();
    for chunk in label.split(['.', '_', '/']) {
        let mut word = String::new();
        let mut prev_lower = false;
        for c in chunk.chars() {
            if prev_lower && c.is_uppercase() && !word.is_empty() {
                tokens.insert(std::mem::take(&mut word));
            }
            prev_lower = c.is_lowercase();
            word.extend(c.to_lowercase());
        }
        if !word.is_empty() {
            tokens.insert(word);
        }
    }
    tokens
}

const EPSILON: f64 = 0.01;

/// Relevance of one relation label to the question terms:
/// `(|label tokens ∩ terms| + ε) / (|label tokens| + ε)` with ε = 0.01,
/// positive so that multiplicative path pruning stays sound.
pub fn hop_relevance(label: &str, terms: &BTreeSet<String>) -> f64 {
    let tokens = label_tokens(label);
    let overlap = tokens.intersection(terms).count();
    (overlap as f64 + EPSILON) / (tokens.len() as f64 + EPSILON)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Direction {
    #[serde(rename = "out")]
    Outgoing,
    #[serde(rename = "in")]
    Incoming,
}

/// One retained path: relation labels in hop order, the terminal's label,
/// and the product score. The full identifier chain is kept for callers but
/// stays out of the serialized form.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathRecord {
    pub relations: Vec<String>,
    pub terminal: String,
    pub score: f64,
    #[serde(skip)]
    pub nodes: Vec<String>,
    #[serde(skip)]
    pub relation_iris: Vec<String>,
    #[serde(skip)]
    pub directions: Vec<Direction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum KgWarning {
    UnknownEntity { entity: String },
}

impl fmt::Display for KgWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KgWarning::UnknownEntity { entity } => {
                write!(f, "topic entity {entity:?} has no incident edges")
            }
        }
    }
}

/// Retrieval result: paths best-first, their relation-label union, and any
/// topic-resolution warnings (not serialized).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subgraph {
    pub paths: Vec<PathRecord>,
    pub relations: BTreeSet<String>,
    #[serde(skip)]
    pub warnings: Vec<KgWarning>,
}

/// Union of relation labels across the retained paths.
pub fn relations_of(subgraph: &Subgraph) -> BTreeSet<String> {
    subgraph.relations.clone()
}

#[derive(Debug, Clone, Copy)]
pub struct RetrievalParams {
    pub top_k: usize,
    pub min_score: f64,
    pub max_hops: usize,
}

impl Default for RetrievalParams {
    fn default() -> Self {
        Self {
            top_k: 20,
            min_score: 1e-5,
            max_hops: 2,
        }
    }
}

/// A frontier entry. Orders by score descending, then by the flattened path
/// chain ascending, so the heap pops paths in final ranking order.
struct Frontier {
    score: f64,
    key: Vec<String>,
    node: String,
    hops: usize,
    relation_iris: Vec<String>,
    directions: Vec<Direction>,
    nodes: Vec<String>,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.score == other.score && self.key == other.key
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.key.cmp(&self.key))
    }
}

/// Best-first expansion of relation paths from the topic entities, over both
/// edge directions, up to `max_hops`. Path scores multiply [`hop_relevance`]
/// per hop; paths scoring below `min_score` are pruned, and the best `top_k`
/// (score descending, chain ascending) are retained. Topic entities are
/// taken verbatim or resolved by label; one with no incident edges only
/// produces a warning.
pub fn retrieve_subgraph(
    store: &KgStore,
    topic_entities: &[String],
    terms: &BTreeSet<String>,
    params: &RetrievalParams,
) -> Subgraph {
    let mut warnings = Vec::new();
    let mut seeds = BTreeSet::new();
    for topic in topic_entities {
        let connected: Vec<String> = store
            .resolve_entity(topic)
            .into_iter()
            .filter(|node| !store.outgoing(node).is_empty() || !store.incoming(node).is_empty())
            .collect();
        if connected.is_empty() {
            warnings.push(KgWarning::UnknownEntity {
                entity: topic.clone(),
            });
        } else {
            seeds.extend(connected);
        }
    }

    let mut heap: BinaryHeap<Frontier> = seeds
        .into_iter()
        .map(|node| Frontier {
            score: 1.0,
            key: vec![node.clone()],
            node: node.clone(),
            hops: 0,
            relation_iris: Vec::new(),
            directions: Vec::new(),
            nodes: vec![node],
        })
        .collect();
    let mut paths: Vec<PathRecord> = Vec::new();

    while let Some(entry) = heap.pop() {
        if entry.hops >= 1 {
            paths.push(PathRecord {
                relations: entry
                    .relation_iris
                    .iter()
                    .map(|iri| label_of(iri).to_string())
                    .collect(),
                terminal: label_of(&entry.node).to_string(),
                score: entry.score,
                nodes: entry.nodes.clone(),
                relation_iris: entry.relation_iris.clone(),
                directions: entry.directions.clone(),
            });
            if paths.len() >= params.top_k {
                break;
            }
        }
        if entry.hops >= params.max_hops {
            continue;
        }
        let edges = store
            .outgoing(&entry.node)
            .iter()
            .map(|(p, o)| (Direction::Outgoing, p, o))
            .chain(
                store
                    .incoming(&entry.node)
                    .iter()
                    .map(|(p, s)| (Direction::Incoming, p, s)),
            );
        for (direction, predicate, other) in edges {
            let score = entry.score * hop_relevance(label_of(predicate), terms);
            if score < params.min_score {
                continue;
            }
            let mut key = entry.key.clone();
            key.push(
                match direction {
                    Direction::Outgoing => "->",
                    Direction::Incoming => "<-",
                }
                .to_string(),
            );
            key.push(predicate.clone());
            key.push(other.clone());
            let mut relation_iris = entry.relation_iris.clone();
            relation_iris.push(predicate.clone());
            let mut directions = entry.directions.clone();
            directions.push(direction);
            let mut nodes = entry.nodes.clone();
            nodes.push(other.clone());
            heap.push(Frontier {
                score,
                key,
                node: other.clone(),
                hops: entry.hops + 1,
                relation_iris,
                directions,
                nodes,
            });
        }
    }

    let relations = paths
        .iter()
        .flat_map(|p| p.relations.iter().cloned())
        .collect();
    Subgraph {
        paths,
        relations,
        warnings,
    }
}
